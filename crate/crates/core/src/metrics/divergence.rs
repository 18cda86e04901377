use crate::error::{Error, Result};
use crate::metrics::histogram::Histogram1D;

/// Floor applied to both distributions before taking the log ratio.
pub const KL_EPSILON: f64 = 1e-12;

/// `sum p_i ln(max(p_i, eps) / max(q_i, eps))` in nats, clamped at zero.
pub fn kl_divergence_masses(p: &[f64], q: &[f64], eps: f64) -> Result<f64> {
    if p.len() != q.len() || p.is_empty() {
        return Err(Error::SupportMismatch);
    }
    let kl: f64 = p
        .iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.max(eps) / qi.max(eps)).ln())
        .sum();
    Ok(kl.max(0.0))
}

/// `D_KL(p || q)` over a shared binning.
pub fn kl_divergence(p: &Histogram1D, q: &Histogram1D, eps: f64) -> Result<f64> {
    if p.edges() != q.edges() {
        return Err(Error::SupportMismatch);
    }
    kl_divergence_masses(p.masses(), q.masses(), eps)
}

/// Wasserstein-1 distance between two histograms on the same edges,
/// treating each bin as a point mass at its center:
/// `sum_k |P_k - Q_k| (c_{k+1} - c_k)` with `P`, `Q` the running sums.
pub fn w1_distance(p: &Histogram1D, q: &Histogram1D) -> Result<f64> {
    if p.edges() != q.edges() {
        return Err(Error::SupportMismatch);
    }
    let centers = p.centers();
    let (mut cp, mut cq, mut total) = (0.0, 0.0, 0.0);
    for k in 0..centers.len() - 1 {
        cp += p.masses()[k];
        cq += q.masses()[k];
        total += (cp - cq).abs() * (centers[k + 1] - centers[k]);
    }
    Ok(total)
}
