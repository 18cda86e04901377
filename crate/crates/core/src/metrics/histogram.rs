use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalized 1D histogram. `edges.len() == masses.len() + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram1D {
    edges: Vec<f64>,
    masses: Vec<f64>,
}

pub const DEFAULT_BINS: usize = 100;

/// `bins` equal-width intervals over `[lo, hi]`; the last edge is `hi` exactly.
pub fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = hi - lo;
    let mut edges: Vec<f64> = (0..bins).map(|k| lo + width * (k as f64 / bins as f64)).collect();
    edges.push(hi);
    edges
}

/// Common edges over the union of both supports. A zero-width support is
/// widened by half a unit on each side.
pub fn shared_edges(a: &[f64], b: &[f64], bins: usize) -> Result<Vec<f64>> {
    if bins == 0 {
        return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
    }
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in a.iter().chain(b).filter(|v| v.is_finite()) {
        lo = lo.min(*v);
        hi = hi.max(*v);
    }
    if !lo.is_finite() {
        return Err(Error::EmptyPointSet);
    }
    if lo == hi {
        lo -= 0.5;
        hi += 0.5;
    }
    Ok(uniform_edges(lo, hi, bins))
}

/// Bin containing `v`, or `None` outside `[edges[0], edges[last]]`. The last
/// bin is closed on the right.
pub fn bin_index(edges: &[f64], v: f64) -> Option<usize> {
    let bins = edges.len() - 1;
    if !(v >= edges[0] && v <= edges[bins]) {
        return None;
    }
    Some(edges.partition_point(|e| *e <= v).saturating_sub(1).min(bins - 1))
}

impl Histogram1D {
    pub fn new(edges: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if edges.len() != masses.len() + 1 || masses.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "{} edges cannot bound {} bins",
                edges.len(),
                masses.len()
            )));
        }
        if !edges.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("histogram edges must increase strictly".into()));
        }
        if masses.iter().any(|m| !(*m >= 0.0)) {
            return Err(Error::InvalidArgument("histogram masses must be >= 0".into()));
        }
        Ok(Histogram1D { edges, masses })
    }

    /// Weighted, normalized histogram; values outside the edges are dropped.
    ///
    /// Weights are scaled by their maximum before accumulation, so uniform
    /// weights reproduce plain counts bit for bit.
    pub fn from_weighted(values: &[f64], weights: &[f64], edges: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: values.len(),
                found: weights.len(),
            });
        }
        let w_max = weights.iter().copied().fold(0.0f64, f64::max);
        if !(w_max > 0.0) {
            return Err(Error::AllZeroWeights);
        }
        let mut masses = vec![0.0; edges.len().saturating_sub(1)];
        if masses.is_empty() {
            return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
        }
        for (v, w) in values.iter().zip(weights) {
            if let Some(k) = bin_index(&edges, *v) {
                masses[k] += w / w_max;
            }
        }
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::AllZeroWeights);
        }
        masses.iter_mut().for_each(|m| *m /= total);
        Self::new(edges, masses)
    }

    pub fn from_values(values: &[f64], edges: Vec<f64>) -> Result<Self> {
        Self::from_weighted(values, &vec![1.0; values.len()], edges)
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn n_bins(&self) -> usize {
        self.masses.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Mass per unit length in each bin.
    pub fn densities(&self) -> Vec<f64> {
        self.masses
            .iter()
            .zip(self.edges.windows(2))
            .map(|(m, w)| m / (w[1] - w[0]))
            .collect()
    }

    /// Mass inside `[lo, hi]`, counting only bins that lie entirely within it.
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        self.masses
            .iter()
            .zip(self.edges.windows(2))
            .filter(|(_, w)| w[0] >= lo && w[1] <= hi)
            .map(|(m, _)| m)
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_edges_are_exact_at_ends() {
        let e = uniform_edges(0.0, 7.0, 7);
        assert_eq!(e, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    }

    #[test]
    fn bin_index_boundaries() {
        let e = uniform_edges(0.0, 4.0, 4);
        assert_eq!(bin_index(&e, 0.0), Some(0));
        assert_eq!(bin_index(&e, 1.0), Some(1));
        assert_eq!(bin_index(&e, 4.0), Some(3));
        assert_eq!(bin_index(&e, 4.5), None);
        assert_eq!(bin_index(&e, -0.1), None);
        assert_eq!(bin_index(&e, f64::NAN), None);
    }

    #[test]
    fn degenerate_support_is_widened() {
        let e = shared_edges(&[2.0, 2.0], &[2.0], 4).unwrap();
        assert_eq!(e[0], 1.5);
        assert_eq!(*e.last().unwrap(), 2.5);
        let h = Histogram1D::from_values(&[2.0, 2.0], e).unwrap();
        assert_eq!(h.masses().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Histogram1D::new(vec![0.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(Histogram1D::new(vec![0.0, 0.0, 1.0], vec![0.5, 0.5]).is_err());
        assert!(Histogram1D::from_weighted(&[1.0], &[0.0], vec![0.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn uniform_weights_match_counts(
            values in prop::collection::vec(-10.0f64..10.0, 1..200),
            w in 1e-6f64..10.0,
        ) {
            let edges = shared_edges(&values, &[], 17).unwrap();
            let weighted = Histogram1D::from_weighted(&values, &vec![w; values.len()], edges.clone()).unwrap();
            let plain = Histogram1D::from_values(&values, edges).unwrap();
            prop_assert_eq!(weighted, plain);
        }
    }
}
