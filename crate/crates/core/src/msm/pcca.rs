use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, nearest, predict, rows, KMeansConfig};
use super::{count_matrix, restricted_transition, stationary_distribution, stationary_from, TransitionMatrix};
use crate::error::{Error, Result};

/// Fuzzy memberships (`states x macrostates`, rows on the simplex) and the
/// crisp argmax assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Pcca {
    pub memberships: DMatrix<f64>,
    pub assignment: Vec<usize>,
}

/// PCCA+ with the inner-simplex vertex construction on the leading right
/// eigenvectors of `t`. Non-reversible input is replaced by its additive
/// reversibilization with respect to a stationary vector, so the spectrum
/// stays real. Every state must be recurrent; decoupled blocks are fine.
pub fn pcca(t: &DMatrix<f64>, n_macrostates: usize) -> Result<Pcca> {
    let tm = TransitionMatrix::from_dense(t)?;
    let pi = if tm.is_irreducible() {
        stationary_distribution(&tm)?
    } else {
        block_stationary(&tm)?
    };
    pcca_with(t, &pi, n_macrostates)
}

/// A stationary vector of a possibly reducible chain: lazy power iteration
/// from the uniform vector, which weighs each closed class by its size.
fn block_stationary(t: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = t.n();
    let mut x = vec![1.0 / n as f64; n];
    for it in 0..1_000_000 {
        let y = t.left_multiply(&x);
        let res = x.iter().zip(&y).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        if res < 1e-15 || (it > 0 && res == 0.0) {
            let s: f64 = y.iter().sum();
            let pi: Vec<f64> = y.iter().map(|v| v / s).collect();
            if pi.iter().any(|p| !(*p > 1e-14)) {
                return Err(Error::InvalidArgument("PCCA+ needs every state to be recurrent".into()));
            }
            return Ok(pi);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = 0.5 * (*xi + yi);
        }
    }
    Err(Error::Numeric("stationary vector for PCCA+ did not converge".into()))
}

pub(crate) fn pcca_with(t: &DMatrix<f64>, pi: &[f64], m: usize) -> Result<Pcca> {
    let n = t.nrows();
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {m} macrostates from {n} states"
        )));
    }
    if pi.iter().any(|p| !(*p > 0.0)) {
        return Err(Error::InvalidArgument(
            "PCCA+ needs a strictly positive stationary vector".into(),
        ));
    }
    let sq: Vec<f64> = pi.iter().map(|p| p.sqrt()).collect();
    let s = DMatrix::from_fn(n, n, |i, j| {
        0.5 * (sq[i] * t[(i, j)] / sq[j] + sq[j] * t[(j, i)] / sq[i])
    });
    let eig = s.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    // Orthonormal basis starting from sqrt(pi), filled from the leading
    // eigenvectors; vectors already spanned are skipped.
    let norm: f64 = sq.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut basis: Vec<Vec<f64>> = vec![sq.iter().map(|v| v / norm).collect()];
    for &k in &order {
        if basis.len() == m {
            break;
        }
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        for _ in 0..2 {
            for b in &basis {
                let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
            }
        }
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len > 1e-8 {
            basis.push(v.into_iter().map(|x| x / len).collect());
        }
    }
    if basis.len() < m {
        return Err(Error::Numeric("could not build a PCCA+ eigenbasis".into()));
    }
    // Right eigenvectors of the reversible chain; the first is constant.
    let r = DMatrix::from_fn(n, m, |i, j| basis[j][i] / sq[i]);
    let index = inner_simplex(&r);
    let vertices = DMatrix::from_fn(m, m, |a, j| r[(index[a], j)]);
    let inv = vertices
        .try_inverse()
        .ok_or_else(|| Error::Numeric("PCCA+ simplex vertices are degenerate".into()))?;
    let mut chi = r * inv;
    for i in 0..n {
        let mut row_sum = 0.0;
        for j in 0..m {
            chi[(i, j)] = chi[(i, j)].max(0.0);
            row_sum += chi[(i, j)];
        }
        if !(row_sum > 0.0) {
            return Err(Error::Numeric(format!("PCCA+ membership row {i} vanished")));
        }
        for j in 0..m {
            chi[(i, j)] /= row_sum;
        }
    }
    let assignment = (0..n)
        .map(|i| (0..m).fold(0, |best, j| if chi[(i, j)] > chi[(i, best)] { j } else { best }))
        .collect();
    Ok(Pcca {
        memberships: chi,
        assignment,
    })
}

/// Rows of `c` chosen as simplex vertices: the row of largest norm, then
/// repeatedly the row farthest from the span of those already picked.
fn inner_simplex(c: &DMatrix<f64>) -> Vec<usize> {
    let (n, m) = c.shape();
    let mut ortho = c.clone();
    let mut index = vec![0; m];
    let mut max_dist = 0.0;
    for i in 0..n {
        let d = ortho.row(i).norm();
        if d > max_dist {
            max_dist = d;
            index[0] = i;
        }
    }
    let first = c.row(index[0]).clone_owned();
    for i in 0..n {
        let shifted = ortho.row(i) - &first;
        ortho.set_row(i, &shifted);
    }
    for j in 1..m {
        let temp = ortho.row(index[j - 1]).clone_owned();
        let mut max_dist = 0.0;
        for i in 0..n {
            let p = ortho.row(i).dot(&temp);
            let projected = ortho.row(i) - &temp * p;
            ortho.set_row(i, &projected);
            let d = ortho.row(i).norm();
            if d > max_dist {
                max_dist = d;
                index[j] = i;
            }
        }
        if max_dist > 0.0 {
            ortho /= max_dist;
        }
    }
    index
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacrostateConfig {
    pub n_clusters: usize,
    pub n_macrostates: usize,
    /// Leading TIC columns used for clustering.
    pub n_tics: usize,
    pub lag: usize,
    pub seed: u64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MacrostateConfig {
    fn default() -> Self {
        let km = KMeansConfig::default();
        MacrostateConfig {
            n_clusters: km.k,
            n_macrostates: 5,
            n_tics: 10,
            lag: 1,
            seed: km.seed,
            max_iterations: km.max_iterations,
            tolerance: km.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacrostateModel {
    pub n_tics: usize,
    #[serde(with = "crate::serde_matrix")]
    pub kmeans_centers: DMatrix<f64>,
    /// Clusters in the connected set of the cluster MSM.
    pub active_clusters: Vec<usize>,
    #[serde(with = "crate::serde_matrix")]
    pub cluster_transition: DMatrix<f64>,
    pub cluster_stationary: Vec<f64>,
    /// `n_clusters x n_macrostates`; clusters outside the connected set
    /// inherit the row of the nearest active cluster center.
    #[serde(with = "crate::serde_matrix")]
    pub memberships: DMatrix<f64>,
    pub assignment: Vec<usize>,
}

impl MacrostateModel {
    pub fn n_macrostates(&self) -> usize {
        self.memberships.ncols()
    }

    pub fn assign_clusters(&self, tic_points: &DMatrix<f64>) -> Result<Vec<usize>> {
        predict(&self.kmeans_centers, tic_points)
    }

    pub fn assign(&self, tic_points: &DMatrix<f64>) -> Result<Vec<usize>> {
        Ok(self
            .assign_clusters(tic_points)?
            .into_iter()
            .map(|c| self.assignment[c])
            .collect())
    }
}

/// k-means on the leading TICs of all segments, a cluster MSM with
/// transitions counted inside segments, then PCCA+.
pub fn fit_macrostates(segments: &[&DMatrix<f64>], cfg: &MacrostateConfig) -> Result<MacrostateModel> {
    let cols = segments.first().map_or(0, |s| s.ncols());
    if segments.iter().any(|s| s.ncols() != cols) {
        return Err(Error::InvalidArgument("segments differ in TIC count".into()));
    }
    let d = cfg.n_tics.min(cols);
    let total: usize = segments.iter().map(|s| s.nrows()).sum();
    if total < cfg.n_clusters {
        return Err(Error::TooFewFrames {
            needed: cfg.n_clusters,
            available: total,
        });
    }
    let mut stacked = DMatrix::zeros(total, d);
    let mut offset = 0;
    for s in segments {
        stacked
            .view_mut((offset, 0), (s.nrows(), d))
            .copy_from(&s.columns(0, d));
        offset += s.nrows();
    }
    let km = kmeans(
        &stacked,
        &KMeansConfig {
            k: cfg.n_clusters,
            seed: cfg.seed,
            max_iterations: cfg.max_iterations,
            tolerance: cfg.tolerance,
        },
    )?;
    let mut sequences = Vec::with_capacity(segments.len());
    let mut offset = 0;
    for s in segments {
        sequences.push(km.labels[offset..offset + s.nrows()].to_vec());
        offset += s.nrows();
    }
    let counts = count_matrix(&sequences, cfg.lag, Some(cfg.n_clusters))?;
    let (restricted, t) = restricted_transition(&counts)?;
    if t.n() < cfg.n_macrostates {
        return Err(Error::NotIrreducible);
    }
    let guess: Vec<f64> = restricted.row_sums().iter().map(|v| *v as f64).collect();
    let pi = stationary_from(&t, Some(&guess))?;
    let dense = t.to_dense();
    let fit = pcca_with(&dense, &pi, cfg.n_macrostates)?;

    let centers = rows(&km.centers);
    let active_centers: Vec<f64> = t
        .states
        .iter()
        .flat_map(|&c| centers[c * d..(c + 1) * d].iter().copied())
        .collect();
    let mut memberships = DMatrix::zeros(cfg.n_clusters, cfg.n_macrostates);
    let mut assignment = vec![0; cfg.n_clusters];
    for c in 0..cfg.n_clusters {
        let local = match t.states.binary_search(&c) {
            Ok(k) => k,
            Err(_) => nearest(&active_centers, d, &centers[c * d..(c + 1) * d]).0,
        };
        memberships.set_row(c, &fit.memberships.row(local));
        assignment[c] = fit.assignment[local];
    }
    Ok(MacrostateModel {
        n_tics: d,
        kmeans_centers: km.centers,
        active_clusters: t.states.clone(),
        cluster_transition: dense,
        cluster_stationary: pi,
        memberships,
        assignment,
    })
}
