use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Weighted Gaussian kernel density estimate with a diagonal bandwidth,
/// `p(x) = sum_i w_i K_h(x - x_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    dims: usize,
    bandwidth: Vec<f64>,
    /// Support points, row-major `n x dims`.
    points: Vec<f64>,
    weights: Vec<f64>,
}

/// Scott's rule with the Kish effective sample size `1 / sum w_i^2`.
fn scott_bandwidth(points: &[f64], weights: &[f64], dims: usize) -> Vec<f64> {
    let n_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
    let factor = n_eff.powf(-1.0 / (dims as f64 + 4.0));
    (0..dims)
        .map(|d| {
            let mean: f64 = points.chunks_exact(dims).zip(weights).map(|(p, w)| w * p[d]).sum();
            let var: f64 = points
                .chunks_exact(dims)
                .zip(weights)
                .map(|(p, w)| w * (p[d] - mean).powi(2))
                .sum();
            var.sqrt() * factor
        })
        .collect()
}

/// Builds a KDE over `points` (row-major, `dims` columns). Weights are
/// normalized; the bandwidth defaults to Scott's rule.
pub fn weighted_kde(points: &[f64], dims: usize, weights: &[f64], bandwidth: Option<Vec<f64>>) -> Result<Kde> {
    if !(dims == 1 || dims == 2) {
        return Err(Error::InvalidArgument(format!("KDE supports 1 or 2 dims, got {dims}")));
    }
    if points.is_empty() || points.len() % dims != 0 {
        return Err(Error::EmptyPointSet);
    }
    let n = points.len() / dims;
    if weights.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: weights.len(),
        });
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || weights.iter().any(|w| *w < 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let bandwidth = match bandwidth {
        Some(h) if h.len() == dims => h,
        Some(h) => {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: h.len(),
            })
        }
        None => scott_bandwidth(points, &weights, dims),
    };
    if bandwidth.iter().any(|h| !(*h > 0.0) || !h.is_finite()) {
        return Err(Error::ZeroBandwidth);
    }
    Ok(Kde {
        dims,
        bandwidth,
        points: points.to_vec(),
        weights,
    })
}

#[inline]
fn gauss(u: f64, h: f64) -> f64 {
    (-0.5 * (u / h).powi(2)).exp() / (h * (2.0 * PI).sqrt())
}

impl Kde {
    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn bandwidth(&self) -> &[f64] {
        &self.bandwidth
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.points
            .chunks_exact(self.dims)
            .zip(&self.weights)
            .map(|(p, w)| {
                w * p
                    .iter()
                    .zip(x)
                    .zip(&self.bandwidth)
                    .map(|((pi, xi), h)| gauss(xi - pi, *h))
                    .product::<f64>()
            })
            .sum()
    }

    /// Density on the tensor grid spanned by `axes` (one axis per dim),
    /// row-major with the last axis fastest. Kernels are truncated at 8h.
    pub fn evaluate_grid(&self, axes: &[Vec<f64>]) -> Result<Vec<f64>> {
        if axes.len() != self.dims || axes.iter().any(|a| a.is_empty()) {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                found: axes.len(),
            });
        }
        let sizes: Vec<usize> = axes.iter().map(Vec::len).collect();
        let mut grid = vec![0.0; sizes.iter().product()];
        let mut factors: Vec<Vec<(usize, f64)>> = vec![Vec::new(); self.dims];
        for (p, w) in self.points.chunks_exact(self.dims).zip(&self.weights) {
            for d in 0..self.dims {
                let h = self.bandwidth[d];
                let axis = &axes[d];
                let lo = axis.partition_point(|g| *g < p[d] - 8.0 * h);
                let hi = axis.partition_point(|g| *g <= p[d] + 8.0 * h);
                factors[d].clear();
                factors[d].extend((lo..hi).map(|k| (k, gauss(axis[k] - p[d], h))));
            }
            if self.dims == 1 {
                for &(k, v) in &factors[0] {
                    grid[k] += w * v;
                }
            } else {
                for &(i, vi) in &factors[0] {
                    for &(j, vj) in &factors[1] {
                        grid[i * sizes[1] + j] += w * vi * vj;
                    }
                }
            }
        }
        Ok(grid)
    }

    /// Grid densities turned into normalized masses, for divergences.
    pub fn grid_masses(&self, axes: &[Vec<f64>]) -> Result<Vec<f64>> {
        let mut grid = self.evaluate_grid(axes)?;
        let total: f64 = grid.iter().sum();
        if !(total > 0.0) {
            return Err(Error::AllZeroWeights);
        }
        grid.iter_mut().for_each(|v| *v /= total);
        Ok(grid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_peak_height() {
        let kde = weighted_kde(&[0.3], 1, &[1.0], Some(vec![0.2])).unwrap();
        let expected = 1.0 / (0.2 * (2.0 * PI).sqrt());
        assert!((kde.evaluate(&[0.3]) - expected).abs() < 1e-14);
    }

    #[test]
    fn integrates_to_one() {
        let pts = [-1.0, 0.2, 0.5, 2.0];
        let kde = weighted_kde(&pts, 1, &[0.1, 0.2, 0.3, 0.4], None).unwrap();
        let h = kde.bandwidth()[0];
        let (lo, hi) = (-1.0 - 8.0 * h, 2.0 + 8.0 * h);
        let n = 20_000;
        let dx = (hi - lo) / n as f64;
        let integral: f64 = (0..n).map(|k| kde.evaluate(&[lo + (k as f64 + 0.5) * dx]) * dx).sum();
        assert!((integral - 1.0).abs() < 1e-3, "{integral}");
    }

    #[test]
    fn two_equal_points_are_symmetric() {
        let kde = weighted_kde(&[1.0, 3.0], 1, &[0.5, 0.5], Some(vec![0.7])).unwrap();
        for delta in [0.1, 0.5, 1.3, 4.0] {
            let a = kde.evaluate(&[2.0 - delta]);
            let b = kde.evaluate(&[2.0 + delta]);
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn grid_matches_pointwise_evaluation() {
        let pts = [0.0, 0.0, 1.0, 0.5, -0.5, 1.5];
        let kde = weighted_kde(&pts, 2, &[1.0, 2.0, 1.0], None).unwrap();
        let axes = vec![vec![-1.0, 0.0, 0.5, 1.0], vec![-0.5, 0.5, 1.5]];
        let grid = kde.evaluate_grid(&axes).unwrap();
        for (i, x) in axes[0].iter().enumerate() {
            for (j, y) in axes[1].iter().enumerate() {
                let direct = kde.evaluate(&[*x, *y]);
                assert!((grid[i * 3 + j] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_bandwidth_errors() {
        assert!(matches!(
            weighted_kde(&[1.0], 1, &[1.0], None),
            Err(Error::ZeroBandwidth)
        ));
        assert!(matches!(
            weighted_kde(&[1.0, 2.0], 1, &[1.0, 1.0], Some(vec![0.0])),
            Err(Error::ZeroBandwidth)
        ));
    }
}
