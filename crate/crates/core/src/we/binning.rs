use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundaryPolicy {
    /// Equal-width bins between the observed minimum and maximum.
    #[default]
    LinearMinMax,
}

/// Minimal adaptive binning over the progress coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MabBinning {
    pub bins_per_dim: usize,
    pub n_dims: usize,
    pub boundary_policy: BoundaryPolicy,
    /// Give the walkers at each per-dimension extreme a bin of their own.
    pub bottleneck_bins: bool,
}

impl Default for MabBinning {
    fn default() -> Self {
        MabBinning {
            bins_per_dim: 7,
            n_dims: 2,
            boundary_policy: BoundaryPolicy::LinearMinMax,
            bottleneck_bins: true,
        }
    }
}

impl MabBinning {
    pub fn validate(&self) -> Result<()> {
        if self.bins_per_dim < 2 || self.n_dims == 0 {
            return Err(Error::InvalidArgument(format!(
                "MAB needs bins_per_dim >= 2 and n_dims >= 1, got {} and {}",
                self.bins_per_dim, self.n_dims
            )));
        }
        Ok(())
    }
}

/// Bin edges per dimension. A dimension whose observed range collapsed to
/// a point holds the single edge `[v]` and acts as one bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MabBins {
    pub edges: Vec<Vec<f64>>,
}

/// A walker's bin. Extremum bins are numbered after the interior ones and
/// are exempt from merging.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BinKey {
    pub index: usize,
    pub exempt: bool,
}

impl MabBins {
    fn bins_in(&self, d: usize) -> usize {
        self.edges[d].len().saturating_sub(1).max(1)
    }

    pub fn n_interior(&self) -> usize {
        (0..self.edges.len()).map(|d| self.bins_in(d)).product()
    }

    /// Row-major interior bin of `p`, clamping to the outermost bins.
    pub fn interior_bin(&self, p: &[f64]) -> usize {
        self.edges.iter().enumerate().fold(0, |id, (d, e)| {
            let n = self.bins_in(d);
            let k = if e.len() < 2 {
                0
            } else {
                e[1..e.len() - 1].partition_point(|edge| *edge <= p[d])
            };
            id * n + k.min(n - 1)
        })
    }

    fn degenerate(&self, d: usize) -> bool {
        self.edges[d].len() < 2
    }
}

/// Edges from the extent of the observed final-point progress coordinates.
pub fn update_mab_bins(binning: &MabBinning, pcoords: &[Vec<f64>]) -> Result<MabBins> {
    binning.validate()?;
    if let Some(p) = pcoords.iter().find(|p| p.len() < binning.n_dims) {
        return Err(Error::DimensionMismatch {
            expected: binning.n_dims,
            found: p.len(),
        });
    }
    let n = binning.bins_per_dim;
    let mut edges = Vec::with_capacity(binning.n_dims);
    for d in 0..binning.n_dims {
        let finite = pcoords.iter().map(|p| p[d]).filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo > hi {
            return Err(Error::InvalidArgument("no finite progress coordinate to bin".into()));
        }
        let e: Vec<f64> = if lo == hi {
            log::debug!("progress coordinate {d} collapsed to {lo}; using one bin");
            vec![lo]
        } else {
            let mut e: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
            e[n] = hi;
            e.dedup();
            e
        };
        edges.push(e);
    }
    Ok(MabBins { edges })
}

/// Bin of every walker. With bottleneck bins on, the first walker at the
/// minimum and at the maximum of each non-degenerate dimension goes to its
/// own exempt bin (a walker takes only the first such bin it qualifies for).
pub fn assign_mab_bins(binning: &MabBinning, bins: &MabBins, pcoords: &[Vec<f64>]) -> Vec<BinKey> {
    let mut keys: Vec<BinKey> = pcoords
        .iter()
        .map(|p| BinKey {
            index: bins.interior_bin(p),
            exempt: false,
        })
        .collect();
    if !binning.bottleneck_bins {
        return keys;
    }
    let base = bins.n_interior();
    for d in 0..bins.edges.len() {
        if bins.degenerate(d) {
            continue;
        }
        let mut min_at: Option<usize> = None;
        let mut max_at: Option<usize> = None;
        for (i, p) in pcoords.iter().enumerate() {
            if !p[d].is_finite() {
                continue;
            }
            if min_at.is_none_or(|m| p[d] < pcoords[m][d]) {
                min_at = Some(i);
            }
            if max_at.is_none_or(|m| p[d] > pcoords[m][d]) {
                max_at = Some(i);
            }
        }
        for (slot, at) in [min_at, max_at].into_iter().enumerate() {
            if let Some(i) = at {
                if !keys[i].exempt {
                    keys[i] = BinKey {
                        index: base + 2 * d + slot,
                        exempt: true,
                    };
                }
            }
        }
    }
    keys
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_dim(bins: usize) -> MabBinning {
        MabBinning {
            bins_per_dim: bins,
            n_dims: 1,
            ..Default::default()
        }
    }

    #[test]
    fn equal_width_edges() {
        let pcoords: Vec<Vec<f64>> = [0.0, 3.2, 7.0, 1.5].iter().map(|v| vec![*v]).collect();
        let bins = update_mab_bins(&one_dim(7), &pcoords).unwrap();
        assert_eq!(bins.edges[0], (0..=7).map(f64::from).collect::<Vec<_>>());
        assert_eq!(bins.interior_bin(&[3.2]), 3);
        assert_eq!(bins.interior_bin(&[7.0]), 6);
        assert_eq!(bins.interior_bin(&[1.0]), 1);
    }

    #[test]
    fn collapsed_range_is_one_bin() {
        let pcoords = vec![vec![0.5, 0.5]; 4];
        let binning = MabBinning::default();
        let bins = update_mab_bins(&binning, &pcoords).unwrap();
        assert_eq!(bins.n_interior(), 1);
        let keys = assign_mab_bins(&binning, &bins, &pcoords);
        assert!(keys.iter().all(|k| *k
            == BinKey {
                index: 0,
                exempt: false
            }));
    }

    #[test]
    fn extremes_get_exempt_bins() {
        let binning = MabBinning::default();
        let pcoords = vec![
            vec![0.0, 5.0],
            vec![1.0, 0.0],
            vec![0.5, 0.5],
            vec![0.2, 1.0],
            vec![0.6, 0.6],
        ];
        let bins = update_mab_bins(&binning, &pcoords).unwrap();
        assert_eq!(bins.n_interior(), 49);
        let keys = assign_mab_bins(&binning, &bins, &pcoords);
        // Walker 0 is the dim-0 minimum (and dim-1 maximum), walker 1 the
        // dim-0 maximum (and dim-1 minimum).
        assert_eq!(
            keys[0],
            BinKey {
                index: 49,
                exempt: true
            }
        );
        assert_eq!(
            keys[1],
            BinKey {
                index: 50,
                exempt: true
            }
        );
        assert!(keys[2..].iter().all(|k| !k.exempt && k.index < 49));
    }

    #[test]
    fn edges_strictly_increase() {
        let pcoords: Vec<Vec<f64>> = (0..50).map(|i| vec![(i as f64).sin() * 1e-9, i as f64]).collect();
        let bins = update_mab_bins(&MabBinning::default(), &pcoords).unwrap();
        for e in &bins.edges {
            assert!(e.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn rejects_bad_config() {
        assert!(update_mab_bins(&one_dim(1), &[vec![0.0]]).is_err());
        assert!(update_mab_bins(&MabBinning::default(), &[vec![0.0]]).is_err());
    }
}
