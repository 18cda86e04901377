use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::propagate::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iterations: usize,
    /// Stop once inertia improves by less than this fraction.
    pub tolerance: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 100,
            seed: 0,
            max_iterations: 500,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    /// `k x d`.
    pub centers: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the center in `centers` (row-major `k x d`) nearest to `p`,
/// ties to the lower index.
pub(crate) fn nearest(centers: &[f64], d: usize, p: &[f64]) -> (usize, f64) {
    centers
        .chunks_exact(d)
        .enumerate()
        .fold((0, f64::INFINITY), |best, (c, center)| {
            let dist = sq_dist(center, p);
            if dist < best.1 {
                (c, dist)
            } else {
                best
            }
        })
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for r in 0..m.nrows() {
        out.extend(m.row(r).iter());
    }
    out
}

/// Lloyd's algorithm with k-means++ seeding from a fixed-seed stream.
/// An empty cluster is re-seeded with the point farthest from its center.
pub fn kmeans(points: &DMatrix<f64>, cfg: &KMeansConfig) -> Result<KMeans> {
    let (n, d) = points.shape();
    if cfg.k == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "k-means needs k >= 1 and at least one column".into(),
        ));
    }
    if n < cfg.k {
        return Err(Error::TooFewFrames {
            needed: cfg.k,
            available: n,
        });
    }
    let data = rows(points);
    let point = |i: usize| &data[i * d..(i + 1) * d];
    let mut rng = keyed_rng(cfg.seed, 0x6b6d_6561_6e73, 0);

    let mut centers = Vec::with_capacity(cfg.k * d);
    centers.extend_from_slice(point(rng.random_range(0..n)));
    let mut closest: Vec<f64> = (0..n).map(|i| sq_dist(point(i), &centers[..d])).collect();
    while centers.len() < cfg.k * d {
        let total: f64 = closest.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            closest
                .iter()
                .position(|w| {
                    acc += w;
                    acc > target
                })
                .unwrap_or_else(|| closest.iter().rposition(|w| *w > 0.0).unwrap_or(0))
        } else {
            rng.random_range(0..n)
        };
        let c = centers.len();
        centers.extend_from_slice(point(pick));
        let new_center = centers[c..c + d].to_vec();
        closest
            .par_iter_mut()
            .enumerate()
            .for_each(|(i, m)| *m = m.min(sq_dist(&data[i * d..(i + 1) * d], &new_center)));
    }

    let mut labels = vec![0; n];
    let mut dists = vec![0.0; n];
    let mut inertia = f64::INFINITY;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        labels
            .par_iter_mut()
            .zip(dists.par_iter_mut())
            .enumerate()
            .for_each(|(i, (l, dist))| {
                let (c, dd) = nearest(&centers, d, &data[i * d..(i + 1) * d]);
                *l = c;
                *dist = dd;
            });
        let new_inertia: f64 = dists.iter().sum();

        let mut sums = vec![0.0; cfg.k * d];
        let mut sizes = vec![0usize; cfg.k];
        for (i, &l) in labels.iter().enumerate() {
            sizes[l] += 1;
            for (s, x) in sums[l * d..(l + 1) * d].iter_mut().zip(point(i)) {
                *s += x;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..cfg.k {
            if sizes[c] > 0 {
                for j in 0..d {
                    centers[c * d + j] = sums[c * d + j] / sizes[c] as f64;
                }
            } else {
                let far = (0..n)
                    .filter(|i| !taken[*i])
                    .fold(
                        (0, -1.0),
                        |best, i| if dists[i] > best.1 { (i, dists[i]) } else { best },
                    )
                    .0;
                taken[far] = true;
                dists[far] = 0.0;
                centers[c * d..(c + 1) * d].copy_from_slice(point(far));
            }
        }
        let converged = inertia.is_finite() && (inertia - new_inertia) <= cfg.tolerance * inertia;
        inertia = new_inertia;
        if converged && sizes.iter().all(|s| *s > 0) {
            break;
        }
    }
    labels
        .par_iter_mut()
        .zip(dists.par_iter_mut())
        .enumerate()
        .for_each(|(i, (l, dist))| {
            let (c, dd) = nearest(&centers, d, &data[i * d..(i + 1) * d]);
            *l = c;
            *dist = dd;
        });
    Ok(KMeans {
        centers: DMatrix::from_row_slice(cfg.k, d, &centers),
        labels,
        inertia: dists.iter().sum(),
        iterations,
    })
}

impl KMeans {
    pub fn predict(&self, points: &DMatrix<f64>) -> Result<Vec<usize>> {
        predict(&self.centers, points)
    }
}

pub(crate) fn predict(centers: &DMatrix<f64>, points: &DMatrix<f64>) -> Result<Vec<usize>> {
    let d = centers.ncols();
    if points.ncols() < d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: points.ncols(),
        });
    }
    let flat = rows(centers);
    Ok((0..points.nrows())
        .into_par_iter()
        .map(|r| {
            let p: Vec<f64> = (0..d).map(|j| points[(r, j)]).collect();
            nearest(&flat, d, &p).0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> DMatrix<f64> {
        let mut rng = keyed_rng(3, 0, 0);
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let mut v = Vec::new();
        for c in centers {
            for _ in 0..100 {
                v.push(c[0] + rng.random::<f64>() - 0.5);
                v.push(c[1] + rng.random::<f64>() - 0.5);
            }
        }
        DMatrix::from_row_slice(300, 2, &v)
    }

    #[test]
    fn separates_well_spaced_blobs() {
        let cfg = KMeansConfig {
            k: 3,
            ..Default::default()
        };
        let km = kmeans(&blobs(), &cfg).unwrap();
        for b in 0..3 {
            let l = km.labels[b * 100];
            assert!(km.labels[b * 100..(b + 1) * 100].iter().all(|x| *x == l));
        }
        let mut distinct = vec![km.labels[0], km.labels[100], km.labels[200]];
        distinct.sort();
        distinct.dedup();
        assert_eq!(distinct.len(), 3);
        assert!(km.inertia < 300.0 * 0.2);
    }

    #[test]
    fn fixed_seed_is_deterministic() {
        let cfg = KMeansConfig {
            k: 7,
            seed: 11,
            ..Default::default()
        };
        let a = kmeans(&blobs(), &cfg).unwrap();
        let b = kmeans(&blobs(), &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.predict(&blobs()).unwrap(), a.labels);
    }

    #[test]
    fn duplicate_points_leave_no_cluster_empty_when_possible() {
        let mut v = vec![0.0; 20];
        v.extend([5.0, 5.0, 6.0, 6.0]);
        let pts = DMatrix::from_row_slice(12, 2, &v);
        let km = kmeans(
            &pts,
            &KMeansConfig {
                k: 3,
                ..Default::default()
            },
        )
        .unwrap();
        let mut sizes = [0; 3];
        for l in &km.labels {
            sizes[*l] += 1;
        }
        assert!(sizes.iter().all(|s| *s > 0), "{sizes:?}");
        assert_eq!(km.inertia, 0.0);
    }

    #[test]
    fn too_few_points() {
        let pts = DMatrix::zeros(3, 2);
        assert!(matches!(
            kmeans(
                &pts,
                &KMeansConfig {
                    k: 5,
                    ..Default::default()
                }
            ),
            Err(Error::TooFewFrames {
                needed: 5,
                available: 3
            })
        ));
    }
}
