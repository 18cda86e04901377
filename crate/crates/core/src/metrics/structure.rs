//! Radius of gyration, bond/angle/dihedral series and contact-map
//! differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TooFewParticles};
use crate::geom;
use crate::types::{Conformation, Trajectory, WeightedFrameSet};

/// Root-mean-square distance from the unweighted centroid.
pub fn radius_of_gyration(frame: &Conformation) -> f64 {
    let n = frame.n_particles();
    let dims = frame.dims();
    let mut com = [0.0; 3];
    for p in frame.particles() {
        for d in 0..dims {
            com[d] += p[d];
        }
    }
    for c in com.iter_mut().take(dims) {
        *c /= n as f64;
    }
    let sq: f64 = frame
        .particles()
        .map(|p| (0..dims).map(|d| (p[d] - com[d]).powi(2)).sum::<f64>())
        .sum();
    (sq / n as f64).sqrt()
}

/// Per-frame values of one feature class, frame-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeries {
    pub per_frame: usize,
    pub values: Vec<f64>,
}

impl FeatureSeries {
    pub fn frame(&self, i: usize) -> &[f64] {
        &self.values[i * self.per_frame..(i + 1) * self.per_frame]
    }

    /// Each value paired with the weight of the frame it came from.
    pub fn weights_from(&self, frame_weights: &[f64]) -> Vec<f64> {
        frame_weights
            .iter()
            .flat_map(|w| std::iter::repeat_n(*w, self.per_frame))
            .collect()
    }
}

/// Bonds over consecutive pairs, angles over consecutive triplets (in
/// `[0, pi]`) and dihedrals over consecutive quadruplets (in `(-pi, pi]`).
/// A class the system is too small for carries its own error while the
/// others are still computed.
#[derive(Debug, Clone, PartialEq)]
pub struct BadFeatures {
    pub bonds: std::result::Result<FeatureSeries, TooFewParticles>,
    pub angles: std::result::Result<FeatureSeries, TooFewParticles>,
    pub dihedrals: std::result::Result<FeatureSeries, TooFewParticles>,
}

fn series<const K: usize>(
    frames: &[Conformation],
    feature: &'static str,
    f: impl Fn([geom::V3; K]) -> f64,
) -> std::result::Result<FeatureSeries, TooFewParticles> {
    let n = frames.first().map_or(0, Conformation::n_particles);
    if n < K {
        return Err(TooFewParticles {
            feature,
            needed: K,
            available: n,
        });
    }
    let per_frame = n + 1 - K;
    let mut values = Vec::with_capacity(per_frame * frames.len());
    for frame in frames {
        for i in 0..per_frame {
            values.push(f(std::array::from_fn(|k| frame.point3(i + k))));
        }
    }
    Ok(FeatureSeries { per_frame, values })
}

pub fn bad_features_frames(frames: &[Conformation]) -> BadFeatures {
    BadFeatures {
        bonds: series(frames, "bonds", |[a, b]| geom::norm(geom::sub(b, a))),
        angles: series(frames, "angles", |[a, b, c]| geom::angle(a, b, c)),
        dihedrals: series(frames, "dihedrals", |[a, b, c, d]| geom::dihedral(a, b, c, d)),
    }
}

pub fn bad_features(traj: &Trajectory) -> BadFeatures {
    bad_features_frames(traj.frames())
}

/// `C_ij = <d_ij>_model - <d_ij>_gt`; positive where the model keeps a pair
/// farther apart than the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactMapDiff {
    pub n: usize,
    /// Row-major `n x n`.
    pub values: Vec<f64>,
}

impl ContactMapDiff {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn mean_distances(frames: &[Conformation], weights: Option<&[f64]>) -> Vec<f64> {
    let n = frames[0].n_particles();
    let mut acc = vec![0.0; n * n];
    let total: f64 = weights.map_or(frames.len() as f64, |w| w.iter().sum());
    for (t, frame) in frames.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[t]);
        if w == 0.0 {
            continue;
        }
        for i in 0..n {
            for j in i + 1..n {
                let d = geom::norm(geom::sub(frame.point3(i), frame.point3(j)));
                acc[i * n + j] += w * d;
            }
        }
    }
    for i in 0..n {
        for j in i + 1..n {
            acc[i * n + j] /= total;
            acc[j * n + i] = acc[i * n + j];
        }
    }
    acc
}

/// Model averages use the model's weights; ground truth is averaged
/// unweighted.
pub fn contact_map_diff(model: &WeightedFrameSet, gt: &WeightedFrameSet) -> Result<ContactMapDiff> {
    let (Some(nm), Some(ng)) = (model.n_particles(), gt.n_particles()) else {
        return Err(Error::EmptyPointSet);
    };
    if nm != ng {
        return Err(Error::ParticleMismatch(nm, ng));
    }
    if !(model.total_weight() > 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let m = mean_distances(&model.frames, Some(&model.weights));
    let g = mean_distances(&gt.frames, None);
    Ok(ContactMapDiff {
        n: nm,
        values: m.iter().zip(&g).map(|(a, b)| a - b).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn conf3(points: &[[f64; 3]]) -> Conformation {
        Conformation::from_points(points).unwrap()
    }

    #[test]
    fn rog_examples() {
        assert_eq!(radius_of_gyration(&conf3(&[[1.0, 2.0, 3.0]])), 0.0);
        let pair = conf3(&[[0.0, 0.0, 0.0], [3.0, 0.0, 0.0]]);
        assert_eq!(radius_of_gyration(&pair), 1.5);
        let square = Conformation::from_points(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        assert_eq!(radius_of_gyration(&square), 0.5f64.sqrt());
    }

    #[test]
    fn angle_and_dihedral_conventions() {
        let bad = bad_features_frames(&[conf3(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])]);
        assert_eq!(bad.angles.unwrap().values, vec![FRAC_PI_2]);
        let line = bad_features_frames(&[conf3(&[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])]);
        assert_eq!(line.angles.unwrap().values, vec![PI]);
        let cis = conf3(&[[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 1.0, 0.0]]);
        let trans = conf3(&[[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, -1.0, 0.0]]);
        let bad = bad_features_frames(&[cis, trans]);
        assert_eq!(bad.dihedrals.unwrap().values, vec![0.0, PI]);
    }

    #[test]
    fn dihedral_sign_follows_handedness() {
        let plus = conf3(&[[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, 1.0]]);
        let minus = conf3(&[[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [1.0, 0.0, -1.0]]);
        let bad = bad_features_frames(&[plus, minus]);
        let d = bad.dihedrals.unwrap().values;
        assert!((d[0].abs() - FRAC_PI_2).abs() < 1e-15);
        assert_eq!(d[0], -d[1]);
    }

    #[test]
    fn too_few_particles_is_per_class() {
        let bad = bad_features_frames(&[conf3(&[[0.0, 0.0, 0.0], [0.0, 0.0, 3.8]])]);
        assert_eq!(bad.bonds.unwrap().values, vec![3.8]);
        assert_eq!(bad.angles.unwrap_err().needed, 3);
        assert_eq!(bad.dihedrals.unwrap_err().needed, 4);
    }

    #[test]
    fn contact_map_examples() {
        let a = conf3(&[[0.0, 0.0, 0.0], [4.0, 0.0, 0.0]]);
        let b = conf3(&[[0.0, 0.0, 0.0], [3.8, 0.0, 0.0]]);
        let model = WeightedFrameSet::uniform(vec![a.clone(), a]).unwrap();
        let gt = WeightedFrameSet::uniform(vec![b.clone(), b]).unwrap();
        let diff = contact_map_diff(&model, &gt).unwrap();
        assert!((diff.get(0, 1) - 0.2).abs() < 1e-12);
        assert_eq!(diff.get(0, 1), diff.get(1, 0));
        assert_eq!(diff.get(0, 0), 0.0);

        let same = contact_map_diff(&gt, &gt).unwrap();
        assert!(same.values.iter().all(|v| *v == 0.0));

        let chain: Vec<[f64; 3]> = (0..5).map(|i| [i as f64, (i * i) as f64 * 0.3, 0.0]).collect();
        let base = conf3(&chain);
        let dilated = conf3(&chain.iter().map(|p| p.map(|v| v * 1.1)).collect::<Vec<_>>());
        let diff = contact_map_diff(
            &WeightedFrameSet::uniform(vec![dilated]).unwrap(),
            &WeightedFrameSet::uniform(vec![base.clone()]).unwrap(),
        )
        .unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i != j {
                    assert!(diff.get(i, j) > 0.0);
                }
            }
        }

        let other = WeightedFrameSet::uniform(vec![conf3(&[[0.0; 3]; 3])]).unwrap();
        assert!(matches!(
            contact_map_diff(&other, &WeightedFrameSet::uniform(vec![base]).unwrap()),
            Err(Error::ParticleMismatch(3, 5))
        ));
    }
}
