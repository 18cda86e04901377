//! Shared domain types and weight bookkeeping.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Particle positions of one configuration, stored flat as
/// `[x0, y0, (z0), x1, y1, ...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conformation {
    positions: Vec<f64>,
    dims: usize,
}

impl Conformation {
    pub fn new(positions: Vec<f64>, dims: usize) -> Result<Self> {
        if dims != 2 && dims != 3 {
            return Err(Error::InvalidConformation(format!("dims must be 2 or 3, got {dims}")));
        }
        if positions.is_empty() || positions.len() % dims != 0 {
            return Err(Error::InvalidConformation(format!(
                "{} coordinates do not form whole {dims}-d particles",
                positions.len()
            )));
        }
        Ok(Conformation { positions, dims })
    }

    /// Builds a conformation from per-particle points.
    pub fn from_points<const D: usize>(points: &[[f64; D]]) -> Result<Self> {
        Self::new(points.iter().flatten().copied().collect(), D)
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_particles(&self) -> usize {
        self.positions.len() / self.dims
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dims..(i + 1) * self.dims]
    }

    pub fn particles(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dims)
    }

    /// Particle `i` padded to three dimensions.
    pub fn point3(&self, i: usize) -> [f64; 3] {
        let p = self.particle(i);
        [p[0], p[1], if self.dims == 3 { p[2] } else { 0.0 }]
    }

    pub fn is_finite(&self) -> bool {
        self.positions.iter().all(|v| v.is_finite())
    }

    pub fn same_shape(&self, other: &Conformation) -> bool {
        self.dims == other.dims && self.positions.len() == other.positions.len()
    }

    pub fn translated(&self, shift: &[f64]) -> Conformation {
        let mut out = self.clone();
        for p in out.positions.chunks_exact_mut(self.dims) {
            for (x, s) in p.iter_mut().zip(shift) {
                *x += s;
            }
        }
        out
    }
}

/// Saved frames of one continuous run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    frames: Vec<Conformation>,
    /// Propagation steps between saved frames.
    pub save_stride: usize,
    /// Time per propagation step.
    pub dt: f64,
}

impl Trajectory {
    pub fn new(frames: Vec<Conformation>, save_stride: usize, dt: f64) -> Result<Self> {
        let first = frames
            .first()
            .ok_or_else(|| Error::InvalidArgument("trajectory needs at least one frame".into()))?;
        if let Some(bad) = frames.iter().find(|f| !f.same_shape(first)) {
            return Err(Error::DimensionMismatch {
                expected: first.positions().len(),
                found: bad.positions().len(),
            });
        }
        Ok(Trajectory {
            frames,
            save_stride,
            dt,
        })
    }

    pub fn frames(&self) -> &[Conformation] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<Conformation> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_particles(&self) -> usize {
        self.frames[0].n_particles()
    }

    pub fn dims(&self) -> usize {
        self.frames[0].dims()
    }

    pub fn last(&self) -> &Conformation {
        self.frames.last().expect("trajectory is never empty")
    }
}

/// A weighted-ensemble trajectory head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Walker {
    pub id: u64,
    pub state: Conformation,
    pub weight: f64,
    pub parent_id: Option<u64>,
    pub iteration: u32,
    pub pcoord: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    walkers: Vec<Walker>,
    pub iteration: u32,
}

/// Absolute tolerance on the ensemble weight sum.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

impl Ensemble {
    /// Validates id uniqueness, weight range and the unit weight sum.
    pub fn new(walkers: Vec<Walker>, iteration: u32) -> Result<Self> {
        let ensemble = Self::new_unchecked_sum(walkers, iteration)?;
        let total = total_weight(&ensemble);
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::WeightNotConserved(total));
        }
        Ok(ensemble)
    }

    /// Like [`Ensemble::new`] but leaves the weight sum unchecked, for
    /// intermediate states such as an ensemble holding broken walkers.
    pub(crate) fn new_unchecked_sum(walkers: Vec<Walker>, iteration: u32) -> Result<Self> {
        if walkers.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        let mut seen = HashSet::with_capacity(walkers.len());
        for w in &walkers {
            if !seen.insert(w.id) {
                return Err(Error::DuplicateWalker(w.id));
            }
            if !(w.weight > 0.0 && w.weight <= 1.0) {
                return Err(Error::InvalidArgument(format!(
                    "walker {} has weight {} outside (0, 1]",
                    w.id, w.weight
                )));
            }
        }
        Ok(Ensemble { walkers, iteration })
    }

    pub fn walkers(&self) -> &[Walker] {
        &self.walkers
    }

    pub fn into_walkers(self) -> Vec<Walker> {
        self.walkers
    }

    pub fn len(&self) -> usize {
        self.walkers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.walkers.is_empty()
    }
}

/// Compensated (Neumaier) sum, so that summing many tiny split weights does
/// not drift.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

pub fn total_weight(ensemble: &Ensemble) -> f64 {
    compensated_sum(ensemble.walkers.iter().map(|w| w.weight))
}

/// Where the weights of a [`WeightedFrameSet`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WeightSource {
    WeWeighted,
    MsmReweighted,
    RawUnweighted,
}

impl std::fmt::Display for WeightSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WeightSource::WeWeighted => "WE weights",
            WeightSource::MsmReweighted => "MSM reweighted",
            WeightSource::RawUnweighted => "raw counts",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedFrameSet {
    pub frames: Vec<Conformation>,
    pub weights: Vec<f64>,
    pub source: WeightSource,
}

impl WeightedFrameSet {
    pub fn new(frames: Vec<Conformation>, weights: Vec<f64>, source: WeightSource) -> Result<Self> {
        if frames.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                expected: frames.len(),
                found: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidArgument(format!("invalid frame weight {w}")));
        }
        if let Some(first) = frames.first() {
            if let Some(bad) = frames.iter().find(|f| !f.same_shape(first)) {
                return Err(Error::ParticleMismatch(first.n_particles(), bad.n_particles()));
            }
        }
        Ok(WeightedFrameSet {
            frames,
            weights,
            source,
        })
    }

    /// Equal weights over `frames`.
    pub fn uniform(frames: Vec<Conformation>) -> Result<Self> {
        let n = frames.len();
        if n == 0 {
            return Err(Error::EmptyPointSet);
        }
        Self::new(frames, vec![1.0 / n as f64; n], WeightSource::RawUnweighted)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn n_particles(&self) -> Option<usize> {
        self.frames.first().map(Conformation::n_particles)
    }

    pub fn total_weight(&self) -> f64 {
        compensated_sum(self.weights.iter().copied())
    }
}

/// Rescales weights to unit sum, preserving frame order.
///
/// Weights that already sum to one within a few ulps are returned untouched,
/// which makes the operation idempotent bit-for-bit.
pub fn normalize(samples: WeightedFrameSet) -> Result<WeightedFrameSet> {
    let total = samples.total_weight();
    if !(total > 0.0) {
        return Err(Error::AllZeroWeights);
    }
    let slack = (samples.len() as f64 + 4.0) * f64::EPSILON;
    if (total - 1.0).abs() <= slack {
        return Ok(samples);
    }
    let WeightedFrameSet {
        frames,
        mut weights,
        source,
    } = samples;
    for w in &mut weights {
        *w /= total;
    }
    Ok(WeightedFrameSet {
        frames,
        weights,
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn point(x: f64, y: f64) -> Conformation {
        Conformation::new(vec![x, y], 2).unwrap()
    }

    fn walker(id: u64, weight: f64) -> Walker {
        Walker {
            id,
            state: point(0.0, 0.0),
            weight,
            parent_id: None,
            iteration: 0,
            pcoord: vec![0.0],
        }
    }

    fn frames(n: usize) -> Vec<Conformation> {
        (0..n).map(|i| point(i as f64, 0.0)).collect()
    }

    #[test]
    fn total_weight_examples() {
        let thirds = Ensemble::new((0..3).map(|i| walker(i, 1.0 / 3.0)).collect(), 0).unwrap();
        assert!((total_weight(&thirds) - 1.0).abs() < 1e-15);
        let single = Ensemble::new(vec![walker(0, 1.0)], 0).unwrap();
        assert_eq!(total_weight(&single), 1.0);
        let mixed = Ensemble::new(vec![walker(0, 0.2), walker(1, 0.3), walker(2, 0.5)], 0).unwrap();
        assert!((total_weight(&mixed) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ensemble_rejects_bad_input() {
        assert!(matches!(Ensemble::new(vec![], 0), Err(Error::EmptyEnsemble)));
        assert!(matches!(
            Ensemble::new(vec![walker(1, 0.5), walker(1, 0.5)], 0),
            Err(Error::DuplicateWalker(1))
        ));
        assert!(matches!(
            Ensemble::new(vec![walker(1, 0.5)], 0),
            Err(Error::WeightNotConserved(_))
        ));
    }

    #[test]
    fn normalize_examples() {
        let set = |w: Vec<f64>| WeightedFrameSet::new(frames(w.len()), w, WeightSource::WeWeighted).unwrap();
        assert_eq!(normalize(set(vec![2.0, 2.0])).unwrap().weights, vec![0.5, 0.5]);
        assert_eq!(normalize(set(vec![1.0])).unwrap().weights, vec![1.0]);
        assert_eq!(normalize(set(vec![1.0, 3.0])).unwrap().weights, vec![0.25, 0.75]);
        assert!(matches!(normalize(set(vec![0.0, 0.0])), Err(Error::AllZeroWeights)));
    }

    #[test]
    fn conformation_validation() {
        assert!(Conformation::new(vec![1.0, 2.0, 3.0], 2).is_err());
        assert!(Conformation::new(vec![], 3).is_err());
        assert!(Conformation::new(vec![1.0], 1).is_err());
        let c = Conformation::new(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 3).unwrap();
        assert_eq!(c.n_particles(), 2);
        assert_eq!(c.particle(1), &[4.0, 5.0, 6.0]);
        assert!(!Conformation::new(vec![f64::NAN, 0.0], 2).unwrap().is_finite());
    }

    #[test]
    fn trajectory_rejects_mixed_shapes() {
        let a = point(0.0, 0.0);
        let b = Conformation::new(vec![0.0; 4], 2).unwrap();
        assert!(Trajectory::new(vec![a, b], 1, 0.1).is_err());
        assert!(Trajectory::new(vec![], 1, 0.1).is_err());
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent(ws in prop::collection::vec(0.0f64..1e3, 1..40)) {
            prop_assume!(ws.iter().any(|w| *w > 0.0));
            let set = WeightedFrameSet::new(frames(ws.len()), ws, WeightSource::WeWeighted).unwrap();
            let once = normalize(set).unwrap();
            prop_assert!((once.total_weight() - 1.0).abs() < 1e-9);
            let twice = normalize(once.clone()).unwrap();
            prop_assert_eq!(once.weights, twice.weights);
        }
    }
}
