//! Overdamped Langevin propagation of single segments.
//!
//! Each segment draws its noise from a ChaCha stream keyed by
//! `(seed_base, walker_id, iteration)`, so replaying a segment gives the same
//! bits no matter which thread runs it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potentials::PotentialSpec;
use crate::types::{Conformation, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropagatorConfig {
    pub potential: PotentialSpec,
    pub steps_per_segment: usize,
    pub save_interval: usize,
    pub dt: f64,
    /// Friction coefficient gamma (inverse time).
    pub friction: f64,
    pub kt: f64,
    pub seed_base: u64,
}

impl PropagatorConfig {
    /// 1000 steps per segment saved every 100, friction 1, kT taken from
    /// the potential.
    pub fn new(potential: PotentialSpec, dt: f64, seed_base: u64) -> Self {
        PropagatorConfig {
            potential,
            steps_per_segment: 1000,
            save_interval: 100,
            dt,
            friction: 1.0,
            kt: potential.temperature,
            seed_base,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.save_interval == 0 || self.steps_per_segment == 0 {
            return bad("steps_per_segment and save_interval must be positive".into());
        }
        if self.steps_per_segment % self.save_interval != 0 {
            return bad(format!(
                "steps_per_segment ({}) must be a multiple of save_interval ({})",
                self.steps_per_segment, self.save_interval
            ));
        }
        if !(self.dt > 0.0) || !(self.friction > 0.0) || !(self.kt >= 0.0) {
            return bad("dt and friction must be > 0 and kT >= 0".into());
        }
        self.potential.validate()
    }

    /// Saved frames per segment, the starting point included.
    pub fn saved_points(&self) -> usize {
        self.steps_per_segment / self.save_interval + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentResult {
    pub trajectory: Trajectory,
    pub final_state: Conformation,
    pub broken: bool,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed_base, key_a, key_b)` triple.
pub fn keyed_rng(seed_base: u64, key_a: u64, key_b: u64) -> ChaCha8Rng {
    let mut state = seed_base;
    let mut seed = [0u8; 32];
    let keys = [seed_base, key_a, key_b, 0x5745_5442];
    for (chunk, key) in seed.chunks_exact_mut(8).zip(keys) {
        state ^= splitmix64(&mut key.clone());
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

pub fn propagate_segment(
    cfg: &PropagatorConfig,
    start: &Conformation,
    walker_id: u64,
    iteration: u32,
) -> Result<SegmentResult> {
    cfg.potential.check_shape(start)?;
    let mut rng = keyed_rng(cfg.seed_base, walker_id, u64::from(iteration));
    let drift = cfg.dt / cfg.friction;
    let noise = (2.0 * cfg.kt * cfg.dt / cfg.friction).sqrt();
    let dims = start.dims();

    let mut x = start.positions().to_vec();
    let mut f = vec![0.0; x.len()];
    let mut frames = Vec::with_capacity(cfg.saved_points());
    frames.push(start.clone());
    let mut broken = cfg.potential.is_broken(&x);

    if !broken {
        for step in 1..=cfg.steps_per_segment {
            cfg.potential.force_into(&x, &mut f);
            for (xk, fk) in x.iter_mut().zip(&f) {
                let xi: f64 = StandardNormal.sample(&mut rng);
                *xk += drift * fk + noise * xi;
            }
            if cfg.potential.is_broken(&x) {
                broken = true;
                break;
            }
            if step % cfg.save_interval == 0 {
                frames.push(Conformation::new(x.clone(), dims)?);
            }
        }
    }

    let final_state = Conformation::new(x, dims)?;
    // A start that is already broken still yields its single frame.
    let trajectory = Trajectory::new(frames, cfg.save_interval, cfg.dt)?;
    Ok(SegmentResult {
        trajectory,
        final_state,
        broken,
    })
}

/// Plain unbiased runs, one per start, each `segments_each` segments long.
///
/// Segment `k` of start `i` uses the stream keyed by walker id `i` and
/// iteration `k`; consecutive segments share their boundary frame, which is
/// kept once.
pub fn run_reference(cfg: &PropagatorConfig, starts: &[Conformation], segments_each: usize) -> Result<Vec<Trajectory>> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("run_reference needs at least one start".into()));
    }
    cfg.validate()?;
    starts
        .par_iter()
        .enumerate()
        .map(|(i, start)| {
            let mut frames: Vec<Conformation> = vec![start.clone()];
            let mut state = start.clone();
            for k in 0..segments_each {
                let seg = propagate_segment(cfg, &state, i as u64, k as u32)?;
                frames.extend(seg.trajectory.frames()[1..].iter().cloned());
                if seg.broken {
                    log::warn!("reference run {i} broke during segment {k}");
                    break;
                }
                state = seg.final_state;
            }
            Trajectory::new(frames, cfg.save_interval, cfg.dt)
        })
        .collect()
}
