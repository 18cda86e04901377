//! Weighted-ensemble engine: TICA progress coordinates, minimal adaptive
//! binning and Huber-Kim resampling around the Langevin propagator.
//!
//! One iteration resamples the previous iteration's walkers in the bins
//! they were assigned, propagates every child for one segment, projects the
//! saved frames onto the progress coordinate and re-bins on the final
//! points. Iteration 0 holds only the initial walker.

mod binning;
mod resample;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::CoverageGrid;
use crate::propagate::{keyed_rng, propagate_segment, PropagatorConfig, SegmentResult};
use crate::tica::TicaModel;
use crate::types::{
    compensated_sum, normalize, Conformation, Ensemble, Walker, WeightSource, WeightedFrameSet, WEIGHT_SUM_TOLERANCE,
};

pub use binning::{assign_mab_bins, update_mab_bins, BinKey, BoundaryPolicy, MabBinning, MabBins};
pub use resample::{resample, WEIGHT_FLOOR};

/// Stream key for resampling draws; walker ids never reach it.
const RESAMPLE_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeConfig {
    pub walkers_per_bin: usize,
    pub max_iterations: u32,
    pub binning: MabBinning,
    pub pcoord_dims: usize,
    pub propagator: PropagatorConfig,
    /// Defaults to the potential's standard starting conformation.
    pub initial_state: Option<Conformation>,
    /// Stop early once this percentage of the reference TIC grid is visited.
    pub coverage_target: Option<f64>,
    /// Iterations between coverage checks.
    pub coverage_interval: u32,
    pub coverage_grid: usize,
}

impl WeConfig {
    /// 3 walkers per bin on a 7 x 7 MAB grid over TIC 0 and 1.
    pub fn new(propagator: PropagatorConfig, max_iterations: u32) -> Self {
        WeConfig {
            walkers_per_bin: 3,
            max_iterations,
            binning: MabBinning::default(),
            pcoord_dims: 2,
            propagator,
            initial_state: None,
            coverage_target: None,
            coverage_interval: 10,
            coverage_grid: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.walkers_per_bin == 0 {
            return Err(Error::InvalidArgument("walkers_per_bin must be at least 1".into()));
        }
        if self.pcoord_dims != self.binning.n_dims {
            return Err(Error::InvalidArgument(format!(
                "pcoord_dims ({}) must match binning.n_dims ({})",
                self.pcoord_dims, self.binning.n_dims
            )));
        }
        if self.coverage_interval == 0 {
            return Err(Error::InvalidArgument("coverage_interval must be at least 1".into()));
        }
        self.binning.validate()?;
        self.propagator.validate()?;
        if let Some(s) = &self.initial_state {
            self.propagator.potential.check_shape(s)?;
            if self.propagator.potential.is_broken(s.positions()) {
                return Err(Error::InvalidConformation("initial state is broken".into()));
            }
        }
        Ok(())
    }

    pub fn start(&self) -> Conformation {
        self.initial_state
            .clone()
            .unwrap_or_else(|| self.propagator.potential.default_start())
    }
}

/// Progress coordinates of every saved frame of a segment: the first
/// `dims` TICs.
pub fn compute_pcoord(model: &TicaModel, seg: &SegmentResult, dims: usize) -> Result<DMatrix<f64>> {
    pcoord_frames(model, seg.trajectory.frames(), dims)
}

fn pcoord_frames(model: &TicaModel, frames: &[Conformation], dims: usize) -> Result<DMatrix<f64>> {
    if dims > model.n_components {
        return Err(Error::DimensionMismatch {
            expected: model.n_components,
            found: dims,
        });
    }
    Ok(model.project_frames(frames)?.columns(0, dims).into_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkerRecord {
    pub id: u64,
    pub parent_id: Option<u64>,
    /// Zero for a broken walker whose weight went to the survivors.
    pub weight: f64,
    /// Progress coordinate of the last saved frame.
    pub pcoord: Vec<f64>,
    pub broken: bool,
    pub bin: Option<BinKey>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: u32,
    pub walkers: Vec<WalkerRecord>,
    pub bin_edges: Vec<Vec<f64>>,
    pub events: Vec<String>,
    /// Saved frames per walker, in walker order.
    #[serde(skip)]
    pub segments: Vec<Vec<Conformation>>,
    /// Progress coordinates of those frames.
    #[serde(skip)]
    pub segment_pcoords: Vec<DMatrix<f64>>,
}

impl IterationRecord {
    pub fn weight_sum(&self) -> f64 {
        compensated_sum(self.walkers.iter().map(|w| w.weight))
    }

    pub fn n_frames(&self) -> usize {
        self.segments.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "reason")]
pub enum StopReason {
    MaxIterations,
    CoverageReached { iteration: u32, percent: f64 },
    AllWalkersBroken { iteration: u32 },
}

/// Everything a weighted-ensemble run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeRunRecord {
    pub iterations: Vec<IterationRecord>,
    pub stop_reason: StopReason,
}

impl WeRunRecord {
    /// Frames of iterations `>= first_iteration`, each weighted by its
    /// walker's weight, normalized over the whole selection.
    pub fn weighted_frames(&self, first_iteration: u32) -> Result<WeightedFrameSet> {
        weighted_frames(&self.iterations, first_iteration)
    }

    /// Per-segment progress coordinates of iterations `>= first_iteration`.
    pub fn segment_pcoords(&self, first_iteration: u32) -> Vec<&DMatrix<f64>> {
        self.iterations
            .iter()
            .filter(|it| it.iteration >= first_iteration)
            .flat_map(|it| it.segment_pcoords.iter())
            .collect()
    }

    /// Progress coordinates of every saved frame, stacked.
    pub fn all_pcoords(&self) -> DMatrix<f64> {
        stack(&self.segment_pcoords(0))
    }

    pub fn broken_walkers(&self) -> usize {
        self.iterations
            .iter()
            .flat_map(|it| &it.walkers)
            .filter(|w| w.broken)
            .count()
    }
}

pub(crate) fn stack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = parts.first().map_or(0, |p| p.ncols());
    let rows: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for p in parts {
        out.view_mut((r, 0), p.shape()).copy_from(*p);
        r += p.nrows();
    }
    out
}

pub fn weighted_frames(iterations: &[IterationRecord], first_iteration: u32) -> Result<WeightedFrameSet> {
    let mut frames = Vec::new();
    let mut weights = Vec::new();
    for it in iterations.iter().filter(|it| it.iteration >= first_iteration) {
        for (w, seg) in it.walkers.iter().zip(&it.segments) {
            frames.extend(seg.iter().cloned());
            weights.extend(std::iter::repeat_n(w.weight, seg.len()));
        }
    }
    if frames.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    normalize(WeightedFrameSet::new(frames, weights, WeightSource::WeWeighted)?)
}

/// Resumable state between iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeState {
    /// Last completed iteration.
    pub iteration: u32,
    pub next_id: u64,
    /// Surviving walkers of that iteration, states at their segment ends.
    pub walkers: Vec<Walker>,
    pub bins: Vec<BinKey>,
    pub stop_reason: Option<StopReason>,
    pub coverage_hits: Vec<u32>,
}

/// Drives a run one iteration at a time so callers can persist progress.
pub struct WeRunner<'a> {
    cfg: WeConfig,
    tica: &'a TicaModel,
    coverage: Option<CoverageGrid>,
    state: WeState,
}

impl<'a> WeRunner<'a> {
    /// `coverage_reference` holds reference TIC points; it is needed only
    /// when the config sets a coverage target.
    pub fn new(
        cfg: WeConfig,
        tica: &'a TicaModel,
        coverage_reference: Option<&DMatrix<f64>>,
    ) -> Result<(Self, IterationRecord)> {
        cfg.validate()?;
        let start = cfg.start();
        let pcoords = pcoord_frames(tica, std::slice::from_ref(&start), cfg.pcoord_dims)?;
        let pcoord: Vec<f64> = pcoords.row(0).iter().copied().collect();
        let bins = update_mab_bins(&cfg.binning, std::slice::from_ref(&pcoord))?;
        let keys = assign_mab_bins(&cfg.binning, &bins, std::slice::from_ref(&pcoord));
        let walker = Walker {
            id: 0,
            state: start.clone(),
            weight: 1.0,
            parent_id: None,
            iteration: 0,
            pcoord: pcoord.clone(),
        };
        let record = IterationRecord {
            iteration: 0,
            walkers: vec![WalkerRecord {
                id: 0,
                parent_id: None,
                weight: 1.0,
                pcoord,
                broken: false,
                bin: Some(keys[0]),
            }],
            bin_edges: bins.edges,
            events: Vec::new(),
            segments: vec![vec![start]],
            segment_pcoords: vec![pcoords],
        };
        let mut runner = WeRunner {
            coverage: Self::coverage_grid(&cfg, coverage_reference)?,
            cfg,
            tica,
            state: WeState {
                iteration: 0,
                next_id: 1,
                walkers: vec![walker],
                bins: keys,
                stop_reason: None,
                coverage_hits: Vec::new(),
            },
        };
        if runner.cfg.max_iterations == 0 {
            runner.state.stop_reason = Some(StopReason::MaxIterations);
        }
        runner.track_coverage(&record)?;
        Ok((runner, record))
    }

    /// Continues from a saved state.
    pub fn resume(
        cfg: WeConfig,
        tica: &'a TicaModel,
        coverage_reference: Option<&DMatrix<f64>>,
        state: WeState,
    ) -> Result<Self> {
        cfg.validate()?;
        let mut coverage = Self::coverage_grid(&cfg, coverage_reference)?;
        if let Some(c) = coverage.as_mut() {
            c.restore_hits(&state.coverage_hits);
        }
        Ok(WeRunner {
            cfg,
            tica,
            coverage,
            state,
        })
    }

    fn coverage_grid(cfg: &WeConfig, reference: Option<&DMatrix<f64>>) -> Result<Option<CoverageGrid>> {
        match (cfg.coverage_target, reference) {
            (None, _) => Ok(None),
            (Some(_), Some(r)) => Ok(Some(CoverageGrid::new(r, cfg.coverage_grid)?)),
            (Some(_), None) => Err(Error::InvalidArgument(
                "a coverage target needs reference TIC points".into(),
            )),
        }
    }

    pub fn state(&self) -> &WeState {
        &self.state
    }

    pub fn config(&self) -> &WeConfig {
        &self.cfg
    }

    pub fn is_finished(&self) -> bool {
        self.state.stop_reason.is_some()
    }

    fn track_coverage(&mut self, record: &IterationRecord) -> Result<()> {
        let Some(grid) = self.coverage.as_mut() else {
            return Ok(());
        };
        for p in &record.segment_pcoords {
            grid.mark(p)?;
        }
        self.state.coverage_hits = grid.hit_cells();
        let it = record.iteration;
        if self.state.stop_reason.is_none() && it > 0 && it % self.cfg.coverage_interval == 0 {
            let percent = grid.percent();
            if percent >= self.cfg.coverage_target.unwrap_or(f64::INFINITY) {
                log::info!("coverage {percent:.1}% reached at iteration {it}");
                self.state.stop_reason = Some(StopReason::CoverageReached { iteration: it, percent });
            }
        }
        Ok(())
    }

    /// Runs the next iteration, or returns `None` once the run has stopped.
    pub fn step(&mut self) -> Result<Option<IterationRecord>> {
        if self.is_finished() {
            return Ok(None);
        }
        let iteration = self.state.iteration + 1;
        let previous = Ensemble::new(self.state.walkers.clone(), self.state.iteration)?;
        let mut rng = keyed_rng(self.cfg.propagator.seed_base, RESAMPLE_STREAM, u64::from(iteration));
        let mut next_id = self.state.next_id;
        let children = resample(
            &previous,
            &self.state.bins,
            self.cfg.walkers_per_bin,
            &mut rng,
            &mut next_id,
        )?;

        let prop = &self.cfg.propagator;
        let results: Vec<SegmentResult> = children
            .walkers()
            .par_iter()
            .map(|w| propagate_segment(prop, &w.state, w.id, iteration))
            .collect::<Result<_>>()?;
        let dims = self.cfg.pcoord_dims;
        let pcoords: Vec<DMatrix<f64>> = results
            .par_iter()
            .map(|r| compute_pcoord(self.tica, r, dims))
            .collect::<Result<_>>()?;

        let mut walkers = children.into_walkers();
        let mut events = Vec::new();
        let broken: Vec<bool> = results.iter().map(|r| r.broken).collect();
        let lost = compensated_sum(walkers.iter().zip(&broken).filter(|(_, b)| **b).map(|(w, _)| w.weight));
        let n_broken = broken.iter().filter(|b| **b).count();
        let all_broken = n_broken == walkers.len();
        if n_broken > 0 {
            let ids: Vec<u64> = walkers
                .iter()
                .zip(&broken)
                .filter(|(_, b)| **b)
                .map(|(w, _)| w.id)
                .collect();
            let msg = if all_broken {
                format!("all {n_broken} walkers broke; stopping")
            } else {
                format!("{n_broken} walkers broke (ids {ids:?}); weight {lost:e} redistributed to survivors")
            };
            log::warn!("iteration {iteration}: {msg}");
            events.push(msg);
        }
        if n_broken > 0 && !all_broken {
            let kept = 1.0 - lost;
            for (w, b) in walkers.iter_mut().zip(&broken) {
                w.weight = if *b { 0.0 } else { w.weight / kept };
            }
        }

        for ((w, r), p) in walkers.iter_mut().zip(&results).zip(&pcoords) {
            w.state = r.final_state.clone();
            w.pcoord = p.row(p.nrows() - 1).iter().copied().collect();
        }
        let live: Vec<usize> = if all_broken {
            (0..walkers.len()).collect()
        } else {
            (0..walkers.len()).filter(|i| !broken[*i]).collect()
        };
        let live_pcoords: Vec<Vec<f64>> = live.iter().map(|i| walkers[*i].pcoord.clone()).collect();
        let bins = update_mab_bins(&self.cfg.binning, &live_pcoords)?;
        let keys = assign_mab_bins(&self.cfg.binning, &bins, &live_pcoords);
        let mut walker_bins = vec![None; walkers.len()];
        for (i, k) in live.iter().zip(&keys) {
            walker_bins[*i] = Some(*k);
        }

        let record = IterationRecord {
            iteration,
            walkers: walkers
                .iter()
                .zip(&broken)
                .zip(&walker_bins)
                .map(|((w, b), bin)| WalkerRecord {
                    id: w.id,
                    parent_id: w.parent_id,
                    weight: w.weight,
                    pcoord: w.pcoord.clone(),
                    broken: *b,
                    bin: if *b && !all_broken { None } else { *bin },
                })
                .collect(),
            bin_edges: bins.edges,
            events,
            segments: results.into_iter().map(|r| r.trajectory.into_frames()).collect(),
            segment_pcoords: pcoords,
        };
        let sum = record.weight_sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::WeightNotConserved(sum));
        }

        self.state.iteration = iteration;
        self.state.next_id = next_id;
        if all_broken {
            self.state.stop_reason = Some(StopReason::AllWalkersBroken { iteration });
        } else {
            let survivors: Vec<Walker> = walkers
                .into_iter()
                .zip(&broken)
                .filter(|(_, b)| !**b)
                .map(|(w, _)| w)
                .collect();
            self.state.walkers = survivors;
            self.state.bins = keys;
            if iteration >= self.cfg.max_iterations {
                self.state.stop_reason = Some(StopReason::MaxIterations);
            }
        }
        self.track_coverage(&record)?;
        Ok(Some(record))
    }
}

/// Runs a complete weighted-ensemble simulation in memory.
pub fn run_we(cfg: &WeConfig, tica: &TicaModel, coverage_reference: Option<&DMatrix<f64>>) -> Result<WeRunRecord> {
    let (mut runner, first) = WeRunner::new(cfg.clone(), tica, coverage_reference)?;
    let mut iterations = vec![first];
    while let Some(record) = runner.step()? {
        iterations.push(record);
    }
    Ok(WeRunRecord {
        iterations,
        stop_reason: runner.state.stop_reason.clone().unwrap_or(StopReason::MaxIterations),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potentials::PotentialSpec;
    use crate::propagate::run_reference;
    use crate::tica::{featurize, FeatureSpec};
    use std::collections::HashSet;

    fn dw_setup(iterations: u32, seed: u64) -> (WeConfig, TicaModel) {
        let potential = PotentialSpec::double_well(0.4);
        let mut prop = PropagatorConfig::new(potential, 5e-3, seed);
        prop.steps_per_segment = 200;
        prop.save_interval = 20;
        let reference = run_reference(&prop, &[potential.default_start()], 40).unwrap();
        let x = featurize(&FeatureSpec::raw(), &reference[0]).unwrap();
        let tica = TicaModel::fit(&[&x], 10, 2, FeatureSpec::raw()).unwrap();
        (WeConfig::new(prop, iterations), tica)
    }

    #[test]
    fn zero_iterations_hold_only_the_initial_walker() {
        let (cfg, tica) = dw_setup(0, 1);
        let record = run_we(&cfg, &tica, None).unwrap();
        assert_eq!(record.iterations.len(), 1);
        assert_eq!(record.iterations[0].walkers.len(), 1);
        assert_eq!(record.iterations[0].walkers[0].weight, 1.0);
        assert_eq!(record.stop_reason, StopReason::MaxIterations);
    }

    #[test]
    fn run_keeps_weight_lineage_and_bounds() {
        let (cfg, tica) = dw_setup(25, 2);
        let record = run_we(&cfg, &tica, None).unwrap();
        assert_eq!(record.iterations.len(), 26);
        let cap = 3 * (49 + 4);
        let mut previous: HashSet<u64> = HashSet::from([0]);
        for it in &record.iterations {
            assert!((it.weight_sum() - 1.0).abs() <= 1e-12);
            assert!(it.walkers.len() <= cap);
            if it.iteration > 0 {
                for w in &it.walkers {
                    assert!(previous.contains(&w.parent_id.unwrap()));
                }
                assert_eq!(it.segments.len(), it.walkers.len());
                assert!(it.segments.iter().all(|s| s.len() == 11));
            }
            previous = it.walkers.iter().map(|w| w.id).collect();
        }
        let frames = record.weighted_frames(0).unwrap();
        assert!((frames.total_weight() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn runs_are_reproducible_across_thread_counts() {
        let (cfg, tica) = dw_setup(8, 3);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_we(&cfg, &tica, None).unwrap());
        let b = four.install(|| run_we(&cfg, &tica, None).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.iterations[8].segments, b.iterations[8].segments);
    }

    #[test]
    fn resuming_matches_an_uninterrupted_run() {
        let (cfg, tica) = dw_setup(6, 4);
        let full = run_we(&cfg, &tica, None).unwrap();
        let (mut runner, _) = WeRunner::new(cfg.clone(), &tica, None).unwrap();
        for _ in 0..3 {
            runner.step().unwrap();
        }
        let saved: WeState = serde_json::from_str(&serde_json::to_string(runner.state()).unwrap()).unwrap();
        let mut resumed = WeRunner::resume(cfg, &tica, None, saved).unwrap();
        let mut rest = Vec::new();
        while let Some(r) = resumed.step().unwrap() {
            rest.push(r);
        }
        assert_eq!(rest, full.iterations[4..].to_vec());
    }

    #[test]
    fn coverage_target_stops_early() {
        let (mut cfg, tica) = dw_setup(100, 5);
        cfg.coverage_target = Some(1.0);
        cfg.coverage_interval = 2;
        cfg.coverage_grid = 1;
        let reference = DMatrix::from_row_slice(2, 2, &[-3.0, -3.0, 3.0, 3.0]);
        assert!(run_we(&cfg, &tica, None).is_err());
        let record = run_we(&cfg, &tica, Some(&reference)).unwrap();
        assert!(matches!(
            record.stop_reason,
            StopReason::CoverageReached { iteration: 2, .. }
        ));
        assert_eq!(record.iterations.len(), 3);
    }

    #[test]
    fn exploding_chain_stops_without_error() {
        let potential = PotentialSpec::cg_chain(1.0);
        let prop = PropagatorConfig::new(potential, 1e-2, 1);
        let frames: Vec<Conformation> = (0..30)
            .map(|i| {
                let mut c = potential.default_start();
                c.positions_mut()[0] += 0.01 * i as f64;
                c.positions_mut()[4] -= 0.02 * (i % 7) as f64;
                c
            })
            .collect();
        let x = crate::tica::featurize_frames(&FeatureSpec::distances(), &frames).unwrap();
        let tica = TicaModel::fit(&[&x], 1, 2, FeatureSpec::distances()).unwrap();
        let record = run_we(&WeConfig::new(prop, 5), &tica, None).unwrap();
        assert_eq!(record.stop_reason, StopReason::AllWalkersBroken { iteration: 1 });
        assert!(record.broken_walkers() > 0);
        assert!((record.iterations[1].weight_sum() - 1.0).abs() < 1e-12);
        assert!(record.weighted_frames(0).is_ok());
    }

    #[test]
    fn pcoord_of_the_feature_mean_is_zero() {
        let (_, tica) = dw_setup(0, 6);
        let mean = Conformation::new(tica.mean.to_vec(), 2).unwrap();
        let p = pcoord_frames(&tica, &[mean], 2).unwrap();
        assert!(p.iter().all(|v| v.abs() < 1e-12));
        assert!(pcoord_frames(&tica, &[Conformation::new(vec![0.0, 0.0], 2).unwrap()], 3).is_err());
    }
}
