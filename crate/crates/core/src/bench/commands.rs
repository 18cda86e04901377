//! The pipeline stages behind each CLI subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::config::BenchmarkConfig;
use super::plots;
use super::wetb::{index_path, read_json, sidecar, write_json, RunKind, Span, TrajectoryIndex, WetbFile};
use crate::error::{Error, Result};
use crate::metrics::{build_report, MetricReport};
use crate::msm::{assign_bins, fit_macrostates, msm_reweight, MacrostateModel, MsmModel, RectilinearGrid};
use crate::propagate::run_reference;
use crate::tica::{featurize_frames, TicaModel};
use crate::types::{Conformation, WeightSource, WeightedFrameSet};
use crate::we::{stack, weighted_frames, IterationRecord, StopReason, WeRunRecord, WeRunner, WeState};

pub const GT_FILE: &str = "gt.wetrj";
pub const TICA_FILE: &str = "tica_model.json";
pub const WE_FILE: &str = "we.wetrj";
pub const REPORT_FILE: &str = "report.json";
pub const MSM_FILE: &str = "msm_model.json";
pub const MACROSTATE_FILE: &str = "macrostate_model.json";
const JOURNAL_DIR: &str = "we.journal";
const CHECKPOINT_FILE: &str = "checkpoint.json";

/// Frames offered to k-means when fitting macrostates.
pub const MACROSTATE_MAX_FRAMES: usize = 50_000;

/// Bond lengths inside this window count as physically sane.
pub const BOND_SANE_RANGE: [f64; 2] = [3.5, 4.5];
/// Minimum share of bond-length mass inside [`BOND_SANE_RANGE`].
pub const BOND_SANE_MASS: f64 = 0.99;

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map_or_else(|| path.display().to_string(), |n| n.to_string_lossy().into_owned())
}

/// A trajectory file with its index, frames split per span.
pub struct LoadedRun {
    pub file: WetbFile,
    pub index: TrajectoryIndex,
    pub frames: Vec<Conformation>,
}

impl LoadedRun {
    pub fn read(path: &Path) -> Result<Self> {
        let file = WetbFile::read(path)?;
        let ipath = index_path(path);
        let index: TrajectoryIndex = read_json(&ipath)?;
        index.check(file.n_frames(), &ipath)?;
        let frames = file.frames()?;
        Ok(LoadedRun { file, index, frames })
    }

    pub fn spans(&self) -> impl Iterator<Item = (&Span, &[Conformation])> {
        self.index
            .spans
            .iter()
            .map(|s| (s, &self.frames[s.start..s.start + s.len]))
    }
}

pub struct ReferenceOutputs {
    pub trajectory: PathBuf,
    pub tica: PathBuf,
}

/// Unbiased reference runs from the system's standard start, stored as
/// `gt.wetrj` with uniform weights, plus a TICA model fitted on them.
pub fn cmd_reference(cfg: &BenchmarkConfig) -> Result<ReferenceOutputs> {
    create_dir(&cfg.output_dir)?;
    let prop = cfg.propagator(cfg.seeds.reference);
    let starts = vec![cfg.system.default_start(); cfg.reference.n_starts];
    let trajs = run_reference(&prop, &starts, cfg.reference.segments_per_start)?;
    let total: usize = trajs.iter().map(|t| t.len()).sum();
    let weight = 1.0 / total as f64;
    let mut file = WetbFile::new(cfg.system.n_particles(), cfg.system.dims());
    let mut spans = Vec::with_capacity(trajs.len());
    for (i, t) in trajs.iter().enumerate() {
        spans.push(Span {
            start: file.n_frames(),
            len: t.len(),
            iteration: i as u32,
            walker_id: i as u64,
        });
        for f in t.frames() {
            file.push(f, weight)?;
        }
    }
    let index = TrajectoryIndex {
        kind: RunKind::Reference,
        dt: prop.dt,
        save_stride: prop.save_interval,
        spans,
    };
    let path = cfg.output_dir.join(GT_FILE);
    file.write(&path)?;
    write_json(&index_path(&path), &index)?;
    log::info!("wrote {} reference frames to {}", total, path.display());

    // Fit on the stored single-precision frames so refitting from the file
    // reproduces the model exactly.
    let tica = fit_tica(
        cfg,
        &LoadedRun {
            frames: file.frames()?,
            file,
            index,
        },
    )?;
    let tica_path = cfg.output_dir.join(TICA_FILE);
    write_json(&tica_path, &tica)?;
    Ok(ReferenceOutputs {
        trajectory: path,
        tica: tica_path,
    })
}

fn fit_tica(cfg: &BenchmarkConfig, gt: &LoadedRun) -> Result<TicaModel> {
    let spec = cfg.features();
    let feats: Vec<DMatrix<f64>> = gt
        .spans()
        .map(|(_, frames)| featurize_frames(&spec, frames))
        .collect::<Result<_>>()?;
    let refs: Vec<&DMatrix<f64>> = feats.iter().collect();
    let model = TicaModel::fit(&refs, cfg.tica.lag, cfg.tica.n_components, spec)?;
    log::info!("TICA eigenvalues {:?}", model.eigenvalues);
    Ok(model)
}

/// Refits the TICA model on an existing reference trajectory.
pub fn cmd_tica_fit(cfg: &BenchmarkConfig, gt_path: &Path) -> Result<PathBuf> {
    create_dir(&cfg.output_dir)?;
    let tica = fit_tica(cfg, &LoadedRun::read(gt_path)?)?;
    let path = cfg.output_dir.join(TICA_FILE);
    write_json(&path, &tica)?;
    Ok(path)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct WeRunOptions {
    /// Discard any checkpoint and start over.
    pub fresh: bool,
    /// Stop after this many new iterations, leaving a checkpoint.
    pub stop_after: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum WeOutcome {
    Finished {
        trajectory: PathBuf,
        stop_reason: StopReason,
    },
    Paused {
        iteration: u32,
    },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Checkpoint {
    we_config: crate::we::WeConfig,
    tica: TicaModel,
    state: WeState,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JournalEntry {
    record: IterationRecord,
    frames_per_walker: Vec<usize>,
}

struct Journal {
    dir: PathBuf,
}

impl Journal {
    fn blob(&self, it: u32) -> PathBuf {
        self.dir.join(format!("iter_{it:06}.wetb"))
    }

    fn entry(&self, it: u32) -> PathBuf {
        self.dir.join(format!("iter_{it:06}.json"))
    }

    fn checkpoint(&self) -> PathBuf {
        self.dir.join(CHECKPOINT_FILE)
    }

    fn append(&self, record: &IterationRecord, n_particles: usize, dims: usize) -> Result<()> {
        let mut blob = WetbFile::new(n_particles, dims);
        for (w, seg) in record.walkers.iter().zip(&record.segments) {
            for f in seg {
                blob.push(f, w.weight)?;
            }
        }
        blob.write(&self.blob(record.iteration))?;
        let entry = JournalEntry {
            record: record.clone(),
            frames_per_walker: record.segments.iter().map(Vec::len).collect(),
        };
        write_json(&self.entry(record.iteration), &entry)
    }

    /// Removes entries written after the checkpointed iteration.
    fn truncate(&self, last: u32) -> Result<()> {
        let mut it = last + 1;
        while self.blob(it).exists() || self.entry(it).exists() {
            for p in [self.blob(it), self.entry(it)] {
                if p.exists() {
                    fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
                }
            }
            it += 1;
        }
        Ok(())
    }
}

/// Runs (or resumes) the weighted-ensemble simulation. Each iteration is
/// journaled before the checkpoint moves past it, so an interrupted run
/// continues from its last completed iteration. `coverage_reference` is
/// only read when the config sets a coverage target.
pub fn cmd_we(
    cfg: &BenchmarkConfig,
    tica_path: &Path,
    coverage_reference: Option<&Path>,
    opts: WeRunOptions,
) -> Result<WeOutcome> {
    create_dir(&cfg.output_dir)?;
    let tica: TicaModel = read_json(tica_path)?;
    let we_cfg = cfg.we_config()?;
    let coverage_points = match we_cfg.coverage_target {
        Some(_) => {
            let default = cfg.output_dir.join(GT_FILE);
            let gt = LoadedRun::read(coverage_reference.unwrap_or(&default))?;
            Some(tica.project_frames(&gt.frames)?)
        }
        None => None,
    };
    let journal = Journal {
        dir: cfg.output_dir.join(JOURNAL_DIR),
    };
    if opts.fresh && journal.dir.exists() {
        fs::remove_dir_all(&journal.dir).map_err(|e| Error::io(&journal.dir, e))?;
    }
    create_dir(&journal.dir)?;
    let (n_particles, dims) = (cfg.system.n_particles(), cfg.system.dims());

    let mut runner = if journal.checkpoint().exists() {
        let cp: Checkpoint = read_json(&journal.checkpoint())?;
        if cp.we_config != we_cfg || cp.tica != tica {
            return Err(Error::Config(format!(
                "{} was written with a different configuration or TICA model; rerun with --fresh",
                journal.checkpoint().display()
            )));
        }
        journal.truncate(cp.state.iteration)?;
        log::info!("resuming after iteration {}", cp.state.iteration);
        WeRunner::resume(we_cfg.clone(), &tica, coverage_points.as_ref(), cp.state)?
    } else {
        let (runner, first) = WeRunner::new(we_cfg.clone(), &tica, coverage_points.as_ref())?;
        journal.truncate(0)?;
        journal.append(&first, n_particles, dims)?;
        runner
    };
    let save = |runner: &WeRunner| {
        write_json(
            &journal.checkpoint(),
            &Checkpoint {
                we_config: we_cfg.clone(),
                tica: tica.clone(),
                state: runner.state().clone(),
            },
        )
    };
    save(&runner)?;

    let mut done = 0u32;
    while !runner.is_finished() {
        if opts.stop_after.is_some_and(|n| done >= n) {
            return Ok(WeOutcome::Paused {
                iteration: runner.state().iteration,
            });
        }
        let Some(record) = runner.step()? else { break };
        journal.append(&record, n_particles, dims)?;
        save(&runner)?;
        if record.iteration % 10 == 0 {
            log::info!("iteration {}: {} walkers", record.iteration, record.walkers.len());
        }
        done += 1;
    }
    let stop_reason = runner.state().stop_reason.clone().unwrap_or(StopReason::MaxIterations);
    let last = runner.state().iteration;
    let trajectory = cfg.output_dir.join(WE_FILE);
    assemble(
        &journal,
        last,
        &trajectory,
        &we_cfg,
        stop_reason.clone(),
        n_particles,
        dims,
    )?;
    fs::remove_dir_all(&journal.dir).map_err(|e| Error::io(&journal.dir, e))?;
    Ok(WeOutcome::Finished {
        trajectory,
        stop_reason,
    })
}

fn assemble(
    journal: &Journal,
    last: u32,
    out: &Path,
    we_cfg: &crate::we::WeConfig,
    stop_reason: StopReason,
    n_particles: usize,
    dims: usize,
) -> Result<()> {
    let mut file = WetbFile::new(n_particles, dims);
    let mut spans = Vec::new();
    let mut iterations = Vec::with_capacity(last as usize + 1);
    for it in 0..=last {
        let blob_path = journal.blob(it);
        let blob = WetbFile::read(&blob_path)?;
        let entry: JournalEntry = read_json(&journal.entry(it))?;
        if entry.frames_per_walker.iter().sum::<usize>() != blob.n_frames() {
            return Err(Error::format(
                &blob_path,
                "frame count disagrees with the journal entry",
            ));
        }
        let mut start = file.n_frames();
        for (w, len) in entry.record.walkers.iter().zip(&entry.frames_per_walker) {
            spans.push(Span {
                start,
                len: *len,
                iteration: it,
                walker_id: w.id,
            });
            start += len;
        }
        file.append(&blob)?;
        iterations.push(entry.record);
    }
    let index = TrajectoryIndex {
        kind: RunKind::WeightedEnsemble,
        dt: we_cfg.propagator.dt,
        save_stride: we_cfg.propagator.save_interval,
        spans,
    };
    file.write(out)?;
    write_json(&index_path(out), &index)?;
    write_json(
        &sidecar(out, "record.json"),
        &WeRunRecord {
            iterations,
            stop_reason,
        },
    )
}

/// A WE run read back from disk, with frames and TIC projections attached
/// to each iteration record.
pub fn load_we_run(path: &Path, tica: &TicaModel, pcoord_dims: usize) -> Result<WeRunRecord> {
    let run = LoadedRun::read(path)?;
    let record_path = sidecar(path, "record.json");
    let mut record: WeRunRecord = read_json(&record_path)?;
    let mut spans = run.spans();
    for it in &mut record.iterations {
        let mut segments = Vec::with_capacity(it.walkers.len());
        for w in &it.walkers {
            let (span, frames) = spans
                .next()
                .ok_or_else(|| Error::format(&record_path, "more walkers than index spans"))?;
            if span.walker_id != w.id || span.iteration != it.iteration {
                return Err(Error::format(
                    &record_path,
                    format!("walker {} of iteration {} has no matching span", w.id, it.iteration),
                ));
            }
            segments.push(frames.to_vec());
        }
        it.segment_pcoords = segments
            .iter()
            .map(|s| {
                Ok(tica
                    .project_frames(s)?
                    .columns(0, pcoord_dims.min(tica.n_components))
                    .into_owned())
            })
            .collect::<Result<_>>()?;
        it.segments = segments;
    }
    if spans.next().is_some() {
        return Err(Error::format(&record_path, "index has spans without walkers"));
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Model weight of bond lengths inside [`BOND_SANE_RANGE`].
    pub bond_mass_in_range: Option<f64>,
    pub bond_sanity_ok: Option<bool>,
    pub broken_walkers: usize,
    /// Set when bonds fail the sanity check or any walker broke.
    pub flagged_broken: bool,
    pub stop_reason: StopReason,
    pub we_iterations: u32,
    /// Iterations left out of the weighted distributions.
    pub burn_in_iterations: u32,
    pub msm_states: Option<usize>,
    pub warnings: Vec<String>,
}

/// The metric report together with run diagnostics, as stored in
/// `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    #[serde(flatten)]
    pub metrics: MetricReport,
    pub diagnostics: Diagnostics,
}

impl BenchmarkReport {
    pub fn to_markdown(&self) -> String {
        let d = &self.diagnostics;
        let mut s = self.metrics.to_markdown();
        s.push_str("\n## Diagnostics\n\n");
        s.push_str(&format!("- stop reason: {}\n", stop_label(&d.stop_reason)));
        s.push_str(&format!(
            "- WE iterations: {} ({} discarded as burn-in)\n",
            d.we_iterations, d.burn_in_iterations
        ));
        s.push_str(&format!("- broken walkers: {}\n", d.broken_walkers));
        if let (Some(m), Some(ok)) = (d.bond_mass_in_range, d.bond_sanity_ok) {
            let verdict = if ok { "ok" } else { "FAILED" };
            s.push_str(&format!(
                "- bond mass in [{}, {}] A: {:.4} ({verdict})\n",
                BOND_SANE_RANGE[0], BOND_SANE_RANGE[1], m
            ));
        }
        if let Some(n) = d.msm_states {
            s.push_str(&format!("- MSM states: {n}\n"));
        }
        if d.flagged_broken {
            s.push_str("- **run flagged as physically broken**\n");
        }
        for w in &d.warnings {
            s.push_str(&format!("- warning: {w}\n"));
        }
        s
    }
}

fn stop_label(r: &StopReason) -> String {
    match r {
        StopReason::MaxIterations => "maximum iterations reached".into(),
        StopReason::CoverageReached { iteration, percent } => {
            format!("coverage {percent:.1}% reached at iteration {iteration}")
        }
        StopReason::AllWalkersBroken { iteration } => format!("all walkers broke at iteration {iteration}"),
    }
}

/// Share of bond-length weight inside [`BOND_SANE_RANGE`]; `None` below
/// two particles.
pub fn bond_mass_in_range(frames: &WeightedFrameSet) -> Option<f64> {
    let bonds = crate::metrics::bad_features_frames(&frames.frames).bonds.ok()?;
    let weights = bonds.weights_from(&frames.weights);
    let total: f64 = weights.iter().sum();
    let inside: f64 = bonds
        .values
        .iter()
        .zip(&weights)
        .filter(|(b, _)| (BOND_SANE_RANGE[0]..=BOND_SANE_RANGE[1]).contains(*b))
        .map(|(_, w)| w)
        .sum();
    (total > 0.0).then(|| inside / total)
}

/// Everything the benchmark derives from its inputs, kept for plotting.
pub struct BenchmarkData {
    pub gt: WeightedFrameSet,
    pub gt_tics: DMatrix<f64>,
    pub model: WeightedFrameSet,
    pub model_tics: DMatrix<f64>,
    pub we: WeRunRecord,
    pub first_iteration: u32,
    /// Frames of the selected iterations, unweighted.
    pub raw: WeightedFrameSet,
    pub we_weighted: WeightedFrameSet,
    pub msm_weighted: Option<WeightedFrameSet>,
    pub msm: Option<MsmModel>,
    pub macrostates: Option<MacrostateModel>,
    pub report: BenchmarkReport,
}

pub struct BenchmarkOutputs {
    pub report: PathBuf,
    pub plots: Vec<PathBuf>,
}

/// Grid MSM on the first two TICs of the selected WE segments, binned on
/// the reference extent.
fn fit_msm(
    cfg: &BenchmarkConfig,
    gt_tics: &DMatrix<f64>,
    segments: &[&DMatrix<f64>],
) -> Result<(MsmModel, Vec<usize>)> {
    let dims = gt_tics.ncols().min(2);
    let grid = RectilinearGrid::from_points(gt_tics, dims, cfg.msm.grid_n)?;
    let trimmed: Vec<DMatrix<f64>> = segments.iter().map(|s| s.columns(0, dims).into_owned()).collect();
    let refs: Vec<&DMatrix<f64>> = trimmed.iter().collect();
    let model = MsmModel::fit(grid.clone(), &refs, cfg.msm.lag)?;
    let assignments = assign_bins(&grid, &stack(&refs))?;
    Ok((model, assignments))
}

/// Computes the report without touching the disk.
pub fn run_benchmark(
    cfg: &BenchmarkConfig,
    gt: &LoadedRun,
    we: WeRunRecord,
    tica: &TicaModel,
    gt_name: &str,
    we_name: &str,
) -> Result<BenchmarkData> {
    let mut warnings = Vec::new();
    let gt_set = WeightedFrameSet::uniform(gt.frames.clone())?;
    let gt_tics = tica.project_frames(&gt_set.frames)?;
    let last = we.iterations.last().map_or(0, |it| it.iteration);
    let first_iteration = cfg.first_iteration(last);

    let we_weighted = weighted_frames(&we.iterations, first_iteration)?;
    let raw = WeightedFrameSet::uniform(we_weighted.frames.clone())?;
    let segment_tics: Vec<DMatrix<f64>> = we
        .iterations
        .iter()
        .filter(|it| it.iteration >= first_iteration)
        .flat_map(|it| &it.segments)
        .map(|s| tica.project_frames(s))
        .collect::<Result<_>>()?;
    let seg_refs: Vec<&DMatrix<f64>> = segment_tics.iter().collect();
    let frame_tics = stack(&seg_refs);

    let (msm, msm_weighted) = match fit_msm(cfg, &gt_tics, &seg_refs) {
        Ok((model, assignments)) => {
            let set = msm_reweight(&model, &assignments, raw.frames.clone())?;
            (Some(model), Some(set))
        }
        Err(e) if cfg.metrics.weighting_mode != WeightSource::MsmReweighted => {
            warnings.push(format!("MSM estimation failed: {e}"));
            (None, None)
        }
        Err(e) => return Err(e),
    };
    log::info!("MSM estimated");
    // Every s-th whole segment, so transitions stay inside segments.
    let s = frame_tics.nrows().div_ceil(MACROSTATE_MAX_FRAMES).max(1);
    let sub: Vec<&DMatrix<f64>> = seg_refs.iter().step_by(s).copied().collect();
    let macrostates = match fit_macrostates(&sub, &cfg.macrostate_config()) {
        Ok(m) => Some(m),
        Err(e) => {
            warnings.push(format!("macrostate model failed: {e}"));
            None
        }
    };

    log::info!("macrostates estimated");
    let model = match cfg.metrics.weighting_mode {
        WeightSource::WeWeighted => we_weighted.clone(),
        WeightSource::MsmReweighted => msm_weighted.clone().expect("MSM fit succeeded"),
        WeightSource::RawUnweighted => raw.clone(),
    };
    let metrics = build_report(&gt_set, &model, tica, &cfg.report_config(), gt_name, we_name)?;
    let bond_mass = bond_mass_in_range(&model);
    let bond_ok = bond_mass.map(|m| m >= BOND_SANE_MASS);
    let broken = we.broken_walkers();
    let diagnostics = Diagnostics {
        bond_mass_in_range: bond_mass,
        bond_sanity_ok: bond_ok,
        broken_walkers: broken,
        flagged_broken: bond_ok == Some(false) || broken > 0,
        stop_reason: we.stop_reason.clone(),
        we_iterations: last,
        burn_in_iterations: first_iteration,
        msm_states: msm.as_ref().map(MsmModel::n_states),
        warnings,
    };
    for w in &diagnostics.warnings {
        log::warn!("{w}");
    }
    Ok(BenchmarkData {
        gt: gt_set,
        gt_tics,
        model,
        model_tics: frame_tics,
        we,
        first_iteration,
        raw,
        we_weighted,
        msm_weighted,
        msm,
        macrostates,
        report: BenchmarkReport { metrics, diagnostics },
    })
}

/// Compares a WE run against the reference and writes `report.json`, the
/// fitted MSM and macrostate models, and SVG plots under `plots/`.
pub fn cmd_benchmark(
    cfg: &BenchmarkConfig,
    gt_path: &Path,
    we_path: &Path,
    tica_path: &Path,
) -> Result<BenchmarkOutputs> {
    create_dir(&cfg.output_dir)?;
    let tica: TicaModel = read_json(tica_path)?;
    let gt = LoadedRun::read(gt_path)?;
    let we = load_we_run(we_path, &tica, cfg.we.pcoord_dims)?;
    let data = run_benchmark(cfg, &gt, we, &tica, &file_name(gt_path), &file_name(we_path))?;
    let report = cfg.output_dir.join(REPORT_FILE);
    write_json(&report, &data.report)?;
    if let Some(m) = &data.msm {
        write_json(&cfg.output_dir.join(MSM_FILE), m)?;
    }
    if let Some(m) = &data.macrostates {
        write_json(&cfg.output_dir.join(MACROSTATE_FILE), m)?;
    }
    log::info!("report written");
    let plot_dir = cfg.output_dir.join("plots");
    create_dir(&plot_dir)?;
    let plots = plots::write_all(&plot_dir, &data, cfg)?;
    Ok(BenchmarkOutputs { report, plots })
}

/// Renders a stored report as markdown.
pub fn cmd_report(report_path: &Path) -> Result<String> {
    let report: BenchmarkReport = read_json(report_path)?;
    Ok(report.to_markdown())
}
