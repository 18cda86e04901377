//! The JSON benchmark configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::ReportConfig;
use crate::msm::MacrostateConfig;
use crate::potentials::{PotentialKind, PotentialSpec};
use crate::propagate::PropagatorConfig;
use crate::tica::FeatureSpec;
use crate::types::{Conformation, WeightSource};
use crate::we::{MabBinning, WeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PropagatorSection {
    /// Integration step; defaults per system when absent.
    pub dt: Option<f64>,
    pub steps_per_segment: usize,
    pub save_interval: usize,
    pub friction: f64,
    /// Defaults to the system temperature.
    pub kt: Option<f64>,
}

impl Default for PropagatorSection {
    fn default() -> Self {
        PropagatorSection {
            dt: None,
            steps_per_segment: 1000,
            save_interval: 100,
            friction: 1.0,
            kt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReferenceSection {
    /// Independent unbiased runs, all from the system's standard start.
    pub n_starts: usize,
    pub segments_per_start: usize,
}

impl Default for ReferenceSection {
    fn default() -> Self {
        ReferenceSection {
            n_starts: 10,
            segments_per_start: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WeSection {
    pub walkers_per_bin: usize,
    pub max_iterations: u32,
    pub binning: MabBinning,
    pub pcoord_dims: usize,
    /// Flat positions; the system's standard start when absent.
    pub initial_state: Option<Vec<f64>>,
    pub coverage_target: Option<f64>,
    pub coverage_interval: u32,
    /// Leading fraction of iterations left out of weighted distributions.
    pub burn_in_fraction: f64,
}

impl Default for WeSection {
    fn default() -> Self {
        WeSection {
            walkers_per_bin: 3,
            max_iterations: 200,
            binning: MabBinning::default(),
            pcoord_dims: 2,
            initial_state: None,
            coverage_target: None,
            coverage_interval: 10,
            burn_in_fraction: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TicaSection {
    pub lag: usize,
    pub n_components: usize,
    /// Raw coordinates for single-particle systems and pairwise distances
    /// otherwise, when absent.
    pub featurization: Option<FeatureSpec>,
}

impl Default for TicaSection {
    fn default() -> Self {
        TicaSection {
            lag: crate::tica::DEFAULT_LAG,
            n_components: crate::tica::DEFAULT_COMPONENTS,
            featurization: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MsmSection {
    pub grid_n: usize,
    pub lag: usize,
}

impl Default for MsmSection {
    fn default() -> Self {
        MsmSection {
            grid_n: crate::msm::DEFAULT_GRID_N,
            lag: crate::msm::DEFAULT_MSM_LAG,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacrostateSection {
    pub n_clusters: usize,
    pub n_macrostates: usize,
    pub n_tics: usize,
    pub lag: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for MacrostateSection {
    fn default() -> Self {
        let d = MacrostateConfig::default();
        MacrostateSection {
            n_clusters: d.n_clusters,
            n_macrostates: d.n_macrostates,
            n_tics: d.n_tics,
            lag: d.lag,
            max_iterations: d.max_iterations,
            tolerance: d.tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsSection {
    pub coverage_grid: usize,
    pub histogram_bins: usize,
    pub kl_epsilon: f64,
    pub weighting_mode: WeightSource,
}

impl Default for MetricsSection {
    fn default() -> Self {
        let r = ReportConfig::default();
        MetricsSection {
            coverage_grid: r.coverage_grid,
            histogram_bins: r.histogram_bins,
            kl_epsilon: r.kl_epsilon,
            weighting_mode: WeightSource::WeWeighted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Seeds {
    pub reference: u64,
    pub we: u64,
    pub kmeans: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            reference: 1,
            we: 2,
            kmeans: 3,
        }
    }
}

impl Seeds {
    /// Every stream derived from one seed.
    pub fn from_base(seed: u64) -> Self {
        Seeds {
            reference: seed,
            we: seed.wrapping_add(1),
            kmeans: seed.wrapping_add(2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub system: PotentialSpec,
    #[serde(default)]
    pub propagator: PropagatorSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub we: WeSection,
    #[serde(default)]
    pub tica: TicaSection,
    #[serde(default)]
    pub msm: MsmSection,
    #[serde(default)]
    pub macrostates: MacrostateSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("wesbench-out")
}

/// 1-based line of the first `"key"` after the previous key in `path`,
/// so `["msm", "lag"]` finds the `lag` inside the `msm` section.
fn locate(text: &str, path: &[&str]) -> Option<usize> {
    let mut from = 0;
    for key in path {
        let needle = format!("\"{key}\"");
        from += text[from..].find(&needle)?;
    }
    Some(text[..from].matches('\n').count() + 1)
}

impl BenchmarkConfig {
    pub fn from_json(text: &str, source: &Path) -> Result<Self> {
        let cfg: BenchmarkConfig = serde_json::from_str(text).map_err(|e| {
            Error::Config(format!(
                "{}:{}:{}: {}",
                source.display(),
                e.line(),
                e.column(),
                strip_position(&e)
            ))
        })?;
        if let Err((path, msg)) = cfg.check() {
            let at = locate(text, &path)
                .or_else(|| locate(text, &path[..1]))
                .map_or_else(String::new, |l| format!(":{l}"));
            return Err(Error::Config(format!(
                "{}{at}: {}: {msg}",
                source.display(),
                path.join(".")
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    /// Type invariants not expressible in the schema, reported as the
    /// offending key path and a message.
    fn check(&self) -> std::result::Result<(), (Vec<&'static str>, String)> {
        fn fail<T>(
            path: &[&'static str],
            msg: impl Into<String>,
        ) -> std::result::Result<T, (Vec<&'static str>, String)> {
            Err((path.to_vec(), msg.into()))
        }
        if let Err(e) = self.system.validate() {
            return fail(&["system"], e.to_string());
        }
        let p = &self.propagator;
        if let Some(dt) = p.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                return fail(&["propagator", "dt"], format!("must be positive, got {dt}"));
            }
        }
        if p.save_interval == 0 || p.steps_per_segment == 0 || p.steps_per_segment % p.save_interval != 0 {
            return fail(
                &["propagator", "save_interval"],
                "steps_per_segment must be a positive multiple of save_interval",
            );
        }
        if !(p.friction > 0.0) {
            return fail(&["propagator", "friction"], "must be positive");
        }
        if let Some(kt) = p.kt {
            if !(kt >= 0.0) {
                return fail(&["propagator", "kt"], "must be nonnegative");
            }
        }
        if self.reference.n_starts == 0 || self.reference.segments_per_start == 0 {
            return fail(&["reference"], "n_starts and segments_per_start must be positive");
        }
        let we = &self.we;
        if we.walkers_per_bin == 0 {
            return fail(&["we", "walkers_per_bin"], "must be at least 1");
        }
        if we.binning.bins_per_dim < 2 {
            return fail(&["we", "bins_per_dim"], "must be at least 2");
        }
        if we.binning.n_dims == 0 || we.pcoord_dims != we.binning.n_dims {
            return fail(&["we", "pcoord_dims"], "must be positive and equal binning.n_dims");
        }
        if we.pcoord_dims > self.tica.n_components {
            return fail(&["we", "pcoord_dims"], "cannot exceed tica.n_components");
        }
        if let Some(x) = &we.initial_state {
            let n = self.system.n_particles() * self.system.dims();
            if x.len() != n || x.iter().any(|v| !v.is_finite()) {
                return fail(&["we", "initial_state"], format!("needs {n} finite coordinates"));
            }
        }
        if let Some(c) = we.coverage_target {
            if !(c > 0.0 && c <= 100.0) {
                return fail(&["we", "coverage_target"], "must be a percentage in (0, 100]");
            }
        }
        if we.coverage_interval == 0 {
            return fail(&["we", "coverage_interval"], "must be at least 1");
        }
        if !(0.0..1.0).contains(&we.burn_in_fraction) {
            return fail(&["we", "burn_in_fraction"], "must lie in [0, 1)");
        }
        if self.tica.lag == 0 {
            return fail(&["tica", "lag"], "must be at least 1");
        }
        if self.tica.n_components == 0 {
            return fail(&["tica", "n_components"], "must be at least 1");
        }
        if self.msm.grid_n < 2 {
            return fail(&["msm", "grid_n"], "must be at least 2");
        }
        if self.msm.lag == 0 {
            return fail(&["msm", "lag"], "must be at least 1");
        }
        let m = &self.macrostates;
        if m.n_clusters == 0 || m.n_macrostates == 0 || m.n_macrostates > m.n_clusters {
            return fail(
                &["macrostates", "n_macrostates"],
                "need 1 <= n_macrostates <= n_clusters",
            );
        }
        if m.n_tics == 0 || m.lag == 0 || m.max_iterations == 0 || !(m.tolerance >= 0.0) {
            return fail(
                &["macrostates"],
                "n_tics, lag and max_iterations must be positive, tolerance nonnegative",
            );
        }
        let mt = &self.metrics;
        if mt.coverage_grid == 0 {
            return fail(&["metrics", "coverage_grid"], "must be at least 1");
        }
        if mt.histogram_bins == 0 {
            return fail(&["metrics", "histogram_bins"], "must be at least 1");
        }
        if !(mt.kl_epsilon > 0.0) {
            return fail(&["metrics", "kl_epsilon"], "must be positive");
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = Seeds::from_base(seed);
        self
    }

    fn default_dt(&self) -> f64 {
        match self.system.kind() {
            PotentialKind::DoubleWell2d => 5e-3,
            PotentialKind::MuellerBrown2d => 1e-4,
            PotentialKind::CgChain3d => 1e-3,
        }
    }

    pub fn propagator(&self, seed_base: u64) -> PropagatorConfig {
        let p = &self.propagator;
        PropagatorConfig {
            potential: self.system,
            steps_per_segment: p.steps_per_segment,
            save_interval: p.save_interval,
            dt: p.dt.unwrap_or_else(|| self.default_dt()),
            friction: p.friction,
            kt: p.kt.unwrap_or(self.system.temperature),
            seed_base,
        }
    }

    pub fn features(&self) -> FeatureSpec {
        self.tica
            .featurization
            .clone()
            .unwrap_or_else(|| FeatureSpec::default_for(self.system.n_particles()))
    }

    pub fn we_config(&self) -> Result<WeConfig> {
        let we = &self.we;
        let initial_state = match &we.initial_state {
            Some(x) => Some(Conformation::new(x.clone(), self.system.dims())?),
            None => None,
        };
        Ok(WeConfig {
            walkers_per_bin: we.walkers_per_bin,
            max_iterations: we.max_iterations,
            binning: we.binning,
            pcoord_dims: we.pcoord_dims,
            propagator: self.propagator(self.seeds.we),
            initial_state,
            coverage_target: we.coverage_target,
            coverage_interval: we.coverage_interval,
            coverage_grid: self.metrics.coverage_grid,
        })
    }

    pub fn report_config(&self) -> ReportConfig {
        ReportConfig {
            histogram_bins: self.metrics.histogram_bins,
            kl_epsilon: self.metrics.kl_epsilon,
            coverage_grid: self.metrics.coverage_grid,
        }
    }

    pub fn macrostate_config(&self) -> MacrostateConfig {
        let m = &self.macrostates;
        MacrostateConfig {
            n_clusters: m.n_clusters,
            n_macrostates: m.n_macrostates,
            n_tics: m.n_tics,
            lag: m.lag,
            seed: self.seeds.kmeans,
            max_iterations: m.max_iterations,
            tolerance: m.tolerance,
        }
    }

    /// First iteration kept for weighted distributions.
    pub fn first_iteration(&self, last_iteration: u32) -> u32 {
        (self.we.burn_in_fraction * f64::from(last_iteration)).floor() as u32
    }
}

/// serde_json appends " at line L column C"; the position is already in
/// the prefix.
fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(i) => s[..i].to_string(),
        None => s,
    }
}
