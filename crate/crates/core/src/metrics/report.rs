//! The KL/W1 table over the eight benchmark observables, plus coverage and
//! the contact-map difference.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::coverage::{coverage, DEFAULT_COVERAGE_GRID};
use crate::metrics::divergence::{kl_divergence, w1_distance, KL_EPSILON};
use crate::metrics::histogram::{shared_edges, Histogram1D, DEFAULT_BINS};
use crate::metrics::structure::{bad_features_frames, contact_map_diff, radius_of_gyration, ContactMapDiff};
use crate::tica::TicaModel;
use crate::types::{WeightSource, WeightedFrameSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Observable {
    #[serde(rename = "TIC 0")]
    Tic0,
    #[serde(rename = "TIC 1")]
    Tic1,
    #[serde(rename = "TIC 2")]
    Tic2,
    #[serde(rename = "TIC 3")]
    Tic3,
    Bonds,
    Angles,
    Dihedrals,
    Gyration,
}

impl Observable {
    pub const ALL: [Observable; 8] = [
        Observable::Tic0,
        Observable::Tic1,
        Observable::Tic2,
        Observable::Tic3,
        Observable::Bonds,
        Observable::Angles,
        Observable::Dihedrals,
        Observable::Gyration,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Observable::Tic0 => "TIC 0",
            Observable::Tic1 => "TIC 1",
            Observable::Tic2 => "TIC 2",
            Observable::Tic3 => "TIC 3",
            Observable::Bonds => "Bonds",
            Observable::Angles => "Angles",
            Observable::Dihedrals => "Dihedrals",
            Observable::Gyration => "Gyration",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub histogram_bins: usize,
    pub kl_epsilon: f64,
    pub coverage_grid: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            histogram_bins: DEFAULT_BINS,
            kl_epsilon: KL_EPSILON,
            coverage_grid: DEFAULT_COVERAGE_GRID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub weighting_mode: WeightSource,
    pub gt_run: String,
    pub model_run: String,
    pub gt_frames: usize,
    pub model_frames: usize,
    pub tica_lag: usize,
    pub tica_components: usize,
}

/// One row per divergence; `None` where an observable does not exist for
/// the system (e.g. dihedrals of a single particle).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub columns: Vec<Observable>,
    #[serde(rename = "KL")]
    pub kl: Vec<Option<f64>>,
    #[serde(rename = "W1")]
    pub w1: Vec<Option<f64>>,
    pub coverage_percent: Option<f64>,
    pub contact_map_diff: Option<ContactMapDiff>,
    pub provenance: Provenance,
}

impl MetricReport {
    pub fn kl_of(&self, o: Observable) -> Option<f64> {
        self.columns.iter().position(|c| *c == o).and_then(|i| self.kl[i])
    }

    pub fn w1_of(&self, o: Observable) -> Option<f64> {
        self.columns.iter().position(|c| *c == o).and_then(|i| self.w1[i])
    }

    /// Markdown rendering of the KL/W1 table.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Metric |");
        for c in &self.columns {
            s.push_str(&format!(" {} |", c.label()));
        }
        s.push_str("\n|---|");
        s.push_str(&"---|".repeat(self.columns.len()));
        for (name, row) in [("KL", &self.kl), ("W1", &self.w1)] {
            s.push_str(&format!("\n| {name} |"));
            for v in row {
                match v {
                    Some(v) => s.push_str(&format!(" {v:.4} |")),
                    None => s.push_str(" n/a |"),
                }
            }
        }
        s.push('\n');
        if let Some(c) = self.coverage_percent {
            s.push_str(&format!("\nCoverage: {c:.2}%\n"));
        }
        s.push_str(&format!(
            "Weighting: {}, gt frames: {}, model frames: {}\n",
            self.provenance.weighting_mode, self.provenance.gt_frames, self.provenance.model_frames
        ));
        s
    }
}

/// Values of one observable with a weight per value.
pub struct ObservableSamples {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Per-observable samples of a frame set, `None` where undefined.
/// `weights = None` treats the frames as unweighted.
pub fn observable_samples(
    frames: &WeightedFrameSet,
    tics: &DMatrix<f64>,
    weighted: bool,
) -> Vec<Option<ObservableSamples>> {
    let frame_w: Vec<f64> = if weighted {
        frames.weights.clone()
    } else {
        vec![1.0; frames.len()]
    };
    let bad = bad_features_frames(&frames.frames);
    Observable::ALL
        .iter()
        .map(|o| match o {
            Observable::Tic0 | Observable::Tic1 | Observable::Tic2 | Observable::Tic3 => {
                let c = *o as usize;
                (c < tics.ncols()).then(|| ObservableSamples {
                    values: tics.column(c).iter().copied().collect(),
                    weights: frame_w.clone(),
                })
            }
            Observable::Bonds | Observable::Angles | Observable::Dihedrals => {
                let s = match o {
                    Observable::Bonds => &bad.bonds,
                    Observable::Angles => &bad.angles,
                    _ => &bad.dihedrals,
                };
                s.as_ref().ok().map(|s| ObservableSamples {
                    weights: s.weights_from(&frame_w),
                    values: s.values.clone(),
                })
            }
            Observable::Gyration => Some(ObservableSamples {
                values: frames.frames.iter().map(radius_of_gyration).collect(),
                weights: frame_w.clone(),
            }),
        })
        .collect()
}

/// Ground-truth and model histograms on shared edges for every observable.
pub fn observable_histograms(
    gt: &WeightedFrameSet,
    gt_tics: &DMatrix<f64>,
    model: &WeightedFrameSet,
    model_tics: &DMatrix<f64>,
    bins: usize,
) -> Result<Vec<Option<(Histogram1D, Histogram1D)>>> {
    let g = observable_samples(gt, gt_tics, false);
    let m = observable_samples(model, model_tics, true);
    g.into_iter()
        .zip(m)
        .map(|pair| match pair {
            (Some(g), Some(m)) => {
                let edges = shared_edges(&g.values, &m.values, bins)?;
                let hg = Histogram1D::from_weighted(&g.values, &g.weights, edges.clone())?;
                let hm = Histogram1D::from_weighted(&m.values, &m.weights, edges)?;
                Ok(Some((hg, hm)))
            }
            _ => Ok(None),
        })
        .collect()
}

/// Compares `model` against `gt` through a shared TICA model. Ground truth
/// is always treated as unweighted raw data; the model's weights are used
/// as given. KL is `D_KL(gt || model)`.
pub fn build_report(
    gt: &WeightedFrameSet,
    model: &WeightedFrameSet,
    tica: &TicaModel,
    cfg: &ReportConfig,
    gt_run: &str,
    model_run: &str,
) -> Result<MetricReport> {
    if gt.is_empty() || model.is_empty() {
        return Err(Error::EmptyPointSet);
    }
    let gt_tics = tica.project_frames(&gt.frames)?;
    let model_tics = tica.project_frames(&model.frames)?;
    let hists = observable_histograms(gt, &gt_tics, model, &model_tics, cfg.histogram_bins)?;
    let mut kl = Vec::with_capacity(8);
    let mut w1 = Vec::with_capacity(8);
    for h in &hists {
        match h {
            Some((hg, hm)) => {
                kl.push(Some(kl_divergence(hg, hm, cfg.kl_epsilon)?));
                w1.push(Some(w1_distance(hg, hm)?));
            }
            None => {
                kl.push(None);
                w1.push(None);
            }
        }
    }
    let coverage_percent = if tica.n_components >= 2 {
        Some(coverage(&gt_tics, &model_tics, cfg.coverage_grid)?)
    } else {
        None
    };
    let contact_map_diff = match gt.n_particles() {
        Some(n) if n >= 2 => Some(contact_map_diff(model, gt)?),
        _ => None,
    };
    Ok(MetricReport {
        columns: Observable::ALL.to_vec(),
        kl,
        w1,
        coverage_percent,
        contact_map_diff,
        provenance: Provenance {
            weighting_mode: model.source,
            gt_run: gt_run.to_string(),
            model_run: model_run.to_string(),
            gt_frames: gt.len(),
            model_frames: model.len(),
            tica_lag: tica.lag,
            tica_components: tica.n_components,
        },
    })
}
