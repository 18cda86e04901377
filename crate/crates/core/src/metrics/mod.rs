//! Densities, divergences and structural observables used to compare a
//! model ensemble against ground truth.

pub mod coverage;
pub mod divergence;
pub mod histogram;
pub mod kde;
pub mod report;
pub mod structure;

pub use coverage::{coverage, CoverageGrid};
pub use divergence::{kl_divergence, kl_divergence_masses, w1_distance, KL_EPSILON};
pub use histogram::{shared_edges, uniform_edges, Histogram1D};
pub use kde::{weighted_kde, Kde};
pub use report::{build_report, MetricReport, Observable, ReportConfig};
pub use structure::{
    bad_features, bad_features_frames, contact_map_diff, radius_of_gyration, BadFeatures, ContactMapDiff, FeatureSeries,
};
