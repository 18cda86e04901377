//! The benchmarking pipeline behind the `wesbench` binary: configuration,
//! on-disk formats, the reference/TICA/WE/benchmark stages and SVG plots.

pub mod commands;
pub mod config;
mod plots;
pub mod svg;
pub mod wetb;

pub use commands::{
    cmd_benchmark, cmd_reference, cmd_report, cmd_tica_fit, cmd_we, load_we_run, run_benchmark, BenchmarkReport,
    Diagnostics, LoadedRun, WeOutcome, WeRunOptions,
};
pub use config::{BenchmarkConfig, Seeds};
pub use wetb::{RunKind, Span, TrajectoryIndex, WetbFile};
