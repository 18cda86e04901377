//! Weighted-ensemble benchmarking toolkit.
//!
//! The crate is organised bottom-up:
//!
//! * [`types`] holds conformations, trajectories, walkers and weighted frame
//!   sets together with the weight bookkeeping helpers.
//! * [`potentials`] and [`propagate`] provide toy energy landscapes and an
//!   overdamped Langevin propagator that runs one segment per walker.
//! * [`tica`] featurizes conformations and fits/project TICA models.
//! * [`we`] is the weighted-ensemble engine (MAB binning, split/merge).
//! * [`msm`] estimates Markov state models, stationary distributions and
//!   PCCA+ macrostates.
//! * [`metrics`] implements densities, divergences and structural observables.
//! * [`bench`] wires everything into the `wesbench` command line tool and
//!   owns the on-disk formats.

pub mod bench;
pub mod error;
mod geom;
pub mod metrics;
pub mod msm;
pub mod potentials;
pub mod propagate;
mod serde_matrix;
pub mod tica;
pub mod types;
pub mod we;

pub use error::{Error, Result};
pub use types::{Conformation, Ensemble, Trajectory, Walker, WeightSource, WeightedFrameSet};
