//! Satisficing Thompson-sampling Bayesian optimization over finite grids.
//!
//! The crate covers the full loop: a GP surrogate on a grid ([`gp`]),
//! Thompson and rate-distortion (Blahut-Arimoto) acquisition ([`acquisition`]),
//! a deterministic time-budgeted worker simulator in sequential, synchronous
//! and asynchronous modes ([`scheduler`]), objective tables and noise
//! ([`objective`]), regret curves ([`metrics`]), and an exact finite
//! environment for the information identities behind the method ([`theory`]).

pub mod acquisition;
pub mod experiment;
pub mod gp;
pub mod grid;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod scheduler;
pub mod theory;

mod error;

pub use error::{Error, Result};
pub use gp::{GpPosterior, GridPosterior, GridPrior, KernelKind, KernelSpec};
pub use grid::{ChargingGeometry, ChargingProtocol, GridDomain};
pub use objective::{NoiseModel, TabularObjective};
pub use rng::{Stream, StreamKey};
