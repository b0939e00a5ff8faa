//! Gaussian-process surrogate over finite domains.

mod grid_posterior;
mod kernel;
pub mod linalg;
mod posterior;
mod sampler;

pub use grid_posterior::{GridPosterior, GridPrior};
pub use kernel::{KernelKind, KernelSpec};
pub use posterior::{GpPosterior, VARIANCE_FLOOR};
pub use sampler::{JointSampler, JITTER_MAX, JITTER_START, SEMIDEFINITE_TOL};
