use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg::{cholesky_in_place, dot};
use crate::error::{Error, Result};

/// First diagonal jitter, relative to the signal variance.
pub const JITTER_START: f64 = 1e-10;
/// Largest jitter tried before giving up.
pub const JITTER_MAX: f64 = 1e-4;
/// Pivots within this much of zero (relative to the signal variance) count
/// as exact zeros in the jitter-free first attempt.
pub const SEMIDEFINITE_TOL: f64 = 1e-12;

/// Draws `mean + L u` for a fixed Gaussian, `L L^T = cov + jitter I`.
#[derive(Debug, Clone)]
pub struct JointSampler {
    mean: Vec<f64>,
    factor: Vec<f64>,
    jitter: f64,
}

impl JointSampler {
    /// Factors `cov` (row-major, only the lower triangle is read).
    ///
    /// The first attempt adds no jitter and treats pivots below
    /// `1e-12 * signal_variance` in magnitude as exact zeros, so points whose
    /// value is pinned by noiseless data stay pinned in every sample. If that
    /// fails the diagonal jitter escalates tenfold from `1e-10` to `1e-4`
    /// times `signal_variance`.
    pub fn new(mean: Vec<f64>, cov: Vec<f64>, signal_variance: f64) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::domain("cannot sample over an empty set of points"));
        }
        if cov.len() != n * n {
            return Err(Error::domain(format!("covariance has {} entries, expected {}", cov.len(), n * n)));
        }
        let mut work = cov.clone();
        let mut last_row = match cholesky_in_place(&mut work, n, SEMIDEFINITE_TOL * signal_variance) {
            Ok(()) => return Ok(JointSampler { mean, factor: work, jitter: 0.0 }),
            Err(row) => row,
        };
        let mut relative = JITTER_START;
        while relative <= JITTER_MAX * (1.0 + 1e-9) {
            let jitter = relative * signal_variance;
            work.copy_from_slice(&cov);
            for i in 0..n {
                work[i * n + i] += jitter;
            }
            match cholesky_in_place(&mut work, n, 0.0) {
                Ok(()) => return Ok(JointSampler { mean, factor: work, jitter }),
                Err(row) => last_row = row,
            }
            relative *= 10.0;
        }
        let min_diag = (0..n).map(|i| cov[i * n + i]).fold(f64::INFINITY, f64::min);
        Err(Error::Numerical(format!(
            "posterior covariance of {n} points not factorizable with jitter up to {:e}; \
             last failing pivot row {last_row}, smallest diagonal {min_diag:e}",
            JITTER_MAX * signal_variance
        )))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Absolute jitter that made the factorization succeed.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let n = self.dim();
        let u: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| self.mean[i] + dot(&self.factor[i * n..i * n + i + 1], &u[..=i]))
            .collect()
    }
}
