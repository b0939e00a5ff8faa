use rand::Rng;

use super::kernel::KernelSpec;
use super::linalg::{cholesky_in_place, dot, PackedLower};
use super::sampler::JointSampler;
use crate::error::{Error, Result};
use crate::grid::GridDomain;

/// Pre-clamp variances below `-VARIANCE_FLOOR * signal_variance` mean the
/// algebra is broken rather than rounding.
pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Exact zero-mean GP posterior over a set of noisy observations.
///
/// Snapshots are immutable; [`GpPosterior::update`] returns a new one.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    noise_variance: f64,
    train_x: Vec<Vec<f64>>,
    train_y: Vec<f64>,
    /// Cholesky factor of `K + noise I`.
    factor: PackedLower,
    /// `L^{-1} y`.
    whitened_y: Vec<f64>,
    /// `(K + noise I)^{-1} y`.
    alpha: Vec<f64>,
}

impl GpPosterior {
    /// The prior: no observations.
    pub fn new(kernel: KernelSpec, noise_variance: f64) -> Result<Self> {
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::domain(format!("noise variance must be finite and >= 0, got {noise_variance}")));
        }
        Ok(GpPosterior {
            kernel,
            noise_variance,
            train_x: Vec::new(),
            train_y: Vec::new(),
            factor: PackedLower::new(),
            whitened_y: Vec::new(),
            alpha: Vec::new(),
        })
    }

    /// Builds the posterior in one dense factorization.
    pub fn from_data(kernel: KernelSpec, noise_variance: f64, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Result<Self> {
        let mut gp = Self::new(kernel, noise_variance)?;
        if xs.len() != ys.len() {
            return Err(Error::domain(format!("{} inputs but {} observations", xs.len(), ys.len())));
        }
        for x in &xs {
            gp.check_dims(x)?;
        }
        let n = xs.len();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                k[i * n + j] = gp.kernel.eval(&xs[i], &xs[j]);
            }
            k[i * n + i] += noise_variance;
        }
        cholesky_in_place(&mut k, n, 0.0).map_err(|row| {
            Error::Numerical(format!("training covariance is not positive definite at row {row} of {n}"))
        })?;
        for i in 0..n {
            gp.factor.push_row(&k[i * n..i * n + i + 1]);
        }
        gp.train_x = xs;
        gp.train_y = ys;
        gp.whitened_y = gp.factor.forward_solve(&gp.train_y);
        gp.alpha = gp.factor.backward_solve_transposed(&gp.whitened_y);
        Ok(gp)
    }

    /// Adds one observation by appending a row to the factor.
    pub fn update(&self, x: &[f64], y: f64) -> Result<Self> {
        self.check_dims(x)?;
        if !y.is_finite() {
            return Err(Error::domain(format!("observation must be finite, got {y}")));
        }
        let k_new: Vec<f64> = self.train_x.iter().map(|xi| self.kernel.eval(xi, x)).collect();
        let mut row = self.factor.forward_solve(&k_new);
        let d2 = self.kernel.eval(x, x) + self.noise_variance - dot(&row, &row);
        if !(d2 > 0.0) {
            return Err(Error::Numerical(format!(
                "training covariance lost positive definiteness when adding point {} (pivot {d2:e})",
                self.train_x.len()
            )));
        }
        let diag = d2.sqrt();
        let c_new = (y - dot(&row, &self.whitened_y)) / diag;
        row.push(diag);

        let mut next = self.clone();
        next.factor.push_row(&row);
        next.train_x.push(x.to_vec());
        next.train_y.push(y);
        next.whitened_y.push(c_new);
        next.alpha = next.factor.backward_solve_transposed(&next.whitened_y);
        Ok(next)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn len(&self) -> usize {
        self.train_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train_y.is_empty()
    }

    pub fn train_x(&self) -> &[Vec<f64>] {
        &self.train_x
    }

    pub fn train_y(&self) -> &[f64] {
        &self.train_y
    }

    pub fn factor(&self) -> &PackedLower {
        &self.factor
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub(crate) fn whitened_y(&self) -> &[f64] {
        &self.whitened_y
    }

    fn check_dims(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.kernel.dims() {
            return Err(Error::domain(format!(
                "point has dimension {}, kernel expects {}",
                x.len(),
                self.kernel.dims()
            )));
        }
        Ok(())
    }

    /// `L^{-1} k(train, x)`.
    fn whitened_cross(&self, x: &[f64]) -> Vec<f64> {
        let k: Vec<f64> = self.train_x.iter().map(|xi| self.kernel.eval(xi, x)).collect();
        self.factor.forward_solve(&k)
    }

    pub(crate) fn clamp_variance(&self, v: f64) -> Result<f64> {
        let sv = self.kernel.signal_variance();
        if v < -VARIANCE_FLOOR * sv || v.is_nan() {
            return Err(Error::Numerical(format!("posterior variance {v:e} is negative beyond rounding")));
        }
        Ok(v.max(0.0))
    }

    /// Posterior means and variances at `queries`.
    pub fn posterior_mean_var<P: AsRef<[f64]>>(&self, queries: &[P]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut means = Vec::with_capacity(queries.len());
        let mut vars = Vec::with_capacity(queries.len());
        for q in queries {
            let q = q.as_ref();
            self.check_dims(q)?;
            let w = self.whitened_cross(q);
            means.push(dot(&w, &self.whitened_y));
            vars.push(self.clamp_variance(self.kernel.eval(q, q) - dot(&w, &w))?);
        }
        Ok((means, vars))
    }

    /// Posterior mean vector and dense row-major covariance at `queries`.
    pub fn posterior_covariance<P: AsRef<[f64]>>(&self, queries: &[P]) -> Result<(Vec<f64>, Vec<f64>)> {
        let n = queries.len();
        let mut white = Vec::with_capacity(n);
        let mut mean = Vec::with_capacity(n);
        for q in queries {
            let q = q.as_ref();
            self.check_dims(q)?;
            let w = self.whitened_cross(q);
            mean.push(dot(&w, &self.whitened_y));
            white.push(w);
        }
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.kernel.eval(queries[i].as_ref(), queries[j].as_ref()) - dot(&white[i], &white[j]);
                cov[i * n + j] = v;
                cov[j * n + i] = v;
            }
        }
        Ok((mean, cov))
    }

    /// One joint draw of the latent function over every grid point.
    pub fn posterior_joint_sample<R: Rng + ?Sized>(&self, grid: &GridDomain, rng: &mut R) -> Result<Vec<f64>> {
        let points: Vec<&[f64]> = grid.points().collect();
        let (mean, cov) = self.posterior_covariance(&points)?;
        let sampler = JointSampler::new(mean, cov, self.kernel.signal_variance())?;
        Ok(sampler.sample(rng))
    }
}
