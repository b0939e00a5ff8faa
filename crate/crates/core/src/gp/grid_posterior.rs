use std::sync::Arc;

use super::kernel::KernelSpec;
use super::linalg::dot;
use super::posterior::GpPosterior;
use super::sampler::JointSampler;
use crate::error::{Error, Result};
use crate::grid::GridDomain;

/// Prior covariance of a kernel over every point of a grid.
#[derive(Debug)]
pub struct GridPrior {
    grid: Arc<GridDomain>,
    kernel: KernelSpec,
    cov: Vec<f64>,
}

impl GridPrior {
    pub fn new(grid: Arc<GridDomain>, kernel: KernelSpec) -> Result<Self> {
        if grid.dims() != kernel.dims() {
            return Err(Error::domain(format!(
                "grid has {} dimensions but kernel has {} lengthscales",
                grid.dims(),
                kernel.dims()
            )));
        }
        let n = grid.size();
        let mut cov = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = kernel.eval(grid.point(i), grid.point(j));
                cov[i * n + j] = v;
                cov[j * n + i] = v;
            }
        }
        Ok(GridPrior { grid, kernel, cov })
    }

    pub fn grid(&self) -> &Arc<GridDomain> {
        &self.grid
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.size();
        &self.cov[i * n..(i + 1) * n]
    }
}

/// GP posterior restricted to a grid, with mean and covariance over all grid
/// points maintained incrementally as observations arrive.
///
/// Each observation costs `O(G N + G^2)` instead of the `O(G^2 N)` of a
/// recomputation. Answers agree with [`GpPosterior::posterior_covariance`].
#[derive(Debug, Clone)]
pub struct GridPosterior {
    prior: Arc<GridPrior>,
    gp: GpPosterior,
    /// Column `j` holds `(L^{-1} K_{train, grid})[j, :]`.
    whitened: Vec<Vec<f64>>,
    mean: Vec<f64>,
    /// Only the lower triangle is kept current.
    cov: Vec<f64>,
    observed: Vec<usize>,
}

impl GridPosterior {
    pub fn new(prior: Arc<GridPrior>, noise_variance: f64) -> Result<Self> {
        let gp = GpPosterior::new(prior.kernel.clone(), noise_variance)?;
        let n = prior.grid.size();
        Ok(GridPosterior {
            gp,
            whitened: Vec::new(),
            mean: vec![0.0; n],
            cov: prior.cov.clone(),
            observed: Vec::new(),
            prior,
        })
    }

    pub fn grid(&self) -> &GridDomain {
        &self.prior.grid
    }

    pub fn gp(&self) -> &GpPosterior {
        &self.gp
    }

    /// Grid indices of the observations, in arrival order.
    pub fn observed(&self) -> &[usize] {
        &self.observed
    }

    pub fn len(&self) -> usize {
        self.observed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn variance(&self, k: usize) -> Result<f64> {
        let n = self.grid().size();
        self.gp.clamp_variance(self.cov[k * n + k])
    }

    /// Dense symmetric posterior covariance over the grid.
    pub fn covariance(&self) -> Vec<f64> {
        let n = self.grid().size();
        let mut full = self.cov.clone();
        for i in 0..n {
            for j in 0..i {
                full[j * n + i] = full[i * n + j];
            }
        }
        full
    }

    /// Conditions on observing `y` at grid point `index`.
    pub fn observe(&mut self, index: usize, y: f64) -> Result<()> {
        let g = self.grid().size();
        if index >= g {
            return Err(Error::domain(format!("grid index {index} out of range for {g} points")));
        }
        let gp = self.gp.update(self.prior.grid.point(index), y)?;
        let n = self.observed.len();
        let row = gp.factor().row(n);
        let (coeffs, diag) = (&row[..n], row[n]);

        let mut w = self.prior.row(index).to_vec();
        for (col, &c) in self.whitened.iter().zip(coeffs) {
            for (wg, &cg) in w.iter_mut().zip(col) {
                *wg -= c * cg;
            }
        }
        for wg in &mut w {
            *wg /= diag;
        }

        let c_new = *gp.whitened_y().last().expect("update appended an observation");
        for (m, &wg) in self.mean.iter_mut().zip(&w) {
            *m += wg * c_new;
        }
        for i in 0..g {
            let wi = w[i];
            let row = &mut self.cov[i * g..i * g + i + 1];
            for (c, &wj) in row.iter_mut().zip(&w[..=i]) {
                *c -= wi * wj;
            }
        }

        self.whitened.push(w);
        self.observed.push(index);
        self.gp = gp;
        Ok(())
    }

    /// Factors the current posterior covariance for joint sampling.
    pub fn sampler(&self) -> Result<JointSampler> {
        JointSampler::new(self.mean.clone(), self.cov.clone(), self.prior.kernel.signal_variance())
    }

    /// Posterior variance at every grid point (clamped at 0).
    pub fn variances(&self) -> Result<Vec<f64>> {
        (0..self.grid().size()).map(|k| self.variance(k)).collect()
    }

    /// Mean at `k` recomputed from the stored whitened columns.
    #[doc(hidden)]
    pub fn mean_from_columns(&self, k: usize) -> f64 {
        let col: Vec<f64> = self.whitened.iter().map(|c| c[k]).collect();
        dot(&col, self.gp.whitened_y())
    }
}
