//! Point selection: Thompson sampling and satisficing Thompson sampling.
//!
//! Satisficing selection draws `Z` joint posterior samples, measures the
//! distortion `(max g_z - g_z(x))^2` of every point under every sample, runs
//! Blahut-Arimoto to get the rate-distortion target `p(x | g_z)`, then picks a
//! sample uniformly and draws a point from its conditional row.

use std::io::Write;
use std::ops::Range;
use std::path::PathBuf;

use rand::Rng;

use crate::error::{Error, Result};
use crate::gp::{GpPosterior, GridPosterior, JointSampler};
use crate::grid::GridDomain;
use crate::rng::StreamKey;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain(format!("{} entries cannot form a {rows}x{cols} matrix", data.len())));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::domain("matrix rows have different lengths"));
        }
        let n = rows.len();
        Self::new(n, cols, rows.into_iter().flatten().collect())
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Matrix { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// `Z` joint posterior samples over a grid and their distortion matrix.
#[derive(Debug, Clone)]
pub struct SampleEnsemble {
    values: Matrix,
    argmax: Vec<usize>,
    distortion: Matrix,
}

impl SampleEnsemble {
    /// `distortion[z][x] = (max_x' g_z(x') - g_z(x))^2`.
    pub fn from_samples(samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("ensemble needs at least one sample"));
        }
        let values = Matrix::from_rows(samples)?;
        if values.cols() == 0 {
            return Err(Error::domain("samples are empty"));
        }
        let mut argmaxes = Vec::with_capacity(values.rows());
        let mut dist = Vec::with_capacity(values.rows() * values.cols());
        for row in values.iter_rows() {
            if row.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numerical("posterior sample contains a non-finite value".into()));
            }
            let best = argmax(row);
            let top = row[best];
            argmaxes.push(best);
            dist.extend(row.iter().map(|&v| (top - v) * (top - v)));
        }
        let distortion = Matrix::new(values.rows(), values.cols(), dist)?;
        Ok(SampleEnsemble { values, argmax: argmaxes, distortion })
    }

    pub fn z_count(&self) -> usize {
        self.values.rows()
    }

    pub fn size(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn argmax_per_sample(&self) -> &[usize] {
        &self.argmax
    }

    pub fn distortion(&self) -> &Matrix {
        &self.distortion
    }
}

/// Draws `z_count` samples from a factored posterior.
pub fn ensemble_from_sampler<R: Rng + ?Sized>(sampler: &JointSampler, z_count: usize, rng: &mut R) -> Result<SampleEnsemble> {
    if z_count == 0 {
        return Err(Error::domain("z_count must be at least 1"));
    }
    SampleEnsemble::from_samples((0..z_count).map(|_| sampler.sample(rng)).collect())
}

/// Ensemble from a grid posterior.
pub fn build_ensemble<R: Rng + ?Sized>(model: &GridPosterior, z_count: usize, rng: &mut R) -> Result<SampleEnsemble> {
    if z_count == 0 {
        return Err(Error::domain("z_count must be at least 1"));
    }
    ensemble_from_sampler(&model.sampler()?, z_count, rng)
}

/// Ensemble from a free-standing posterior evaluated on `grid`.
pub fn build_ensemble_on<R: Rng + ?Sized>(model: &GpPosterior, grid: &GridDomain, z_count: usize, rng: &mut R) -> Result<SampleEnsemble> {
    if z_count == 0 {
        return Err(Error::domain("z_count must be at least 1"));
    }
    let points: Vec<&[f64]> = grid.points().collect();
    let (mean, cov) = model.posterior_covariance(&points)?;
    let sampler = JointSampler::new(mean, cov, model.kernel().signal_variance())?;
    ensemble_from_sampler(&sampler, z_count, rng)
}

/// Rate-distortion target: `p(x | g_z)` per sample and its mixture marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetDistribution {
    pub conditional: Matrix,
    pub marginal: Vec<f64>,
    pub iterations_used: usize,
    pub final_delta: f64,
}

/// Blahut-Arimoto iteration state for a fixed distortion matrix.
///
/// Each [`step`](BlahutArimoto::step) forms the mixture marginal of the
/// current conditionals and then reweights every row by
/// `q(x) exp(-beta d[z][x])`, normalized per row.
#[derive(Debug, Clone)]
pub struct BlahutArimoto<'a> {
    weights: Vec<f64>,
    /// `-beta d`, the exponent of the reweighting.
    exponent: Vec<f64>,
    /// `exp(-beta d)`.
    factor: Vec<f64>,
    cols: usize,
    conditional: Matrix,
    distortion: &'a Matrix,
    iterations: usize,
    last_delta: f64,
}

impl<'a> BlahutArimoto<'a> {
    /// Starts from uniform conditionals. `weights` are the mixture weights
    /// over rows and must sum to one.
    pub fn new(distortion: &'a Matrix, weights: Vec<f64>, beta: f64) -> Result<Self> {
        if !(beta >= 0.0) || !beta.is_finite() {
            return Err(Error::domain(format!("beta must be finite and >= 0, got {beta}")));
        }
        let (rows, cols) = (distortion.rows(), distortion.cols());
        if rows == 0 || cols == 0 {
            return Err(Error::domain("distortion matrix is empty"));
        }
        if weights.len() != rows {
            return Err(Error::domain(format!("{} weights for {rows} rows", weights.len())));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::domain("mixture weights must be nonnegative and sum to 1"));
        }
        if distortion.as_slice().iter().any(|d| !d.is_finite()) {
            return Err(Error::domain("distortion contains NaN or infinity"));
        }
        if distortion.as_slice().iter().any(|&d| d < 0.0) {
            return Err(Error::domain("distortion must be nonnegative"));
        }
        let exponent: Vec<f64> = distortion.as_slice().iter().map(|&d| -beta * d).collect();
        let factor = exponent.iter().map(|e| e.exp()).collect();
        Ok(BlahutArimoto {
            weights,
            exponent,
            factor,
            cols,
            conditional: Matrix::filled(rows, cols, 1.0 / cols as f64),
            distortion,
            iterations: 0,
            last_delta: f64::INFINITY,
        })
    }

    /// Equal weights over the rows, as for a posterior sample ensemble.
    pub fn uniform(distortion: &'a Matrix, beta: f64) -> Result<Self> {
        let z = distortion.rows().max(1);
        Self::new(distortion, vec![1.0 / z as f64; distortion.rows()], beta)
    }

    pub fn conditional(&self) -> &Matrix {
        &self.conditional
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Mixture marginal of the current conditionals.
    pub fn marginal(&self) -> Vec<f64> {
        mixture_marginal(&self.conditional, &self.weights)
    }

    /// One marginal-then-conditional update; returns the largest entry change.
    pub fn step(&mut self) -> f64 {
        let q = self.marginal();
        let cols = self.cols;
        let mut log_q: Option<Vec<f64>> = None;
        let mut delta = 0.0f64;
        let mut next = vec![0.0; cols];
        for z in 0..self.conditional.rows() {
            let fac = &self.factor[z * cols..(z + 1) * cols];
            let mut total = 0.0;
            for ((n, &qx), &f) in next.iter_mut().zip(&q).zip(fac) {
                *n = qx * f;
                total += *n;
            }
            if total > 1e-280 && total.is_finite() {
                for n in &mut next {
                    *n /= total;
                }
            } else {
                // Everything underflowed: renormalize in log space.
                let lq = log_q.get_or_insert_with(|| q.iter().map(|v| v.ln()).collect());
                let exps = &self.exponent[z * cols..(z + 1) * cols];
                let top = lq.iter().zip(exps).map(|(a, b)| a + b).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for ((n, &a), &b) in next.iter_mut().zip(lq.iter()).zip(exps) {
                    *n = (a + b - top).exp();
                    sum += *n;
                }
                for n in &mut next {
                    *n /= sum;
                }
            }
            for (old, &new) in self.conditional.row_mut(z).iter_mut().zip(&next) {
                delta = delta.max((new - *old).abs());
                *old = new;
            }
        }
        self.iterations += 1;
        self.last_delta = delta;
        delta
    }

    /// Iterates until `k_max` steps or a step changes no entry by `tol` or more.
    pub fn run(mut self, k_max: usize, tol: f64) -> TargetDistribution {
        for _ in 0..k_max {
            if self.step() < tol {
                break;
            }
        }
        self.finish()
    }

    pub fn snapshot(&self) -> TargetDistribution {
        TargetDistribution {
            marginal: self.marginal(),
            conditional: self.conditional.clone(),
            iterations_used: self.iterations,
            final_delta: self.last_delta,
        }
    }

    pub fn finish(self) -> TargetDistribution {
        TargetDistribution {
            marginal: mixture_marginal(&self.conditional, &self.weights),
            conditional: self.conditional,
            iterations_used: self.iterations,
            final_delta: self.last_delta,
        }
    }

    /// Lagrangian of the current iterate.
    pub fn lagrangian(&self, beta: f64) -> f64 {
        weighted_lagrangian(&self.conditional, &self.weights, self.distortion, beta)
    }
}

/// `q(x) = sum_z w_z p(x | z)`.
pub fn mixture_marginal(conditional: &Matrix, weights: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; conditional.cols()];
    for (row, &w) in conditional.iter_rows().zip(weights) {
        for (qx, &p) in q.iter_mut().zip(row) {
            *qx += w * p;
        }
    }
    q
}

/// Blahut-Arimoto over an equally weighted ensemble, from uniform conditionals.
pub fn blahut_arimoto(distortion: &Matrix, beta: f64, k_max: usize, tol: f64) -> Result<TargetDistribution> {
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    Ok(BlahutArimoto::uniform(distortion, beta)?.run(k_max, tol))
}

/// Blahut-Arimoto with explicit mixture weights over the rows.
pub fn blahut_arimoto_weighted(distortion: &Matrix, weights: Vec<f64>, beta: f64, k_max: usize, tol: f64) -> Result<TargetDistribution> {
    if k_max == 0 {
        return Err(Error::domain("k_max must be at least 1"));
    }
    Ok(BlahutArimoto::new(distortion, weights, beta)?.run(k_max, tol))
}

/// `sum_z w_z sum_x p log(p / q)` in nats, with `q` the mixture marginal.
pub fn weighted_mutual_information(conditional: &Matrix, weights: &[f64]) -> f64 {
    let q = mixture_marginal(conditional, weights);
    let mut info = 0.0;
    for (row, &w) in conditional.iter_rows().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let mut r = 0.0;
        for (&p, &qx) in row.iter().zip(&q) {
            // q >= w p holds exactly; the mixture sum can underflow to zero
            // for subnormal p, so restore the bound before dividing.
            let qx = qx.max(w * p);
            if p > 0.0 && qx > 0.0 {
                r += p * (p / qx).ln();
            }
        }
        info += w * r;
    }
    info
}

/// `sum_z w_z sum_x p(x | z) d[z][x]`.
pub fn weighted_distortion(conditional: &Matrix, weights: &[f64], distortion: &Matrix) -> f64 {
    conditional
        .iter_rows()
        .zip(distortion.iter_rows())
        .zip(weights)
        .map(|((p, d), &w)| w * p.iter().zip(d).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}

pub fn weighted_lagrangian(conditional: &Matrix, weights: &[f64], distortion: &Matrix, beta: f64) -> f64 {
    weighted_mutual_information(conditional, weights) + beta * weighted_distortion(conditional, weights, distortion)
}

/// Ensemble Lagrangian `I + beta D` with equal weights over samples.
pub fn lagrangian(td: &TargetDistribution, distortion: &Matrix, beta: f64) -> Result<f64> {
    let (z, x) = (td.conditional.rows(), td.conditional.cols());
    if distortion.rows() != z || distortion.cols() != x {
        return Err(Error::domain(format!(
            "target is {z}x{x} but distortion is {}x{}",
            distortion.rows(),
            distortion.cols()
        )));
    }
    let weights = vec![1.0 / z as f64; z];
    Ok(weighted_lagrangian(&td.conditional, &weights, distortion, beta))
}

/// Inverse-CDF draw of an index from an unnormalized probability row.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let total: f64 = probs.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last_positive = i;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Picks a sample uniformly, then a point from that sample's conditional row.
pub fn sts_select<R: Rng + ?Sized>(td: &TargetDistribution, rng: &mut R) -> usize {
    let z = rng.gen_range(0..td.conditional.rows());
    sample_index(td.conditional.row(z), rng)
}

/// Argmax of one joint posterior sample.
pub fn ts_select<R: Rng + ?Sized>(model: &GpPosterior, grid: &GridDomain, rng: &mut R) -> Result<usize> {
    Ok(argmax(&model.posterior_joint_sample(grid, rng)?))
}

/// Writes `z,x,value,distortion,conditional,marginal` rows.
pub fn write_ba_diagnostics<W: Write>(out: W, ensemble: &SampleEnsemble, td: &TargetDistribution) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["z", "x", "value", "distortion", "conditional", "marginal"])?;
    for z in 0..ensemble.z_count() {
        for x in 0..ensemble.size() {
            w.write_record([
                z.to_string(),
                x.to_string(),
                ensemble.values().get(z, x).to_string(),
                ensemble.distortion().get(z, x).to_string(),
                td.conditional.get(z, x).to_string(),
                td.marginal[x].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Satisficing Thompson sampling settings.
#[derive(Debug, Clone, PartialEq)]
pub struct StsParams {
    pub beta: f64,
    pub z_count: usize,
    pub k_max: usize,
    pub tol: f64,
    /// When set, every Blahut-Arimoto solve is dumped as CSV into this directory.
    pub diagnostics_dir: Option<PathBuf>,
}

impl StsParams {
    pub fn new(beta: f64) -> Self {
        StsParams { beta, z_count: 64, k_max: 100, tol: 1e-6, diagnostics_dir: None }
    }
}

/// Selection policy used by the scheduler.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Thompson,
    Satisficing(StsParams),
}

impl Policy {
    pub fn tag(&self) -> &'static str {
        match self {
            Policy::Thompson => "TS",
            Policy::Satisficing(_) => "STS",
        }
    }

    /// Selects one point per ordinal in `ordinals`, all from the same posterior.
    ///
    /// Thompson draws one joint sample per ordinal from `key/ts-sample/t`.
    /// Satisficing solves one target from the ensemble drawn from
    /// `key/ensemble/first` and then draws each point from `key/sts-select/t`.
    pub fn select_batch(&self, model: &GridPosterior, ordinals: Range<usize>, key: &StreamKey) -> Result<Vec<usize>> {
        if ordinals.is_empty() {
            return Ok(Vec::new());
        }
        let sampler = model.sampler()?;
        match self {
            Policy::Thompson => Ok(ordinals
                .map(|t| argmax(&sampler.sample(&mut key.with("ts-sample").with(t).stream())))
                .collect()),
            Policy::Satisficing(p) => {
                let first = ordinals.start;
                let mut ens_rng = key.with("ensemble").with(first).stream();
                let ensemble = ensemble_from_sampler(&sampler, p.z_count, &mut ens_rng)?;
                let td = blahut_arimoto(ensemble.distortion(), p.beta, p.k_max, p.tol)?;
                if let Some(dir) = &p.diagnostics_dir {
                    let file = std::fs::File::create(dir.join(format!("ba_{first}.csv")))?;
                    write_ba_diagnostics(std::io::BufWriter::new(file), &ensemble, &td)?;
                }
                Ok(ordinals
                    .map(|t| sts_select(&td, &mut key.with("sts-select").with(t).stream()))
                    .collect())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::KernelSpec;
    use proptest::prelude::*;

    fn mat(rows: Vec<Vec<f64>>) -> Matrix {
        Matrix::from_rows(rows).unwrap()
    }

    #[test]
    fn single_sample_has_one_zero() {
        let grid = GridDomain::build(vec![vec![0.0, 1.0]]).unwrap();
        let gp = GpPosterior::new(KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap(), 0.0).unwrap();
        let ens = build_ensemble_on(&gp, &grid, 1, &mut StreamKey::new(3).stream()).unwrap();
        let zeros = ens.distortion().row(0).iter().filter(|&&d| d == 0.0).count();
        assert_eq!(zeros, 1);
        assert_eq!(ens.distortion().get(0, ens.argmax_per_sample()[0]), 0.0);
    }

    #[test]
    fn constant_sample_has_zero_distortion() {
        let ens = SampleEnsemble::from_samples(vec![vec![4.0; 5]]).unwrap();
        assert!(ens.distortion().row(0).iter().all(|&d| d == 0.0));
        assert_eq!(ens.argmax_per_sample(), &[0]);
    }

    #[test]
    fn one_step_two_by_two() {
        let d = mat(vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        let td = blahut_arimoto(&d, 1.0, 1, 0.0).unwrap();
        let e = std::f64::consts::E;
        assert!((td.conditional.get(0, 0) - e / (e + 1.0)).abs() < 1e-15);
        assert!((td.conditional.get(0, 1) - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((td.conditional.get(1, 1) - e / (e + 1.0)).abs() < 1e-15);
        assert!((td.marginal[0] - 0.5).abs() < 1e-15);
        assert_eq!(td.iterations_used, 1);
    }

    #[test]
    fn zero_beta_is_uniform() {
        let d = mat(vec![vec![0.0, 3.0, 9.0], vec![2.0, 0.0, 1.0]]);
        let td = blahut_arimoto(&d, 0.0, 50, 0.0).unwrap();
        for &p in td.conditional.as_slice() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        for &q in &td.marginal {
            assert!((q - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(lagrangian(&td, &d, 0.0).unwrap().abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_distortion() {
        let d = mat(vec![vec![0.0, f64::NAN]]);
        assert!(matches!(blahut_arimoto(&d, 1.0, 10, 1e-6), Err(Error::Domain(_))));
        let d = mat(vec![vec![0.0, 1.0]]);
        assert!(matches!(blahut_arimoto(&d, -1.0, 10, 1e-6), Err(Error::Domain(_))));
        assert!(matches!(blahut_arimoto(&d, 1.0, 0, 1e-6), Err(Error::Domain(_))));
    }

    #[test]
    fn information_stays_finite_when_the_marginal_underflows() {
        // 0.125 * 5e-324 rounds to zero in the mixture.
        let tiny = f64::from_bits(1);
        let mut rows = vec![vec![1.0, 0.0]; 8];
        rows[0] = vec![1.0 - tiny, tiny];
        let p = Matrix::from_rows(rows).unwrap();
        let info = weighted_mutual_information(&p, &[0.125; 8]);
        assert!(info.is_finite() && info.abs() < 1e-300);
    }

    #[test]
    fn huge_beta_concentrates_without_underflow() {
        let d = mat(vec![vec![0.0, 4.0, 1.0], vec![9.0, 2.0, 0.0]]);
        let td = blahut_arimoto(&d, 1e6, 100, 1e-6).unwrap();
        assert!(td.conditional.get(0, 0) >= 0.999);
        assert!(td.conditional.get(1, 2) >= 0.999);
        assert!(td.conditional.as_slice().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn log_space_fallback_matches_direct_formula() {
        // Every entry of row 0 underflows in linear space after one step.
        let d = mat(vec![vec![800.0, 900.0], vec![0.0, 1.0]]);
        let td = blahut_arimoto(&d, 1.0, 1, 0.0).unwrap();
        let expect = 1.0 / (1.0 + (-100.0f64).exp());
        assert!((td.conditional.get(0, 0) - expect).abs() < 1e-15);
    }

    #[test]
    fn lagrangian_of_bijection_is_log_z() {
        let cond = mat(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        let td = TargetDistribution { marginal: vec![1.0 / 3.0; 3], conditional: cond, iterations_used: 0, final_delta: 0.0 };
        let d = Matrix::filled(3, 3, 1.0);
        assert!((lagrangian(&td, &d, 0.0).unwrap() - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn lagrangian_shape_mismatch() {
        let td = blahut_arimoto(&Matrix::filled(2, 2, 0.0), 1.0, 1, 0.0).unwrap();
        assert!(lagrangian(&td, &Matrix::filled(2, 3, 0.0), 1.0).is_err());
    }

    #[test]
    fn point_mass_rows_always_select_that_index() {
        let mut cond = Matrix::filled(3, 10, 0.0);
        for z in 0..3 {
            cond.row_mut(z)[7] = 1.0;
        }
        let td = TargetDistribution { marginal: cond.row(0).to_vec(), conditional: cond, iterations_used: 0, final_delta: 0.0 };
        let mut s = StreamKey::new(0).stream();
        for _ in 0..1000 {
            assert_eq!(sts_select(&td, &mut s), 7);
        }
    }

    #[test]
    fn ts_on_singleton_grid() {
        let grid = GridDomain::build(vec![vec![0.5]]).unwrap();
        let gp = GpPosterior::new(KernelSpec::squared_exponential(vec![1.0], 1.0).unwrap(), 0.0).unwrap();
        let mut s = StreamKey::new(1).stream();
        for _ in 0..20 {
            assert_eq!(ts_select(&gp, &grid, &mut s).unwrap(), 0);
        }
    }

    #[test]
    fn argmax_breaks_ties_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
    }

    fn distortion_strategy() -> impl Strategy<Value = Matrix> {
        (1usize..6, 2usize..9).prop_flat_map(|(z, x)| {
            proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, x), z)
                .prop_map(|s| SampleEnsemble::from_samples(s).unwrap().distortion().clone())
        })
    }

    proptest! {
        #[test]
        fn rows_stay_stochastic(d in distortion_strategy(), beta in 0.0f64..20.0) {
            let mut ba = BlahutArimoto::uniform(&d, beta).unwrap();
            for _ in 0..10 {
                ba.step();
                let td = ba.snapshot();
                for row in td.conditional.iter_rows() {
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                    prop_assert!(row.iter().all(|&p| p >= 0.0));
                }
                let z = d.rows() as f64;
                for x in 0..d.cols() {
                    let mean: f64 = (0..d.rows()).map(|r| td.conditional.get(r, x)).sum::<f64>() / z;
                    prop_assert!((mean - td.marginal[x]).abs() < 1e-12);
                }
                prop_assert!((td.marginal.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn label_permutation_commutes(d in distortion_strategy(), beta in 0.01f64..5.0, shift in 0usize..8) {
            let cols = d.cols();
            let perm: Vec<usize> = (0..cols).map(|i| (i + shift) % cols).collect();
            let permuted = Matrix::from_rows(d.iter_rows().map(|r| perm.iter().map(|&p| r[p]).collect()).collect()).unwrap();
            let a = blahut_arimoto(&d, beta, 30, 0.0).unwrap();
            let b = blahut_arimoto(&permuted, beta, 30, 0.0).unwrap();
            for z in 0..d.rows() {
                for (i, &p) in perm.iter().enumerate() {
                    prop_assert!((b.conditional.get(z, i) - a.conditional.get(z, p)).abs() < 1e-12);
                }
            }
        }

        #[test]
        fn shifting_a_sample_leaves_target_unchanged(
            samples in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 5), 1..5),
            c in -50.0f64..50.0,
            beta in 0.01f64..5.0,
        ) {
            let shifted: Vec<Vec<f64>> = samples.iter().enumerate()
                .map(|(z, r)| if z == 0 { r.iter().map(|v| v + c).collect() } else { r.clone() })
                .collect();
            let a = SampleEnsemble::from_samples(samples).unwrap();
            let b = SampleEnsemble::from_samples(shifted).unwrap();
            for (x, y) in a.distortion().as_slice().iter().zip(b.distortion().as_slice()) {
                prop_assert!((x - y).abs() <= 1e-9 * x.max(1.0));
            }
            let ta = blahut_arimoto(a.distortion(), beta, 20, 0.0).unwrap();
            let tb = blahut_arimoto(b.distortion(), beta, 20, 0.0).unwrap();
            for (p, q) in ta.conditional.as_slice().iter().zip(tb.conditional.as_slice()) {
                prop_assert!((p - q).abs() < 1e-8);
            }
        }
    }
}
