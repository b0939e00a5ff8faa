//! Exact checks of the information identities behind satisficing sampling.
//!
//! A [`FiniteEnv`] is a prior over a handful of candidate functions on a tiny
//! domain, observed without noise. Posteriors are then the prior restricted
//! to the members consistent with the history, every outcome space is finite,
//! and every expectation is an exact sum. This turns the loss identities into
//! numerical statements:
//!
//! * with the target conditional `p(x~ | f)` held fixed, the expected loss
//!   after one more observation equals the current loss minus the mutual
//!   information between the target and that observation;
//! * re-solving the target after each observation can only lower the loss
//!   further;
//! * summed over a horizon, the information gained is bounded by the initial
//!   loss (times `M` for batches of `M`).
//!
//! All information quantities are in nats.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::Serialize;

use crate::acquisition::{argmax, blahut_arimoto_weighted, mixture_marginal, Matrix};
use crate::error::{Error, Result};
use crate::grid::GridDomain;
use crate::rng::StreamKey;

/// Largest domain and class sizes accepted.
pub const MAX_POINTS: usize = 8;
pub const MAX_MEMBERS: usize = 8;
/// Enumerations with more potential leaves than this are refused.
pub const LEAF_LIMIT: f64 = 1e6;

/// Bitmask of class members still consistent with the observations.
type Mask = u32;

/// A finite prior over functions on a small domain.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteEnv {
    domain: GridDomain,
    functions: Vec<Vec<f64>>,
    prior: Vec<f64>,
    distortion: Matrix,
}

impl FiniteEnv {
    pub fn new(functions: Vec<Vec<f64>>, prior: Vec<f64>) -> Result<Self> {
        let m = functions.len();
        if m == 0 || m > MAX_MEMBERS {
            return Err(Error::domain(format!("class size must be in 1..={MAX_MEMBERS}, got {m}")));
        }
        let n = functions[0].len();
        if n == 0 || n > MAX_POINTS {
            return Err(Error::domain(format!("domain size must be in 1..={MAX_POINTS}, got {n}")));
        }
        if functions.iter().any(|f| f.len() != n || f.iter().any(|v| !v.is_finite())) {
            return Err(Error::domain("class members must be finite vectors of equal length"));
        }
        if prior.len() != m || prior.iter().any(|p| !(*p >= 0.0)) || (prior.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::domain("prior must be a probability vector over the class"));
        }
        let distortion = Matrix::from_rows(
            functions
                .iter()
                .map(|f| {
                    let top = f[argmax(f)];
                    f.iter().map(|v| (top - v) * (top - v)).collect()
                })
                .collect(),
        )?;
        let domain = GridDomain::build(vec![(0..n).map(|i| i as f64).collect()])?;
        Ok(FiniteEnv { domain, functions, prior, distortion })
    }

    /// Random class with integer values in `0..levels` and a random prior.
    /// Few levels make observations only partially informative.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, points: usize, members: usize, levels: u32) -> Result<Self> {
        let functions = (0..members)
            .map(|_| (0..points).map(|_| rng.gen_range(0..levels.max(1)) as f64).collect())
            .collect();
        let raw: Vec<f64> = (0..members).map(|_| rng.gen_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let mut prior: Vec<f64> = raw.iter().map(|r| r / total).collect();
        // Absorb rounding so the prior sums to one as closely as possible.
        let drift = 1.0 - prior.iter().sum::<f64>();
        prior[0] += drift;
        Self::new(functions, prior)
    }

    pub fn domain(&self) -> &GridDomain {
        &self.domain
    }

    pub fn size(&self) -> usize {
        self.domain.size()
    }

    pub fn members(&self) -> usize {
        self.functions.len()
    }

    pub fn functions(&self) -> &[Vec<f64>] {
        &self.functions
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    /// `d[i][x] = (max f_i - f_i(x))^2`.
    pub fn distortion(&self) -> &Matrix {
        &self.distortion
    }

    fn full_mask(&self) -> Mask {
        (1 << self.members()) - 1
    }

    fn weights(&self, mask: Mask) -> Vec<f64> {
        let total: f64 = (0..self.members()).filter(|i| mask >> i & 1 == 1).map(|i| self.prior[i]).sum();
        (0..self.members())
            .map(|i| if mask >> i & 1 == 1 { self.prior[i] / total } else { 0.0 })
            .collect()
    }

    fn support(&self, mask: Mask) -> Mask {
        mask & (0..self.members()).filter(|&i| self.prior[i] > 0.0).fold(0, |m, i| m | 1 << i)
    }

    /// Splits the members of `mask` by the values they produce on `batch`.
    fn partition(&self, mask: Mask, batch: &[usize]) -> Vec<Mask> {
        let mut groups: BTreeMap<Vec<u64>, Mask> = BTreeMap::new();
        for i in 0..self.members() {
            if mask >> i & 1 == 1 {
                let key = batch.iter().map(|&x| self.functions[i][x].to_bits()).collect();
                *groups.entry(key).or_insert(0) |= 1 << i;
            }
        }
        groups.into_values().collect()
    }
}

/// Prior restricted to members matching every `(x, y)`, renormalized.
pub fn exact_posterior(env: &FiniteEnv, history: &[(usize, f64)]) -> Result<Vec<f64>> {
    let mask = consistent_mask(env, history)?;
    Ok(env.weights(mask))
}

fn consistent_mask(env: &FiniteEnv, history: &[(usize, f64)]) -> Result<Mask> {
    if let Some(&(x, _)) = history.iter().find(|(x, _)| *x >= env.size()) {
        return Err(Error::domain(format!("history point {x} outside a domain of {}", env.size())));
    }
    let mask = (0..env.members())
        .filter(|&i| history.iter().all(|&(x, y)| env.functions[i][x] == y))
        .fold(0, |m, i| m | 1 << i);
    let mask = env.support(mask);
    if mask == 0 {
        return Err(Error::domain("no class member with positive prior is consistent with the history"));
    }
    Ok(mask)
}

/// Target conditional `p(x~ | f_i)` under a posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactTarget {
    pub conditional: Matrix,
    pub marginal: Vec<f64>,
    pub beta: f64,
}

/// Blahut-Arimoto settings for exact targets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaSettings {
    pub k_max: usize,
    pub tol: f64,
}

impl Default for BaSettings {
    /// Many more iterations than the optimizer uses, so that targets are
    /// close to exact minimizers.
    fn default() -> Self {
        BaSettings { k_max: 10_000, tol: 1e-15 }
    }
}

/// Blahut-Arimoto with the posterior as mixture weights.
pub fn exact_ba_target(env: &FiniteEnv, posterior: &[f64], beta: f64, k_max: usize, tol: f64) -> Result<ExactTarget> {
    if posterior.len() != env.members() {
        return Err(Error::domain("posterior length differs from the class size"));
    }
    let td = blahut_arimoto_weighted(env.distortion(), posterior.to_vec(), beta, k_max, tol)?;
    Ok(ExactTarget { marginal: td.marginal, conditional: td.conditional, beta })
}

/// `sum_i w_i sum_x p log(p / q)` with `q = sum_i w_i p_i`.
pub fn exact_mutual_info(conditional: &Matrix, posterior: &[f64]) -> f64 {
    let q = mixture_marginal(conditional, posterior);
    let mut info = 0.0;
    for (row, &w) in conditional.iter_rows().zip(posterior) {
        if w > 0.0 {
            for (&p, &qx) in row.iter().zip(&q) {
                let qx = qx.max(w * p);
                if p > 0.0 && qx > 0.0 {
                    info += w * p * (p / qx).ln();
                }
            }
        }
    }
    info
}

/// `sum_i w_i sum_x p_i(x) d_i(x)`.
pub fn exact_distortion(env: &FiniteEnv, conditional: &Matrix, posterior: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &w) in posterior.iter().enumerate() {
        if w > 0.0 {
            total += w * conditional.row(i).iter().zip(env.distortion().row(i)).map(|(p, d)| p * d).sum::<f64>();
        }
    }
    total
}

pub fn exact_lagrangian(env: &FiniteEnv, conditional: &Matrix, posterior: &[f64], beta: f64) -> f64 {
    exact_mutual_info(conditional, posterior) + beta * exact_distortion(env, conditional, posterior)
}

/// Distribution over the next batch of query points.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub batches: Vec<(Vec<usize>, f64)>,
}

impl Selection {
    /// `m` independent draws from `dist`.
    pub fn iid(dist: &[f64], m: usize) -> Self {
        let mut batches = vec![(Vec::new(), 1.0)];
        for _ in 0..m {
            batches = batches
                .into_iter()
                .flat_map(|(b, p)| {
                    dist.iter().enumerate().filter(|(_, &d)| d > 0.0).map(move |(x, &d)| {
                        let mut nb = b.clone();
                        nb.push(x);
                        (nb, p * d)
                    })
                })
                .collect();
        }
        Selection { batches }
    }

    pub fn uniform(size: usize, m: usize) -> Self {
        Self::iid(&vec![1.0 / size as f64; size], m)
    }

    pub fn point(x: usize) -> Self {
        Selection { batches: vec![(vec![x], 1.0)] }
    }
}

/// Adds `amount` to one conditional entry, unnormalized, as a negative control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Perturbation {
    pub member: usize,
    pub point: usize,
    pub amount: f64,
}

/// Both sides of the fixed-target identity for one selection distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LemmaReport {
    /// Current loss.
    pub before: f64,
    /// Expected loss after the observation, same conditional.
    pub expected_after: f64,
    /// Mutual information between the target and the observation.
    pub information: f64,
    pub residual: f64,
}

/// Mutual information between the target and `(X, Y)`, from the joint law
/// `P(x~, X, Y) = pi(X) sum_{i : f_i(X) = Y} w_i p_i(x~)`.
pub fn observation_mutual_info(env: &FiniteEnv, posterior: &[f64], conditional: &Matrix, selection: &Selection) -> f64 {
    let q = mixture_marginal(conditional, posterior);
    let mask = mask_of(posterior);
    let mut info = 0.0;
    for (batch, pi) in &selection.batches {
        for group in env.partition(mask, batch) {
            let members: Vec<usize> = (0..env.members()).filter(|i| group >> i & 1 == 1).collect();
            let p_group: f64 = members.iter().map(|&i| posterior[i]).sum();
            for x in 0..env.size() {
                let joint: f64 = members.iter().map(|&i| posterior[i] * conditional.get(i, x)).sum();
                if joint > 0.0 {
                    info += pi * joint * (joint / (q[x] * p_group)).ln();
                }
            }
        }
    }
    info
}

fn mask_of(posterior: &[f64]) -> Mask {
    posterior.iter().enumerate().filter(|(_, &w)| w > 0.0).fold(0, |m, (i, _)| m | 1 << i)
}

/// Posterior after the members outside `group` are ruled out.
fn restrict(posterior: &[f64], group: Mask) -> (f64, Vec<f64>) {
    let total: f64 = posterior.iter().enumerate().filter(|(i, _)| group >> i & 1 == 1).map(|(_, w)| w).sum();
    let child = posterior
        .iter()
        .enumerate()
        .map(|(i, &w)| if group >> i & 1 == 1 { w / total } else { 0.0 })
        .collect();
    (total, child)
}

/// Expected loss after one batch under a fixed conditional, against the
/// current loss minus the information the batch carries about the target.
///
/// The perturbation, when given, is applied to the post-observation side
/// only, so a correct implementation must then report a large residual.
pub fn check_lemma_identity(
    env: &FiniteEnv,
    posterior: &[f64],
    conditional: &Matrix,
    beta: f64,
    selection: &Selection,
    perturb: Option<Perturbation>,
) -> Result<LemmaReport> {
    if posterior.len() != env.members() || conditional.rows() != env.members() || conditional.cols() != env.size() {
        return Err(Error::domain("posterior or conditional does not match the environment"));
    }
    let mut after_cond = conditional.clone();
    if let Some(p) = perturb {
        after_cond.row_mut(p.member)[p.point] += p.amount;
    }
    let before = exact_lagrangian(env, conditional, posterior, beta);
    let mask = mask_of(posterior);
    let mut expected_after = 0.0;
    for (batch, pi) in &selection.batches {
        for group in env.partition(mask, batch) {
            let (prob, child) = restrict(posterior, group);
            expected_after += pi * prob * exact_lagrangian(env, &after_cond, &child, beta);
        }
    }
    let information = observation_mutual_info(env, posterior, conditional, selection);
    Ok(LemmaReport { before, expected_after, information, residual: (expected_after - (before - information)).abs() })
}

/// Memoized exact targets, keyed by the consistent-member mask.
struct TargetCache<'a> {
    env: &'a FiniteEnv,
    beta: f64,
    ba: BaSettings,
    cache: HashMap<Mask, (Matrix, Vec<f64>, f64)>,
}

impl<'a> TargetCache<'a> {
    fn new(env: &'a FiniteEnv, beta: f64, ba: BaSettings) -> Self {
        TargetCache { env, beta, ba, cache: HashMap::new() }
    }

    /// Conditional, marginal and loss of the re-solved target at `mask`.
    fn get(&mut self, mask: Mask) -> Result<&(Matrix, Vec<f64>, f64)> {
        if !self.cache.contains_key(&mask) {
            let w = self.env.weights(mask);
            let t = exact_ba_target(self.env, &w, self.beta, self.ba.k_max, self.ba.tol)?;
            let loss = exact_lagrangian(self.env, &t.conditional, &w, self.beta);
            self.cache.insert(mask, (t.conditional, t.marginal, loss));
        }
        Ok(&self.cache[&mask])
    }
}

/// One step with the target re-solved after the observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecreaseReport {
    pub before: f64,
    pub expected_after: f64,
    pub information: f64,
    /// `before - expected_after`.
    pub decrease: f64,
    /// `before - information - expected_after`; nonnegative when re-solving
    /// does at least as well as keeping the old target.
    pub margin: f64,
}

/// Loss before and expected loss after one observation from `selection`,
/// with exact targets on both sides.
pub fn check_loss_decrease(
    env: &FiniteEnv,
    history: &[(usize, f64)],
    beta: f64,
    selection: &Selection,
    ba: BaSettings,
) -> Result<DecreaseReport> {
    let mask = consistent_mask(env, history)?;
    let mut cache = TargetCache::new(env, beta, ba);
    let w = env.weights(mask);
    let (cond, _, before) = cache.get(mask)?.clone();
    let mut expected_after = 0.0;
    for (batch, pi) in &selection.batches {
        for group in env.partition(mask, batch) {
            let (prob, _) = restrict(&w, group);
            expected_after += pi * prob * cache.get(group)?.2;
        }
    }
    let information = observation_mutual_info(env, &w, &cond, selection);
    Ok(DecreaseReport {
        before,
        expected_after,
        information,
        decrease: before - expected_after,
        margin: before - information - expected_after,
    })
}

/// Batch scheme for the cumulative information bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum Form {
    /// Rounds of `m` points drawn independently from the current marginal.
    Sync { m: usize },
    /// `m - 1` evaluations always pending; each step observes the oldest
    /// pending point and queues a new one drawn from the current marginal.
    Async { m: usize },
}

/// Cumulative information against its bound over a horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TelescopeReport {
    pub form: Form,
    pub horizon: usize,
    /// Expected information summed over the horizon (times `m` for sync).
    pub cumulative_info: f64,
    /// Initial loss of the re-solved target (times `m` for sync).
    pub bound: f64,
    pub slack: f64,
    pub satisfied: bool,
    /// Upper bound on the leaves of the outcome tree.
    pub leaf_bound: f64,
}

/// Upper bound on the number of leaves of the outcome tree.
pub fn leaf_bound(env: &FiniteEnv, form: Form, horizon: usize) -> f64 {
    let (n, m) = (env.size() as f64, env.members() as f64);
    match form {
        Form::Sync { m: batch } => (n.powi(batch as i32) * m).powi(horizon as i32),
        Form::Async { m: workers } => n.powi(workers as i32 - 1) * (n * m).powi(horizon as i32),
    }
}

/// Expected information over `horizon` steps from the prior, by exact
/// enumeration of selections and outcomes with the target re-solved at every
/// node.
pub fn check_telescoping(env: &FiniteEnv, beta: f64, horizon: usize, form: Form, ba: BaSettings) -> Result<TelescopeReport> {
    if horizon == 0 {
        return Err(Error::domain("horizon must be at least 1"));
    }
    let workers = match form {
        Form::Sync { m } | Form::Async { m } => m,
    };
    if workers == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    let leaves = leaf_bound(env, form, horizon);
    if leaves > LEAF_LIMIT {
        return Err(Error::Resource(format!(
            "outcome tree may have {leaves:e} leaves (limit {LEAF_LIMIT:e}); reduce the horizon or environment"
        )));
    }
    let mut cache = TargetCache::new(env, beta, ba);
    let root = env.support(env.full_mask());
    let initial = cache.get(root)?.2;
    let (cumulative_info, bound) = match form {
        Form::Sync { m } => {
            let mut memo = HashMap::new();
            let v = sync_value(env, &mut cache, &mut memo, root, m, horizon)?;
            (m as f64 * v, m as f64 * initial)
        }
        Form::Async { m } => {
            // The first m - 1 points are dispatched from the prior marginal.
            let q0 = cache.get(root)?.1.clone();
            let mut memo = HashMap::new();
            let mut total = 0.0;
            for (pending, p) in Selection::iid(&q0, m - 1).batches {
                total += p * async_value(env, &mut cache, &mut memo, root, pending, horizon)?;
            }
            (total, initial)
        }
    };
    let slack = bound - cumulative_info;
    Ok(TelescopeReport {
        form,
        horizon,
        cumulative_info,
        bound,
        slack,
        satisfied: slack >= -SLACK_ROUNDOFF,
        leaf_bound: leaves,
    })
}

/// Roundoff allowance on a telescoping slack.
pub const SLACK_ROUNDOFF: f64 = 1e-12;

/// `I(x~; Y | X = batch)` for the target at `mask`.
fn info_given_batch(env: &FiniteEnv, w: &[f64], cond: &Matrix, q: &[f64], mask: Mask, batch: &[usize]) -> (f64, Vec<(f64, Mask)>) {
    let mut info = 0.0;
    let mut children = Vec::new();
    for group in env.partition(mask, batch) {
        let members: Vec<usize> = (0..env.members()).filter(|i| group >> i & 1 == 1).collect();
        let pg: f64 = members.iter().map(|&i| w[i]).sum();
        for x in 0..env.size() {
            let joint: f64 = members.iter().map(|&i| w[i] * cond.get(i, x)).sum();
            if joint > 0.0 {
                info += joint * (joint / (q[x] * pg)).ln();
            }
        }
        children.push((pg, group));
    }
    (info, children)
}

fn sync_value(
    env: &FiniteEnv,
    cache: &mut TargetCache,
    memo: &mut HashMap<(Mask, usize), f64>,
    mask: Mask,
    m: usize,
    steps: usize,
) -> Result<f64> {
    if steps == 0 {
        return Ok(0.0);
    }
    if let Some(&v) = memo.get(&(mask, steps)) {
        return Ok(v);
    }
    let (cond, q, _) = cache.get(mask)?.clone();
    let w = env.weights(mask);
    let mut value = 0.0;
    for (batch, pi) in Selection::iid(&q, m).batches {
        let (info, children) = info_given_batch(env, &w, &cond, &q, mask, &batch);
        let mut future = 0.0;
        for (pg, child) in children {
            future += pg * sync_value(env, cache, memo, child, m, steps - 1)?;
        }
        value += pi * (info + future);
    }
    memo.insert((mask, steps), value);
    Ok(value)
}

fn async_value(
    env: &FiniteEnv,
    cache: &mut TargetCache,
    memo: &mut HashMap<(Mask, Vec<usize>, usize), f64>,
    mask: Mask,
    pending: Vec<usize>,
    steps: usize,
) -> Result<f64> {
    if steps == 0 {
        return Ok(0.0);
    }
    let key = (mask, pending.clone(), steps);
    if let Some(&v) = memo.get(&key) {
        return Ok(v);
    }
    let (cond, q, _) = cache.get(mask)?.clone();
    let w = env.weights(mask);
    let mut value = 0.0;
    for (x_new, &px) in q.iter().enumerate() {
        if px <= 0.0 {
            continue;
        }
        let mut queue = pending.clone();
        queue.push(x_new);
        let observed = queue.remove(0);
        let (info, children) = info_given_batch(env, &w, &cond, &q, mask, &[observed]);
        let mut future = 0.0;
        for (pg, child) in children {
            future += pg * async_value(env, cache, memo, child, queue.clone(), steps - 1)?;
        }
        value += px * (info + future);
    }
    memo.insert(key, value);
    Ok(value)
}

/// Settings of the randomized identity suite.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteConfig {
    pub envs: usize,
    pub seed: u64,
    pub betas: Vec<f64>,
    pub max_points: usize,
    pub max_members: usize,
    pub sync_m: usize,
    pub sync_horizon: usize,
    pub async_m: usize,
    pub async_horizon: usize,
    pub ba: BaSettings,
    pub perturb: bool,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            envs: 50,
            seed: 0,
            betas: vec![0.1, 1.0, 10.0],
            max_points: 4,
            max_members: 3,
            sync_m: 2,
            sync_horizon: 3,
            async_m: 2,
            async_horizon: 5,
            ba: BaSettings::default(),
            perturb: false,
        }
    }
}

/// Outcome of one family of checks across all instances.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// `max` checks compare the worst value against an upper tolerance,
    /// `min` checks against a lower one.
    pub statistic: &'static str,
    pub worst: f64,
    pub tolerance: f64,
    pub instances: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub config: SuiteConfig,
    pub checks: Vec<CheckResult>,
    pub passed: bool,
}

/// Tolerance of the fixed-target identity residual.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Allowed negative margin of a single-step decrease.
pub const DECREASE_TOL: f64 = 1e-9;

struct Tracker {
    name: String,
    statistic: &'static str,
    worst: f64,
    tolerance: f64,
    instances: usize,
}

impl Tracker {
    fn max(name: &str, tolerance: f64) -> Self {
        Tracker { name: name.into(), statistic: "max", worst: f64::NEG_INFINITY, tolerance, instances: 0 }
    }

    fn min(name: &str, tolerance: f64) -> Self {
        Tracker { name: name.into(), statistic: "min", worst: f64::INFINITY, tolerance, instances: 0 }
    }

    fn add(&mut self, v: f64) {
        self.instances += 1;
        // NaN must fail the check, never hide.
        self.worst = if v.is_nan() {
            f64::NAN
        } else if self.statistic == "max" {
            self.worst.max(v)
        } else {
            self.worst.min(v)
        };
    }

    fn finish(self) -> CheckResult {
        let passed = match self.statistic {
            "max" => self.worst < self.tolerance,
            _ => self.worst >= self.tolerance,
        };
        CheckResult {
            name: self.name,
            statistic: self.statistic,
            worst: self.worst,
            tolerance: self.tolerance,
            instances: self.instances,
            passed,
        }
    }
}

/// Runs every check on `config.envs` random environments and each beta.
///
/// Each environment starts from a short random history so that the checks
/// see non-prior posteriors too.
pub fn run_suite(config: &SuiteConfig) -> Result<SuiteReport> {
    let key = StreamKey::new(config.seed).with("theory");
    let mut lemma_sync1 = Tracker::max("lemma_identity_sync_m1", IDENTITY_TOL);
    let mut lemma_sync = Tracker::max(&format!("lemma_identity_sync_m{}", config.sync_m), IDENTITY_TOL);
    let mut lemma_uniform = Tracker::max("lemma_identity_uniform_selection", IDENTITY_TOL);
    let mut lemma_async = Tracker::max("lemma_identity_async", IDENTITY_TOL);
    let mut dec_sync = Tracker::min(&format!("loss_decrease_sync_m{}", config.sync_m), -DECREASE_TOL);
    let mut dec_async = Tracker::min("loss_decrease_async", -DECREASE_TOL);
    let mut ba_vs_ts = Tracker::min("ba_not_worse_than_ts", -DECREASE_TOL);
    let mut ba_vs_uniform = Tracker::min("ba_not_worse_than_uniform", -DECREASE_TOL);
    let mut tele_sync = Tracker::min(
        &format!("telescoping_sync_m{}_t{}", config.sync_m, config.sync_horizon),
        -SLACK_ROUNDOFF,
    );
    let mut tele_async = Tracker::min(
        &format!("telescoping_async_m{}_t{}", config.async_m, config.async_horizon),
        -SLACK_ROUNDOFF,
    );

    for e in 0..config.envs {
        let mut rng = key.with("env").with(e).stream();
        let points = rng.gen_range(2..=config.max_points.max(2));
        let members = rng.gen_range(2..=config.max_members.max(2));
        let env = FiniteEnv::random(&mut rng, points, members, 3)?;
        let truth = crate::acquisition::sample_index(env.prior(), &mut rng);
        let history: Vec<(usize, f64)> = (0..rng.gen_range(0..=1))
            .map(|_| {
                let x = rng.gen_range(0..points);
                (x, env.functions()[truth][x])
            })
            .collect();
        let posterior = exact_posterior(&env, &history)?;
        let perturb = config.perturb.then(|| Perturbation { member: argmax(&posterior), point: 0, amount: 1e-3 });

        for &beta in &config.betas {
            let target = exact_ba_target(&env, &posterior, beta, config.ba.k_max, config.ba.tol)?;
            let q = target.marginal.clone();
            let cond = &target.conditional;

            let r = check_lemma_identity(&env, &posterior, cond, beta, &Selection::iid(&q, 1), perturb)?;
            lemma_sync1.add(r.residual);
            let r = check_lemma_identity(&env, &posterior, cond, beta, &Selection::iid(&q, config.sync_m), perturb)?;
            lemma_sync.add(r.residual);
            let r = check_lemma_identity(&env, &posterior, cond, beta, &Selection::uniform(points, 1), perturb)?;
            lemma_uniform.add(r.residual);
            // A pending point chosen earlier, from the prior's marginal.
            let prior_target = exact_ba_target(&env, env.prior(), beta, config.ba.k_max, config.ba.tol)?;
            let stale = Selection::iid(&prior_target.marginal, 1);
            let r = check_lemma_identity(&env, &posterior, cond, beta, &stale, perturb)?;
            lemma_async.add(r.residual);

            let d = check_loss_decrease(&env, &history, beta, &Selection::iid(&q, config.sync_m), config.ba)?;
            dec_sync.add(d.margin);
            let d = check_loss_decrease(&env, &history, beta, &stale, config.ba)?;
            dec_async.add(d.margin);

            let best = exact_lagrangian(&env, cond, &posterior, beta);
            let mut ts = Matrix::filled(env.members(), env.size(), 0.0);
            for i in 0..env.members() {
                let top = argmax(&env.functions()[i]);
                ts.row_mut(i)[top] = 1.0;
            }
            ba_vs_ts.add(exact_lagrangian(&env, &ts, &posterior, beta) - best);
            let uniform = Matrix::filled(env.members(), env.size(), 1.0 / env.size() as f64);
            ba_vs_uniform.add(exact_lagrangian(&env, &uniform, &posterior, beta) - best);

            let t = check_telescoping(&env, beta, config.sync_horizon, Form::Sync { m: config.sync_m }, config.ba)?;
            tele_sync.add(t.slack);
            let t = check_telescoping(&env, beta, config.async_horizon, Form::Async { m: config.async_m }, config.ba)?;
            tele_async.add(t.slack);
        }
    }
    let checks: Vec<CheckResult> = [
        lemma_sync1,
        lemma_sync,
        lemma_uniform,
        lemma_async,
        dec_sync,
        dec_async,
        ba_vs_ts,
        ba_vs_uniform,
        tele_sync,
        tele_async,
    ]
    .into_iter()
    .map(Tracker::finish)
    .collect();
    let passed = checks.iter().all(|c| c.passed);
    Ok(SuiteReport { config: config.clone(), checks, passed })
}
