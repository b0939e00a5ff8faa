//! Experiment configuration and method sweeps.
//!
//! A configuration is a flat `key = value` text file, one setting per line,
//! `#` starting a comment. Every key has a default, so an empty file runs the
//! benchmark sweep. [`KEYS`] lists the keys with their defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::acquisition::{Policy, StsParams};
use crate::error::{Error, Result};
use crate::gp::{GridPrior, KernelKind, KernelSpec};
use crate::grid::{ChargingGeometry, GridDomain};
use crate::metrics::{aggregate_seeds, regret_curve, time_grid, AggregateCurve, RegretCurve};
use crate::objective::{synth_battery, Bump, DurationSource, NoiseModel, SynthParams, TabularObjective, TimeModel};
use crate::scheduler::{EvaluationTrace, Mode, Simulation};

/// Configuration keys, their defaults and meaning.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("objective", "synth", "`synth` or the path of a `coord_0,coord_1,value` CSV"),
    ("synth_baseline", "250", "baseline lifetime of the synthetic landscape"),
    ("synth_bumps", "3.6,4.4,0.9,900;5.2,2.8,0.6,450", "`i1,i2,width,amplitude` bumps separated by `;`"),
    ("synth_trend", "-0.05,-0.03", "relative tilt of the bumps per C along i1 and i2"),
    ("grid_min", "2.2", "smallest current on both axes (C)"),
    ("grid_max", "6.0", "largest current on both axes (C)"),
    ("grid_step", "0.2", "current increment (C)"),
    ("t_final", "800", "total charging time (s)"),
    ("dq", "0.2,0.2,0.4", "SOC fraction of the three steps"),
    ("i3_max", "inf", "cap on the derived third current; protocols above it are masked"),
    ("kernel", "se", "`se` or `matern52`"),
    ("lengthscale_steps", "4", "kernel lengthscale in grid steps, per axis"),
    ("signal_variance", "auto", "kernel variance; `auto` uses the mean square of the objective"),
    ("model_noise_ratio", "0.05", "surrogate noise sd relative to the signal sd"),
    ("noise_ratio", "0.05", "relative sd of observation noise"),
    ("policy", "ts,sts", "policies to run"),
    ("mode", "sequential,synchronous,asynchronous", "scheduling modes to run"),
    ("m_workers", "4", "parallel workers"),
    ("beta", "0.01,0.05,0.1,1", "Lagrange multipliers for satisficing sampling"),
    ("z_count", "64", "posterior samples per target"),
    ("ba_k_max", "100", "Blahut-Arimoto iteration cap"),
    ("ba_tol", "1e-6", "Blahut-Arimoto stop threshold on the largest entry change"),
    ("budget", "10000", "total simulated time (rounds)"),
    ("time_scale", "auto", "rounds per lifetime unit; `auto` maps the mean lifetime to time_target"),
    ("time_target", "100", "rounds taken by an average evaluation when time_scale is auto"),
    ("duration_source", "observed", "`observed` or `true` lifetime sets the duration"),
    ("seeds", "0-19", "seed list: `1,2,5` or range `0-19`"),
    ("time_points", "200", "points of the regret time grid"),
    ("ba_dump", "false", "write every Blahut-Arimoto solve as CSV (large)"),
];

/// A configuration value that failed to parse or validate.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn cfg_err(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { key: key.into(), message: message.into() }
}

/// Which acquisition a variant uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    Ts,
    Sts,
}

/// A policy and a scheduling mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Variant {
    pub policy: PolicyKind,
    pub mode: Mode,
}

impl Variant {
    /// `TS-BO`, `TS-PBO-syn`, `TS-PBO-asy`, `STS-BO`, `STS-PBO-syn`, `STS-PBO-asy`.
    pub fn name(&self) -> &'static str {
        match (self.policy, self.mode) {
            (PolicyKind::Ts, Mode::Sequential) => "TS-BO",
            (PolicyKind::Ts, Mode::Synchronous) => "TS-PBO-syn",
            (PolicyKind::Ts, Mode::Asynchronous) => "TS-PBO-asy",
            (PolicyKind::Sts, Mode::Sequential) => "STS-BO",
            (PolicyKind::Sts, Mode::Synchronous) => "STS-PBO-syn",
            (PolicyKind::Sts, Mode::Asynchronous) => "STS-PBO-asy",
        }
    }
}

/// Where objective values come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveSource {
    Synth(SynthParams),
    Csv(PathBuf),
}

/// A validated experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSource,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_step: f64,
    pub geometry: ChargingGeometry,
    pub kernel: KernelKind,
    pub lengthscale_steps: f64,
    pub signal_variance: Option<f64>,
    pub model_noise_ratio: f64,
    pub noise_ratio: f64,
    pub policies: Vec<PolicyKind>,
    pub modes: Vec<Mode>,
    pub m_workers: usize,
    pub betas: Vec<f64>,
    pub z_count: usize,
    pub ba_k_max: usize,
    pub ba_tol: f64,
    pub budget: f64,
    pub time_scale: Option<f64>,
    pub time_target: f64,
    pub duration_source: DurationSource,
    pub seeds: Vec<u64>,
    pub time_points: usize,
    pub ba_dump: bool,
    /// Resolved `key = value` pairs, defaults included, in key order.
    pub resolved: BTreeMap<String, String>,
}

/// Splits `key = value` lines, rejecting unknown and repeated keys.
pub fn parse_pairs(text: &str) -> std::result::Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| cfg_err(line, format!("line {} is not `key = value`", n + 1)))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if out.iter().any(|(seen, _)| *seen == k) {
            return Err(cfg_err(&k, format!("set twice (line {})", n + 1)));
        }
        out.push((k, v));
    }
    Ok(out)
}

/// Parses `key=value` command-line overrides.
pub fn parse_override(s: &str) -> std::result::Result<(String, String), ConfigError> {
    let (k, v) = s.split_once('=').ok_or_else(|| cfg_err(s, "override must be `key=value`"))?;
    Ok((k.trim().to_string(), v.trim().to_string()))
}

fn num(key: &str, v: &str) -> std::result::Result<f64, ConfigError> {
    let x: f64 = v.parse().map_err(|_| cfg_err(key, format!("`{v}` is not a number")))?;
    if x.is_nan() {
        return Err(cfg_err(key, "NaN is not allowed"));
    }
    Ok(x)
}

fn positive(key: &str, v: &str) -> std::result::Result<f64, ConfigError> {
    let x = num(key, v)?;
    if !(x > 0.0) || !x.is_finite() {
        return Err(cfg_err(key, format!("must be finite and > 0, got {v}")));
    }
    Ok(x)
}

fn nonneg(key: &str, v: &str) -> std::result::Result<f64, ConfigError> {
    let x = num(key, v)?;
    if !(x >= 0.0) || !x.is_finite() {
        return Err(cfg_err(key, format!("must be finite and >= 0, got {v}")));
    }
    Ok(x)
}

fn count(key: &str, v: &str, min: usize) -> std::result::Result<usize, ConfigError> {
    let x: usize = v.parse().map_err(|_| cfg_err(key, format!("`{v}` is not a whole number")))?;
    if x < min {
        return Err(cfg_err(key, format!("must be at least {min}, got {x}")));
    }
    Ok(x)
}

fn list<T>(key: &str, v: &str, f: impl Fn(&str) -> std::result::Result<T, ConfigError>) -> std::result::Result<Vec<T>, ConfigError> {
    let items: Vec<T> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(f).collect::<std::result::Result<_, _>>()?;
    if items.is_empty() {
        return Err(cfg_err(key, "list is empty"));
    }
    Ok(items)
}

fn auto(key: &str, v: &str) -> std::result::Result<Option<f64>, ConfigError> {
    if v == "auto" {
        Ok(None)
    } else {
        positive(key, v).map(Some)
    }
}

fn parse_seeds(v: &str) -> std::result::Result<Vec<u64>, ConfigError> {
    let bad = || cfg_err("seeds", format!("`{v}` is neither a list nor a range like 0-19"));
    if let Some((a, b)) = v.split_once('-') {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    let seeds = list("seeds", v, |s| s.parse::<u64>().map_err(|_| bad()))?;
    let mut seen = std::collections::BTreeSet::new();
    if let Some(d) = seeds.iter().find(|s| !seen.insert(**s)) {
        return Err(cfg_err("seeds", format!("seed {d} listed twice")));
    }
    Ok(seeds)
}

fn parse_bumps(v: &str) -> std::result::Result<Vec<Bump>, ConfigError> {
    if v.trim().is_empty() || v.trim() == "none" {
        return Ok(Vec::new());
    }
    v.split(';')
        .map(|b| {
            let parts = list("synth_bumps", b, |s| num("synth_bumps", s))?;
            if parts.len() != 4 {
                return Err(cfg_err("synth_bumps", format!("bump `{b}` needs i1,i2,width,amplitude")));
            }
            if !(parts[2] > 0.0) {
                return Err(cfg_err("synth_bumps", "bump width must be > 0"));
            }
            Ok(Bump { center: [parts[0], parts[1]], width: parts[2], amplitude: parts[3] })
        })
        .collect()
}

impl ExperimentConfig {
    /// Builds a configuration from file pairs plus overrides applied on top.
    pub fn from_pairs(pairs: &[(String, String)], overrides: &[(String, String)]) -> std::result::Result<Self, ConfigError> {
        let mut map: BTreeMap<String, String> = KEYS.iter().map(|(k, d, _)| (k.to_string(), d.to_string())).collect();
        for (k, v) in pairs.iter().chain(overrides) {
            if !map.contains_key(k) {
                return Err(cfg_err(k, "unknown key"));
            }
            map.insert(k.clone(), v.clone());
        }
        let g = |k: &str| map[k].as_str();

        let objective = match g("objective") {
            "synth" => ObjectiveSource::Synth(SynthParams {
                baseline: positive("synth_baseline", g("synth_baseline"))?,
                bumps: parse_bumps(g("synth_bumps"))?,
                trend: {
                    let t = list("synth_trend", g("synth_trend"), |s| num("synth_trend", s))?;
                    if t.len() != 2 {
                        return Err(cfg_err("synth_trend", "needs two values"));
                    }
                    [t[0], t[1]]
                },
                origin: [num("grid_min", g("grid_min"))?; 2],
            }),
            path => ObjectiveSource::Csv(PathBuf::from(path)),
        };
        let grid_min = positive("grid_min", g("grid_min"))?;
        let grid_max = positive("grid_max", g("grid_max"))?;
        if grid_max < grid_min {
            return Err(cfg_err("grid_max", "must not be below grid_min"));
        }
        let grid_step = positive("grid_step", g("grid_step"))?;
        let dq = list("dq", g("dq"), |s| num("dq", s))?;
        if dq.len() != 3 || dq.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
            return Err(cfg_err("dq", "needs three fractions in (0, 1)"));
        }
        let i3_max = match g("i3_max") {
            "inf" => f64::INFINITY,
            v => positive("i3_max", v)?,
        };
        let policies = list("policy", g("policy"), |s| match s {
            "ts" => Ok(PolicyKind::Ts),
            "sts" => Ok(PolicyKind::Sts),
            _ => Err(cfg_err("policy", format!("unknown policy `{s}` (ts, sts)"))),
        })?;
        let modes = list("mode", g("mode"), |s| s.parse::<Mode>().map_err(|_| cfg_err("mode", format!("unknown mode `{s}`"))))?;
        let betas = list("beta", g("beta"), |s| nonneg("beta", s))?;
        let ba_tol = nonneg("ba_tol", g("ba_tol"))?;
        let duration_source = g("duration_source")
            .parse::<DurationSource>()
            .map_err(|e| cfg_err("duration_source", e.to_string()))?;
        let ba_dump = match g("ba_dump") {
            "true" => true,
            "false" => false,
            v => return Err(cfg_err("ba_dump", format!("`{v}` is not true or false"))),
        };
        Ok(ExperimentConfig {
            objective,
            grid_min,
            grid_max,
            grid_step,
            geometry: ChargingGeometry { t_final: positive("t_final", g("t_final"))?, dq: [dq[0], dq[1], dq[2]], i3_max },
            kernel: g("kernel").parse().map_err(|e: Error| cfg_err("kernel", e.to_string()))?,
            lengthscale_steps: positive("lengthscale_steps", g("lengthscale_steps"))?,
            signal_variance: auto("signal_variance", g("signal_variance"))?,
            model_noise_ratio: positive("model_noise_ratio", g("model_noise_ratio"))?,
            noise_ratio: nonneg("noise_ratio", g("noise_ratio"))?,
            policies,
            modes,
            m_workers: count("m_workers", g("m_workers"), 1)?,
            betas,
            z_count: count("z_count", g("z_count"), 1)?,
            ba_k_max: count("ba_k_max", g("ba_k_max"), 1)?,
            ba_tol,
            budget: positive("budget", g("budget"))?,
            time_scale: auto("time_scale", g("time_scale"))?,
            time_target: positive("time_target", g("time_target"))?,
            duration_source,
            seeds: parse_seeds(g("seeds"))?,
            time_points: count("time_points", g("time_points"), 2)?,
            ba_dump,
            resolved: map,
        })
    }

    pub fn parse(text: &str, overrides: &[(String, String)]) -> std::result::Result<Self, ConfigError> {
        Self::from_pairs(&parse_pairs(text)?, overrides)
    }

    /// The resolved configuration as `key = value` lines.
    pub fn to_text(&self) -> String {
        self.resolved.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Axis from `grid_min` to `grid_max` in `grid_step` increments,
    /// rounded to 12 decimals so coordinates print cleanly.
    pub fn axis(&self) -> Vec<f64> {
        let n = ((self.grid_max - self.grid_min) / self.grid_step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|k| ((self.grid_min + self.grid_step * k as f64) * 1e12).round() / 1e12)
            .collect()
    }

    /// The objective table with infeasible protocols removed.
    pub fn build_objective(&self) -> Result<TabularObjective> {
        let objective = match &self.objective {
            ObjectiveSource::Synth(params) => {
                let grid = GridDomain::build(vec![self.axis(), self.axis()])?;
                synth_battery(&grid, params)?
            }
            ObjectiveSource::Csv(path) => TabularObjective::load_csv(path)?,
        };
        feasible_objective(objective, &self.geometry)
    }

    /// Policy x mode combinations, in output order.
    pub fn variants(&self) -> Vec<Variant> {
        let mut out = Vec::new();
        for &policy in &self.policies {
            for &mode in &self.modes {
                out.push(Variant { policy, mode });
            }
        }
        out
    }
}

/// Objective restricted to feasible protocols when it lives on a 2-D grid.
fn feasible_objective(objective: TabularObjective, geometry: &ChargingGeometry) -> Result<TabularObjective> {
    if objective.grid().dims() != 2 {
        return Ok(objective);
    }
    let mut bad = None;
    let masked = objective.masked(|p| match geometry.protocol(p[0], p[1]) {
        Ok(pr) => pr.feasible,
        Err(e) => {
            bad.get_or_insert(e);
            false
        }
    });
    if let Some(e) = bad {
        return Err(e);
    }
    masked
}

/// Everything shared by the runs of a sweep.
#[derive(Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub objective: TabularObjective,
    pub prior: Arc<GridPrior>,
    pub model_noise: f64,
    pub noise: NoiseModel,
    pub time: TimeModel,
    pub times: Vec<f64>,
}

/// Identifies one run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunId {
    pub variant: Variant,
    /// `None` for Thompson sampling.
    pub beta: Option<f64>,
    pub seed: u64,
}

impl RunId {
    /// File stem such as `STS-PBO-asy_beta0.1_seed3`.
    pub fn stem(&self) -> String {
        match self.beta {
            Some(b) => format!("{}_beta{b}_seed{}", self.variant.name(), self.seed),
            None => format!("{}_seed{}", self.variant.name(), self.seed),
        }
    }
}

/// A finished run.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub id: RunId,
    pub trace: EvaluationTrace,
    pub curve: RegretCurve,
    pub seconds: f64,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self> {
        let objective = config.build_objective()?;
        let grid = Arc::new(objective.grid().clone());
        let signal_variance = config.signal_variance.unwrap_or_else(|| objective.mean_square());
        let lengthscales = grid.axis_steps().iter().map(|s| s * config.lengthscale_steps).collect();
        let kernel = KernelSpec::new(config.kernel, lengthscales, signal_variance)?;
        let prior = Arc::new(GridPrior::new(grid, kernel)?);
        let model_noise = (config.model_noise_ratio * signal_variance.sqrt()).powi(2);
        let time = match config.time_scale {
            Some(s) => TimeModel::new(s, config.duration_source)?,
            None => TimeModel::normalized(&objective, config.time_target, config.duration_source)?,
        };
        Ok(Experiment {
            noise: NoiseModel::new(config.noise_ratio)?,
            times: time_grid(config.budget, config.time_points)?,
            objective,
            prior,
            model_noise,
            time,
            config,
        })
    }

    /// All runs of the sweep, Thompson runs once per seed.
    pub fn run_ids(&self) -> Vec<RunId> {
        let mut ids = Vec::new();
        for variant in self.config.variants() {
            let betas: Vec<Option<f64>> = match variant.policy {
                PolicyKind::Ts => vec![None],
                PolicyKind::Sts => self.config.betas.iter().map(|&b| Some(b)).collect(),
            };
            for beta in betas {
                for &seed in &self.config.seeds {
                    ids.push(RunId { variant, beta, seed });
                }
            }
        }
        ids
    }

    fn policy(&self, id: &RunId, dump: Option<PathBuf>) -> Policy {
        match (id.variant.policy, id.beta) {
            (PolicyKind::Sts, Some(beta)) => Policy::Satisficing(StsParams {
                beta,
                z_count: self.config.z_count,
                k_max: self.config.ba_k_max,
                tol: self.config.ba_tol,
                diagnostics_dir: dump,
            }),
            _ => Policy::Thompson,
        }
    }

    /// Runs one simulation. `dump_root`, when set, receives Blahut-Arimoto
    /// diagnostics under a per-run directory.
    pub fn run_one(&self, id: RunId, dump_root: Option<&Path>) -> Result<RunResult> {
        let started = Instant::now();
        let dump = match dump_root {
            Some(root) if id.variant.policy == PolicyKind::Sts => {
                let dir = root.join(id.stem());
                std::fs::create_dir_all(&dir)?;
                Some(dir)
            }
            _ => None,
        };
        let policy = self.policy(&id, dump);
        let sim = Simulation {
            policy: &policy,
            objective: &self.objective,
            prior: Arc::clone(&self.prior),
            model_noise: self.model_noise,
            noise: self.noise,
            time: self.time,
            budget: self.config.budget,
            seed: id.seed,
        };
        let trace = sim.run(id.variant.mode, self.config.m_workers).map_err(|e| match e {
            Error::Io(_) => e,
            other => Error::Numerical(format!("run {}: {other}", id.stem())),
        })?;
        let curve = regret_curve(&trace, &self.objective, &self.times)?;
        Ok(RunResult { id, trace, curve, seconds: started.elapsed().as_secs_f64() })
    }

    /// Runs every id on up to `jobs` threads; results keep the order of `ids`.
    pub fn run_many(&self, ids: &[RunId], jobs: usize, dump_root: Option<&Path>) -> Result<Vec<RunResult>> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| Error::Resource(format!("cannot start worker threads: {e}")))?;
        pool.install(|| ids.par_iter().map(|id| self.run_one(*id, dump_root)).collect())
    }

    /// Runs the whole sweep and writes its outputs under `out`.
    pub fn run_and_write(&self, out: &Path, jobs: usize) -> Result<Summary> {
        let started = Instant::now();
        let dirs = OutputDirs::create(out)?;
        std::fs::write(out.join("config.txt"), self.config.to_text())?;
        self.objective.save(&out.join("objective.csv"))?;
        let dump_root = self.config.ba_dump.then(|| out.join("ba"));
        let results = self.run_many(&self.run_ids(), jobs, dump_root.as_deref())?;
        for r in &results {
            r.trace.save(&dirs.traces.join(format!("{}.csv", r.id.stem())))?;
            write_file(&dirs.curves.join(format!("{}.csv", r.id.stem())), |w| r.curve.write_csv(w))?;
        }
        let panels = self.panels(&results)?;
        for p in &panels {
            write_file(&dirs.aggregate.join(format!("{}.csv", p.file_stem())), |w| p.aggregate.write_csv(w))?;
        }
        let summary = Summary::new(self, &panels, &results, started.elapsed().as_secs_f64());
        std::fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
        Ok(summary)
    }

    /// Groups runs into (variant, beta) panels and aggregates their curves.
    pub fn panels(&self, results: &[RunResult]) -> Result<Vec<Panel>> {
        let mut panels = Vec::new();
        for variant in self.config.variants() {
            for &beta in &self.config.betas {
                let wanted = match variant.policy {
                    PolicyKind::Ts => None,
                    PolicyKind::Sts => Some(beta),
                };
                let runs: Vec<&RunResult> = results.iter().filter(|r| r.id.variant == variant && r.id.beta == wanted).collect();
                if runs.is_empty() {
                    continue;
                }
                let curves: Vec<RegretCurve> = runs.iter().map(|r| r.curve.clone()).collect();
                panels.push(Panel {
                    variant,
                    beta,
                    seeds: runs.iter().map(|r| r.id.seed).collect(),
                    final_mean_regret: runs.iter().map(|r| r.curve.final_mean_regret()).collect(),
                    final_min_regret: runs.iter().map(|r| r.curve.final_min_regret()).collect(),
                    evaluations: runs.iter().map(|r| r.trace.records.len()).collect(),
                    aggregate: aggregate_seeds(&curves)?,
                });
            }
        }
        Ok(panels)
    }
}

fn write_file(path: &Path, f: impl FnOnce(std::io::BufWriter<std::fs::File>) -> Result<()>) -> Result<()> {
    f(std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Output layout of a sweep.
pub struct OutputDirs {
    pub traces: PathBuf,
    pub curves: PathBuf,
    pub aggregate: PathBuf,
}

impl OutputDirs {
    pub fn create(out: &Path) -> Result<Self> {
        let d = OutputDirs { traces: out.join("traces"), curves: out.join("curves"), aggregate: out.join("aggregate") };
        for p in [&d.traces, &d.curves, &d.aggregate] {
            std::fs::create_dir_all(p)?;
        }
        Ok(d)
    }
}

/// Aggregated runs of one variant at one beta.
#[derive(Debug, Clone)]
pub struct Panel {
    pub variant: Variant,
    pub beta: f64,
    pub seeds: Vec<u64>,
    pub final_mean_regret: Vec<Option<f64>>,
    pub final_min_regret: Vec<Option<f64>>,
    pub evaluations: Vec<usize>,
    pub aggregate: AggregateCurve,
}

impl Panel {
    pub fn file_stem(&self) -> String {
        format!("{}_beta{}", self.variant.name(), self.beta)
    }
}

/// Per-panel summary in `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct PanelSummary {
    pub variant: String,
    pub policy: PolicyKind,
    pub mode: String,
    pub beta: f64,
    pub seeds: Vec<u64>,
    pub final_mean_regret: Vec<Option<f64>>,
    pub final_min_regret: Vec<Option<f64>>,
    pub evaluations: Vec<usize>,
    pub final_mean_regret_mean: Option<f64>,
    pub final_mean_regret_std: Option<f64>,
    pub final_min_regret_mean: Option<f64>,
    pub final_min_regret_std: Option<f64>,
    pub evaluations_mean: f64,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub config: BTreeMap<String, String>,
    pub grid_size: usize,
    pub best_index: usize,
    pub best_value: f64,
    pub model_noise_variance: f64,
    pub time_scale: f64,
    pub runs: usize,
    pub panels: Vec<PanelSummary>,
    pub wall_time_seconds: f64,
    pub run_seconds_total: f64,
}

impl Summary {
    pub fn new(exp: &Experiment, panels: &[Panel], results: &[RunResult], wall: f64) -> Self {
        let last = |v: &[Option<f64>]| v.last().copied().flatten();
        let panels = panels
            .iter()
            .map(|p| {
                let a = &p.aggregate;
                PanelSummary {
                    variant: p.variant.name().to_string(),
                    policy: p.variant.policy,
                    mode: p.variant.mode.to_string(),
                    beta: p.beta,
                    seeds: p.seeds.clone(),
                    final_mean_regret: p.final_mean_regret.clone(),
                    final_min_regret: p.final_min_regret.clone(),
                    evaluations: p.evaluations.clone(),
                    final_mean_regret_mean: last(&a.mean_regret),
                    final_mean_regret_std: last(&a.mean_regret_std),
                    final_min_regret_mean: last(&a.min_regret),
                    final_min_regret_std: last(&a.min_regret_std),
                    evaluations_mean: p.evaluations.iter().sum::<usize>() as f64 / p.evaluations.len().max(1) as f64,
                }
            })
            .collect();
        Summary {
            config: exp.config.resolved.clone(),
            grid_size: exp.objective.size(),
            best_index: exp.objective.best_index(),
            best_value: exp.objective.best_value(),
            model_noise_variance: exp.model_noise,
            time_scale: exp.time.scale,
            runs: results.len(),
            panels,
            wall_time_seconds: wall,
            run_seconds_total: results.iter().map(|r| r.seconds).sum(),
        }
    }
}

/// Re-aggregates the traces of a finished sweep directory into `dest`.
///
/// Uses the directory's `config.txt` and `objective.csv`; returns the number
/// of aggregate files written.
pub fn report(dir: &Path, dest: &Path) -> Result<usize> {
    let text = std::fs::read_to_string(dir.join("config.txt"))?;
    let config = ExperimentConfig::parse(&text, &[]).map_err(|e| Error::Format(e.to_string()))?;
    let objective = TabularObjective::load_csv(&dir.join("objective.csv"))?;
    let times = time_grid(config.budget, config.time_points)?;
    let mut groups: BTreeMap<String, Vec<RegretCurve>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir.join("traces"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    entries.sort();
    for path in entries {
        let Some(stem) = path.file_stem().and_then(|s| s.to_str()) else { continue };
        let Some((group, _)) = stem.rsplit_once("_seed") else { continue };
        let trace = EvaluationTrace::load(&path)?;
        groups.entry(group.to_string()).or_default().push(regret_curve(&trace, &objective, &times)?);
    }
    std::fs::create_dir_all(dest)?;
    for (group, curves) in &groups {
        let agg = aggregate_seeds(curves)?;
        write_file(&dest.join(format!("{group}.csv")), |w| agg.write_csv(w))?;
    }
    Ok(groups.len())
}
