//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails. All tolerances and time limits are pinned below.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use stsbo_core::acquisition::{argmax, sample_index, BlahutArimoto, Matrix, Policy, StsParams};
use stsbo_core::experiment::{Experiment, ExperimentConfig, PolicyKind};
use stsbo_core::grid::protocol_from_currents;
use stsbo_core::metrics::{aggregate_seeds, mean_std, regret_curve, time_grid, RegretCurve};
use stsbo_core::objective::{DurationSource, TimeModel};
use stsbo_core::scheduler::{EvaluationRecord, EvaluationTrace, Mode, Simulation};
use stsbo_core::theory::{run_suite, SuiteConfig};
use stsbo_core::{GpPosterior, GridDomain, GridPrior, KernelKind, KernelSpec, NoiseModel, StreamKey, TabularObjective};

const GP_INSTANCES: usize = 50;
const GP_MAX_N: usize = 15;
const GP_TOL_REL: f64 = 1e-8;
const GP_SECONDS: f64 = 5.0;

const BA_INSTANCES: usize = 100;
const BA_BETAS: [f64; 4] = [0.01, 0.1, 1.0, 10.0];
const BA_ITERATIONS: usize = 100;
const BA_SLACK_REL: f64 = 1e-10;
const BA_SECONDS: f64 = 5.0;

const LIMIT_INSTANCES: usize = 50;
const UNIFORM_TOL: f64 = 1e-15;
const HUGE_BETA: f64 = 1e6;
const ENTROPY_TOL: f64 = 1e-3;
const AGREEMENT_DRAWS: usize = 10_000;
const AGREEMENT_MIN: f64 = 0.999;

const THEORY_SECONDS: f64 = 60.0;

const SCHED_CONFIGS: usize = 20;
const SCHED_SECONDS: f64 = 30.0;
const DURATION_TOL_REL: f64 = 1e-9;

const PROTOCOL_TOL: f64 = 1e-4;

const SWEEP_SECONDS: f64 = 15.0 * 60.0;

const METRIC_TRACES: usize = 20;
const METRIC_TOL: f64 = 1e-12;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

type Check = fn() -> Outcome;

fn main() -> ExitCode {
    let checks: [(&str, Check); 8] = [
        ("1 gp oracle equivalence", gp_oracle),
        ("2 blahut-arimoto monotonicity", ba_monotone),
        ("3 beta limits", beta_limits),
        ("4 information identities", identities),
        ("5 scheduler invariants", scheduler_invariants),
        ("6 protocol arithmetic", protocol_arithmetic),
        ("7 qualitative trends", sweep_trends),
        ("8 metrics oracle", metrics_oracle),
    ];
    let only: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, check) in checks {
        if !only.is_empty() && !only.iter().any(|o| name.contains(o.as_str())) {
            continue;
        }
        let started = Instant::now();
        let out = check();
        let status = if out.passed { "PASS" } else { "FAIL" };
        println!("{status} [{name}] {} ({:.2} s)", out.detail, started.elapsed().as_secs_f64());
        failed += usize::from(!out.passed);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}

/// Mean and variance from an explicit inverse of `K + noise I`.
fn gp_dense_oracle(kernel: &KernelSpec, noise: f64, xs: &[Vec<f64>], ys: &[f64], q: &[f64]) -> (f64, f64) {
    let n = xs.len();
    let k = DMatrix::from_fn(n, n, |i, j| kernel.eval(&xs[i], &xs[j]) + if i == j { noise } else { 0.0 });
    let inv = k.try_inverse().expect("training covariance invertible");
    let ks = DVector::from_fn(n, |i, _| kernel.eval(&xs[i], q));
    let y = DVector::from_column_slice(ys);
    let mean = (ks.transpose() * &inv * y)[(0, 0)];
    let var = kernel.eval(q, q) - (ks.transpose() * &inv * &ks)[(0, 0)];
    (mean, var.max(0.0))
}

fn gp_oracle() -> Outcome {
    let started = Instant::now();
    let mut worst = 0.0f64;
    for inst in 0..GP_INSTANCES {
        let mut rng = StreamKey::new(1).with("gp").with(inst).stream();
        let kind = if inst % 2 == 0 { KernelKind::SquaredExponential } else { KernelKind::Matern52 };
        let sv = rng.gen_range(0.5..5.0);
        let kernel = KernelSpec::new(kind, vec![rng.gen_range(0.3..2.0), rng.gen_range(0.3..2.0)], sv).unwrap();
        let noise = sv * rng.gen_range(1e-4..1e-1);
        let n = rng.gen_range(1..=GP_MAX_N);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..4.0), rng.gen_range(0.0..4.0)]).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let gp = GpPosterior::from_data(kernel.clone(), noise, xs.clone(), ys.clone()).unwrap();
        let queries: Vec<Vec<f64>> = (0..20).map(|_| vec![rng.gen_range(-0.5..4.5), rng.gen_range(-0.5..4.5)]).collect();
        let (means, vars) = gp.posterior_mean_var(&queries).unwrap();
        for (q, (m, v)) in queries.iter().zip(means.iter().zip(&vars)) {
            let (om, ov) = gp_dense_oracle(&kernel, noise, &xs, &ys, q);
            worst = worst.max((m - om).abs() / sv).max((v - ov).abs() / sv);
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        worst <= GP_TOL_REL && secs < GP_SECONDS,
        format!("max |error| / signal_variance = {worst:.3e} (tol {GP_TOL_REL:e}), {secs:.2} s (limit {GP_SECONDS} s)"),
    )
}

fn random_distortion<R: Rng>(rng: &mut R, z: usize, x: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..z)
        .map(|_| {
            let g: Vec<f64> = (0..x).map(|_| rng.gen_range(0.0..3.0)).collect();
            let top = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            g.iter().map(|v| (top - v).powi(2)).collect()
        })
        .collect();
    Matrix::from_rows(rows).unwrap()
}

fn ba_monotone() -> Outcome {
    let started = Instant::now();
    let mut worst = f64::NEG_INFINITY;
    let mut violations = 0;
    for inst in 0..BA_INSTANCES {
        let mut rng = StreamKey::new(2).with("ba").with(inst).stream();
        let (z, x) = (rng.gen_range(1..=8), rng.gen_range(1..=16));
        let d = random_distortion(&mut rng, z, x);
        for beta in BA_BETAS {
            let mut ba = BlahutArimoto::uniform(&d, beta).unwrap();
            let mut prev = ba.lagrangian(beta);
            for _ in 0..BA_ITERATIONS {
                ba.step();
                let cur = ba.lagrangian(beta);
                // Positive means the Lagrangian rose by more than the slack
                // (relative, with a 1e-15 absolute floor for values near 0).
                let excess = cur - prev - (BA_SLACK_REL * prev.abs() + 1e-15);
                worst = worst.max(excess);
                if excess > 0.0 {
                    violations += 1;
                }
                prev = cur;
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        violations == 0 && secs < BA_SECONDS,
        format!(
            "{violations} increases beyond {BA_SLACK_REL:e} relative over {} runs; largest step minus slack {worst:.3e}; {secs:.2} s (limit {BA_SECONDS} s)",
            BA_INSTANCES * BA_BETAS.len()
        ),
    )
}

fn beta_limits() -> Outcome {
    let mut uniform_dev = 0.0f64;
    let mut max_entropy = 0.0f64;
    let (mut agree, mut draws) = (0usize, 0usize);
    for inst in 0..LIMIT_INSTANCES {
        let mut rng = StreamKey::new(3).with("limits").with(inst).stream();
        let (z, x) = (rng.gen_range(1..=8), rng.gen_range(2..=16));
        // Values on a 0.1 lattice with a unique maximum per sample.
        let rows: Vec<Vec<f64>> = (0..z)
            .map(|_| loop {
                let g: Vec<f64> = (0..x).map(|_| rng.gen_range(0..30) as f64 / 10.0).collect();
                let top = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if g.iter().filter(|&&v| v == top).count() == 1 {
                    break g;
                }
            })
            .collect();
        let argmaxes: Vec<usize> = rows.iter().map(|r| argmax(r)).collect();
        let d = Matrix::from_rows(
            rows.iter()
                .map(|g| {
                    let top = g.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    g.iter().map(|v| (top - v).powi(2)).collect()
                })
                .collect(),
        )
        .unwrap();

        let flat = BlahutArimoto::uniform(&d, 0.0).unwrap().run(100, 1e-6);
        for p in flat.conditional.as_slice() {
            uniform_dev = uniform_dev.max((p - 1.0 / x as f64).abs());
        }

        let sharp = BlahutArimoto::uniform(&d, HUGE_BETA).unwrap().run(100, 1e-6);
        for r in 0..z {
            let h: f64 = sharp.conditional.row(r).iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
            max_entropy = max_entropy.max(h.max(0.0));
        }
        let per_instance = AGREEMENT_DRAWS / LIMIT_INSTANCES;
        for _ in 0..per_instance {
            let row = rng.gen_range(0..z);
            let pick = sample_index(sharp.conditional.row(row), &mut rng);
            agree += usize::from(pick == argmaxes[row]);
            draws += 1;
        }
    }
    let rate = agree as f64 / draws as f64;
    outcome(
        uniform_dev <= UNIFORM_TOL && max_entropy < ENTROPY_TOL && rate >= AGREEMENT_MIN,
        format!(
            "beta=0 max deviation from uniform {uniform_dev:.1e} (tol {UNIFORM_TOL:e}); beta=1e6 max entropy {max_entropy:.2e} nats (tol {ENTROPY_TOL:e}); argmax agreement {agree}/{draws} (min {AGREEMENT_MIN})"
        ),
    )
}

fn identities() -> Outcome {
    let started = Instant::now();
    let report = match run_suite(&SuiteConfig::default()) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("suite error: {e}")),
    };
    let secs = started.elapsed().as_secs_f64();
    let parts: Vec<String> = report
        .checks
        .iter()
        .map(|c| format!("{} {}={:.2e}{}", c.name, c.statistic, c.worst, if c.passed { "" } else { " FAILED" }))
        .collect();
    outcome(
        report.passed && secs < THEORY_SECONDS,
        format!("{} envs; {}; {secs:.2} s (limit {THEORY_SECONDS} s)", report.config.envs, parts.join(", ")),
    )
}

struct SchedCase {
    objective: TabularObjective,
    prior: Arc<GridPrior>,
    policy: Policy,
    noise: NoiseModel,
    time: TimeModel,
    budget: f64,
    m: usize,
    seed: u64,
}

impl SchedCase {
    fn random(k: usize) -> Self {
        let mut rng = StreamKey::new(5).with("sched").with(k).stream();
        let n = rng.gen_range(2..=12);
        let grid = GridDomain::build(vec![(0..n).map(|i| i as f64 * 0.5).collect()]).unwrap();
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(50.0..500.0)).collect();
        let objective = TabularObjective::new(grid.clone(), values).unwrap();
        let kernel = KernelSpec::squared_exponential(vec![1.0], objective.mean_square()).unwrap();
        let prior = Arc::new(GridPrior::new(Arc::new(grid), kernel).unwrap());
        let policy = if k % 2 == 0 {
            Policy::Thompson
        } else {
            let mut p = StsParams::new([0.01, 0.1, 1.0][k % 3]);
            p.z_count = 8;
            Policy::Satisficing(p)
        };
        let source = if k % 3 == 0 { DurationSource::True } else { DurationSource::Observed };
        // Integer durations provoke simultaneous completions.
        let noise = NoiseModel::new(if k % 4 == 0 { 0.0 } else { 0.05 }).unwrap();
        SchedCase {
            time: TimeModel::normalized(&objective, 10.0, source).unwrap(),
            objective,
            prior,
            policy,
            noise,
            budget: rng.gen_range(50.0..300.0),
            m: rng.gen_range(1..=5),
            seed: rng.gen(),
        }
    }

    fn sim(&self) -> Simulation<'_> {
        let sv = self.prior.kernel().signal_variance();
        Simulation {
            policy: &self.policy,
            objective: &self.objective,
            prior: Arc::clone(&self.prior),
            model_noise: 0.0025 * sv,
            noise: self.noise,
            time: self.time,
            budget: self.budget,
            seed: self.seed,
        }
    }
}

fn csv_bytes(trace: &EvaluationTrace) -> Vec<u8> {
    let mut buf = Vec::new();
    trace.write_csv(&mut buf).unwrap();
    buf
}

/// The comparable content of a record, without the worker slot.
fn essence(r: &EvaluationRecord) -> (usize, usize, u64, u64, u64, usize) {
    (r.ordinal, r.point_index, r.start.to_bits(), r.finish.to_bits(), r.observed_y.to_bits(), r.snapshot_len)
}

/// Replays a trace against the rules every mode shares and the rules of its
/// own mode; returns the first violation.
fn replay(case: &SchedCase, tr: &EvaluationTrace) -> Result<(), String> {
    let m = tr.m_workers;
    for r in &tr.records {
        let f = case.objective.value(r.point_index).unwrap();
        if r.true_f != f {
            return Err(format!("ordinal {}: true_f {} != table {}", r.ordinal, r.true_f, f));
        }
        let truth = match case.time.source {
            DurationSource::Observed => r.observed_y,
            DurationSource::True => f,
        };
        let want = case.time.scale * truth.max(0.01 * f);
        if ((r.finish - r.start) - want).abs() > DURATION_TOL_REL * want {
            return Err(format!("ordinal {}: duration {} != {}", r.ordinal, r.finish - r.start, want));
        }
        if r.finish > tr.budget || r.start >= tr.budget {
            return Err(format!("ordinal {} outside the budget", r.ordinal));
        }
    }
    match tr.mode {
        Mode::Sequential => {
            let mut clock = 0.0;
            for (k, r) in tr.records.iter().enumerate() {
                if r.ordinal != k || r.start != clock || r.snapshot_len != k {
                    return Err(format!("sequential record {k} out of step"));
                }
                clock = r.finish;
            }
        }
        Mode::Synchronous => {
            let mut clock = 0.0;
            let rounds = tr.records.last().map_or(0, |r| r.ordinal / m + 1);
            for round in 0..rounds {
                let chunk: Vec<&EvaluationRecord> = tr.records.iter().filter(|r| r.ordinal / m == round).collect();
                for r in &chunk {
                    if r.worker != r.ordinal % m || r.start != clock || r.snapshot_len != round * m {
                        return Err(format!("synchronous round {round} worker {} off the barrier", r.worker));
                    }
                }
                if round + 1 < rounds {
                    if chunk.len() != m {
                        return Err(format!("synchronous round {round} lost a record before the last round"));
                    }
                    clock = chunk.iter().map(|r| r.finish).fold(clock, f64::max);
                }
            }
        }
        Mode::Asynchronous => {
            let mut last: Vec<f64> = vec![0.0; m];
            let mut by_start: Vec<&EvaluationRecord> = tr.records.iter().collect();
            by_start.sort_by(|a, b| a.start.total_cmp(&b.start).then(a.ordinal.cmp(&b.ordinal)));
            for r in by_start {
                if r.start != last[r.worker] {
                    return Err(format!("worker {} idle from {} to {}", r.worker, last[r.worker], r.start));
                }
                last[r.worker] = r.finish;
                let done = tr.records.iter().filter(|o| o.finish <= r.start).count();
                if r.snapshot_len != done {
                    return Err(format!("ordinal {} saw {} observations, {} had finished", r.ordinal, r.snapshot_len, done));
                }
            }
        }
    }
    Ok(())
}

fn scheduler_invariants() -> Outcome {
    let started = Instant::now();
    let mut failures = Vec::new();
    let mut records = 0;
    for k in 0..SCHED_CONFIGS {
        let case = SchedCase::random(k);
        let sim = case.sim();
        let seq = sim.run_sequential().unwrap();
        let syn = sim.run_synchronous(case.m).unwrap();
        let asy = sim.run_asynchronous(case.m).unwrap();
        for tr in [&seq, &syn, &asy] {
            records += tr.records.len();
            if let Err(e) = replay(&case, tr) {
                failures.push(format!("config {k} {}: {e}", tr.mode));
            }
            if csv_bytes(tr) != csv_bytes(&sim.run(tr.mode, tr.m_workers).unwrap()) {
                failures.push(format!("config {k} {}: rerun not byte-identical", tr.mode));
            }
        }
        let one: Vec<_> = seq.records.iter().map(essence).collect();
        for mode in [Mode::Synchronous, Mode::Asynchronous] {
            let tr = sim.run(mode, 1).unwrap();
            if tr.records.iter().map(essence).collect::<Vec<_>>() != one {
                failures.push(format!("config {k}: M=1 {mode} differs from sequential"));
            }
        }
    }
    let secs = started.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < SCHED_SECONDS,
        if failures.is_empty() {
            format!("{SCHED_CONFIGS} configs, {records} records replayed; {secs:.2} s (limit {SCHED_SECONDS} s)")
        } else {
            failures.join("; ")
        },
    )
}

fn protocol_arithmetic() -> Outcome {
    let cases = [(6.0, 2.5714), (2.2, 9.9000)];
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (i, want) in cases {
        let p = protocol_from_currents(i, i, 800.0, [0.2, 0.2, 0.4], f64::INFINITY).unwrap();
        let i3 = p.i3.unwrap_or(f64::NAN);
        worst = worst.max((i3 - want).abs());
        parts.push(format!("I1=I2={i} -> I3={i3:.6}"));
    }
    outcome(worst <= PROTOCOL_TOL, format!("{}; max error {worst:.1e} C (tol {PROTOCOL_TOL:e})", parts.join(", ")))
}

fn pooled(a: f64, b: f64) -> f64 {
    ((a * a + b * b) / 2.0).sqrt()
}

fn sweep_trends() -> Outcome {
    let started = Instant::now();
    let exp = Experiment::prepare(ExperimentConfig::parse("", &[]).unwrap()).unwrap();
    let c = &exp.config;
    assert!(
        exp.objective.size() == 400 && c.seeds.len() == 20 && c.m_workers == 4 && c.z_count == 64 && c.ba_k_max == 100
            && c.noise_ratio == 0.05 && c.budget == 10000.0
    );
    let jobs = std::thread::available_parallelism().map_or(1, |n| n.get());
    let results = match exp.run_many(&exp.run_ids(), jobs, None) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("sweep failed: {e}")),
    };
    let panels = exp.panels(&results).unwrap();
    let secs = started.elapsed().as_secs_f64();

    let stat = |policy: PolicyKind, mode: Mode, beta: f64| {
        let p = panels.iter().find(|p| p.variant.policy == policy && p.variant.mode == mode && p.beta == beta).unwrap();
        let finals: Vec<f64> = p.final_mean_regret.iter().map(|v| v.expect("every run completes an evaluation")).collect();
        mean_std(&finals)
    };
    let mut notes = Vec::new();
    let mut a_ok = true;
    for policy in [PolicyKind::Ts, PolicyKind::Sts] {
        for &beta in &c.betas {
            if policy == PolicyKind::Ts && beta != c.betas[0] {
                continue;
            }
            let (sm, ss) = stat(policy, Mode::Sequential, beta);
            for mode in [Mode::Synchronous, Mode::Asynchronous] {
                let (pm, ps) = stat(policy, mode, beta);
                if pm > sm + pooled(ss, ps) {
                    a_ok = false;
                    notes.push(format!("(a) {policy:?} beta={beta} {mode}: {pm:.1} > {sm:.1} + {:.1}", pooled(ss, ps)));
                }
            }
        }
    }
    let mut b_ok = true;
    let mut table = Vec::new();
    for mode in Mode::ALL {
        let (tm, ts) = stat(PolicyKind::Ts, mode, 1.0);
        let (sm, ss) = stat(PolicyKind::Sts, mode, 1.0);
        table.push(format!("{mode}: TS {tm:.1}±{ts:.1} STS(1) {sm:.1}±{ss:.1}"));
        if (tm - sm).abs() > pooled(ts, ss) {
            b_ok = false;
            notes.push(format!("(b) {mode}: |{tm:.1} - {sm:.1}| > {:.1}", pooled(ts, ss)));
        }
    }
    let mut c_ok = true;
    for r in &results {
        let mins: Vec<f64> = r.curve.min_regret.iter().flatten().copied().collect();
        if mins.windows(2).any(|w| w[1] > w[0]) {
            c_ok = false;
            notes.push(format!("(c) {} min regret increases", r.id.stem()));
        }
    }
    let time_ok = secs < SWEEP_SECONDS;
    outcome(
        a_ok && b_ok && c_ok && time_ok,
        format!(
            "(a) {} (b) {} (c) {}; final mean regret {}; {} runs on {jobs} threads in {secs:.0} s (limit {SWEEP_SECONDS} s){}",
            pass_word(a_ok),
            pass_word(b_ok),
            pass_word(c_ok),
            table.join(", "),
            results.len(),
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join("; ")) }
        ),
    )
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "violated"
    }
}

/// Random trace on a table, with ties in finish times.
fn random_trace(k: usize) -> (TabularObjective, EvaluationTrace) {
    let mut rng = StreamKey::new(8).with("metrics").with(k).stream();
    let n = rng.gen_range(1..=10);
    let grid = GridDomain::build(vec![(0..n).map(|i| i as f64).collect()]).unwrap();
    let obj = TabularObjective::new(grid, (0..n).map(|_| rng.gen_range(1.0..100.0)).collect()).unwrap();
    let count = rng.gen_range(1..40);
    let records = (0..count)
        .map(|ordinal| {
            let point_index = rng.gen_range(0..n);
            // Odd traces start with a completion at time 0 so they aggregate
            // over the whole grid; even ones exercise the empty prefix.
            let finish = if ordinal == 0 && k % 2 == 1 { 0.0 } else { rng.gen_range(0..100) as f64 * 1.25 };
            EvaluationRecord {
                ordinal,
                worker: 0,
                point_index,
                start: 0.0,
                finish,
                observed_y: 1.0,
                true_f: obj.values()[point_index],
                policy_tag: "TS".into(),
                snapshot_len: 0,
            }
        })
        .collect();
    let trace = EvaluationTrace {
        records,
        mode: Mode::Asynchronous,
        m_workers: 1,
        budget: 125.0,
        seed: k as u64,
        grid_size: n,
        policy_tag: "TS".into(),
    };
    (obj, trace)
}

fn metrics_oracle() -> Outcome {
    let times = time_grid(125.0, 37).unwrap();
    let mut worst = 0.0f64;
    let mut count_mismatch = 0;
    let mut curves: Vec<RegretCurve> = Vec::new();
    for k in 0..METRIC_TRACES {
        let (obj, trace) = random_trace(k);
        let curve = regret_curve(&trace, &obj, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            let done: Vec<f64> = trace
                .records
                .iter()
                .filter(|r| r.finish <= t)
                .map(|r| obj.best_value() - obj.values()[r.point_index])
                .collect();
            if curve.eval_counts[i] != done.len() {
                count_mismatch += 1;
            }
            match (curve.mean_regret[i], curve.min_regret[i], done.is_empty()) {
                (None, None, true) => {}
                (Some(mean), Some(min), false) => {
                    let naive_mean = done.iter().rev().sum::<f64>() / done.len() as f64;
                    let naive_min = done.iter().cloned().fold(f64::INFINITY, f64::min);
                    worst = worst.max((mean - naive_mean).abs()).max((min - naive_min).abs());
                }
                _ => count_mismatch += 1,
            }
        }
        if curve.mean_regret.iter().all(Option::is_some) {
            curves.push(curve);
        }
    }
    let mut agg_worst = 0.0f64;
    if curves.len() >= 2 {
        let agg = aggregate_seeds(&curves).unwrap();
        for i in 0..times.len() {
            let xs: Vec<f64> = curves.iter().map(|c| c.mean_regret[i].unwrap()).collect();
            // Welford's running update, independent of the two-pass code.
            let (mut mean, mut m2) = (0.0, 0.0);
            for (j, x) in xs.iter().enumerate() {
                let delta = x - mean;
                mean += delta / (j + 1) as f64;
                m2 += delta * (x - mean);
            }
            let std = (m2 / (xs.len() - 1) as f64).sqrt();
            let scale = mean.abs().max(1.0);
            agg_worst = agg_worst
                .max((agg.mean_regret[i].unwrap() - mean).abs() / scale)
                .max((agg.mean_regret_std[i].unwrap() - std).abs() / scale);
        }
    }
    outcome(
        worst <= METRIC_TOL && agg_worst <= METRIC_TOL && count_mismatch == 0 && curves.len() >= 2,
        format!(
            "{METRIC_TRACES} traces: curve max error {worst:.1e}, {count_mismatch} count mismatches; aggregate over {} curves max relative error {agg_worst:.1e} (tol {METRIC_TOL:e})",
            curves.len()
        ),
    )
}
