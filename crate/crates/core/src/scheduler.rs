//! Discrete-event simulation of `M` workers under a time budget.
//!
//! Time is measured in rounds. An evaluation started at `s` with observed
//! lifetime `y` finishes at `s + duration(y)`. Work is dispatched only while
//! the clock is below the budget; an evaluation finishing after the budget is
//! dropped, one finishing exactly at the budget is kept.
//!
//! Randomness is keyed by selection ordinal, never by event order: the
//! selection streams live under `policy`, and the noise of evaluation `t`
//! comes from `noise/t`. With one worker the three modes therefore produce
//! identical traces.

use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use crate::acquisition::Policy;
use crate::error::{Error, Result};
use crate::gp::{GridPosterior, GridPrior};
use crate::objective::{NoiseModel, TabularObjective, TimeModel};
use crate::rng::StreamKey;

/// How workers are coordinated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    Sequential,
    Synchronous,
    Asynchronous,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Sequential, Mode::Synchronous, Mode::Asynchronous];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Sequential => "sequential",
            Mode::Synchronous => "synchronous",
            Mode::Asynchronous => "asynchronous",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" | "seq" => Ok(Mode::Sequential),
            "synchronous" | "sync" | "syn" => Ok(Mode::Synchronous),
            "asynchronous" | "async" | "asy" => Ok(Mode::Asynchronous),
            _ => Err(Error::domain(format!("unknown mode `{s}`"))),
        }
    }
}

/// One completed evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationRecord {
    /// Selection order, starting at 0.
    pub ordinal: usize,
    pub worker: usize,
    pub point_index: usize,
    pub start: f64,
    pub finish: f64,
    pub observed_y: f64,
    pub true_f: f64,
    pub policy_tag: String,
    /// Observations in the model when this point was selected.
    pub snapshot_len: usize,
}

/// All completed evaluations of one run, ordered by ordinal.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationTrace {
    pub records: Vec<EvaluationRecord>,
    pub mode: Mode,
    pub m_workers: usize,
    pub budget: f64,
    pub seed: u64,
    pub grid_size: usize,
    pub policy_tag: String,
}

impl EvaluationTrace {
    /// Record positions sorted by completion, ties by worker.
    pub fn completion_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.records.len()).collect();
        idx.sort_by(|&a, &b| {
            let (ra, rb) = (&self.records[a], &self.records[b]);
            ra.finish.total_cmp(&rb.finish).then(ra.worker.cmp(&rb.worker))
        });
        idx
    }

    /// Writes a `# key=value` provenance line followed by
    /// `ordinal,worker,point_index,start,finish,observed_y,true_f` rows.
    /// Times are written with six decimals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# seed={} mode={} m_workers={} budget={} grid_size={} policy={}",
            self.seed, self.mode, self.m_workers, self.budget, self.grid_size, self.policy_tag
        )?;
        writeln!(out, "ordinal,worker,point_index,start,finish,observed_y,true_f")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{:.6},{:.6},{},{}",
                r.ordinal, r.worker, r.point_index, r.start, r.finish, r.observed_y, r.true_f
            )?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Parses the format of [`write_csv`](Self::write_csv).
    ///
    /// `snapshot_len` is not stored; it is rebuilt as the number of records
    /// finishing no later than each record's start, which is what every mode
    /// puts into the model before a selection.
    pub fn read_csv<R: BufRead>(mut input: R) -> Result<Self> {
        let mut first = String::new();
        input.read_line(&mut first)?;
        let meta = first
            .trim_end()
            .strip_prefix("# ")
            .ok_or_else(|| Error::format("trace does not start with a `# key=value` line"))?;
        let mut seed = None;
        let mut mode = None;
        let mut m_workers = None;
        let mut budget = None;
        let mut grid_size = None;
        let mut policy_tag = None;
        for kv in meta.split_whitespace() {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::format(format!("bad trace metadata `{kv}`")))?;
            let bad = |_| Error::format(format!("bad value for `{k}` in trace metadata"));
            match k {
                "seed" => seed = Some(v.parse::<u64>().map_err(|e| bad(e.to_string()))?),
                "mode" => mode = Some(v.parse::<Mode>().map_err(|e| bad(e.to_string()))?),
                "m_workers" => m_workers = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "budget" => budget = Some(v.parse::<f64>().map_err(|e| bad(e.to_string()))?),
                "grid_size" => grid_size = Some(v.parse::<usize>().map_err(|e| bad(e.to_string()))?),
                "policy" => policy_tag = Some(v.to_string()),
                _ => {}
            }
        }
        let missing = |k: &str| Error::format(format!("trace metadata lacks `{k}`"));
        let mut rdr = csv::Reader::from_reader(input);
        let expected = ["ordinal", "worker", "point_index", "start", "finish", "observed_y", "true_f"];
        if rdr.headers()?.iter().collect::<Vec<_>>() != expected {
            return Err(Error::format(format!("trace header must be `{}`", expected.join(","))));
        }
        let policy_tag = policy_tag.ok_or_else(|| missing("policy"))?;
        let mut records = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = line + 3;
            let field = |i: usize| -> Result<&str> {
                rec.get(i).ok_or_else(|| Error::format(format!("line {line}: too few fields")))
            };
            let int = |i: usize| -> Result<usize> {
                field(i)?.parse().map_err(|_| Error::format(format!("line {line}: bad `{}`", expected[i])))
            };
            let real = |i: usize| -> Result<f64> {
                field(i)?.parse().map_err(|_| Error::format(format!("line {line}: bad `{}`", expected[i])))
            };
            records.push(EvaluationRecord {
                ordinal: int(0)?,
                worker: int(1)?,
                point_index: int(2)?,
                start: real(3)?,
                finish: real(4)?,
                observed_y: real(5)?,
                true_f: real(6)?,
                policy_tag: policy_tag.clone(),
                snapshot_len: 0,
            });
        }
        let mut finishes: Vec<f64> = records.iter().map(|r| r.finish).collect();
        finishes.sort_by(f64::total_cmp);
        for r in &mut records {
            r.snapshot_len = finishes.partition_point(|&f| f <= r.start);
        }
        Ok(EvaluationTrace {
            records,
            mode: mode.ok_or_else(|| missing("mode"))?,
            m_workers: m_workers.ok_or_else(|| missing("m_workers"))?,
            budget: budget.ok_or_else(|| missing("budget"))?,
            seed: seed.ok_or_else(|| missing("seed"))?,
            grid_size: grid_size.ok_or_else(|| missing("grid_size"))?,
            policy_tag,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_csv(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

/// Everything a run needs apart from the mode and worker count.
#[derive(Debug, Clone)]
pub struct Simulation<'a> {
    pub policy: &'a Policy,
    pub objective: &'a TabularObjective,
    /// Kernel covariance over the objective's grid.
    pub prior: Arc<GridPrior>,
    /// Homoscedastic noise variance assumed by the surrogate.
    pub model_noise: f64,
    pub noise: NoiseModel,
    pub time: TimeModel,
    pub budget: f64,
    pub seed: u64,
}

struct InFlight {
    ordinal: usize,
    point: usize,
    start: f64,
    finish: f64,
    y: f64,
    f: f64,
    snapshot_len: usize,
}

impl<'a> Simulation<'a> {
    fn validate(&self, m_workers: usize) -> Result<()> {
        if !(self.budget > 0.0) || !self.budget.is_finite() {
            return Err(Error::domain(format!("budget must be finite and > 0, got {}", self.budget)));
        }
        if m_workers == 0 {
            return Err(Error::domain("m_workers must be at least 1"));
        }
        if self.prior.grid().size() != self.objective.size() {
            return Err(Error::domain(format!(
                "prior covers {} points but the objective has {}",
                self.prior.grid().size(),
                self.objective.size()
            )));
        }
        Ok(())
    }

    fn key(&self) -> StreamKey {
        StreamKey::new(self.seed)
    }

    fn model(&self) -> Result<GridPosterior> {
        GridPosterior::new(Arc::clone(&self.prior), self.model_noise)
    }

    fn start(&self, ordinal: usize, point: usize, start: f64, snapshot_len: usize) -> Result<InFlight> {
        let f = self.objective.value(point)?;
        let y = self.noise.apply(f, &mut self.key().with("noise").with(ordinal).stream());
        let finish = start + self.time.duration(y, f);
        Ok(InFlight { ordinal, point, start, finish, y, f, snapshot_len })
    }

    fn record(&self, worker: usize, job: &InFlight) -> EvaluationRecord {
        EvaluationRecord {
            ordinal: job.ordinal,
            worker,
            point_index: job.point,
            start: job.start,
            finish: job.finish,
            observed_y: job.y,
            true_f: job.f,
            policy_tag: self.policy.tag().to_string(),
            snapshot_len: job.snapshot_len,
        }
    }

    fn trace(&self, mode: Mode, m_workers: usize, mut records: Vec<EvaluationRecord>) -> EvaluationTrace {
        records.sort_by_key(|r| r.ordinal);
        EvaluationTrace {
            records,
            mode,
            m_workers,
            budget: self.budget,
            seed: self.seed,
            grid_size: self.objective.size(),
            policy_tag: self.policy.tag().to_string(),
        }
    }

    fn select(&self, model: &GridPosterior, ordinals: std::ops::Range<usize>) -> Result<Vec<usize>> {
        self.policy.select_batch(model, ordinals, &self.key().with("policy"))
    }

    pub fn run(&self, mode: Mode, m_workers: usize) -> Result<EvaluationTrace> {
        match mode {
            Mode::Sequential => self.run_sequential(),
            Mode::Synchronous => self.run_synchronous(m_workers),
            Mode::Asynchronous => self.run_asynchronous(m_workers),
        }
    }

    /// One evaluation at a time.
    pub fn run_sequential(&self) -> Result<EvaluationTrace> {
        self.validate(1)?;
        let mut model = self.model()?;
        let mut clock = 0.0;
        let mut records = Vec::new();
        let mut t = 0;
        while clock < self.budget {
            let point = self.select(&model, t..t + 1)?[0];
            let job = self.start(t, point, clock, model.len())?;
            if job.finish > self.budget {
                break;
            }
            model.observe(job.point, job.y)?;
            records.push(self.record(0, &job));
            clock = job.finish;
            t += 1;
        }
        Ok(self.trace(Mode::Sequential, 1, records))
    }

    /// Rounds of `M` selections from one snapshot, with a barrier at the
    /// slowest evaluation of each round.
    pub fn run_synchronous(&self, m_workers: usize) -> Result<EvaluationTrace> {
        self.validate(m_workers)?;
        let mut model = self.model()?;
        let mut clock = 0.0;
        let mut records = Vec::new();
        let mut t = 0;
        while clock < self.budget {
            let points = self.select(&model, t..t + m_workers)?;
            let snapshot = model.len();
            let jobs = points
                .iter()
                .enumerate()
                .map(|(w, &p)| self.start(t + w, p, clock, snapshot))
                .collect::<Result<Vec<_>>>()?;
            let barrier = jobs.iter().map(|j| j.finish).fold(clock, f64::max);
            for (w, job) in jobs.iter().enumerate() {
                if job.finish <= self.budget {
                    records.push(self.record(w, job));
                }
            }
            if barrier > self.budget {
                break;
            }
            for job in &jobs {
                model.observe(job.point, job.y)?;
            }
            clock = barrier;
            t += m_workers;
        }
        Ok(self.trace(Mode::Synchronous, m_workers, records))
    }

    /// Every worker reselects as soon as it finishes, from a model holding
    /// exactly the completed evaluations.
    ///
    /// Completions sharing a timestamp are all absorbed (in worker order)
    /// before any freed worker is dispatched; freed workers are then served
    /// in ascending order with consecutive ordinals.
    pub fn run_asynchronous(&self, m_workers: usize) -> Result<EvaluationTrace> {
        self.validate(m_workers)?;
        let mut model = self.model()?;
        let mut records = Vec::new();
        let mut running: Vec<Option<InFlight>> = (0..m_workers).map(|_| None).collect();
        let mut t = 0;
        let mut free: Vec<usize> = (0..m_workers).collect();
        let mut clock = 0.0;
        loop {
            if clock < self.budget && !free.is_empty() {
                let points = self.select(&model, t..t + free.len())?;
                for (&w, &p) in free.iter().zip(&points) {
                    running[w] = Some(self.start(t, p, clock, model.len())?);
                    t += 1;
                }
            }
            let next = running.iter().flatten().map(|j| j.finish).fold(f64::INFINITY, f64::min);
            if !next.is_finite() || next > self.budget {
                break;
            }
            clock = next;
            free.clear();
            for (w, slot) in running.iter_mut().enumerate() {
                if slot.as_ref().is_some_and(|j| j.finish == clock) {
                    let job = slot.take().expect("checked above");
                    model.observe(job.point, job.y)?;
                    records.push(self.record(w, &job));
                    free.push(w);
                }
            }
        }
        Ok(self.trace(Mode::Asynchronous, m_workers, records))
    }
}
