//! Regret curves over simulated time and their aggregation across seeds.
//!
//! At time `t` the evaluation set is every record with `finish <= t`. Mean
//! regret is the cumulative regret of that set divided by its size, simple
//! (min) regret is the gap between the optimum and the best true value in it.
//! Both are undefined, and stored as `None`, while the set is empty.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::objective::TabularObjective;
use crate::scheduler::EvaluationTrace;

/// `count` equally spaced times from 0 to `budget` inclusive.
pub fn time_grid(budget: f64, count: usize) -> Result<Vec<f64>> {
    if count < 2 || !(budget > 0.0) || !budget.is_finite() {
        return Err(Error::domain("time grid needs at least 2 points and a positive budget"));
    }
    let last = (count - 1) as f64;
    Ok((0..count).map(|k| budget * k as f64 / last).collect())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("time grid must be nonempty, finite and strictly increasing"));
    }
    Ok(())
}

/// Regret statistics of one run at each time of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretCurve {
    pub times: Vec<f64>,
    pub mean_regret: Vec<Option<f64>>,
    pub min_regret: Vec<Option<f64>>,
    pub eval_counts: Vec<usize>,
}

/// Computes a curve from completed evaluations and their true values.
pub fn regret_curve(trace: &EvaluationTrace, objective: &TabularObjective, times: &[f64]) -> Result<RegretCurve> {
    check_times(times)?;
    if trace.grid_size != objective.size() {
        return Err(Error::domain(format!(
            "trace was run on {} points but the objective has {}",
            trace.grid_size,
            objective.size()
        )));
    }
    let mut done: Vec<(f64, usize, f64)> = trace
        .records
        .iter()
        .map(|r| Ok((r.finish, r.ordinal, objective.regret(r.point_index)?)))
        .collect::<Result<_>>()?;
    done.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut curve = RegretCurve {
        times: times.to_vec(),
        mean_regret: Vec::with_capacity(times.len()),
        min_regret: Vec::with_capacity(times.len()),
        eval_counts: Vec::with_capacity(times.len()),
    };
    let (mut n, mut total, mut best) = (0usize, 0.0f64, f64::INFINITY);
    for &t in times {
        while n < done.len() && done[n].0 <= t {
            total += done[n].2;
            best = best.min(done[n].2);
            n += 1;
        }
        curve.eval_counts.push(n);
        curve.mean_regret.push((n > 0).then(|| total / n as f64));
        curve.min_regret.push((n > 0).then_some(best));
    }
    Ok(curve)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>> {
    if s.is_empty() {
        return Ok(None);
    }
    s.parse().map(Some).map_err(|_| Error::format(format!("line {line}: `{s}` is not a number")))
}

impl RegretCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["time", "mean_regret", "min_regret", "eval_count"])?;
        for k in 0..self.times.len() {
            w.write_record([
                self.times[k].to_string(),
                opt(self.mean_regret[k]),
                opt(self.min_regret[k]),
                self.eval_counts[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        if rdr.headers()?.iter().collect::<Vec<_>>() != ["time", "mean_regret", "min_regret", "eval_count"] {
            return Err(Error::format("curve header must be `time,mean_regret,min_regret,eval_count`"));
        }
        let mut c = RegretCurve { times: vec![], mean_regret: vec![], min_regret: vec![], eval_counts: vec![] };
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let time = parse_opt(&rec[0], line)?.ok_or_else(|| Error::format(format!("line {line}: missing time")))?;
            c.times.push(time);
            c.mean_regret.push(parse_opt(&rec[1], line)?);
            c.min_regret.push(parse_opt(&rec[2], line)?);
            c.eval_counts.push(rec[3].parse().map_err(|_| Error::format(format!("line {line}: bad eval_count")))?);
        }
        Ok(c)
    }

    /// Value at the last time point.
    pub fn final_mean_regret(&self) -> Option<f64> {
        self.mean_regret.last().copied().flatten()
    }

    pub fn final_min_regret(&self) -> Option<f64> {
        self.min_regret.last().copied().flatten()
    }
}

/// Pointwise sample mean and standard deviation (`n - 1` denominator, 0 for
/// a single seed) across seeds. A time is masked (`None`) when any seed has
/// no completed evaluation there.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCurve {
    pub times: Vec<f64>,
    pub seeds: usize,
    pub mean_regret: Vec<Option<f64>>,
    pub mean_regret_std: Vec<Option<f64>>,
    pub min_regret: Vec<Option<f64>>,
    pub min_regret_std: Vec<Option<f64>>,
    pub eval_count: Vec<f64>,
    pub eval_count_std: Vec<f64>,
}

/// Sample mean and standard deviation, `n - 1` denominator.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

fn masked_stats(curves: &[RegretCurve], k: usize, pick: impl Fn(&RegretCurve) -> &[Option<f64>]) -> (Option<f64>, Option<f64>) {
    let vals: Option<Vec<f64>> = curves.iter().map(|c| pick(c)[k]).collect();
    match vals {
        Some(v) => {
            let (m, s) = mean_std(&v);
            (Some(m), Some(s))
        }
        None => (None, None),
    }
}

pub fn aggregate_seeds(curves: &[RegretCurve]) -> Result<AggregateCurve> {
    let first = curves.first().ok_or_else(|| Error::domain("no curves to aggregate"))?;
    if curves.iter().any(|c| c.times != first.times) {
        return Err(Error::domain("curves do not share a time grid"));
    }
    let len = first.times.len();
    let mut agg = AggregateCurve {
        times: first.times.clone(),
        seeds: curves.len(),
        mean_regret: Vec::with_capacity(len),
        mean_regret_std: Vec::with_capacity(len),
        min_regret: Vec::with_capacity(len),
        min_regret_std: Vec::with_capacity(len),
        eval_count: Vec::with_capacity(len),
        eval_count_std: Vec::with_capacity(len),
    };
    for k in 0..len {
        let (m, s) = masked_stats(curves, k, |c| &c.mean_regret);
        agg.mean_regret.push(m);
        agg.mean_regret_std.push(s);
        let (m, s) = masked_stats(curves, k, |c| &c.min_regret);
        agg.min_regret.push(m);
        agg.min_regret_std.push(s);
        let counts: Vec<f64> = curves.iter().map(|c| c.eval_counts[k] as f64).collect();
        let (m, s) = mean_std(&counts);
        agg.eval_count.push(m);
        agg.eval_count_std.push(s);
    }
    Ok(agg)
}

impl AggregateCurve {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "time",
            "mean_regret",
            "mean_regret_std",
            "min_regret",
            "min_regret_std",
            "eval_count",
            "eval_count_std",
        ])?;
        for k in 0..self.times.len() {
            w.write_record([
                self.times[k].to_string(),
                opt(self.mean_regret[k]),
                opt(self.mean_regret_std[k]),
                opt(self.min_regret[k]),
                opt(self.min_regret_std[k]),
                self.eval_count[k].to_string(),
                self.eval_count_std[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridDomain;
    use crate::scheduler::{EvaluationRecord, Mode};
    use proptest::prelude::*;

    fn objective() -> TabularObjective {
        let grid = GridDomain::build(vec![vec![0.0, 1.0, 2.0, 3.0]]).unwrap();
        TabularObjective::new(grid, vec![60.0, 100.0, 90.0, 70.0]).unwrap()
    }

    fn trace(items: &[(usize, f64)]) -> EvaluationTrace {
        let records = items
            .iter()
            .enumerate()
            .map(|(i, &(p, finish))| EvaluationRecord {
                ordinal: i,
                worker: 0,
                point_index: p,
                start: 0.0,
                finish,
                observed_y: 0.0,
                true_f: 0.0,
                policy_tag: "TS".into(),
                snapshot_len: 0,
            })
            .collect();
        EvaluationTrace { records, mode: Mode::Sequential, m_workers: 1, budget: 100.0, seed: 0, grid_size: 4, policy_tag: "TS".into() }
    }

    #[test]
    fn optimum_only() {
        let c = regret_curve(&trace(&[(1, 5.0)]), &objective(), &[0.0, 5.0, 9.0]).unwrap();
        assert_eq!(c.mean_regret, vec![None, Some(0.0), Some(0.0)]);
        assert_eq!(c.min_regret, vec![None, Some(0.0), Some(0.0)]);
        assert_eq!(c.eval_counts, vec![0, 1, 1]);
    }

    #[test]
    fn two_evaluations() {
        let c = regret_curve(&trace(&[(2, 1.0), (3, 2.0)]), &objective(), &[1.5, 3.0]).unwrap();
        assert_eq!(c.mean_regret, vec![Some(10.0), Some(20.0)]);
        assert_eq!(c.min_regret, vec![Some(10.0), Some(10.0)]);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let mut t = trace(&[(0, 1.0)]);
        t.grid_size = 5;
        assert!(regret_curve(&t, &objective(), &[1.0]).is_err());
        assert!(regret_curve(&trace(&[]), &objective(), &[2.0, 1.0]).is_err());
    }

    #[test]
    fn aggregate_pair() {
        let a = RegretCurve { times: vec![0.0, 1.0], mean_regret: vec![None, Some(3.0)], min_regret: vec![Some(1.0), Some(1.0)], eval_counts: vec![0, 2] };
        let b = RegretCurve { times: vec![0.0, 1.0], mean_regret: vec![Some(2.0), Some(7.0)], min_regret: vec![Some(1.0), Some(5.0)], eval_counts: vec![1, 4] };
        let g = aggregate_seeds(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(g.mean_regret, vec![None, Some(5.0)]);
        assert!((g.mean_regret_std[1].unwrap() - 4.0 / 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(g.min_regret_std[0], Some(0.0));
        let same = aggregate_seeds(&[b.clone(), b.clone()]).unwrap();
        assert!(same.mean_regret_std.iter().flatten().all(|&s| s == 0.0));
        let single = aggregate_seeds(&[b.clone()]).unwrap();
        assert_eq!(single.mean_regret_std[1], Some(0.0));
        let mut c = b;
        c.times[1] = 2.0;
        assert!(aggregate_seeds(&[a, c]).is_err());
    }

    #[test]
    fn curve_csv_roundtrip() {
        let c = regret_curve(&trace(&[(2, 1.0), (3, 2.0), (0, 2.5)]), &objective(), &time_grid(4.0, 9).unwrap()).unwrap();
        let mut buf = Vec::new();
        c.write_csv(&mut buf).unwrap();
        assert_eq!(RegretCurve::read_csv(buf.as_slice()).unwrap(), c);
    }

    proptest! {
        #[test]
        fn curve_shape_and_order_invariance(
            items in proptest::collection::vec((0usize..4, 0.0f64..50.0), 0..30),
            rot in 0usize..30,
        ) {
            let obj = objective();
            let times = time_grid(50.0, 26).unwrap();
            let c = regret_curve(&trace(&items), &obj, &times).unwrap();
            let mins: Vec<f64> = c.min_regret.iter().flatten().copied().collect();
            prop_assert!(mins.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(c.eval_counts.windows(2).all(|w| w[1] >= w[0]));
            for m in c.mean_regret.iter().flatten() {
                prop_assert!(*m >= 0.0 && *m <= 40.0);
            }
            // Cumulative regret never decreases.
            let cr: Vec<f64> = c.mean_regret.iter().zip(&c.eval_counts).map(|(m, &n)| m.unwrap_or(0.0) * n as f64).collect();
            prop_assert!(cr.windows(2).all(|w| w[1] >= w[0] - 1e-9));
            let mut t = trace(&items);
            if !items.is_empty() {
                let r = rot % items.len();
                t.records.rotate_left(r);
            }
            prop_assert_eq!(regret_curve(&t, &obj, &times).unwrap(), c);
        }
    }
}
