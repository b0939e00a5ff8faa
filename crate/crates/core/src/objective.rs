//! Objective tables, the synthetic lifetime landscape, noise and evaluation time.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::grid::GridDomain;

/// Positive objective values over a grid, with the maximizer precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularObjective {
    grid: GridDomain,
    values: Vec<f64>,
    best_index: usize,
    best_value: f64,
}

impl TabularObjective {
    pub fn new(grid: GridDomain, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.size() {
            return Err(Error::domain(format!("{} values for a grid of {} points", values.len(), grid.size())));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::domain(format!("objective value at index {k} is {} (must be finite and > 0)", values[k])));
        }
        let best_index = crate::acquisition::argmax(&values);
        let best_value = values[best_index];
        Ok(TabularObjective { grid, values, best_index, best_value })
    }

    /// Restricts the objective to the points accepted by `keep`.
    pub fn masked(&self, mut keep: impl FnMut(&[f64]) -> bool) -> Result<Self> {
        let grid = self.grid.masked(&mut keep)?;
        let values = (0..self.grid.size())
            .filter(|&k| keep(self.grid.point(k)))
            .map(|k| self.values[k])
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &GridDomain {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: usize) -> Result<f64> {
        self.values
            .get(k)
            .copied()
            .ok_or_else(|| Error::domain(format!("index {k} outside grid of {} points", self.values.len())))
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    /// Lowest index attaining the maximum.
    pub fn best_index(&self) -> usize {
        self.best_index
    }

    pub fn best_value(&self) -> f64 {
        self.best_value
    }

    /// `f(x*) - f(x_k)`.
    pub fn regret(&self, k: usize) -> Result<f64> {
        Ok(self.best_value - self.value(k)?)
    }

    pub fn mean_value(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }

    /// Writes `coord_0,...,coord_{d-1},value` rows in grid order.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..self.grid.dims()).map(|d| format!("coord_{d}")).collect();
        header.push("value".into());
        w.write_record(&header)?;
        for (p, v) in self.grid.points().zip(&self.values) {
            let mut row: Vec<String> = p.iter().map(|c| c.to_string()).collect();
            row.push(v.to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    /// Reads a table covering a complete Cartesian grid.
    ///
    /// Axes are the sorted unique coordinates seen in each column; every
    /// combination must appear exactly once.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        let dims = cols.len().saturating_sub(1);
        let expected: Vec<String> = (0..dims).map(|d| format!("coord_{d}")).chain(["value".to_string()]).collect();
        if dims == 0 || cols != expected {
            return Err(Error::format(format!("expected header `{}`, found `{}`", expected.join(","), cols.join(","))));
        }
        let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = line + 2;
            if rec.len() != dims + 1 {
                return Err(Error::format(format!("line {line}: expected {} fields, found {}", dims + 1, rec.len())));
            }
            let nums = rec
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| Error::format(format!("line {line}: `{s}` is not a number"))))
                .collect::<Result<Vec<f64>>>()?;
            if nums.iter().any(|v| !v.is_finite()) {
                return Err(Error::format(format!("line {line}: non-finite field")));
            }
            let value = nums[dims];
            if value <= 0.0 {
                return Err(Error::format(format!("line {line}: value {value} is not positive")));
            }
            rows.push((nums[..dims].to_vec(), value));
        }
        if rows.is_empty() {
            return Err(Error::format("table has no rows"));
        }
        let axes: Vec<Vec<f64>> = (0..dims)
            .map(|d| {
                let set: BTreeSet<u64> = rows.iter().map(|(c, _)| ordered_bits(c[d])).collect();
                set.into_iter().map(from_ordered_bits).collect()
            })
            .collect();
        let grid = GridDomain::build(axes)?;
        let mut values = vec![f64::NAN; grid.size()];
        for (coord, value) in &rows {
            let k = grid.index_of(coord).expect("coordinate taken from an axis");
            if !values[k].is_nan() {
                return Err(Error::format(format!("duplicate row for {}", fmt_point(coord))));
            }
            values[k] = *value;
        }
        let missing: Vec<String> = (0..grid.size())
            .filter(|&k| values[k].is_nan())
            .map(|k| fmt_point(grid.point(k)))
            .collect();
        if !missing.is_empty() {
            const SHOWN: usize = 10;
            let more = if missing.len() > SHOWN { format!(" and {} more", missing.len() - SHOWN) } else { String::new() };
            return Err(Error::format(format!(
                "table misses {} of {} grid cells: {}{more}",
                missing.len(),
                grid.size(),
                missing[..missing.len().min(SHOWN)].join(", ")
            )));
        }
        Self::new(grid, values)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }
}

fn fmt_point(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| v.to_string()).collect();
    format!("({})", parts.join(", "))
}

// Total-order key for f64 so coordinates can be deduplicated and sorted.
fn ordered_bits(v: f64) -> u64 {
    let v = if v == 0.0 { 0.0 } else { v };
    let b = v.to_bits();
    if b >> 63 == 1 {
        !b
    } else {
        b | (1 << 63)
    }
}

fn from_ordered_bits(b: u64) -> f64 {
    f64::from_bits(if b >> 63 == 1 { b & !(1 << 63) } else { !b })
}

/// A radial bump `amplitude * exp(-|x - center|^2 / (2 width^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Bump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

/// Parameters of the synthetic two-dimensional lifetime landscape
///
/// `f(x) = baseline + (1 + trend . (x - origin)) * sum_j bump_j(x)`.
///
/// The trend tilts the bumps only, so zero amplitudes give a flat table.
/// The defaults put values in roughly [250, 1050] cycles on the benchmark
/// grid, with the peak near (3.6, 4.4) and a lower ridge near (5.2, 2.8).
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub baseline: f64,
    pub bumps: Vec<Bump>,
    pub trend: [f64; 2],
    pub origin: [f64; 2],
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            baseline: 250.0,
            bumps: vec![
                Bump { center: [3.6, 4.4], width: 0.9, amplitude: 900.0 },
                Bump { center: [5.2, 2.8], width: 0.6, amplitude: 450.0 },
            ],
            trend: [-0.05, -0.03],
            origin: [2.2, 2.2],
        }
    }
}

impl SynthParams {
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let tilt = 1.0 + self.trend[0] * (x[0] - self.origin[0]) + self.trend[1] * (x[1] - self.origin[1]);
        let bumps: f64 = self
            .bumps
            .iter()
            .map(|b| {
                let r2 = (x[0] - b.center[0]).powi(2) + (x[1] - b.center[1]).powi(2);
                b.amplitude * (-r2 / (2.0 * b.width * b.width)).exp()
            })
            .sum();
        self.baseline + tilt * bumps
    }
}

/// Evaluates the synthetic landscape on a two-dimensional grid.
pub fn synth_battery(grid: &GridDomain, params: &SynthParams) -> Result<TabularObjective> {
    if grid.dims() != 2 {
        return Err(Error::domain(format!("synthetic landscape needs a 2-D grid, got {} dimensions", grid.dims())));
    }
    if params.bumps.iter().any(|b| !(b.width > 0.0)) {
        return Err(Error::domain("bump widths must be positive"));
    }
    let values = grid.points().map(|p| params.eval([p[0], p[1]])).collect();
    TabularObjective::new(grid.clone(), values)
}

/// Multiplicative Gaussian observation noise, `y = f (1 + ratio u)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub ratio: f64,
}

impl NoiseModel {
    pub fn new(ratio: f64) -> Result<Self> {
        if !(ratio >= 0.0) || !ratio.is_finite() {
            return Err(Error::domain(format!("noise ratio must be finite and >= 0, got {ratio}")));
        }
        Ok(NoiseModel { ratio })
    }

    pub fn noiseless() -> Self {
        NoiseModel { ratio: 0.0 }
    }

    pub fn apply<R: Rng + ?Sized>(&self, f: f64, rng: &mut R) -> f64 {
        if self.ratio == 0.0 {
            return f;
        }
        let u: f64 = rng.sample(StandardNormal);
        f * (1.0 + self.ratio * u)
    }
}

/// One noisy observation of point `index`. Not clamped at zero.
pub fn observe<R: Rng + ?Sized>(objective: &TabularObjective, noise: &NoiseModel, index: usize, rng: &mut R) -> Result<f64> {
    Ok(noise.apply(objective.value(index)?, rng))
}

/// Which lifetime sets the length of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DurationSource {
    Observed,
    True,
}

impl std::str::FromStr for DurationSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "observed" => Ok(DurationSource::Observed),
            "true" => Ok(DurationSource::True),
            _ => Err(Error::domain(format!("duration source must be `observed` or `true`, got `{s}`"))),
        }
    }
}

/// Converts lifetimes into simulated rounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeModel {
    pub scale: f64,
    pub source: DurationSource,
}

impl TimeModel {
    pub fn new(scale: f64, source: DurationSource) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::domain(format!("time scale must be finite and > 0, got {scale}")));
        }
        Ok(TimeModel { scale, source })
    }

    /// Scale that maps the grid-mean of the objective to `target_rounds`.
    pub fn normalized(objective: &TabularObjective, target_rounds: f64, source: DurationSource) -> Result<Self> {
        Self::new(target_rounds / objective.mean_value(), source)
    }

    /// `scale * max(v, 0.01 f)` with `v` the observed or true lifetime.
    pub fn duration(&self, observed: f64, truth: f64) -> f64 {
        let v = match self.source {
            DurationSource::Observed => observed,
            DurationSource::True => truth,
        };
        self.scale * v.max(0.01 * truth)
    }
}
