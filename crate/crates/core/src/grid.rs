//! Finite search domains and the three-step fast-charging geometry.

use std::io::Write;

use crate::error::{Error, Result};

/// A finite set of points laid out row-major over per-dimension axes.
///
/// A freshly built domain holds the full Cartesian product. [`GridDomain::masked`]
/// drops points while keeping the axes and the row-major order of the survivors.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    axes: Vec<Vec<f64>>,
    coords: Vec<f64>,
    cartesian: Vec<usize>,
    lookup: Vec<Option<usize>>,
}

impl GridDomain {
    /// Builds the row-major product of `axes`. Index 0 is the lexicographically
    /// smallest point and the last axis varies fastest.
    pub fn build(axes: Vec<Vec<f64>>) -> Result<Self> {
        if axes.is_empty() {
            return Err(Error::domain("grid needs at least one axis"));
        }
        for (d, axis) in axes.iter().enumerate() {
            if axis.is_empty() {
                return Err(Error::domain(format!("axis {d} is empty")));
            }
            if axis.iter().any(|v| !v.is_finite()) {
                return Err(Error::domain(format!("axis {d} has a non-finite coordinate")));
            }
            if axis.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::domain(format!("axis {d} is not strictly increasing")));
            }
        }
        let dims = axes.len();
        let total: usize = axes.iter().map(Vec::len).product();
        let mut coords = Vec::with_capacity(total * dims);
        let mut multi = vec![0usize; dims];
        for _ in 0..total {
            coords.extend(multi.iter().zip(&axes).map(|(&i, axis)| axis[i]));
            for d in (0..dims).rev() {
                multi[d] += 1;
                if multi[d] < axes[d].len() {
                    break;
                }
                multi[d] = 0;
            }
        }
        Ok(GridDomain {
            axes,
            coords,
            cartesian: (0..total).collect(),
            lookup: (0..total).map(Some).collect(),
        })
    }

    /// Keeps the points for which `keep` returns true.
    pub fn masked(&self, mut keep: impl FnMut(&[f64]) -> bool) -> Result<Self> {
        let dims = self.dims();
        let mut coords = Vec::new();
        let mut cartesian = Vec::new();
        let mut lookup = vec![None; self.lookup.len()];
        for k in 0..self.size() {
            let p = self.point(k);
            if keep(p) {
                lookup[self.cartesian[k]] = Some(cartesian.len());
                cartesian.push(self.cartesian[k]);
                coords.extend_from_slice(p);
            }
        }
        if cartesian.is_empty() {
            return Err(Error::domain("mask removed every grid point"));
        }
        debug_assert_eq!(coords.len(), cartesian.len() * dims);
        Ok(GridDomain { axes: self.axes.clone(), coords, cartesian, lookup })
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn size(&self) -> usize {
        self.cartesian.len()
    }

    pub fn axes(&self) -> &[Vec<f64>] {
        &self.axes
    }

    /// True when no point has been masked out.
    pub fn is_complete(&self) -> bool {
        self.cartesian.len() == self.lookup.len()
    }

    /// Coordinates of point `k`. Panics when `k >= size()`.
    pub fn point(&self, k: usize) -> &[f64] {
        let d = self.dims();
        &self.coords[k * d..(k + 1) * d]
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dims())
    }

    /// Per-axis positions of point `k`.
    pub fn multi_index(&self, k: usize) -> Vec<usize> {
        let mut rem = self.cartesian[k];
        let mut out = vec![0; self.dims()];
        for d in (0..self.dims()).rev() {
            let len = self.axes[d].len();
            out[d] = rem % len;
            rem /= len;
        }
        out
    }

    /// Index of the point with exactly these coordinates, if present.
    pub fn index_of(&self, coord: &[f64]) -> Option<usize> {
        if coord.len() != self.dims() {
            return None;
        }
        let mut cart = 0usize;
        for (axis, &c) in self.axes.iter().zip(coord) {
            let pos = axis.iter().position(|&a| a == c)?;
            cart = cart * axis.len() + pos;
        }
        self.lookup[cart]
    }

    /// Spacing between the first two coordinates of each axis, 1.0 for singleton axes.
    pub fn axis_steps(&self) -> Vec<f64> {
        self.axes
            .iter()
            .map(|a| if a.len() > 1 { a[1] - a[0] } else { 1.0 })
            .collect()
    }

    /// Writes `index,coord_0,...,coord_{d-1}` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["index".to_string()];
        header.extend((0..self.dims()).map(|d| format!("coord_{d}")));
        w.write_record(&header)?;
        for (k, p) in self.points().enumerate() {
            let mut row = vec![k.to_string()];
            row.extend(p.iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `count` evenly spaced values starting at `start`, computed without drift.
pub fn linspace_step(start: f64, step: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| start + step * k as f64).collect()
}

/// The 2.2 C to 6.0 C current axis in 0.2 C steps (20 values).
pub fn benchmark_current_axis() -> Vec<f64> {
    // Integer tenths give exact decimal-looking coordinates.
    (0..20).map(|k| (22 + 2 * k) as f64 / 10.0).collect()
}

/// Three-step constant-current protocol derived from the first two currents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargingProtocol {
    /// C-rates of the three steps. `i3` is `None` when the first two steps
    /// already exhaust the charging time.
    pub i1: f64,
    pub i2: f64,
    pub i3: Option<f64>,
    /// Step durations in seconds.
    pub t1: f64,
    pub t2: f64,
    pub t3: Option<f64>,
    pub feasible: bool,
}

/// Fixed charging-time geometry.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChargingGeometry {
    /// Total charging time in seconds.
    pub t_final: f64,
    /// SOC fraction delivered by each step.
    pub dq: [f64; 3],
    /// Upper bound on the derived third current; `f64::INFINITY` disables it.
    pub i3_max: f64,
}

impl Default for ChargingGeometry {
    fn default() -> Self {
        ChargingGeometry { t_final: 800.0, dq: [0.2, 0.2, 0.4], i3_max: f64::INFINITY }
    }
}

impl ChargingGeometry {
    pub fn protocol(&self, i1: f64, i2: f64) -> Result<ChargingProtocol> {
        protocol_from_currents(i1, i2, self.t_final, self.dq, self.i3_max)
    }

    /// Grid over `(i1, i2)` with infeasible protocols masked out.
    pub fn grid(&self, i1_axis: Vec<f64>, i2_axis: Vec<f64>) -> Result<(GridDomain, Vec<ChargingProtocol>)> {
        let full = GridDomain::build(vec![i1_axis, i2_axis])?;
        let mut protocols = Vec::with_capacity(full.size());
        for p in full.points() {
            protocols.push(self.protocol(p[0], p[1])?);
        }
        let mut it = protocols.iter();
        let grid = full.masked(|_| it.next().is_some_and(|p| p.feasible))?;
        protocols.retain(|p| p.feasible);
        Ok((grid, protocols))
    }

    /// The 20 x 20 benchmark grid.
    pub fn benchmark_grid(&self) -> Result<(GridDomain, Vec<ChargingProtocol>)> {
        self.grid(benchmark_current_axis(), benchmark_current_axis())
    }
}

/// Step times `t_i = 3600 dq_i / i_i` for the first two steps, the remainder
/// of `t_final` for the third, and `i3 = 3600 dq_3 / t3`.
pub fn protocol_from_currents(i1: f64, i2: f64, t_final: f64, dq: [f64; 3], i3_max: f64) -> Result<ChargingProtocol> {
    if !(i1 > 0.0 && i2 > 0.0) {
        return Err(Error::domain(format!("currents must be positive, got i1={i1}, i2={i2}")));
    }
    if !(t_final > 0.0) {
        return Err(Error::domain(format!("charging time must be positive, got {t_final}")));
    }
    if dq.iter().any(|&q| !(q > 0.0 && q < 1.0)) {
        return Err(Error::domain(format!("SOC increments must lie in (0, 1), got {dq:?}")));
    }
    let t1 = 3600.0 * dq[0] / i1;
    let t2 = 3600.0 * dq[1] / i2;
    let t3 = t_final - t1 - t2;
    if t3 <= 0.0 {
        return Ok(ChargingProtocol { i1, i2, i3: None, t1, t2, t3: None, feasible: false });
    }
    let i3 = 3600.0 * dq[2] / t3;
    Ok(ChargingProtocol { i1, i2, i3: Some(i3), t1, t2, t3: Some(t3), feasible: i3 <= i3_max })
}
