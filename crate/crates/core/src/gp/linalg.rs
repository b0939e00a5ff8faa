//! Small dense kernels used by the GP code.

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Lower-triangular matrix stored row by row; row `i` holds `i + 1` entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PackedLower {
    data: Vec<f64>,
    n: usize,
}

impl PackedLower {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let start = i * (i + 1) / 2;
        &self.data[start..start + i + 1]
    }

    /// Appends a row of length `dim() + 1`.
    pub fn push_row(&mut self, row: &[f64]) {
        assert_eq!(row.len(), self.n + 1, "packed row has wrong length");
        self.data.extend_from_slice(row);
        self.n += 1;
    }

    /// Solves `L x = b`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let r = self.row(i);
            let s = b[i] - dot(&r[..i], &x);
            x.push(s / r[i]);
        }
        x
    }

    /// Solves `L^T x = b`.
    pub fn backward_solve_transposed(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        for i in (0..self.n).rev() {
            let r = self.row(i);
            x[i] /= r[i];
            let xi = x[i];
            for (xj, &lij) in x[..i].iter_mut().zip(&r[..i]) {
                *xj -= lij * xi;
            }
        }
        x
    }

    /// Dense row-major copy of `L L^T`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = dot(&self.row(i)[..=j], &self.row(j)[..=j]);
                out[i * n + j] = v;
                out[j * n + i] = v;
            }
        }
        out
    }
}

/// In-place Cholesky of the lower triangle of a row-major `n x n` matrix.
///
/// On success the lower triangle holds `L` and the strict upper triangle is
/// zeroed. A pivot in `[-zero_tol, zero_tol]` is taken as an exact zero of a
/// semidefinite matrix and its column is set to zero; with `zero_tol = 0`
/// every pivot must be positive. On failure returns the offending row.
pub fn cholesky_in_place(a: &mut [f64], n: usize, zero_tol: f64) -> Result<(), usize> {
    assert_eq!(a.len(), n * n);
    for i in 0..n {
        let (done, rest) = a.split_at_mut(i * n);
        let row_i = &mut rest[..n];
        for j in 0..i {
            let row_j = &done[j * n..j * n + j + 1];
            row_i[j] = if row_j[j] == 0.0 {
                0.0
            } else {
                (row_i[j] - dot(&row_i[..j], &row_j[..j])) / row_j[j]
            };
        }
        let s = row_i[i] - dot(&row_i[..i], &row_i[..i]);
        if !s.is_finite() {
            return Err(i);
        }
        row_i[i] = if s > zero_tol {
            s.sqrt()
        } else if zero_tol > 0.0 && s >= -zero_tol {
            0.0
        } else {
            return Err(i);
        };
        for v in &mut row_i[i + 1..] {
            *v = 0.0;
        }
    }
    Ok(())
}
