use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelKind {
    SquaredExponential,
    Matern52,
}

impl std::str::FromStr for KernelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "se" | "rbf" | "squared-exponential" | "squared_exponential" => Ok(KernelKind::SquaredExponential),
            "matern52" | "matern-5/2" | "matern" => Ok(KernelKind::Matern52),
            other => Err(Error::domain(format!("unknown kernel kind `{other}`"))),
        }
    }
}

impl std::fmt::Display for KernelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            KernelKind::SquaredExponential => "se",
            KernelKind::Matern52 => "matern52",
        })
    }
}

/// Stationary kernel with per-dimension lengthscales.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    kind: KernelKind,
    lengthscales: Vec<f64>,
    signal_variance: f64,
}

impl KernelSpec {
    pub fn new(kind: KernelKind, lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        if lengthscales.is_empty() {
            return Err(Error::domain("kernel needs at least one lengthscale"));
        }
        if lengthscales.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::domain(format!("lengthscales must be positive, got {lengthscales:?}")));
        }
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(Error::domain(format!("signal variance must be positive, got {signal_variance}")));
        }
        Ok(KernelSpec { kind, lengthscales, signal_variance })
    }

    pub fn squared_exponential(lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self> {
        Self::new(KernelKind::SquaredExponential, lengthscales, signal_variance)
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn dims(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        match self.kind {
            KernelKind::SquaredExponential => self.signal_variance * (-0.5 * r2).exp(),
            KernelKind::Matern52 => {
                let s5r = (5.0 * r2).sqrt();
                self.signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
            }
        }
    }
}
