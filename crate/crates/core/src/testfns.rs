//! Analytic benchmark functions with known sensitivity structure.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::sensitivity::InputDistribution;
use crate::{Error, Result};

/// Coefficients of the eight-input g-function benchmark.
pub const SOBOL_G_A: [f64; 8] = [0.0, 1.0, 4.5, 9.0, 99.0, 99.0, 99.0, 99.0];

/// Sobol' g-function `prod_i (|4 x_i - 2| + a_i) / (1 + a_i)` on `[0, 1]^p`.
pub fn sobol_g(x: &[f64], a: &[f64]) -> Result<f64> {
    if x.len() != a.len() {
        return Err(Error::dims("g-function coefficients", x.len(), a.len()));
    }
    if a.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("g-function coefficients must be >= 0"));
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::invalid("g-function inputs must lie in [0, 1]"));
    }
    Ok(x.iter().zip(a).map(|(xi, ai)| ((4.0 * xi - 2.0).abs() + ai) / (1.0 + ai)).product())
}

/// Exact first-order and total indices of the g-function.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolGOracle {
    pub partial_variances: Vec<f64>,
    pub variance: f64,
    pub first: Vec<f64>,
    pub total: Vec<f64>,
}

pub fn sobol_g_oracle(a: &[f64]) -> Result<SobolGOracle> {
    if a.is_empty() || a.iter().any(|v| !(*v >= 0.0)) {
        return Err(Error::invalid("g-function coefficients must be non-empty and >= 0"));
    }
    let vi: Vec<f64> = a.iter().map(|ai| (1.0 / 3.0) / ((1.0 + ai) * (1.0 + ai))).collect();
    let prod: f64 = vi.iter().map(|v| 1.0 + v).product();
    let variance = prod - 1.0;
    let first = vi.iter().map(|v| v / variance).collect();
    let total = vi.iter().map(|v| v * (prod / (1.0 + v)) / variance).collect();
    Ok(SobolGOracle {
        partial_variances: vi,
        variance,
        first,
        total,
    })
}

/// Domain bound of the arctangent temporal inputs.
pub const ARCTAN_BOUND: f64 = 7.0;

/// Time grid `t_l = 2 pi (l - 1) / (q - 1)`, `l = 1..q`.
pub fn arctan_times(q: usize) -> Vec<f64> {
    (0..q).map(|l| 2.0 * PI * l as f64 / (q - 1) as f64).collect()
}

/// `y(t_l) = atan(x1) cos(t_l) + atan(x2) sin(t_l)` on [`arctan_times`].
pub fn arctan_temporal(x: &[f64], q: usize) -> Result<Vec<f64>> {
    if x.len() != 2 {
        return Err(Error::dims("arctangent inputs", 2, x.len()));
    }
    if q < 2 {
        return Err(Error::invalid("arctangent function needs q >= 2 time steps"));
    }
    if x.iter().any(|v| !(-ARCTAN_BOUND..=ARCTAN_BOUND).contains(v)) {
        return Err(Error::invalid("arctangent inputs must lie in [-7, 7]"));
    }
    let (a1, a2) = (libm::atan(x[0]), libm::atan(x[1]));
    Ok(arctan_times(q)
        .into_iter()
        .map(|t| a1 * libm::cos(t) + a2 * libm::sin(t))
        .collect())
}

/// Named benchmark with its input distribution in raw units.
#[derive(Debug, Clone, PartialEq)]
pub enum TestFunction {
    SobolG { a: Vec<f64> },
    ArctanTemporal { q: usize },
}

impl TestFunction {
    pub fn name(&self) -> &'static str {
        match self {
            TestFunction::SobolG { .. } => "sobol-g",
            TestFunction::ArctanTemporal { .. } => "arctan-temporal",
        }
    }

    pub fn p(&self) -> usize {
        match self {
            TestFunction::SobolG { a } => a.len(),
            TestFunction::ArctanTemporal { .. } => 2,
        }
    }

    pub fn m(&self) -> usize {
        match self {
            TestFunction::SobolG { .. } => 1,
            TestFunction::ArctanTemporal { q } => *q,
        }
    }

    /// Independent uniform inputs over the raw domain.
    pub fn input_distribution(&self) -> Vec<InputDistribution> {
        let (lower, upper) = self.bounds();
        alloc::vec![InputDistribution::Uniform { lower, upper }; self.p()]
    }

    pub fn bounds(&self) -> (f64, f64) {
        match self {
            TestFunction::SobolG { .. } => (0.0, 1.0),
            TestFunction::ArctanTemporal { .. } => (-ARCTAN_BOUND, ARCTAN_BOUND),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            TestFunction::SobolG { a } => Ok(alloc::vec![sobol_g(x, a)?]),
            TestFunction::ArctanTemporal { q } => arctan_temporal(x, *q),
        }
    }

    /// Evaluates every row of `x` (raw units).
    pub fn eval_rows(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::<f64>::zeros(x.nrows(), self.m());
        let mut row = alloc::vec![0.0; x.ncols()];
        for i in 0..x.nrows() {
            for k in 0..x.ncols() {
                row[k] = x[(i, k)];
            }
            let y = self.eval(&row)?;
            for (k, v) in y.into_iter().enumerate() {
                out[(i, k)] = v;
            }
        }
        Ok(out)
    }

    /// Evaluates rows given in scaled `[-1, 1]` coordinates.
    pub fn eval_scaled_rows(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let (lo, hi) = self.bounds();
        let x = z.map(|v| (lo + (v + 1.0) * 0.5 * (hi - lo)).clamp(lo, hi));
        self.eval_rows(&x)
    }
}
