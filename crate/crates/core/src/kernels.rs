//! Stationary correlation functions, cut-off calibration and sparse
//! correlation assembly.
//!
//! Every compactly supported family is applied per input dimension and
//! multiplied across dimensions, so the pair `(i, j)` contributes a stored
//! entry only when `|x_ik - x_jk| < tau_k` for every `k`.

use alloc::vec::Vec;
use core::f64::consts::PI;

use nalgebra::DMatrix;

use crate::sparse::SparseCorrelation;
use crate::{Error, Result};

/// Default diagonal jitter added before factorization.
pub const DEFAULT_NUGGET: f64 = 1e-8;

/// Tabulated `(alpha, nu)` pairs above which the truncated power function
/// `[1 - t^alpha]^nu` is known to be positive definite. The tabulated alphas
/// are `2 - 1/k` with bound `k`, for `k = 2..=22`.
const TRUNCATED_POWER_BOUNDS: [(f64, f64); 21] = {
    let mut table = [(0.0, 0.0); 21];
    let mut i = 0;
    while i < 21 {
        let k = (i + 2) as f64;
        table[i] = (2.0 - 1.0 / k, k);
        i += 1;
    }
    table
};

/// Lower bound on `nu` for a given `alpha` of the truncated power family,
/// or `None` when `alpha` lies outside the supported range.
///
/// Bounds between tabulated alphas are linearly interpolated. For
/// `alpha <= 1.5` the bound at `1.5` (`nu >= 2`) is used.
pub fn truncated_power_nu_bound(alpha: f64) -> Option<f64> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return None;
    }
    let (a0, nu0) = TRUNCATED_POWER_BOUNDS[0];
    if alpha <= a0 {
        return Some(nu0);
    }
    for w in TRUNCATED_POWER_BOUNDS.windows(2) {
        let ((a_lo, nu_lo), (a_hi, nu_hi)) = (w[0], w[1]);
        if alpha <= a_hi {
            let frac = (alpha - a_lo) / (a_hi - a_lo);
            return Some(nu_lo + frac * (nu_hi - nu_lo));
        }
    }
    // Accept the quoted upper end of the range, 1.955, which sits just above
    // the last tabulated alpha 43/22.
    let (a_last, nu_last) = TRUNCATED_POWER_BOUNDS[TRUNCATED_POWER_BOUNDS.len() - 1];
    if alpha <= 1.955 + 1e-12 {
        let slope = 1.0 / (a_last - TRUNCATED_POWER_BOUNDS[TRUNCATED_POWER_BOUNDS.len() - 2].0);
        return Some(nu_last + (alpha - a_last) * slope);
    }
    None
}

/// Correlation family and its fixed hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelFamily {
    /// Dense `prod_k exp(-phi_k |x_k - y_k|^2)`; reference mode only.
    PowerExponential { phi: Vec<f64> },
    Bohman,
    TruncatedPower { alpha: f64, nu: f64 },
    /// Matérn (smoothness 5/2, inverse range `phi`) tapered by a normalized
    /// Wendland function with parameters `s = taper_dim`, `k = taper_k`.
    MaternWendland { phi: f64, taper_dim: u32, taper_k: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Diagonal jitter used when factorizing assembled matrices.
    pub nugget: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily) -> Result<Self> {
        let spec = KernelSpec {
            family,
            nugget: DEFAULT_NUGGET,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_nugget(mut self, nugget: f64) -> Result<Self> {
        self.nugget = nugget;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.nugget >= 0.0) || !self.nugget.is_finite() {
            return Err(Error::constraint("nugget must be finite and non-negative"));
        }
        match &self.family {
            KernelFamily::PowerExponential { phi } => {
                if phi.iter().any(|v| !(*v > 0.0)) {
                    return Err(Error::constraint("power exponential phi_k must be > 0"));
                }
            }
            KernelFamily::Bohman => {}
            KernelFamily::TruncatedPower { alpha, nu } => validate_truncated_power(*alpha, *nu)?,
            KernelFamily::MaternWendland { phi, taper_dim, taper_k } => {
                if !(*phi > 0.0) {
                    return Err(Error::constraint("matern phi must be > 0"));
                }
                if *taper_dim == 0 {
                    return Err(Error::constraint("wendland taper dimension s must be >= 1"));
                }
                // The polynomial is the k = 2 member; it is positive definite
                // on the line (each factor of the product) only for l >= 3.
                if wendland_ell(*taper_dim, *taper_k) < 3 {
                    return Err(Error::Constraint(alloc::format!(
                        "wendland taper with s = {taper_dim}, k = {taper_k} gives l = {} < 3, not positive definite",
                        wendland_ell(*taper_dim, *taper_k)
                    )));
                }
            }
        }
        Ok(())
    }

    /// True for the families with compact support in every dimension.
    pub fn is_compact(&self) -> bool {
        !matches!(self.family, KernelFamily::PowerExponential { .. })
    }

    /// One-dimensional factor for dimension `dim` at lag `t` with cut-off
    /// `tau`. Inputs are assumed validated.
    #[inline]
    pub fn factor(&self, dim: usize, t: f64, tau: f64) -> f64 {
        match &self.family {
            KernelFamily::PowerExponential { phi } => libm::exp(-phi[dim] * t * t),
            KernelFamily::Bohman => {
                if t >= tau {
                    0.0
                } else {
                    bohman_unchecked(t / tau)
                }
            }
            KernelFamily::TruncatedPower { alpha, nu } => {
                if t >= tau {
                    0.0
                } else {
                    libm::pow(1.0 - libm::pow(t / tau, *alpha), *nu)
                }
            }
            KernelFamily::MaternWendland { phi, taper_dim, taper_k } => {
                if t >= tau {
                    0.0
                } else {
                    matern52(t, *phi) * wendland_normalized(t / tau, wendland_ell(*taper_dim, *taper_k))
                }
            }
        }
    }

    /// Product correlation between two points. Returns exactly zero as soon as
    /// one dimension reaches its cut-off.
    #[inline]
    pub fn correlation(&self, x: &[f64], y: &[f64], tau: &[f64]) -> f64 {
        let mut r = 1.0;
        for k in 0..x.len() {
            let t = (x[k] - y[k]).abs();
            let f = self.factor(k, t, tau.get(k).copied().unwrap_or(f64::INFINITY));
            if f == 0.0 {
                return 0.0;
            }
            r *= f;
        }
        r
    }
}

pub fn validate_truncated_power(alpha: f64, nu: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 2.0) {
        return Err(Error::constraint("truncated power requires 0 < alpha < 2"));
    }
    let bound = truncated_power_nu_bound(alpha).ok_or_else(|| {
        Error::constraint("truncated power alpha above 1.955 has no tabulated nu bound")
    })?;
    if !(nu >= bound - 1e-12) {
        return Err(Error::Constraint(alloc::format!(
            "truncated power requires nu >= nu_p(alpha) = {bound} for alpha = {alpha}, got nu = {nu}"
        )));
    }
    Ok(())
}

#[inline]
fn bohman_unchecked(r: f64) -> f64 {
    (1.0 - r) * libm::cos(PI * r) + libm::sin(PI * r) / PI
}

fn check_lag(t: f64, tau: f64) -> Result<()> {
    if !(tau > 0.0) {
        return Err(Error::constraint("cut-off tau must be > 0"));
    }
    if !(t >= 0.0) {
        return Err(Error::invalid("lag t must be non-negative"));
    }
    Ok(())
}

/// Bohman correlation, exactly zero for `t >= tau`.
pub fn bohman(t: f64, tau: f64) -> Result<f64> {
    check_lag(t, tau)?;
    Ok(if t >= tau { 0.0 } else { bohman_unchecked(t / tau) })
}

/// Truncated power correlation `[1 - (t/tau)^alpha]^nu`, zero beyond `tau`.
pub fn truncated_power(t: f64, tau: f64, alpha: f64, nu: f64) -> Result<f64> {
    check_lag(t, tau)?;
    validate_truncated_power(alpha, nu)?;
    Ok(if t >= tau {
        0.0
    } else {
        libm::pow(1.0 - libm::pow(t / tau, alpha), nu)
    })
}

/// Closed-form Matérn correlation with smoothness 5/2.
pub fn matern52(t: f64, phi: f64) -> f64 {
    let u = libm::sqrt(5.0) * t * phi;
    (1.0 + u + u * u / 3.0) * libm::exp(-u)
}

fn wendland_ell(s: u32, k: u32) -> u32 {
    s / 2 + k + 1
}

/// Wendland function `(1-r)_+^{l+2} [(l^2+4l+3) r^2 + (3l+6) r + 3] / 3`,
/// normalized to one at the origin.
pub fn wendland_normalized(r: f64, ell: u32) -> f64 {
    if r >= 1.0 {
        return 0.0;
    }
    let l = ell as f64;
    let poly = (l * l + 4.0 * l + 3.0) * r * r + (3.0 * l + 6.0) * r + 3.0;
    libm::pow(1.0 - r, l + 2.0) * poly / 3.0
}

/// Matérn(5/2) correlation tapered by a Wendland function with support `tau`.
pub fn matern_wendland(t: f64, phi: f64, tau: f64, k: u32, s: u32) -> Result<f64> {
    check_lag(t, tau)?;
    if !(phi > 0.0) {
        return Err(Error::constraint("matern phi must be > 0"));
    }
    if s == 0 {
        return Err(Error::constraint("wendland taper dimension s must be >= 1"));
    }
    Ok(if t >= tau {
        0.0
    } else {
        matern52(t, phi) * wendland_normalized(t / tau, wendland_ell(s, k))
    })
}

/// Dense power exponential correlation between two points.
pub fn power_exponential(x: &[f64], y: &[f64], phi: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::dims("power_exponential points", x.len(), y.len()));
    }
    if phi.len() != x.len() {
        return Err(Error::dims("power_exponential phi", x.len(), phi.len()));
    }
    let mut e = 0.0;
    for k in 0..x.len() {
        let d = x[k] - y[k];
        e += phi[k] * d * d;
    }
    Ok(libm::exp(-e))
}

/// How the cut-off budget `c` is derived from the target sparsity `omega`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CutoffRule {
    /// `c` is the largest pair distance such that at least a fraction
    /// `omega` of all pair distances are `>= c`; every such pair is then a
    /// structural zero for any `tau` with `sum(tau) <= c`.
    #[default]
    ZeroFraction,
    /// `c` is the `floor(N * omega)`-th smallest pair distance, which only
    /// guarantees a fraction `1 - omega` of structural zeros.
    LiteralQuantile,
}

/// Cut-off vector `tau` constrained to the simplex `{tau_k >= 0, sum <= c}`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutoffVector {
    pub tau: Vec<f64>,
    pub c: f64,
    pub omega: f64,
}

impl CutoffVector {
    pub fn new(tau: Vec<f64>, c: f64, omega: f64) -> Result<Self> {
        let v = CutoffVector { tau, c, omega };
        v.validate()?;
        Ok(v)
    }

    /// Centroid of the simplex: `tau_k = c / (p + 1)`.
    pub fn centroid(p: usize, c: f64, omega: f64) -> Self {
        CutoffVector {
            tau: alloc::vec![c / (p as f64 + 1.0); p],
            c,
            omega,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::constraint("cut-off budget c must be positive and finite"));
        }
        if self.tau.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::constraint("tau_k must be >= 0"));
        }
        let sum: f64 = self.tau.iter().sum();
        if sum > self.c * (1.0 + 1e-12) {
            return Err(Error::Constraint(alloc::format!(
                "sum(tau) = {sum} exceeds the cut-off budget c = {}",
                self.c
            )));
        }
        Ok(())
    }
}

/// Calibrates the simplex budget `c` so that a fraction `omega` of the
/// off-diagonal correlations are structurally zero (see [`CutoffRule`]).
/// Distances are L1 distances between rows of the scaled design.
pub fn calibrate_cutoff(x: &DMatrix<f64>, omega: f64, rule: CutoffRule) -> Result<f64> {
    let n = x.nrows();
    if n < 2 {
        return Err(Error::invalid("cut-off calibration needs at least two design points"));
    }
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::invalid("omega must lie in (0, 1)"));
    }
    let p = x.ncols();
    let mut dist = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut d = 0.0;
            for k in 0..p {
                d += (x[(i, k)] - x[(j, k)]).abs();
            }
            dist.push(d);
        }
    }
    let pairs = dist.len();
    let index = match rule {
        CutoffRule::ZeroFraction => {
            let zeros = libm::ceil(pairs as f64 * omega - 1e-9).max(1.0) as usize;
            pairs - zeros.min(pairs)
        }
        CutoffRule::LiteralQuantile => {
            let k = libm::floor(pairs as f64 * omega) as usize;
            k.clamp(1, pairs) - 1
        }
    };
    let (_, c, _) = dist.select_nth_unstable_by(index, |a, b| a.total_cmp(b));
    let c = *c;
    if !(c > 0.0) {
        return Err(Error::Degenerate(
            "calibrated cut-off is zero; the design has duplicate rows".into(),
        ));
    }
    Ok(c)
}

fn row_major(x: &DMatrix<f64>) -> Vec<f64> {
    let (n, p) = x.shape();
    let mut rows = Vec::with_capacity(n * p);
    for i in 0..n {
        for k in 0..p {
            rows.push(x[(i, k)]);
        }
    }
    rows
}

/// Dimension whose cut-off is smallest; candidate pairs are swept along it.
fn pivot_dimension(spec: &KernelSpec, tau: &[f64]) -> Option<usize> {
    if !spec.is_compact() || tau.is_empty() {
        return None;
    }
    let mut best = 0;
    for k in 1..tau.len() {
        if tau[k] < tau[best] {
            best = k;
        }
    }
    Some(best)
}

fn check_design(x: &DMatrix<f64>, spec: &KernelSpec, tau: &[f64]) -> Result<()> {
    spec.validate()?;
    if spec.is_compact() && tau.len() != x.ncols() {
        return Err(Error::dims("cut-off vector", x.ncols(), tau.len()));
    }
    if let KernelFamily::PowerExponential { phi } = &spec.family {
        if phi.len() != x.ncols() {
            return Err(Error::dims("power exponential phi", x.ncols(), phi.len()));
        }
    }
    Ok(())
}

/// Assembles the sparse product-kernel correlation matrix of a scaled design.
///
/// Candidate pairs are enumerated by sorting the points along the dimension
/// with the smallest cut-off and sweeping a window of width `tau_k`; the
/// stored entries are sorted by `(column, row)` so the result does not depend
/// on enumeration order. The diagonal is exactly one and the spec's nugget is
/// recorded for factorization.
pub fn assemble_sparse_correlation(
    x: &DMatrix<f64>,
    spec: &KernelSpec,
    cutoff: &CutoffVector,
) -> Result<SparseCorrelation> {
    if spec.is_compact() {
        cutoff.validate()?;
    }
    let tau = &cutoff.tau;
    check_design(x, spec, tau)?;
    let (n, p) = x.shape();
    let rows = row_major(x);
    let point = |i: usize| &rows[i * p..(i + 1) * p];
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();

    match pivot_dimension(spec, tau) {
        Some(k) => {
            let width = tau[k];
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| rows[a * p + k].total_cmp(&rows[b * p + k]).then(a.cmp(&b)));
            for (pos, &i) in order.iter().enumerate() {
                let xi = rows[i * p + k];
                for &j in &order[pos + 1..] {
                    if rows[j * p + k] - xi >= width {
                        break;
                    }
                    let v = spec.correlation(point(i), point(j), tau);
                    if v != 0.0 {
                        triplets.push((i.max(j), i.min(j), v));
                    }
                }
            }
        }
        None => {
            for j in 0..n {
                for i in (j + 1)..n {
                    let v = spec.correlation(point(i), point(j), tau);
                    if v != 0.0 {
                        triplets.push((i, j, v));
                    }
                }
            }
        }
    }
    Ok(SparseCorrelation::from_lower_triplets(n, triplets, spec.nugget))
}

/// Cross-correlations between arbitrary points and a fixed training design
/// for one cut-off vector. Only training points inside the support window
/// along the pivot dimension are visited.
#[derive(Debug, Clone)]
pub struct CrossCorrelator {
    spec: KernelSpec,
    tau: Vec<f64>,
    p: usize,
    rows: Vec<f64>,
    pivot: Option<usize>,
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl CrossCorrelator {
    pub fn new(x: &DMatrix<f64>, spec: &KernelSpec, tau: &[f64]) -> Result<Self> {
        check_design(x, spec, tau)?;
        let (n, p) = x.shape();
        let rows = row_major(x);
        let pivot = pivot_dimension(spec, tau);
        let mut order: Vec<usize> = (0..n).collect();
        let mut keys = Vec::new();
        if let Some(k) = pivot {
            order.sort_by(|&a, &b| rows[a * p + k].total_cmp(&rows[b * p + k]).then(a.cmp(&b)));
            keys = order.iter().map(|&i| rows[i * p + k]).collect();
        }
        Ok(CrossCorrelator {
            spec: spec.clone(),
            tau: tau.to_vec(),
            p,
            rows,
            pivot,
            order,
            keys,
        })
    }

    pub fn n_train(&self) -> usize {
        self.order.len()
    }

    /// Calls `f(i, r_i)` for every training index with non-zero correlation
    /// to `point`, in increasing training index order.
    pub fn for_each_nonzero(&self, point: &[f64], buf: &mut Vec<(usize, f64)>) {
        buf.clear();
        let p = self.p;
        match self.pivot {
            Some(k) => {
                let width = self.tau[k];
                let lo = point[k] - width;
                let hi = point[k] + width;
                let start = self.keys.partition_point(|v| *v <= lo);
                for pos in start..self.keys.len() {
                    if self.keys[pos] >= hi {
                        break;
                    }
                    let i = self.order[pos];
                    let v = self.spec.correlation(point, &self.rows[i * p..(i + 1) * p], &self.tau);
                    if v != 0.0 {
                        buf.push((i, v));
                    }
                }
                buf.sort_unstable_by_key(|e| e.0);
            }
            None => {
                for i in 0..self.order.len() {
                    let v = self.spec.correlation(point, &self.rows[i * p..(i + 1) * p], &self.tau);
                    if v != 0.0 {
                        buf.push((i, v));
                    }
                }
            }
        }
    }

    /// Dense `n_train × n_test` cross-correlation matrix.
    pub fn matrix(&self, test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if test.ncols() != self.p {
            return Err(Error::dims("test design columns", self.p, test.ncols()));
        }
        let mut out = DMatrix::<f64>::zeros(self.n_train(), test.nrows());
        let mut point = alloc::vec![0.0; self.p];
        let mut buf = Vec::new();
        for c in 0..test.nrows() {
            for k in 0..self.p {
                point[k] = test[(c, k)];
            }
            self.for_each_nonzero(&point, &mut buf);
            for &(i, v) in &buf {
                out[(i, c)] = v;
            }
        }
        Ok(out)
    }

    /// Correlation matrix among test points (unit diagonal, no nugget).
    pub fn test_correlation(&self, test: &DMatrix<f64>) -> DMatrix<f64> {
        let m = test.nrows();
        let rows = row_major(test);
        let p = self.p;
        let mut out = DMatrix::<f64>::identity(m, m);
        for i in 0..m {
            for j in 0..i {
                let v = self
                    .spec
                    .correlation(&rows[i * p..(i + 1) * p], &rows[j * p..(j + 1) * p], &self.tau);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn bohman_values() {
        assert_eq!(bohman(0.0, 1.0).unwrap(), 1.0);
        assert_eq!(bohman(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(bohman(3.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(bohman(0.5, 1.0).unwrap(), 1.0 / PI, epsilon = 1e-15);
        assert!(bohman(0.1, 0.0).is_err());
        assert!(bohman(0.1, -1.0).is_err());
    }

    #[test]
    fn truncated_power_values() {
        assert_eq!(truncated_power(0.0, 1.0, 1.5, 2.0).unwrap(), 1.0);
        assert_eq!(truncated_power(1.0, 1.0, 1.5, 2.0).unwrap(), 0.0);
        assert_relative_eq!(
            truncated_power(0.25, 1.0, 1.5, 2.0).unwrap(),
            0.765625,
            epsilon = 1e-15
        );
        assert_eq!(truncated_power(0.0, 1.0, 5.0 / 3.0, 3.0).unwrap(), 1.0);
    }

    #[test]
    fn truncated_power_constraints_name_the_violation() {
        let err = truncated_power(0.1, 1.0, 2.0, 10.0).unwrap_err();
        assert!(matches!(err, Error::Constraint(ref m) if m.contains("alpha")));
        let err = truncated_power(0.1, 1.0, 5.0 / 3.0, 2.5).unwrap_err();
        assert!(matches!(err, Error::Constraint(ref m) if m.contains("nu")));
        assert!(truncated_power(0.1, 1.0, 1.2, 1.9).is_err());
        assert!(truncated_power(0.1, 1.0, 1.2, 2.0).is_ok());
        assert!(truncated_power(0.1, 1.0, 1.99, 100.0).is_err());
    }

    #[test]
    fn nu_bound_table_reproduces_quoted_pairs() {
        assert_eq!(truncated_power_nu_bound(1.5), Some(2.0));
        assert_relative_eq!(truncated_power_nu_bound(5.0 / 3.0).unwrap(), 3.0, epsilon = 1e-12);
        assert!(truncated_power_nu_bound(1.955).is_some());
        assert!(truncated_power_nu_bound(1.96).is_none());
        let mid = truncated_power_nu_bound(0.5 * (1.5 + 5.0 / 3.0)).unwrap();
        assert_relative_eq!(mid, 2.5, epsilon = 1e-12);
    }

    #[test]
    fn matern_wendland_limits() {
        assert_eq!(matern_wendland(0.0, 1.0, 1.0, 2, 1).unwrap(), 1.0);
        assert_eq!(matern_wendland(1.0, 1.0, 1.0, 2, 1).unwrap(), 0.0);
        assert_eq!(matern_wendland(1.7, 1.0, 1.0, 2, 1).unwrap(), 0.0);
        assert!(matern_wendland(0.2, 0.0, 1.0, 2, 1).is_err());
        assert!(matern_wendland(0.2, 1.0, 0.0, 2, 1).is_err());
    }

    #[test]
    fn wendland_below_line_validity_is_rejected() {
        let bad = KernelFamily::MaternWendland {
            phi: 1.0,
            taper_dim: 1,
            taper_k: 1,
        };
        assert!(KernelSpec::new(bad).is_err());
        let ok = KernelFamily::MaternWendland {
            phi: 1.0,
            taper_dim: 2,
            taper_k: 1,
        };
        assert!(KernelSpec::new(ok).is_ok());
    }

    #[test]
    fn matern_wendland_matches_two_factor_oracle() {
        // Matérn 5/2 and Wendland evaluated independently from their textbook
        // forms: l = floor(1/2) + 2 + 1 = 3, polynomial 24 r^2 + 15 r + 3.
        let t: f64 = 0.3;
        let sq5 = 5.0_f64.sqrt();
        let matern = (1.0 + sq5 * t + 5.0 * t * t / 3.0) * (-sq5 * t).exp();
        let wendland = (1.0 - t).powi(5) * (24.0 * t * t + 15.0 * t + 3.0) / 3.0;
        assert_relative_eq!(
            matern_wendland(0.3, 1.0, 1.0, 2, 1).unwrap(),
            matern * wendland,
            epsilon = 1e-14
        );
    }

    #[test]
    fn power_exponential_values() {
        assert_eq!(power_exponential(&[0.2, 0.4], &[0.2, 0.4], &[1.0, 2.0]).unwrap(), 1.0);
        assert_relative_eq!(
            power_exponential(&[1.0, 1.0], &[0.0, 0.0], &[1.0, 2.0]).unwrap(),
            (-3.0f64).exp(),
            epsilon = 1e-15
        );
        assert!(power_exponential(&[0.0], &[1.0], &[1e6]).unwrap() < 1e-300);
        assert!(power_exponential(&[0.0, 1.0], &[1.0], &[1.0]).is_err());
    }

    #[test]
    fn cutoff_from_three_collinear_points() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let c = calibrate_cutoff(&x, 1.0 / 3.0, CutoffRule::ZeroFraction).unwrap();
        assert_eq!(c, 2.0);
        let literal = calibrate_cutoff(&x, 1.0 / 3.0, CutoffRule::LiteralQuantile).unwrap();
        assert_eq!(literal, 1.0);
        let tiny = calibrate_cutoff(&x, 1e-9, CutoffRule::ZeroFraction).unwrap();
        assert!(tiny >= 2.0);
    }

    #[test]
    fn cutoff_rejects_bad_input() {
        let x = DMatrix::from_row_slice(1, 1, &[0.0]);
        assert!(calibrate_cutoff(&x, 0.5, CutoffRule::ZeroFraction).is_err());
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert!(calibrate_cutoff(&x, 0.0, CutoffRule::ZeroFraction).is_err());
        assert!(calibrate_cutoff(&x, 1.0, CutoffRule::ZeroFraction).is_err());
    }

    #[test]
    fn tau_outside_simplex_rejected() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.5]);
        let spec = KernelSpec::new(KernelFamily::Bohman).unwrap();
        let tau = CutoffVector { tau: alloc::vec![0.8, 0.8], c: 1.0, omega: 0.5 };
        assert!(assemble_sparse_correlation(&x, &spec, &tau).is_err());
        let tau = CutoffVector { tau: alloc::vec![-0.1, 0.8], c: 1.0, omega: 0.5 };
        assert!(assemble_sparse_correlation(&x, &spec, &tau).is_err());
    }

    #[test]
    fn pair_beyond_support_in_one_dimension_is_not_stored() {
        let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 0.6, 0.1, 0.1, 0.05]);
        let spec = KernelSpec::new(KernelFamily::Bohman).unwrap();
        let tau = CutoffVector::new(alloc::vec![0.5, 0.5], 1.0, 0.5).unwrap();
        let r = assemble_sparse_correlation(&x, &spec, &tau).unwrap();
        assert_eq!(r.get(1, 0), 0.0);
        assert!(!r.is_stored(1, 0));
        assert!(r.is_stored(2, 0));
        for i in 0..3 {
            assert_eq!(r.get(i, i), 1.0);
        }
    }
}
