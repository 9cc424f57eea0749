//! Variance-based sensitivity indices from Saltelli sampling: per-output
//! first-order and total indices, the covariance decomposition
//! `Omega = Omega_j + Omega_{j,~j} + Omega_{~j}`, trace-based generalized
//! indices, vector-projection indices and main-effect curves.
//!
//! Everything here works on one response surface at a time (the true
//! function, or the predictive mean of one posterior draw); posterior
//! summaries come from repeating the computation over draws.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg;
use crate::{Error, Result};

/// Minimum Saltelli sample size.
pub const MIN_SALTELLI_ROWS: usize = 100;

/// Total variances below this are treated as zero and the indices reported
/// as missing (`NaN`).
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Sampling distribution `G_j` of one input, in the scaled coordinates the
/// emulator uses.
#[derive(Debug, Clone, PartialEq)]
pub enum InputDistribution {
    Uniform { lower: f64, upper: f64 },
    /// Equiprobable discrete values (e.g. scaled categorical codes).
    Discrete { values: Vec<f64> },
}

impl Default for InputDistribution {
    fn default() -> Self {
        InputDistribution::Uniform { lower: -1.0, upper: 1.0 }
    }
}

impl InputDistribution {
    fn validate(&self) -> Result<()> {
        match self {
            InputDistribution::Uniform { lower, upper } => {
                if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(Error::invalid("uniform input distribution needs lower < upper"));
                }
            }
            InputDistribution::Discrete { values } => {
                if values.is_empty() {
                    return Err(Error::invalid("discrete input distribution has no values"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            InputDistribution::Uniform { lower, upper } => lower + (upper - lower) * rng.random::<f64>(),
            InputDistribution::Discrete { values } => values[rng.random_range(0..values.len())],
        }
    }

    /// `g` evenly spaced points over the range, or the discrete values.
    pub fn grid(&self, g: usize) -> Vec<f64> {
        match self {
            InputDistribution::Uniform { lower, upper } => (0..g)
                .map(|i| lower + (upper - lower) * i as f64 / (g - 1) as f64)
                .collect(),
            InputDistribution::Discrete { values } => {
                let mut v = values.clone();
                v.sort_by(|a, b| a.total_cmp(b));
                v.dedup();
                v
            }
        }
    }
}

/// Base sample `A0` with its companions: `A_j` shares only column `j` with
/// `A0`, and `A_~j` shares every column except `j`. The resampled columns
/// come from one independent matrix, so `A_j` and `A_~j` share nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct SaltelliMatrices {
    pub a0: DMatrix<f64>,
    pub a_j: Vec<DMatrix<f64>>,
    pub a_not_j: Vec<DMatrix<f64>>,
}

impl SaltelliMatrices {
    pub fn s(&self) -> usize {
        self.a0.nrows()
    }

    pub fn p(&self) -> usize {
        self.a0.ncols()
    }

    /// Number of matrices, `1 + 2p`.
    pub fn count(&self) -> usize {
        1 + self.a_j.len() + self.a_not_j.len()
    }
}

pub fn build_saltelli(dists: &[InputDistribution], s: usize, seed: u64) -> Result<SaltelliMatrices> {
    if s < MIN_SALTELLI_ROWS {
        return Err(Error::invalid(format!("Saltelli sample size must be >= {MIN_SALTELLI_ROWS}, got {s}")));
    }
    let p = dists.len();
    if p == 0 {
        return Err(Error::invalid("no inputs"));
    }
    for d in dists {
        d.validate()?;
    }
    // One stream per (matrix, column) so columns are independent of p.
    let column = |which: u64, k: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(which * 1_000_003 + k as u64);
        (0..s).map(|_| dists[k].sample(&mut rng)).collect::<Vec<f64>>()
    };
    let mut a0 = DMatrix::<f64>::zeros(s, p);
    let mut b = DMatrix::<f64>::zeros(s, p);
    for k in 0..p {
        a0.column_mut(k).copy_from_slice(&column(0, k));
        b.column_mut(k).copy_from_slice(&column(1, k));
    }
    let mut a_j = Vec::with_capacity(p);
    let mut a_not_j = Vec::with_capacity(p);
    for j in 0..p {
        let mut aj = b.clone();
        aj.set_column(j, &a0.column(j));
        a_j.push(aj);
        let mut anj = a0.clone();
        anj.set_column(j, &b.column(j));
        a_not_j.push(anj);
    }
    Ok(SaltelliMatrices { a0, a_j, a_not_j })
}

/// Monte Carlo estimator of the conditional-expectation moments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// `E(Y Y'_j) - f0^2` with `f0` from the base sample only.
    Uncentered,
    /// Sample cross-covariance: the `f0^2` term is the product of the two
    /// samples' means.
    #[default]
    Centered,
    /// `s^-1 sum f(A_j) (f(A0) - f(A_~j))` for first order and
    /// `(2s)^-1 sum (f(A0) - f(A_~j))^2` for the expected conditional
    /// variance, which cancel the mean exactly.
    Contrast,
}

/// Which covariance entries to accumulate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BlockMode {
    /// Full `m × m` blocks.
    #[default]
    Full,
    /// Diagonals only; enough for every index, and `O(p m)` memory.
    Diagonal,
}

/// Streaming sums over Saltelli rows for one response surface.
#[derive(Debug, Clone)]
pub struct MomentAccumulator {
    p: usize,
    m: usize,
    mode: BlockMode,
    rows: usize,
    sum_a0: Vec<f64>,
    sum_aj: Vec<Vec<f64>>,
    sum_anj: Vec<Vec<f64>>,
    // Cross-product sums: either m*m (column-major) or m entries.
    a0_a0: Vec<f64>,
    a0_aj: Vec<Vec<f64>>,
    a0_anj: Vec<Vec<f64>>,
    aj_diff: Vec<Vec<f64>>,
    diff_diff: Vec<Vec<f64>>,
}

impl MomentAccumulator {
    pub fn new(p: usize, m: usize, mode: BlockMode) -> Self {
        let w = match mode {
            BlockMode::Full => m * m,
            BlockMode::Diagonal => m,
        };
        MomentAccumulator {
            p,
            m,
            mode,
            rows: 0,
            sum_a0: vec![0.0; m],
            sum_aj: vec![vec![0.0; m]; p],
            sum_anj: vec![vec![0.0; m]; p],
            a0_a0: vec![0.0; w],
            a0_aj: vec![vec![0.0; w]; p],
            a0_anj: vec![vec![0.0; w]; p],
            aj_diff: vec![vec![0.0; w]; p],
            diff_diff: vec![vec![0.0; w]; p],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    fn cross(mode: BlockMode, m: usize, acc: &mut [f64], a: &DMatrix<f64>, b: &DMatrix<f64>) {
        match mode {
            BlockMode::Full => {
                let prod = a.transpose() * b;
                for (t, v) in acc.iter_mut().zip(prod.iter()) {
                    *t += v;
                }
            }
            BlockMode::Diagonal => {
                for k in 0..m {
                    acc[k] += a.column(k).dot(&b.column(k));
                }
            }
        }
    }

    /// Adds a block of rows: `f_a0` is `rows × m`, `f_aj[j]` and `f_anj[j]`
    /// are the outputs at the same rows of `A_j` and `A_~j`.
    pub fn add(&mut self, f_a0: &DMatrix<f64>, f_aj: &[DMatrix<f64>], f_anj: &[DMatrix<f64>]) -> Result<()> {
        let (r, m) = f_a0.shape();
        if m != self.m {
            return Err(Error::dims("output columns", self.m, m));
        }
        if f_aj.len() != self.p || f_anj.len() != self.p {
            return Err(Error::dims("Saltelli companions", self.p, f_aj.len().min(f_anj.len())));
        }
        for f in f_aj.iter().chain(f_anj) {
            if f.shape() != (r, m) {
                return Err(Error::dims("Saltelli block rows", r, f.nrows()));
            }
        }
        let mode = self.mode;
        for k in 0..m {
            self.sum_a0[k] += f_a0.column(k).sum();
        }
        Self::cross(mode, m, &mut self.a0_a0, f_a0, f_a0);
        for j in 0..self.p {
            let diff = f_a0 - &f_anj[j];
            for k in 0..m {
                self.sum_aj[j][k] += f_aj[j].column(k).sum();
                self.sum_anj[j][k] += f_anj[j].column(k).sum();
            }
            Self::cross(mode, m, &mut self.a0_aj[j], f_a0, &f_aj[j]);
            Self::cross(mode, m, &mut self.a0_anj[j], f_a0, &f_anj[j]);
            Self::cross(mode, m, &mut self.aj_diff[j], &f_aj[j], &diff);
            Self::cross(mode, m, &mut self.diff_diff[j], &diff, &diff);
        }
        self.rows += r;
        Ok(())
    }

    fn to_matrix(&self, acc: &[f64]) -> DMatrix<f64> {
        match self.mode {
            BlockMode::Full => DMatrix::from_column_slice(self.m, self.m, acc),
            BlockMode::Diagonal => DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(acc)),
        }
    }

    fn outer(&self, a: &[f64], b: &[f64]) -> DMatrix<f64> {
        let m = self.m;
        match self.mode {
            BlockMode::Full => DMatrix::from_fn(m, m, |i, j| a[i] * b[j]),
            BlockMode::Diagonal => DMatrix::from_fn(m, m, |i, j| if i == j { a[i] * b[i] } else { 0.0 }),
        }
    }

    fn sym(mut a: DMatrix<f64>) -> DMatrix<f64> {
        linalg::symmetrize(&mut a);
        a
    }

    /// Covariance blocks under the chosen estimator.
    pub fn decomposition(&self, estimator: Estimator) -> Result<CovDecomposition> {
        if self.rows == 0 {
            return Err(Error::invalid("no Saltelli rows accumulated"));
        }
        let s = self.rows as f64;
        let mean = |v: &[f64]| v.iter().map(|x| x / s).collect::<Vec<f64>>();
        let f0 = mean(&self.sum_a0);
        let omega = Self::sym(self.to_matrix(&self.a0_a0) / s - self.outer(&f0, &f0));
        let mut omega_j = Vec::with_capacity(self.p);
        let mut omega_not_j = Vec::with_capacity(self.p);
        let mut omega_interaction = Vec::with_capacity(self.p);
        for j in 0..self.p {
            let (oj, onj) = match estimator {
                Estimator::Uncentered => (
                    Self::sym(self.to_matrix(&self.a0_aj[j]) / s - self.outer(&f0, &f0)),
                    Self::sym(self.to_matrix(&self.a0_anj[j]) / s - self.outer(&f0, &f0)),
                ),
                Estimator::Centered => {
                    let fj = mean(&self.sum_aj[j]);
                    let fnj = mean(&self.sum_anj[j]);
                    (
                        Self::sym(self.to_matrix(&self.a0_aj[j]) / s - self.outer(&f0, &fj)),
                        Self::sym(self.to_matrix(&self.a0_anj[j]) / s - self.outer(&f0, &fnj)),
                    )
                }
                Estimator::Contrast => {
                    let oj = Self::sym(self.to_matrix(&self.aj_diff[j]) / s);
                    let total = self.to_matrix(&self.diff_diff[j]) / (2.0 * s);
                    (oj, Self::sym(&omega - total))
                }
            };
            omega_interaction.push(&omega - &oj - &onj);
            omega_j.push(oj);
            omega_not_j.push(onj);
        }
        Ok(CovDecomposition {
            omega,
            omega_j,
            omega_not_j,
            omega_interaction,
            diagonal_only: self.mode == BlockMode::Diagonal,
        })
    }
}

/// `Omega = Omega_j + Omega_{j,~j} + Omega_{~j}` for every input `j`. In
/// diagonal mode the off-diagonal entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct CovDecomposition {
    pub omega: DMatrix<f64>,
    pub omega_j: Vec<DMatrix<f64>>,
    pub omega_not_j: Vec<DMatrix<f64>>,
    pub omega_interaction: Vec<DMatrix<f64>>,
    pub diagonal_only: bool,
}

impl CovDecomposition {
    pub fn p(&self) -> usize {
        self.omega_j.len()
    }

    pub fn m(&self) -> usize {
        self.omega.nrows()
    }

    /// `|Omega - (Omega_j + Omega_{j,~j} + Omega_{~j})|_F / |Omega|_F`.
    pub fn residual(&self, j: usize) -> f64 {
        let sum = &self.omega_j[j] + &self.omega_interaction[j] + &self.omega_not_j[j];
        (&self.omega - sum).norm() / self.omega.norm()
    }
}

/// Evaluates `f` on every Saltelli matrix in row chunks of at most `chunk`
/// and returns the accumulated moments.
pub fn accumulate<F>(mats: &SaltelliMatrices, m: usize, mode: BlockMode, chunk: usize, mut f: F) -> Result<MomentAccumulator>
where
    F: FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    let (s, p) = (mats.s(), mats.p());
    let chunk = chunk.max(1);
    let mut acc = MomentAccumulator::new(p, m, mode);
    let mut start = 0;
    while start < s {
        let len = chunk.min(s - start);
        let eval = |a: &DMatrix<f64>, f: &mut F| -> Result<DMatrix<f64>> {
            let out = f(&a.rows(start, len).into_owned())?;
            if out.shape() != (len, m) {
                return Err(Error::dims("response rows", len, out.nrows()));
            }
            Ok(out)
        };
        let f_a0 = eval(&mats.a0, &mut f)?;
        let f_aj = mats.a_j.iter().map(|a| eval(a, &mut f)).collect::<Result<Vec<_>>>()?;
        let f_anj = mats.a_not_j.iter().map(|a| eval(a, &mut f)).collect::<Result<Vec<_>>>()?;
        acc.add(&f_a0, &f_aj, &f_anj)?;
        start += len;
    }
    Ok(acc)
}

/// Per-output first-order and total indices (`p × m`), `NaN` where the
/// output's variance is below [`VARIANCE_FLOOR`].
pub fn univariate_indices(decomp: &CovDecomposition) -> (DMatrix<f64>, DMatrix<f64>) {
    let (p, m) = (decomp.p(), decomp.m());
    let mut first = DMatrix::<f64>::from_element(p, m, f64::NAN);
    let mut total = DMatrix::<f64>::from_element(p, m, f64::NAN);
    for k in 0..m {
        let v = decomp.omega[(k, k)];
        if !(v > VARIANCE_FLOOR) {
            continue;
        }
        for j in 0..p {
            first[(j, k)] = decomp.omega_j[j][(k, k)] / v;
            total[(j, k)] = (decomp.omega_j[j][(k, k)] + decomp.omega_interaction[j][(k, k)]) / v;
        }
    }
    (first, total)
}

/// Trace-based generalized indices `S_j = tr(Omega_j)/tr(Omega)` and
/// `S_j^T = (tr(Omega_j) + tr(Omega_{j,~j}))/tr(Omega)`.
pub fn generalized_indices(decomp: &CovDecomposition) -> Result<(Vec<f64>, Vec<f64>)> {
    let tr = decomp.omega.trace();
    if !(tr > VARIANCE_FLOOR) {
        return Err(Error::Degenerate("total output variance trace is zero".into()));
    }
    let first = decomp.omega_j.iter().map(|o| o.trace() / tr).collect();
    let total = decomp
        .omega_j
        .iter()
        .zip(&decomp.omega_interaction)
        .map(|(a, b)| (a.trace() + b.trace()) / tr)
        .collect();
    Ok((first, total))
}

/// Vector-projection indices of every input.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionIndices {
    pub first: Vec<f64>,
    pub interaction: Vec<f64>,
    pub total: Vec<f64>,
    /// Cosine of the angle between `v_j` and `v` in the metric of `R`.
    pub cos_theta: Vec<f64>,
}

/// Checks that `r` is a correlation matrix: symmetric, unit diagonal, PSD.
pub fn validate_correlation(r: &DMatrix<f64>) -> Result<()> {
    let m = r.nrows();
    if r.ncols() != m {
        return Err(Error::dims("correlation matrix", m, r.ncols()));
    }
    if linalg::symmetry_defect(r) > 1e-10 {
        return Err(Error::invalid("output correlation matrix is not symmetric"));
    }
    if (0..m).any(|i| (r[(i, i)] - 1.0).abs() > 1e-10) {
        return Err(Error::invalid("output correlation matrix needs a unit diagonal"));
    }
    if linalg::min_eigenvalue(r) < -1e-10 {
        return Err(Error::invalid("output correlation matrix is not positive semidefinite"));
    }
    Ok(())
}

/// `P_j = <v_j, v>_R / <v, v>_R` on the per-output variance vectors (block
/// diagonals) with `<a, b>_R = a^T R b`; `P_j^T = P_j + P_{j,~j}`.
pub fn projection_indices(decomp: &CovDecomposition, r: &DMatrix<f64>) -> Result<ProjectionIndices> {
    let m = decomp.m();
    if r.nrows() != m {
        return Err(Error::dims("output correlation matrix", m, r.nrows()));
    }
    validate_correlation(r)?;
    let v = decomp.omega.diagonal();
    let rv = r * &v;
    let vv = v.dot(&rv);
    if !(vv > VARIANCE_FLOOR * VARIANCE_FLOOR) {
        return Err(Error::Degenerate("total variance vector has zero norm".into()));
    }
    let mut out = ProjectionIndices {
        first: Vec::new(),
        interaction: Vec::new(),
        total: Vec::new(),
        cos_theta: Vec::new(),
    };
    for j in 0..decomp.p() {
        let vj = decomp.omega_j[j].diagonal();
        let vi = decomp.omega_interaction[j].diagonal();
        let pj = vj.dot(&rv) / vv;
        let pi = vi.dot(&rv) / vv;
        let njj = vj.dot(&(r * &vj));
        let cos = if njj > 0.0 {
            vj.dot(&rv) / libm::sqrt(njj * vv)
        } else {
            0.0
        };
        out.first.push(pj);
        out.interaction.push(pi);
        out.total.push(pj + pi);
        out.cos_theta.push(cos);
    }
    Ok(out)
}

/// Pearson correlation matrix of the columns; if it is not PSD the negative
/// eigenvalues are floored at zero, the unit diagonal restored, and the flag
/// set.
pub fn output_correlation_matrix(values: &DMatrix<f64>, names: &[alloc::string::String]) -> Result<(DMatrix<f64>, bool)> {
    let (n, m) = values.shape();
    if n < 3 {
        return Err(Error::invalid("output correlation needs at least three rows"));
    }
    let (means, sds) = crate::design::column_moments(values);
    for k in 0..m {
        if !(sds[k] > 1e-12 * means[k].abs().max(1.0)) {
            let name = names.get(k).cloned().unwrap_or_else(|| format!("y{}", k + 1));
            return Err(Error::ConstantColumn(name));
        }
    }
    let z = DMatrix::from_fn(n, m, |i, k| (values[(i, k)] - means[k]) / sds[k]);
    let mut r = z.transpose() * &z / (n as f64 - 1.0);
    linalg::symmetrize(&mut r);
    for k in 0..m {
        r[(k, k)] = 1.0;
    }
    let eig = r.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&e| e >= 0.0) {
        return Ok((r, false));
    }
    let floored = eig.eigenvalues.map(|e| e.max(0.0));
    let mut fixed = &eig.eigenvectors * DMatrix::from_diagonal(&floored) * eig.eigenvectors.transpose();
    let d: Vec<f64> = (0..m).map(|k| libm::sqrt(fixed[(k, k)].max(1e-300))).collect();
    for i in 0..m {
        for k in 0..m {
            fixed[(i, k)] /= d[i] * d[k];
        }
    }
    linalg::symmetrize(&mut fixed);
    for k in 0..m {
        fixed[(k, k)] = 1.0;
    }
    Ok((fixed, true))
}

/// All indices for one response surface (one posterior draw).
#[derive(Debug, Clone, PartialEq)]
pub struct DrawIndices {
    /// `p × m` per-output indices.
    pub first_by_output: DMatrix<f64>,
    pub total_by_output: DMatrix<f64>,
    /// Trace-based generalized indices.
    pub first: Vec<f64>,
    pub total: Vec<f64>,
    pub projection: ProjectionIndices,
}

pub fn draw_indices(decomp: &CovDecomposition, r: &DMatrix<f64>) -> Result<DrawIndices> {
    let (first_by_output, total_by_output) = univariate_indices(decomp);
    let (first, total) = generalized_indices(decomp)?;
    let projection = projection_indices(decomp, r)?;
    Ok(DrawIndices {
        first_by_output,
        total_by_output,
        first,
        total,
        projection,
    })
}

/// Posterior mean, sd and central 95% interval of a scalar index;
/// `NaN` draws are skipped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
    pub draws: usize,
}

/// Type-7 sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], prob: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn summarize(values: impl IntoIterator<Item = f64>) -> Summary {
    let mut v: Vec<f64> = values.into_iter().filter(|x| !x.is_nan()).collect();
    let n = v.len();
    if n == 0 {
        return Summary {
            mean: f64::NAN,
            sd: f64::NAN,
            q025: f64::NAN,
            q975: f64::NAN,
            draws: 0,
        };
    }
    let mean = v.iter().sum::<f64>() / n as f64;
    let sd = if n > 1 {
        libm::sqrt(v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0))
    } else {
        0.0
    };
    v.sort_by(|a, b| a.total_cmp(b));
    Summary {
        mean,
        sd,
        q025: quantile_sorted(&v, 0.025),
        q975: quantile_sorted(&v, 0.975),
        draws: n,
    }
}

/// Posterior summaries of every index over draws.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexPosterior {
    pub per_draw: Vec<DrawIndices>,
    pub first: Vec<Summary>,
    pub total: Vec<Summary>,
    pub projection: Vec<Summary>,
    pub projection_interaction: Vec<Summary>,
    pub projection_total: Vec<Summary>,
    /// `[j][k]` summaries per input and output.
    pub first_by_output: Vec<Vec<Summary>>,
    pub total_by_output: Vec<Vec<Summary>>,
}

pub fn summarize_draws(per_draw: Vec<DrawIndices>) -> Result<IndexPosterior> {
    let first_draw = per_draw.first().ok_or_else(|| Error::invalid("no posterior draws"))?;
    let (p, m) = first_draw.first_by_output.shape();
    let col = |f: &dyn Fn(&DrawIndices) -> f64| summarize(per_draw.iter().map(f));
    let mut out = IndexPosterior {
        first: Vec::new(),
        total: Vec::new(),
        projection: Vec::new(),
        projection_interaction: Vec::new(),
        projection_total: Vec::new(),
        first_by_output: Vec::new(),
        total_by_output: Vec::new(),
        per_draw: Vec::new(),
    };
    for j in 0..p {
        out.first.push(col(&|d| d.first[j]));
        out.total.push(col(&|d| d.total[j]));
        out.projection.push(col(&|d| d.projection.first[j]));
        out.projection_interaction.push(col(&|d| d.projection.interaction[j]));
        out.projection_total.push(col(&|d| d.projection.total[j]));
        out.first_by_output.push((0..m).map(|k| col(&|d| d.first_by_output[(j, k)])).collect());
        out.total_by_output.push((0..m).map(|k| col(&|d| d.total_by_output[(j, k)])).collect());
    }
    out.per_draw = per_draw;
    Ok(out)
}

/// Common random numbers for main-effect curves: an `s × p` base sample.
pub fn main_effect_base(dists: &[InputDistribution], s: usize, seed: u64) -> Result<DMatrix<f64>> {
    if s == 0 || dists.is_empty() {
        return Err(Error::invalid("main effects need s >= 1 and at least one input"));
    }
    for d in dists {
        d.validate()?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut base = DMatrix::<f64>::zeros(s, dists.len());
    for k in 0..dists.len() {
        for i in 0..s {
            base[(i, k)] = dists[k].sample(&mut rng);
        }
    }
    Ok(base)
}

/// `E(Y | x_j = g) - E(Y)` on a grid for one response surface (`g × m`).
/// `E(Y)` is the mean over `base`, and every grid value reuses `base` for
/// the other inputs.
pub fn main_effect<F>(base: &DMatrix<f64>, j: usize, grid: &[f64], mut f: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
{
    if j >= base.ncols() {
        return Err(Error::invalid("main effect input index out of range"));
    }
    if grid.len() < 2 {
        return Err(Error::invalid("main effects need a grid of at least two points"));
    }
    let s = base.nrows() as f64;
    let overall = f(base)?;
    let m = overall.ncols();
    let ey: Vec<f64> = (0..m).map(|k| overall.column(k).sum() / s).collect();
    let mut out = DMatrix::<f64>::zeros(grid.len(), m);
    let mut x = base.clone();
    for (g, &v) in grid.iter().enumerate() {
        x.column_mut(j).fill(v);
        let y = f(&x)?;
        for k in 0..m {
            out[(g, k)] = y.column(k).sum() / s - ey[k];
        }
    }
    Ok(out)
}

/// Main-effect curve of one input with posterior mean and central 95% band.
#[derive(Debug, Clone, PartialEq)]
pub struct MainEffectCurve {
    pub input: usize,
    pub grid: Vec<f64>,
    /// `g × m` matrices.
    pub mean: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub upper: DMatrix<f64>,
}

pub fn summarize_main_effect(input: usize, grid: Vec<f64>, per_draw: &[DMatrix<f64>]) -> Result<MainEffectCurve> {
    let first = per_draw.first().ok_or_else(|| Error::invalid("no posterior draws"))?;
    let (g, m) = first.shape();
    let mut mean = DMatrix::<f64>::zeros(g, m);
    let mut lower = mean.clone();
    let mut upper = mean.clone();
    for a in 0..g {
        for k in 0..m {
            let s = summarize(per_draw.iter().map(|d| d[(a, k)]));
            mean[(a, k)] = s.mean;
            lower[(a, k)] = s.q025;
            upper[(a, k)] = s.q975;
        }
    }
    Ok(MainEffectCurve {
        input,
        grid,
        mean,
        lower,
        upper,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn uniform(p: usize) -> Vec<InputDistribution> {
        vec![InputDistribution::default(); p]
    }

    #[test]
    fn saltelli_layout() {
        let mats = build_saltelli(&uniform(3), 200, 5).unwrap();
        assert_eq!(mats.count(), 7);
        for j in 0..3 {
            assert_eq!(mats.a_j[j].column(j), mats.a0.column(j));
            for k in 0..3 {
                if k == j {
                    assert_ne!(mats.a_not_j[j].column(k), mats.a0.column(k));
                } else {
                    assert_eq!(mats.a_not_j[j].column(k), mats.a0.column(k));
                    assert_ne!(mats.a_j[j].column(k), mats.a0.column(k));
                }
            }
        }
        assert!(mats.a0.iter().all(|v| (-1.0..1.0).contains(v)));
        assert!(build_saltelli(&uniform(3), 99, 5).is_err());
    }

    #[test]
    fn additive_function_all_estimators() {
        let mats = build_saltelli(&uniform(3), 5_000, 1).unwrap();
        for est in [Estimator::Uncentered, Estimator::Centered, Estimator::Contrast] {
            let acc = accumulate(&mats, 1, BlockMode::Full, 1_000, |x| {
                Ok(DMatrix::from_fn(x.nrows(), 1, |i, _| x[(i, 0)] + x[(i, 1)]))
            })
            .unwrap();
            let d = acc.decomposition(est).unwrap();
            let (s, t) = generalized_indices(&d).unwrap();
            assert!((s[0] - 0.5).abs() < 0.03 && (s[1] - 0.5).abs() < 0.03, "{est:?} {s:?}");
            assert!(s[2].abs() < 0.03 && t[2].abs() < 0.03, "{est:?}");
            assert!((t[0] - s[0]).abs() < 0.03);
        }
    }

    #[test]
    fn projection_reduces_to_trace_index() {
        let mats = build_saltelli(&uniform(2), 500, 2).unwrap();
        let acc = accumulate(&mats, 3, BlockMode::Full, 500, |x| {
            Ok(DMatrix::from_fn(x.nrows(), 3, |i, k| x[(i, 0)] * (k as f64 + 1.0) + x[(i, 1)] * x[(i, 0)]))
        })
        .unwrap();
        let mut d = acc.decomposition(Estimator::Centered).unwrap();
        // Force equal total variances so the reduction is exact.
        for k in 0..3 {
            d.omega[(k, k)] = 2.0;
        }
        let (s, _) = generalized_indices(&d).unwrap();
        let pr = projection_indices(&d, &DMatrix::identity(3, 3)).unwrap();
        for j in 0..2 {
            assert_relative_eq!(pr.first[j], s[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn correlation_of_duplicates() {
        let v = DMatrix::from_fn(10, 2, |i, _| (i as f64).sin());
        let (r, floored) = output_correlation_matrix(&v, &[]).unwrap();
        assert_relative_eq!(r[(0, 1)], 1.0, epsilon = 1e-12);
        assert!(!floored || r[(0, 1)] > 0.999);
    }

    #[test]
    fn quantiles() {
        let s = summarize([1.0, 2.0, 3.0, 4.0, f64::NAN]);
        assert_eq!(s.draws, 4);
        assert_relative_eq!(s.mean, 2.5);
        assert_relative_eq!(s.q025, 1.075);
    }

    #[test]
    fn main_effect_of_square() {
        let base = main_effect_base(&uniform(2), 20_000, 3).unwrap();
        let grid = InputDistribution::default().grid(5);
        let me = main_effect(&base, 0, &grid, |x| Ok(DMatrix::from_fn(x.nrows(), 1, |i, _| x[(i, 0)] * x[(i, 0)]))).unwrap();
        for (g, &v) in grid.iter().enumerate() {
            assert!((me[(g, 0)] - (v * v - 1.0 / 3.0)).abs() < 0.01);
        }
    }
}
