//! Space-filling designs for mixed continuous/categorical inputs and the
//! input/output normalizations applied before fitting.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Default row cap for the full categorical cross.
pub const DEFAULT_CROSS_CAP: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub enum VariableKind {
    Continuous { lower: f64, upper: f64 },
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSpec {
    pub name: String,
    pub kind: VariableKind,
}

impl VariableSpec {
    pub fn continuous(name: impl Into<String>, lower: f64, upper: f64) -> Self {
        VariableSpec {
            name: name.into(),
            kind: VariableKind::Continuous { lower, upper },
        }
    }

    pub fn categorical<S: Into<String>>(name: impl Into<String>, levels: impl IntoIterator<Item = S>) -> Self {
        VariableSpec {
            name: name.into(),
            kind: VariableKind::Categorical {
                levels: levels.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn is_continuous(&self) -> bool {
        matches!(self.kind, VariableKind::Continuous { .. })
    }

    /// Checks the spec itself. Single-level categoricals pass here and are
    /// dropped by [`mixed_design`].
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            VariableKind::Continuous { lower, upper } => {
                if !(lower.is_finite() && upper.is_finite()) {
                    return Err(Error::invalid(format!("variable `{}` has a non-finite range", self.name)));
                }
                if !(lower < upper) {
                    return Err(Error::invalid(format!(
                        "variable `{}` has an empty range [{lower}, {upper}]",
                        self.name
                    )));
                }
            }
            VariableKind::Categorical { levels } => {
                if levels.is_empty() {
                    return Err(Error::invalid(format!("categorical variable `{}` has no levels", self.name)));
                }
                for (i, a) in levels.iter().enumerate() {
                    if levels[..i].contains(a) {
                        return Err(Error::invalid(format!(
                            "categorical variable `{}` repeats level `{a}`",
                            self.name
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Affine map of a raw value (or level code) onto `[-1, 1]`.
    pub fn scale(&self, x: f64) -> f64 {
        match &self.kind {
            VariableKind::Continuous { lower, upper } => 2.0 * (x - lower) / (upper - lower) - 1.0,
            VariableKind::Categorical { levels } => {
                if levels.len() < 2 {
                    0.0
                } else {
                    2.0 * x / (levels.len() - 1) as f64 - 1.0
                }
            }
        }
    }

    /// Inverse of [`VariableSpec::scale`]; categorical codes are rounded.
    pub fn unscale(&self, z: f64) -> f64 {
        match &self.kind {
            VariableKind::Continuous { lower, upper } => lower + (z + 1.0) * 0.5 * (upper - lower),
            VariableKind::Categorical { levels } => {
                if levels.len() < 2 {
                    0.0
                } else {
                    libm::round((z + 1.0) * 0.5 * (levels.len() - 1) as f64)
                }
            }
        }
    }
}

/// How a design was produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DesignInfo {
    /// Rows of the continuous Latin hypercube.
    pub base_rows: usize,
    /// True when categoricals were crossed in full, false when assigned at
    /// random; `None` when there were no categoricals.
    pub full_cross: Option<bool>,
    /// Minimum pairwise distance (unit-cube coordinates) of the first LHS
    /// draw and of the returned design.
    pub initial_min_distance: Option<f64>,
    pub final_min_distance: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub values: DMatrix<f64>,
    pub specs: Vec<VariableSpec>,
    pub scaled: bool,
    pub info: DesignInfo,
}

impl DesignMatrix {
    /// Wraps raw (unscaled) values, checking codes and shapes.
    pub fn new(values: DMatrix<f64>, specs: Vec<VariableSpec>) -> Result<Self> {
        Self::with_scaling(values, specs, false)
    }

    pub fn with_scaling(values: DMatrix<f64>, specs: Vec<VariableSpec>, scaled: bool) -> Result<Self> {
        if values.ncols() != specs.len() {
            return Err(Error::dims("design columns", specs.len(), values.ncols()));
        }
        for (k, spec) in specs.iter().enumerate() {
            spec.validate()?;
            for i in 0..values.nrows() {
                let v = values[(i, k)];
                if !v.is_finite() {
                    return Err(Error::invalid(format!("non-finite value in column `{}`", spec.name)));
                }
                if let VariableKind::Categorical { levels } = &spec.kind {
                    let code = if scaled { spec.unscale(v) } else { v };
                    if code != libm::round(code) || code < 0.0 || code >= levels.len() as f64 {
                        return Err(Error::invalid(format!(
                            "column `{}` holds {v}, which is not a level code",
                            spec.name
                        )));
                    }
                }
            }
        }
        Ok(DesignMatrix {
            values,
            specs,
            scaled,
            info: DesignInfo {
                base_rows: 0,
                ..DesignInfo::default()
            },
        })
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn p(&self) -> usize {
        self.values.ncols()
    }

    pub fn names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    /// Index of the first pair of identical rows, if any.
    pub fn duplicate_row(&self) -> Option<(usize, usize)> {
        let n = self.n();
        let mut order: Vec<usize> = (0..n).collect();
        let row_cmp = |a: usize, b: usize| {
            for k in 0..self.p() {
                let c = self.values[(a, k)].total_cmp(&self.values[(b, k)]);
                if c != core::cmp::Ordering::Equal {
                    return c;
                }
            }
            core::cmp::Ordering::Equal
        };
        order.sort_by(|&a, &b| row_cmp(a, b));
        order
            .windows(2)
            .find(|w| row_cmp(w[0], w[1]) == core::cmp::Ordering::Equal)
            .map(|w| (w[0].min(w[1]), w[0].max(w[1])))
    }
}

/// Settings of the maximin Latin hypercube optimizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LhsOptions {
    pub optimize: bool,
    /// Independent hill-climbing runs; the first starts from the initial draw.
    pub restarts: usize,
    /// Candidate swaps per run.
    pub iterations: usize,
}

impl Default for LhsOptions {
    fn default() -> Self {
        LhsOptions {
            optimize: false,
            restarts: 4,
            iterations: 2_000,
        }
    }
}

impl LhsOptions {
    pub fn optimized() -> Self {
        LhsOptions {
            optimize: true,
            ..Self::default()
        }
    }
}

/// Unit-cube LHS: column `k` holds `(perm_k(i) + u_ik) / n`.
fn unit_lhs(n: usize, p: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut u = vec![0.0; n * p];
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..p {
        perm.shuffle(rng);
        for i in 0..n {
            let jitter: f64 = rng.random();
            u[i * p + k] = (perm[i] as f64 + jitter) / n as f64;
        }
    }
    u
}

/// Nearest-neighbour bookkeeping for maximin hill climbing on row-major
/// unit-cube points.
struct Maximin<'a> {
    n: usize,
    p: usize,
    u: &'a mut [f64],
    dist: Vec<f64>,
    nn_dist: Vec<f64>,
    nn_idx: Vec<usize>,
}

impl<'a> Maximin<'a> {
    fn new(u: &'a mut [f64], n: usize, p: usize) -> Self {
        let mut m = Maximin {
            n,
            p,
            u,
            dist: vec![0.0; n * n],
            nn_dist: vec![f64::INFINITY; n],
            nn_idx: vec![0; n],
        };
        for i in 0..n {
            for j in (i + 1)..n {
                let d = m.pair(i, j);
                m.dist[i * n + j] = d;
                m.dist[j * n + i] = d;
            }
        }
        for i in 0..n {
            m.refresh_nn(i);
        }
        m
    }

    fn pair(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (&self.u[i * self.p..(i + 1) * self.p], &self.u[j * self.p..(j + 1) * self.p]);
        let mut s = 0.0;
        for k in 0..self.p {
            let d = a[k] - b[k];
            s += d * d;
        }
        libm::sqrt(s)
    }

    fn refresh_nn(&mut self, i: usize) {
        let row = &self.dist[i * self.n..(i + 1) * self.n];
        let mut best = f64::INFINITY;
        let mut idx = 0;
        for (j, &d) in row.iter().enumerate() {
            if j != i && d < best {
                best = d;
                idx = j;
            }
        }
        self.nn_dist[i] = best;
        self.nn_idx[i] = idx;
    }

    /// (minimum distance, mean nearest-neighbour distance, arg-min row)
    fn score(&self) -> (f64, f64, usize) {
        let mut best = f64::INFINITY;
        let mut arg = 0;
        let mut sum = 0.0;
        for (i, &d) in self.nn_dist.iter().enumerate() {
            sum += d;
            if d < best {
                best = d;
                arg = i;
            }
        }
        (best, sum / self.n as f64, arg)
    }

    fn swap(&mut self, i: usize, j: usize, k: usize) {
        self.u.swap(i * self.p + k, j * self.p + k);
        let n = self.n;
        for &r in &[i, j] {
            for c in 0..n {
                if c != r {
                    let d = self.pair(r, c);
                    self.dist[r * n + c] = d;
                    self.dist[c * n + r] = d;
                }
            }
        }
        for r in 0..n {
            if r == i || r == j {
                self.refresh_nn(r);
                continue;
            }
            let mut changed = false;
            for &c in &[i, j] {
                let d = self.dist[r * n + c];
                if d < self.nn_dist[r] {
                    self.nn_dist[r] = d;
                    self.nn_idx[r] = c;
                } else if self.nn_idx[r] == c && d > self.nn_dist[r] {
                    changed = true;
                }
            }
            if changed {
                self.refresh_nn(r);
            }
        }
    }

    fn climb(&mut self, iterations: usize, rng: &mut ChaCha8Rng) {
        if self.n < 3 {
            return;
        }
        let mut current = self.score();
        for _ in 0..iterations {
            let i = if rng.random::<bool>() {
                current.2
            } else {
                self.nn_idx[current.2]
            };
            let mut j = rng.random_range(0..self.n - 1);
            if j >= i {
                j += 1;
            }
            let k = rng.random_range(0..self.p);
            self.swap(i, j, k);
            let next = self.score();
            if next.0 > current.0 || (next.0 == current.0 && next.1 >= current.1) {
                current = next;
            } else {
                self.swap(i, j, k);
                // Recomputed distances are bitwise identical after the undo.
                current = self.score();
            }
        }
    }
}

fn min_distance(u: &[f64], n: usize, p: usize) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut s = 0.0;
            for k in 0..p {
                let d = u[i * p + k] - u[j * p + k];
                s += d * d;
            }
            best = best.min(libm::sqrt(s));
        }
    }
    best
}

/// Latin hypercube sample of the continuous variables in `specs`, in raw
/// units. Categorical variables are skipped here and added by
/// [`mixed_design`].
///
/// With `options.optimize`, random-restart hill climbing swaps entries
/// within a column to increase the minimum pairwise distance (ties broken
/// by the mean nearest-neighbour distance). The first run starts from the
/// initial draw, so the result is never worse than it.
pub fn lhs_sample(specs: &[VariableSpec], n: usize, options: LhsOptions, seed: u64) -> Result<DesignMatrix> {
    if n < 2 {
        return Err(Error::invalid("a Latin hypercube needs n >= 2"));
    }
    if specs.is_empty() {
        return Err(Error::invalid("no variables specified"));
    }
    for s in specs {
        s.validate()?;
    }
    let cont: Vec<VariableSpec> = specs.iter().filter(|s| s.is_continuous()).cloned().collect();
    if cont.is_empty() {
        return Err(Error::invalid("a Latin hypercube needs at least one continuous variable"));
    }
    let p = cont.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = unit_lhs(n, p, &mut rng);
    let initial = min_distance(&best, n, p);
    let mut final_min = initial;

    if options.optimize {
        let mut best_score = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut winner = best.clone();
        for restart in 0..options.restarts.max(1) {
            let mut u = if restart == 0 { best.clone() } else { unit_lhs(n, p, &mut rng) };
            let score = {
                let mut m = Maximin::new(&mut u, n, p);
                m.climb(options.iterations, &mut rng);
                let s = m.score();
                (s.0, s.1)
            };
            if score.0 > best_score.0 || (score.0 == best_score.0 && score.1 > best_score.1) {
                best_score = score;
                winner = u;
            }
        }
        best = winner;
        final_min = best_score.0;
    }

    let mut values = DMatrix::<f64>::zeros(n, p);
    for (k, spec) in cont.iter().enumerate() {
        if let VariableKind::Continuous { lower, upper } = spec.kind {
            for i in 0..n {
                values[(i, k)] = lower + best[i * p + k] * (upper - lower);
            }
        }
    }
    Ok(DesignMatrix {
        values,
        specs: cont,
        scaled: false,
        info: DesignInfo {
            base_rows: n,
            full_cross: None,
            initial_min_distance: Some(initial),
            final_min_distance: Some(final_min),
            warnings: Vec::new(),
        },
    })
}

/// Crosses a continuous LHS with the categorical variables of `specs`.
///
/// The full Cartesian product of level combinations is used when it yields at
/// most `cap` rows; otherwise every continuous row receives one combination,
/// with each variable's levels assigned in a shuffled balanced pattern
/// (every level used `floor(n/L)` or `ceil(n/L)` times). Single-level
/// categoricals are dropped with a warning. Columns follow the order of
/// `specs`.
pub fn mixed_design(continuous: &DesignMatrix, specs: &[VariableSpec], cap: usize, seed: u64) -> Result<DesignMatrix> {
    for s in specs {
        s.validate()?;
    }
    let cont_names: Vec<&String> = specs.iter().filter(|s| s.is_continuous()).map(|s| &s.name).collect();
    if cont_names.len() != continuous.p()
        || continuous.specs.iter().zip(&cont_names).any(|(a, b)| &a.name != *b)
    {
        return Err(Error::invalid(
            "continuous design columns do not match the continuous variables of the spec list",
        ));
    }
    if specs.iter().all(|s| s.is_continuous()) {
        return Ok(continuous.clone());
    }

    let mut info = continuous.info.clone();
    let mut kept: Vec<VariableSpec> = Vec::new();
    let mut cat_sizes: Vec<usize> = Vec::new();
    for s in specs {
        match &s.kind {
            VariableKind::Continuous { .. } => kept.push(s.clone()),
            VariableKind::Categorical { levels } => {
                if levels.len() == 1 {
                    info.warnings.push(format!(
                        "categorical variable `{}` has a single level and was dropped",
                        s.name
                    ));
                } else {
                    cat_sizes.push(levels.len());
                    kept.push(s.clone());
                }
            }
        }
    }
    let n = continuous.n();
    let combos = cat_sizes.iter().try_fold(1usize, |acc, &l| acc.checked_mul(l));
    let full = matches!(combos.and_then(|c| c.checked_mul(n)), Some(rows) if rows <= cap);
    let rows = if full { n * combos.unwrap_or(1) } else { n };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Level codes per row for each kept categorical.
    let mut codes: Vec<Vec<usize>> = Vec::with_capacity(cat_sizes.len());
    if full {
        let total = combos.unwrap_or(1);
        let mut stride = total;
        for &l in &cat_sizes {
            stride /= l;
            let mut col = Vec::with_capacity(rows);
            for _ in 0..n {
                for c in 0..total {
                    col.push((c / stride) % l);
                }
            }
            codes.push(col);
        }
    } else {
        for &l in &cat_sizes {
            let mut col: Vec<usize> = (0..n).map(|i| i % l).collect();
            col.shuffle(&mut rng);
            codes.push(col);
        }
    }
    let per_row = if full { combos.unwrap_or(1) } else { 1 };

    let mut values = DMatrix::<f64>::zeros(rows, kept.len());
    let (mut ci, mut ki) = (0, 0);
    for (col, s) in kept.iter().enumerate() {
        if s.is_continuous() {
            for r in 0..rows {
                values[(r, col)] = continuous.values[(r / per_row, ci)];
            }
            ci += 1;
        } else {
            for r in 0..rows {
                values[(r, col)] = codes[ki][r] as f64;
            }
            ki += 1;
        }
    }
    info.full_cross = Some(full);
    Ok(DesignMatrix {
        values,
        specs: kept,
        scaled: false,
        info,
    })
}

/// Maps every column onto `[-1, 1]` using the declared ranges (level codes
/// `c` of an `L`-level categorical become `2c/(L-1) - 1`).
pub fn scale_inputs(design: &DesignMatrix) -> Result<DesignMatrix> {
    if design.scaled {
        return Err(Error::invalid("design is already scaled"));
    }
    for s in &design.specs {
        s.validate()?;
    }
    let mut out = design.clone();
    for (k, s) in design.specs.iter().enumerate() {
        for i in 0..design.n() {
            out.values[(i, k)] = s.scale(design.values[(i, k)]);
        }
    }
    out.scaled = true;
    Ok(out)
}

/// Inverse of [`scale_inputs`].
pub fn unscale_inputs(design: &DesignMatrix) -> Result<DesignMatrix> {
    if !design.scaled {
        return Err(Error::invalid("design is not scaled"));
    }
    let mut out = design.clone();
    for (k, s) in design.specs.iter().enumerate() {
        for i in 0..design.n() {
            out.values[(i, k)] = s.unscale(design.values[(i, k)]);
        }
    }
    out.scaled = false;
    Ok(out)
}

/// Simulator outputs with per-column standardization metadata. When
/// `standardized` is set, raw values are `values * sds + means`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputMatrix {
    pub values: DMatrix<f64>,
    pub names: Vec<String>,
    pub column_means: Vec<f64>,
    pub column_sds: Vec<f64>,
    pub standardized: bool,
}

impl OutputMatrix {
    pub fn new(values: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::dims("output names", values.ncols(), names.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("outputs contain non-finite values"));
        }
        let m = values.ncols();
        Ok(OutputMatrix {
            values,
            names,
            column_means: vec![0.0; m],
            column_sds: vec![1.0; m],
            standardized: false,
        })
    }

    /// Unnamed outputs `y1..ym`.
    pub fn unnamed(values: DMatrix<f64>) -> Result<Self> {
        let names = (1..=values.ncols()).map(|j| format!("y{j}")).collect();
        Self::new(values, names)
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn m(&self) -> usize {
        self.values.ncols()
    }

    /// Raw-scale version of standardized values with the same column layout.
    pub fn destandardize_values(&self, z: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if z.ncols() != self.m() {
            return Err(Error::dims("output columns", self.m(), z.ncols()));
        }
        let mut y = z.clone();
        for j in 0..self.m() {
            for i in 0..z.nrows() {
                y[(i, j)] = z[(i, j)] * self.column_sds[j] + self.column_means[j];
            }
        }
        Ok(y)
    }

    /// Raw-scale scale factor per column (for standard deviations).
    pub fn destandardize_sd(&self, sd: f64, column: usize) -> f64 {
        sd * self.column_sds[column]
    }
}

/// Sample mean and standard deviation (divisor `n - 1`) of each column.
pub fn column_moments(values: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = values.nrows() as f64;
    let mut means = Vec::with_capacity(values.ncols());
    let mut sds = Vec::with_capacity(values.ncols());
    for col in values.column_iter() {
        let mean = col.iter().sum::<f64>() / n;
        let ss: f64 = col.iter().map(|v| (v - mean) * (v - mean)).sum();
        means.push(mean);
        sds.push(libm::sqrt(ss / (n - 1.0)));
    }
    (means, sds)
}

/// Centres each column and scales it to unit sample standard deviation.
pub fn standardize_outputs(outputs: &OutputMatrix) -> Result<OutputMatrix> {
    let n = outputs.n();
    if n < 2 {
        return Err(Error::invalid("standardization needs at least two rows"));
    }
    let (means, sds) = column_moments(&outputs.values);
    let mut values = outputs.values.clone();
    let mut column_means = outputs.column_means.clone();
    let mut column_sds = outputs.column_sds.clone();
    for j in 0..outputs.m() {
        let scale = means[j].abs().max(1.0);
        if !(sds[j] > 1e-12 * scale) {
            return Err(Error::ConstantColumn(outputs.names[j].clone()));
        }
        for i in 0..n {
            values[(i, j)] = (values[(i, j)] - means[j]) / sds[j];
        }
        if outputs.standardized {
            column_means[j] += column_sds[j] * means[j];
            column_sds[j] *= sds[j];
        } else {
            column_means[j] = means[j];
            column_sds[j] = sds[j];
        }
    }
    Ok(OutputMatrix {
        values,
        names: outputs.names.clone(),
        column_means,
        column_sds,
        standardized: true,
    })
}

/// Inverse of [`standardize_outputs`].
pub fn destandardize_outputs(outputs: &OutputMatrix) -> Result<OutputMatrix> {
    if !outputs.standardized {
        return Ok(outputs.clone());
    }
    let values = outputs.destandardize_values(&outputs.values)?;
    OutputMatrix::new(values, outputs.names.clone())
}

/// Group-wise row means: column `j` belongs to group `groups[j]`, and the
/// result has one column per group named by `group_names`.
pub fn aggregate_outputs(outputs: &OutputMatrix, groups: &[usize], group_names: &[String]) -> Result<OutputMatrix> {
    if groups.len() != outputs.m() {
        return Err(Error::dims("column-to-group map", outputs.m(), groups.len()));
    }
    let g = group_names.len();
    let mut counts = vec![0usize; g];
    for &k in groups {
        if k >= g {
            return Err(Error::invalid(format!("group index {k} has no name")));
        }
        counts[k] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0) {
        return Err(Error::invalid(format!("group `{}` has no columns", group_names[k])));
    }
    let raw = if outputs.standardized {
        outputs.destandardize_values(&outputs.values)?
    } else {
        outputs.values.clone()
    };
    let mut values = DMatrix::<f64>::zeros(outputs.n(), g);
    for (j, &k) in groups.iter().enumerate() {
        for i in 0..outputs.n() {
            values[(i, k)] += raw[(i, j)];
        }
    }
    for k in 0..g {
        values.column_mut(k).scale_mut(1.0 / counts[k] as f64);
    }
    OutputMatrix::new(values, group_names.to_vec())
}
