//! Symmetric sparse storage and sparse Cholesky factorization.
//!
//! Matrices keep only their lower triangle in compressed sparse column form.
//! Factorization uses an approximate minimum degree ordering, a symbolic
//! phase (elimination tree and column counts) that can be shared between
//! matrices with the same pattern, and an up-looking numeric phase.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::{Error, Result};

const NONE: usize = usize::MAX;

/// Symmetric matrix stored as its lower triangle, with a diagonal nugget
/// that is applied at factorization time.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCorrelation {
    n: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    nugget: f64,
}

impl SparseCorrelation {
    /// Builds a matrix with unit diagonal from strictly-lower entries
    /// `(row, col, value)` with `row > col`. Entries are sorted, so the
    /// result does not depend on the input order.
    pub fn from_lower_triplets(
        n: usize,
        mut triplets: Vec<(usize, usize, f64)>,
        nugget: f64,
    ) -> Self {
        triplets.sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut col_ptr = vec![0usize; n + 1];
        for &(_, j, _) in &triplets {
            col_ptr[j + 1] += 1;
        }
        for j in 0..n {
            col_ptr[j + 1] += col_ptr[j] + 1;
        }
        let nnz = col_ptr[n];
        let mut row_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        let mut t = 0;
        for j in 0..n {
            row_idx.push(j);
            values.push(1.0);
            while t < triplets.len() && triplets[t].1 == j {
                debug_assert!(triplets[t].0 > j);
                row_idx.push(triplets[t].0);
                values.push(triplets[t].2);
                t += 1;
            }
        }
        SparseCorrelation {
            n,
            col_ptr,
            row_idx,
            values,
            nugget,
        }
    }

    /// Identity matrix of order `n` with no nugget.
    pub fn identity(n: usize) -> Self {
        Self::from_lower_triplets(n, Vec::new(), 0.0)
    }

    /// Takes the lower triangle of a dense symmetric matrix; exact zeros
    /// below the diagonal are not stored. The diagonal is kept as given.
    pub fn from_dense(a: &DMatrix<f64>, nugget: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims("square matrix", n, a.ncols()));
        }
        let mut col_ptr = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut values = Vec::new();
        col_ptr.push(0);
        for j in 0..n {
            for i in j..n {
                if i == j || a[(i, j)] != 0.0 {
                    row_idx.push(i);
                    values.push(a[(i, j)]);
                }
            }
            col_ptr.push(row_idx.len());
        }
        Ok(SparseCorrelation {
            n,
            col_ptr,
            row_idx,
            values,
            nugget,
        })
    }

    /// Block-diagonal concatenation `diag(self, other)`. Both blocks must use
    /// the same nugget.
    pub fn block_diagonal(&self, other: &SparseCorrelation) -> Result<Self> {
        if self.nugget != other.nugget {
            return Err(Error::invalid("block-diagonal blocks must share a nugget"));
        }
        let n = self.n + other.n;
        let mut col_ptr = self.col_ptr.clone();
        let offset = self.nnz();
        col_ptr.extend(other.col_ptr[1..].iter().map(|p| p + offset));
        let mut row_idx = self.row_idx.clone();
        row_idx.extend(other.row_idx.iter().map(|i| i + self.n));
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(SparseCorrelation {
            n,
            col_ptr,
            row_idx,
            values,
            nugget: self.nugget,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn with_nugget(mut self, nugget: f64) -> Self {
        self.nugget = nugget;
        self
    }

    pub fn col_ptr(&self) -> &[usize] {
        &self.col_ptr
    }

    pub fn row_idx(&self) -> &[usize] {
        &self.row_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Stored entries of the lower triangle, diagonal included.
    pub fn nnz(&self) -> usize {
        self.row_idx.len()
    }

    /// Stored strictly-lower entries.
    pub fn offdiag_nnz(&self) -> usize {
        self.nnz() - self.n
    }

    /// Fraction of off-diagonal entries that are structurally zero.
    pub fn zero_fraction(&self) -> f64 {
        if self.n < 2 {
            return 1.0;
        }
        let pairs = (self.n * (self.n - 1) / 2) as f64;
        1.0 - self.offdiag_nnz() as f64 / pairs
    }

    fn find(&self, i: usize, j: usize) -> Option<usize> {
        let (r, c) = if i >= j { (i, j) } else { (j, i) };
        if c >= self.n {
            return None;
        }
        let rows = &self.row_idx[self.col_ptr[c]..self.col_ptr[c + 1]];
        rows.binary_search(&r).ok().map(|k| self.col_ptr[c] + k)
    }

    /// Stored value at `(i, j)` (either triangle), zero if not stored. The
    /// nugget is not included.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.find(i, j).map_or(0.0, |k| self.values[k])
    }

    pub fn is_stored(&self, i: usize, j: usize) -> bool {
        self.find(i, j).is_some()
    }

    /// Dense copy of the matrix that is factorized, nugget included.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::<f64>::zeros(self.n, self.n);
        for j in 0..self.n {
            for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                let i = self.row_idx[k];
                a[(i, j)] = self.values[k];
                a[(j, i)] = self.values[k];
            }
            a[(j, j)] += self.nugget;
        }
        a
    }

    /// `(R + nugget I) b`.
    pub fn mul(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if b.nrows() != self.n {
            return Err(Error::dims("sparse product rows", self.n, b.nrows()));
        }
        let mut out = DMatrix::<f64>::zeros(self.n, b.ncols());
        for c in 0..b.ncols() {
            for j in 0..self.n {
                let bj = b[(j, c)];
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    let i = self.row_idx[k];
                    let v = self.values[k];
                    out[(i, c)] += v * bj;
                    if i != j {
                        out[(j, c)] += v * b[(i, c)];
                    }
                }
                out[(j, c)] += self.nugget * bj;
            }
        }
        Ok(out)
    }

    /// FNV-1a hash of the sparsity pattern.
    pub fn pattern_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: usize| {
            for byte in (v as u64).to_le_bytes() {
                h ^= byte as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        eat(self.n);
        for &p in &self.col_ptr {
            eat(p);
        }
        for &i in &self.row_idx {
            eat(i);
        }
        h
    }

    fn same_pattern(&self, col_ptr: &[usize], row_idx: &[usize]) -> bool {
        self.col_ptr == col_ptr && self.row_idx == row_idx
    }
}

/// Approximate minimum degree ordering of a symmetric pattern given by its
/// lower triangle. Returns `perm` with `perm[k]` the original index placed at
/// position `k`.
///
/// Works on the quotient graph: eliminated pivots become elements, elements
/// adjacent to a pivot are absorbed, and degrees of the pivot's neighbours
/// are bounded by `|A_i| + |L_p \ i| + sum_e |L_e \ L_p|`.
pub fn approximate_minimum_degree(a: &SparseCorrelation) -> Vec<usize> {
    let n = a.n;
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for j in 0..n {
        for k in a.col_ptr[j]..a.col_ptr[j + 1] {
            let i = a.row_idx[k];
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    for list in adj.iter_mut() {
        list.sort_unstable();
        list.dedup();
    }
    // Elements are indexed by the pivot that created them.
    let mut elems: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut elem_vars: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut absorbed = vec![false; n];
    let mut eliminated = vec![false; n];
    let mut degree: Vec<usize> = adj.iter().map(|l| l.len()).collect();
    let mut queue: BTreeSet<(usize, usize)> = (0..n).map(|i| (degree[i], i)).collect();
    let mut mark = vec![NONE; n];
    let mut w = vec![NONE; n];
    let mut w_stamp = vec![NONE; n];
    let mut perm = Vec::with_capacity(n);

    for step in 0..n {
        let (_, p) = queue.pop_first().expect("queue holds every uneliminated variable");
        eliminated[p] = true;
        perm.push(p);

        // L_p = (A_p ∪ L_e for e in E_p) \ {p}, uneliminated variables only.
        let mut lp = Vec::new();
        mark[p] = step;
        for &v in &adj[p] {
            if !eliminated[v] && mark[v] != step {
                mark[v] = step;
                lp.push(v);
            }
        }
        for &e in &elems[p] {
            if absorbed[e] {
                continue;
            }
            for &v in &elem_vars[e] {
                if !eliminated[v] && mark[v] != step {
                    mark[v] = step;
                    lp.push(v);
                }
            }
            absorbed[e] = true;
            elem_vars[e] = Vec::new();
        }
        adj[p] = Vec::new();
        elems[p] = Vec::new();

        for &i in &lp {
            // Prune: variables already in L_p are covered by the new element.
            adj[i].retain(|&v| !eliminated[v] && mark[v] != step);
            elems[i].retain(|&e| !absorbed[e]);
            elems[i].push(p);
        }

        // |L_e \ L_p| for every element touching L_p.
        for &i in &lp {
            for &e in &elems[i] {
                if e == p {
                    continue;
                }
                if w_stamp[e] != step {
                    w_stamp[e] = step;
                    w[e] = elem_vars[e].iter().filter(|&&v| !eliminated[v]).count();
                }
                w[e] -= 1;
            }
        }

        let remaining = n - step - 1;
        let lp_len = lp.len();
        for &i in &lp {
            let mut d = adj[i].len() + lp_len - 1;
            for &e in &elems[i] {
                if e != p {
                    d += w[e];
                }
            }
            let d = d.min(degree[i] + lp_len - 1).min(remaining.saturating_sub(1));
            queue.remove(&(degree[i], i));
            degree[i] = d;
            queue.insert((d, i));
        }
        elem_vars[p] = lp;
    }
    perm
}

/// Ordering, elimination tree and factor structure shared by every matrix
/// with the same sparsity pattern.
#[derive(Debug, Clone)]
pub struct Symbolic {
    n: usize,
    perm: Vec<usize>,
    parent: Vec<usize>,
    l_col_ptr: Vec<usize>,
    // Upper triangle of P A P^T in CSC form and, for every stored entry of A,
    // its slot in that structure.
    c_col_ptr: Vec<usize>,
    c_row_idx: Vec<usize>,
    a_to_c: Vec<usize>,
    a_col_ptr: Vec<usize>,
    a_row_idx: Vec<usize>,
    hash: u64,
}

impl Symbolic {
    /// Analyzes `a` with an approximate minimum degree ordering.
    pub fn analyze(a: &SparseCorrelation) -> Self {
        let perm = approximate_minimum_degree(a);
        Self::with_ordering(a, perm).expect("AMD returns a permutation")
    }

    /// Analyzes `a` with a caller-supplied ordering.
    pub fn with_ordering(a: &SparseCorrelation, perm: Vec<usize>) -> Result<Self> {
        let n = a.n;
        if perm.len() != n {
            return Err(Error::dims("ordering length", n, perm.len()));
        }
        let mut pinv = vec![NONE; n];
        for (k, &i) in perm.iter().enumerate() {
            if i >= n || pinv[i] != NONE {
                return Err(Error::invalid("ordering is not a permutation"));
            }
            pinv[i] = k;
        }

        let mut c_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            for k in a.col_ptr[j]..a.col_ptr[j + 1] {
                let (pi, pj) = (pinv[a.row_idx[k]], pinv[j]);
                c_col_ptr[pi.max(pj) + 1] += 1;
            }
        }
        for j in 0..n {
            c_col_ptr[j + 1] += c_col_ptr[j];
        }
        let mut next = c_col_ptr.clone();
        let mut c_row_idx = vec![0usize; a.nnz()];
        let mut a_to_c = vec![0usize; a.nnz()];
        for j in 0..n {
            for k in a.col_ptr[j]..a.col_ptr[j + 1] {
                let (pi, pj) = (pinv[a.row_idx[k]], pinv[j]);
                let col = pi.max(pj);
                let slot = next[col];
                next[col] += 1;
                c_row_idx[slot] = pi.min(pj);
                a_to_c[k] = slot;
            }
        }

        let parent = etree(n, &c_col_ptr, &c_row_idx);
        let mut counts = vec![1usize; n];
        let mut stack = vec![0usize; n];
        let mut flag = vec![NONE; n];
        for k in 0..n {
            let top = ereach(&c_col_ptr, &c_row_idx, k, &parent, &mut stack, &mut flag);
            for &i in &stack[top..] {
                counts[i] += 1;
            }
        }
        let mut l_col_ptr = vec![0usize; n + 1];
        for j in 0..n {
            l_col_ptr[j + 1] = l_col_ptr[j] + counts[j];
        }

        Ok(Symbolic {
            n,
            perm,
            parent,
            l_col_ptr,
            c_col_ptr,
            c_row_idx,
            a_to_c,
            a_col_ptr: a.col_ptr.clone(),
            a_row_idx: a.row_idx.clone(),
            hash: a.pattern_hash(),
        })
    }

    /// True when `a` has exactly the pattern this analysis was built from.
    pub fn matches(&self, a: &SparseCorrelation) -> bool {
        a.n == self.n && a.pattern_hash() == self.hash && a.same_pattern(&self.a_col_ptr, &self.a_row_idx)
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }

    /// Nonzeros of the Cholesky factor, diagonal included.
    pub fn factor_nnz(&self) -> usize {
        self.l_col_ptr[self.n]
    }

    pub fn elimination_tree(&self) -> &[usize] {
        &self.parent
    }
}

fn etree(n: usize, cp: &[usize], ci: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &row in &ci[cp[k]..cp[k + 1]] {
            let mut i = row;
            while i != NONE && i < k {
                let inext = ancestor[i];
                ancestor[i] = k;
                if inext == NONE {
                    parent[i] = k;
                }
                i = inext;
            }
        }
    }
    parent
}

/// Pattern of row `k` of L, written to `stack[top..]` in topological order.
fn ereach(
    cp: &[usize],
    ci: &[usize],
    k: usize,
    parent: &[usize],
    stack: &mut [usize],
    flag: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    flag[k] = k;
    for &row in &ci[cp[k]..cp[k + 1]] {
        let mut i = row;
        if i > k {
            continue;
        }
        let mut len = 0;
        while flag[i] != k {
            stack[len] = i;
            len += 1;
            flag[i] = k;
            i = parent[i];
        }
        while len > 0 {
            top -= 1;
            len -= 1;
            stack[top] = stack[len];
        }
    }
    top
}

/// Sparse Cholesky factor `P (A + nugget I) P^T = L L^T`.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    symbolic: Arc<Symbolic>,
    l_row_idx: Vec<usize>,
    l_values: Vec<f64>,
    log_det: f64,
    nugget: f64,
}

impl CholeskyFactor {
    /// Numeric factorization reusing a symbolic analysis of the same pattern.
    pub fn numeric(symbolic: Arc<Symbolic>, a: &SparseCorrelation) -> Result<Self> {
        if !symbolic.matches(a) {
            return Err(Error::invalid("symbolic analysis does not match the matrix pattern"));
        }
        numeric_with_nugget(symbolic, a, a.nugget)
    }

    pub fn n(&self) -> usize {
        self.symbolic.n
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    /// Nugget actually used (may exceed the matrix's after a retry).
    pub fn nugget(&self) -> f64 {
        self.nugget
    }

    pub fn nnz(&self) -> usize {
        self.l_row_idx.len()
    }

    pub fn symbolic(&self) -> &Arc<Symbolic> {
        &self.symbolic
    }

    /// Dense copy of `L` (in permuted order).
    pub fn l_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let lp = &self.symbolic.l_col_ptr;
        let mut l = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            for k in lp[j]..lp[j + 1] {
                l[(self.l_row_idx[k], j)] = self.l_values[k];
            }
        }
        l
    }

    fn lower_solve_in_place(&self, x: &mut [f64]) {
        let lp = &self.symbolic.l_col_ptr;
        for j in 0..self.n() {
            let start = lp[j];
            x[j] /= self.l_values[start];
            let xj = x[j];
            if xj != 0.0 {
                for k in start + 1..lp[j + 1] {
                    x[self.l_row_idx[k]] -= self.l_values[k] * xj;
                }
            }
        }
    }

    fn upper_solve_in_place(&self, x: &mut [f64]) {
        let lp = &self.symbolic.l_col_ptr;
        for j in (0..self.n()).rev() {
            let start = lp[j];
            let mut s = x[j];
            for k in start + 1..lp[j + 1] {
                s -= self.l_values[k] * x[self.l_row_idx[k]];
            }
            x[j] = s / self.l_values[start];
        }
    }

    fn check_rows(&self, b: &DMatrix<f64>) -> Result<()> {
        if b.nrows() != self.n() {
            return Err(Error::dims("right-hand side rows", self.n(), b.nrows()));
        }
        Ok(())
    }

    /// `W = L^{-1} P B`, so that `B^T A^{-1} B = W^T W`.
    pub fn half_solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(b)?;
        let n = self.n();
        let perm = &self.symbolic.perm;
        let mut out = DMatrix::<f64>::zeros(n, b.ncols());
        let mut x = vec![0.0; n];
        for c in 0..b.ncols() {
            for k in 0..n {
                x[k] = b[(perm[k], c)];
            }
            self.lower_solve_in_place(&mut x);
            out.column_mut(c).copy_from_slice(&x);
        }
        Ok(out)
    }

    /// `A^{-1} B`.
    pub fn solve(&self, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(b)?;
        let n = self.n();
        let perm = &self.symbolic.perm;
        let mut out = DMatrix::<f64>::zeros(n, b.ncols());
        let mut x = vec![0.0; n];
        for c in 0..b.ncols() {
            for k in 0..n {
                x[k] = b[(perm[k], c)];
            }
            self.lower_solve_in_place(&mut x);
            self.upper_solve_in_place(&mut x);
            for k in 0..n {
                out[(perm[k], c)] = x[k];
            }
        }
        Ok(out)
    }

    /// `A^T M^{-1} B` through one half solve per argument; symmetrized when
    /// `A` and `B` are equal.
    pub fn quad_form(&self, a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check_rows(a)?;
        self.check_rows(b)?;
        let wa = self.half_solve(a)?;
        if core::ptr::eq(a, b) || a == b {
            let mut q = wa.transpose() * &wa;
            crate::linalg::symmetrize(&mut q);
            return Ok(q);
        }
        let wb = self.half_solve(b)?;
        Ok(wa.transpose() * wb)
    }
}

fn numeric_with_nugget(symbolic: Arc<Symbolic>, a: &SparseCorrelation, nugget: f64) -> Result<CholeskyFactor> {
    let s = &*symbolic;
    let n = s.n;
    let mut c_values = vec![0.0; s.c_row_idx.len()];
    for (k, &slot) in s.a_to_c.iter().enumerate() {
        c_values[slot] = a.values[k];
    }
    let lp = &s.l_col_ptr;
    let nnz = lp[n];
    let mut li = vec![0usize; nnz];
    let mut lx = vec![0.0; nnz];
    let mut next: Vec<usize> = lp[..n].to_vec();
    let mut x = vec![0.0; n];
    let mut stack = vec![0usize; n];
    let mut flag = vec![NONE; n];
    let mut log_det = 0.0;

    for k in 0..n {
        let top = ereach(&s.c_col_ptr, &s.c_row_idx, k, &s.parent, &mut stack, &mut flag);
        x[k] = 0.0;
        for p in s.c_col_ptr[k]..s.c_col_ptr[k + 1] {
            let i = s.c_row_idx[p];
            if i <= k {
                x[i] += c_values[p];
            }
        }
        let mut d = x[k] + nugget;
        x[k] = 0.0;
        for &i in &stack[top..] {
            let lki = x[i] / lx[lp[i]];
            x[i] = 0.0;
            for p in lp[i] + 1..next[i] {
                x[li[p]] -= lx[p] * lki;
            }
            d -= lki * lki;
            let p = next[i];
            next[i] += 1;
            li[p] = k;
            lx[p] = lki;
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: s.perm[k] });
        }
        let p = next[k];
        next[k] += 1;
        li[p] = k;
        let lkk = libm::sqrt(d);
        lx[p] = lkk;
        log_det += 2.0 * libm::log(lkk);
    }
    Ok(CholeskyFactor {
        symbolic,
        l_row_idx: li,
        l_values: lx,
        log_det,
        nugget,
    })
}

fn factorize_impl(symbolic: Arc<Symbolic>, a: &SparseCorrelation) -> Result<CholeskyFactor> {
    match numeric_with_nugget(symbolic.clone(), a, a.nugget) {
        Ok(f) => Ok(f),
        Err(Error::NotPositiveDefinite { .. }) => {
            let retry = if a.nugget > 0.0 { a.nugget * 10.0 } else { 1e-10 };
            numeric_with_nugget(symbolic, a, retry)
        }
        Err(e) => Err(e),
    }
}

/// Factorizes `a` (with its nugget) using a fresh approximate minimum degree
/// analysis. A non-positive pivot triggers one retry with ten times the
/// nugget before the error is returned.
pub fn factorize(a: &SparseCorrelation) -> Result<CholeskyFactor> {
    factorize_impl(Arc::new(Symbolic::analyze(a)), a)
}

/// Keeps the most recent symbolic analysis and reuses it while the sparsity
/// pattern is unchanged.
#[derive(Debug, Clone, Default)]
pub struct FactorCache {
    last: Option<Arc<Symbolic>>,
    analyses: usize,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn factorize(&mut self, a: &SparseCorrelation) -> Result<CholeskyFactor> {
        let symbolic = match &self.last {
            Some(s) if s.matches(a) => s.clone(),
            _ => {
                self.analyses += 1;
                let s = Arc::new(Symbolic::analyze(a));
                self.last = Some(s.clone());
                s
            }
        };
        factorize_impl(symbolic, a)
    }

    /// Number of symbolic analyses performed so far.
    pub fn analyses(&self) -> usize {
        self.analyses
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg;
    use approx::assert_relative_eq;

    fn arrow(n: usize) -> SparseCorrelation {
        let t = (1..n).map(|i| (i, 0, 0.9 / n as f64)).collect();
        SparseCorrelation::from_lower_triplets(n, t, 0.0)
    }

    #[test]
    fn identity_factor() {
        let f = factorize(&SparseCorrelation::identity(5)).unwrap();
        assert_eq!(f.log_det(), 0.0);
        assert_eq!(f.l_dense(), DMatrix::identity(5, 5));
    }

    #[test]
    fn two_by_two_log_det() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let f = factorize(&SparseCorrelation::from_dense(&a, 0.0).unwrap()).unwrap();
        assert_relative_eq!(f.log_det(), 0.75f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn amd_avoids_fill_on_arrow_matrix() {
        let a = arrow(30);
        let natural = Symbolic::with_ordering(&a, (0..30).collect()).unwrap();
        assert_eq!(natural.factor_nnz(), 30 * 31 / 2);
        let amd = Symbolic::analyze(&a);
        assert_eq!(amd.factor_nnz(), 30 + 29);
    }

    #[test]
    fn not_positive_definite_reports_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        let s = SparseCorrelation::from_dense(&a, 0.0).unwrap();
        assert!(matches!(factorize(&s), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn retry_with_larger_nugget() {
        // Singular with nugget zero tolerance: all-ones 2x2 with tiny nugget.
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let s = SparseCorrelation::from_dense(&a, 0.0).unwrap();
        let f = factorize(&s).unwrap();
        assert!(f.nugget() > 0.0);
    }

    #[test]
    fn cache_reuses_analysis() {
        let a = arrow(10);
        let b = SparseCorrelation::from_lower_triplets(10, (1..10).map(|i| (i, 0, 0.05)).collect(), 0.0);
        let mut cache = FactorCache::new();
        cache.factorize(&a).unwrap();
        cache.factorize(&b).unwrap();
        assert_eq!(cache.analyses(), 1);
        cache.factorize(&SparseCorrelation::identity(10)).unwrap();
        assert_eq!(cache.analyses(), 2);
    }

    #[test]
    fn solve_and_quad_form_match_dense() {
        let a = arrow(8).with_nugget(0.1);
        let f = factorize(&a).unwrap();
        let dense = a.to_dense();
        let b = DMatrix::from_fn(8, 3, |i, j| (i as f64 + 1.0) * (j as f64 - 1.0) + 0.3);
        let x = f.solve(&b).unwrap();
        assert!((&dense * &x - &b).amax() < 1e-12);
        let q = f.quad_form(&b, &b).unwrap();
        let inv = linalg::spd_inverse(&dense).unwrap();
        assert!((q.clone() - b.transpose() * inv * &b).amax() < 1e-10);
        assert_eq!(linalg::symmetry_defect(&q), 0.0);
        assert_relative_eq!(
            f.log_det(),
            linalg::log_det_from_cholesky(&linalg::cholesky(&dense).unwrap()),
            epsilon = 1e-12
        );
    }
}
