//! Multivariate sparse Gaussian-process emulator with a matrix-normal
//! inverse-Wishart prior.
//!
//! The model is `Y = H B + E` with `E ~ MN(0, R(tau), Sigma)`. Given `tau`,
//! `(B, Sigma)` are conjugate; `tau` has a closed-form marginal posterior up
//! to a constant. Inverse-Wishart laws use the usual convention in which
//! `IW(S, d)` has mean `S / (d - m - 1)`.

use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::design::{DesignMatrix, OutputMatrix};
use crate::kernels::{self, CrossCorrelator, CutoffRule, CutoffVector, KernelSpec};
use crate::linalg;
use crate::sparse::{self, CholeskyFactor, FactorCache, SparseCorrelation};
use crate::{Error, Result};

/// Regression basis `h(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BasisKind {
    /// `h(x) = 1`.
    Constant,
    /// `h(x) = (1, x_1, ..., x_p)`.
    #[default]
    Linear,
}

impl BasisKind {
    pub fn q(self, p: usize) -> usize {
        match self {
            BasisKind::Constant => 1,
            BasisKind::Linear => p + 1,
        }
    }
}

/// Regression matrix for the rows of a scaled design.
pub fn build_basis(x: &DMatrix<f64>, kind: BasisKind) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut h = DMatrix::<f64>::from_element(n, kind.q(p), 1.0);
    if kind == BasisKind::Linear {
        h.columns_mut(1, p).copy_from(x);
    }
    h
}

/// Prior on the cut-off vector, restricted to the simplex.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TauPrior {
    #[default]
    UniformSimplex,
    /// Independent exponential priors with the given rates, truncated to the
    /// simplex.
    Exponential { rates: Vec<f64> },
}

impl TauPrior {
    /// Log density up to a constant; `-inf` outside the simplex.
    pub fn log_density(&self, tau: &CutoffVector) -> f64 {
        if tau.validate().is_err() {
            return f64::NEG_INFINITY;
        }
        match self {
            TauPrior::UniformSimplex => 0.0,
            TauPrior::Exponential { rates } => -rates.iter().zip(&tau.tau).map(|(r, t)| r * t).sum::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MniwPrior {
    pub b0: DMatrix<f64>,
    /// Prior precision of each column of `B` (up to `Sigma`).
    pub lambda0: DMatrix<f64>,
    pub s0: DMatrix<f64>,
    pub delta0: f64,
    pub tau_prior: TauPrior,
}

impl MniwPrior {
    /// `B0 = 0`, `Lambda0 = 1e-4 I`, `S0 = I`, `delta0 = m + 2`, uniform `tau`.
    pub fn vague(q: usize, m: usize) -> Self {
        MniwPrior {
            b0: DMatrix::zeros(q, m),
            lambda0: DMatrix::identity(q, q) * 1e-4,
            s0: DMatrix::identity(m, m),
            delta0: m as f64 + 2.0,
            tau_prior: TauPrior::UniformSimplex,
        }
    }

    pub fn validate(&self, q: usize, m: usize, p: usize) -> Result<()> {
        if self.b0.shape() != (q, m) {
            return Err(Error::dims("prior B0 rows", q, self.b0.nrows()));
        }
        if self.lambda0.shape() != (q, q) {
            return Err(Error::dims("prior Lambda0", q, self.lambda0.nrows()));
        }
        if self.s0.shape() != (m, m) {
            return Err(Error::dims("prior S0", m, self.s0.nrows()));
        }
        linalg::cholesky(&self.lambda0).map_err(|_| Error::constraint("Lambda0 must be positive definite"))?;
        linalg::cholesky(&self.s0).map_err(|_| Error::constraint("S0 must be positive definite"))?;
        if linalg::symmetry_defect(&self.lambda0) > 1e-12 || linalg::symmetry_defect(&self.s0) > 1e-12 {
            return Err(Error::constraint("Lambda0 and S0 must be symmetric"));
        }
        if !(self.delta0 > m as f64 - 1.0) {
            return Err(Error::constraint("delta0 must exceed m - 1"));
        }
        if let TauPrior::Exponential { rates } = &self.tau_prior {
            if rates.len() != p {
                return Err(Error::dims("tau prior rates", p, rates.len()));
            }
            if rates.iter().any(|r| !(*r >= 0.0)) {
                return Err(Error::constraint("tau prior rates must be non-negative"));
            }
        }
        Ok(())
    }
}

/// Model-building options.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub basis: BasisKind,
    pub kernel: KernelSpec,
    /// `None` selects [`MniwPrior::vague`].
    pub prior: Option<MniwPrior>,
    /// Target fraction of structurally zero correlations.
    pub omega: f64,
    pub cutoff_rule: CutoffRule,
}

/// Training data, basis, kernel and prior of the emulator.
#[derive(Debug, Clone)]
pub struct MsgpModel {
    design: DesignMatrix,
    outputs: OutputMatrix,
    h: DMatrix<f64>,
    basis: BasisKind,
    kernel: KernelSpec,
    prior: MniwPrior,
    c: f64,
    omega: f64,
}

impl MsgpModel {
    /// Builds the model from a scaled design and (typically standardized)
    /// outputs, calibrating the cut-off budget for `config.omega`.
    pub fn new(design: DesignMatrix, outputs: OutputMatrix, config: &ModelConfig) -> Result<Self> {
        let c = if config.kernel.is_compact() {
            kernels::calibrate_cutoff(&design.values, config.omega, config.cutoff_rule)?
        } else {
            1.0
        };
        Self::with_budget(design, outputs, config, c)
    }

    /// Builds the model with an explicit cut-off budget `c`.
    pub fn with_budget(design: DesignMatrix, outputs: OutputMatrix, config: &ModelConfig, c: f64) -> Result<Self> {
        if !design.scaled {
            return Err(Error::invalid("the emulator needs a scaled design"));
        }
        let (n, p) = (design.n(), design.p());
        if outputs.n() != n {
            return Err(Error::dims("output rows", n, outputs.n()));
        }
        if !(c > 0.0) {
            return Err(Error::constraint("cut-off budget c must be positive"));
        }
        config.kernel.validate()?;
        let m = outputs.m();
        let h = build_basis(&design.values, config.basis);
        let q = h.ncols();
        if n <= q {
            return Err(Error::invalid("need more design points than basis functions"));
        }
        linalg::cholesky(&(h.transpose() * &h)).map_err(|_| Error::Degenerate("basis matrix H is rank deficient".into()))?;
        let prior = config.prior.clone().unwrap_or_else(|| MniwPrior::vague(q, m));
        prior.validate(q, m, p)?;
        Ok(MsgpModel {
            design,
            outputs,
            h,
            basis: config.basis,
            kernel: config.kernel.clone(),
            prior,
            c,
            omega: config.omega,
        })
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn outputs(&self) -> &OutputMatrix {
        &self.outputs
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.design.values
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.outputs.values
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn basis(&self) -> BasisKind {
        self.basis
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn prior(&self) -> &MniwPrior {
        &self.prior
    }

    pub fn n(&self) -> usize {
        self.h.nrows()
    }

    pub fn p(&self) -> usize {
        self.design.p()
    }

    pub fn q(&self) -> usize {
        self.h.ncols()
    }

    pub fn m(&self) -> usize {
        self.outputs.m()
    }

    pub fn budget(&self) -> f64 {
        self.c
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Cut-off vector at the centroid of the simplex.
    pub fn centroid(&self) -> CutoffVector {
        CutoffVector::centroid(self.p(), self.c, self.omega)
    }

    /// Cut-off vector with this model's budget.
    pub fn cutoff(&self, tau: Vec<f64>) -> Result<CutoffVector> {
        if tau.len() != self.p() {
            return Err(Error::dims("cut-off vector", self.p(), tau.len()));
        }
        CutoffVector::new(tau, self.c, self.omega)
    }

    pub fn correlation(&self, tau: &CutoffVector) -> Result<SparseCorrelation> {
        kernels::assemble_sparse_correlation(self.x(), &self.kernel, tau)
    }

    /// Conditional posterior quantities for one `tau`, factorizing through
    /// `cache` when given.
    pub fn conditional(&self, tau: &CutoffVector, cache: Option<&mut FactorCache>) -> Result<TauConditional> {
        let r = self.correlation(tau)?;
        let factor = match cache {
            Some(c) => c.factorize(&r)?,
            None => sparse::factorize(&r)?,
        };
        self.conditional_from_factor(tau, factor)
    }

    pub fn conditional_from_factor(&self, tau: &CutoffVector, factor: CholeskyFactor) -> Result<TauConditional> {
        let prior = &self.prior;
        let m = self.m() as f64;
        let wh = factor.half_solve(&self.h)?;
        let wy = factor.half_solve(self.y())?;
        let mut hrh = wh.transpose() * &wh;
        linalg::symmetrize(&mut hrh);
        let hry = wh.transpose() * &wy;

        let mut precision = &hrh + &prior.lambda0;
        linalg::symmetrize(&mut precision);
        let chol_precision = linalg::cholesky(&precision)
            .map_err(|_| Error::Degenerate("H^T R^-1 H + Lambda0 is singular".into()))?;
        let lambda_hat = {
            let inv = linalg::solve_lower(&chol_precision, &DMatrix::identity(self.q(), self.q()));
            let mut li = inv.transpose() * inv;
            linalg::symmetrize(&mut li);
            li
        };
        let rhs = &hry + &prior.lambda0 * &prior.b0;
        let b_hat = &lambda_hat * rhs;

        let we = &wy - &wh * &b_hat;
        let db = &b_hat - &prior.b0;
        let mut s_hat = &prior.s0 + we.transpose() * &we + db.transpose() * &prior.lambda0 * &db;
        linalg::symmetrize(&mut s_hat);
        let chol_s = linalg::cholesky(&s_hat)
            .map_err(|_| Error::Degenerate("posterior scale S_hat is not positive definite".into()))?;
        let delta_hat = prior.delta0 + self.n() as f64;

        let log_det_lambda_hat = -linalg::log_det_from_cholesky(&chol_precision);
        let log_det_s_hat = linalg::log_det_from_cholesky(&chol_s);
        let log_marginal = -0.5 * m * factor.log_det() + 0.5 * m * log_det_lambda_hat
            - 0.5 * delta_hat * log_det_s_hat
            + prior.tau_prior.log_density(tau);

        Ok(TauConditional {
            tau: tau.clone(),
            factor,
            b_hat,
            lambda_hat,
            s_hat,
            delta_hat,
            log_marginal,
        })
    }

    /// Log marginal posterior density of `tau` up to an additive constant;
    /// `-inf` when `tau` leaves the simplex or the correlation matrix cannot
    /// be factorized.
    pub fn log_marginal_tau(&self, tau: &CutoffVector, cache: Option<&mut FactorCache>) -> f64 {
        if tau.validate().is_err() || tau.tau.len() != self.p() {
            return f64::NEG_INFINITY;
        }
        match self.conditional(tau, cache) {
            Ok(c) => c.log_marginal,
            Err(_) => f64::NEG_INFINITY,
        }
    }

    /// Regression rows for scaled test points.
    pub fn basis_rows(&self, test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if test.ncols() != self.p() {
            return Err(Error::dims("test design columns", self.p(), test.ncols()));
        }
        Ok(build_basis(test, self.basis))
    }

    /// Matrix-t predictive with `B` and `Sigma` integrated out at fixed `tau`.
    pub fn predict_matrix_t(&self, cond: &TauConditional, test: &DMatrix<f64>) -> Result<PredictiveDistribution> {
        let hs = self.basis_rows(test)?;
        let cross = CrossCorrelator::new(self.x(), &self.kernel, &cond.tau.tau)?;
        let r = cross.matrix(test)?;
        let f = &cond.factor;
        let resid = self.y() - &self.h * &cond.b_hat;
        let alpha = f.solve(&resid)?;
        let location = &hs * &cond.b_hat + r.transpose() * alpha;
        let wr = f.half_solve(&r)?;
        let wh = f.half_solve(&self.h)?;
        let u = &hs - wr.transpose() * &wh;
        let mut row_scale = cross.test_correlation(test) - wr.transpose() * &wr + &u * &cond.lambda_hat * u.transpose();
        linalg::symmetrize(&mut row_scale);
        Ok(PredictiveDistribution {
            location,
            row_scale,
            col_scale: cond.s_hat.clone(),
            dof: cond.delta_hat,
        })
    }

    /// Conditional matrix-normal predictive given one posterior draw: mean
    /// `H* B + r^T R^-1 (Y - H B)` and row covariance `R** - r^T R^-1 r`
    /// (the column covariance is the draw's `Sigma`).
    pub fn predict_matrix_normal(
        &self,
        draw: &PosteriorDraw,
        test: &DMatrix<f64>,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let predictor = DrawPredictor::new(self, draw)?;
        let mean = predictor.predict_mean(test)?;
        let r = predictor.cross.matrix(test)?;
        let w = predictor.factor.half_solve(&r)?;
        let mut cov = predictor.cross.test_correlation(test) - w.transpose() * w;
        linalg::symmetrize(&mut cov);
        Ok((mean, cov))
    }

    /// Draws `(B, Sigma)` from their posterior given `tau`: `Sigma` from the
    /// inverse-Wishart marginal, then `B | Sigma` from the matrix normal.
    pub fn sample_b_sigma<R: Rng + ?Sized>(&self, cond: &TauConditional, rng: &mut R) -> Result<PosteriorDraw> {
        let sigma = sample_inverse_wishart(&cond.s_hat, cond.delta_hat, rng)?;
        let b = sample_matrix_normal(&cond.b_hat, &cond.lambda_hat, &sigma, rng)?;
        Ok(PosteriorDraw {
            b,
            sigma,
            tau: cond.tau.clone(),
        })
    }
}

/// Everything that depends on `tau` alone.
#[derive(Debug, Clone)]
pub struct TauConditional {
    pub tau: CutoffVector,
    pub factor: CholeskyFactor,
    pub b_hat: DMatrix<f64>,
    pub lambda_hat: DMatrix<f64>,
    pub s_hat: DMatrix<f64>,
    pub delta_hat: f64,
    pub log_marginal: f64,
}

impl TauConditional {
    /// Posterior mean of `Sigma` given `tau`.
    pub fn sigma_mean(&self) -> Result<DMatrix<f64>> {
        let m = self.s_hat.nrows() as f64;
        let d = self.delta_hat - m - 1.0;
        if !(d > 0.0) {
            return Err(Error::Degenerate("posterior mean of Sigma needs delta_hat > m + 1".into()));
        }
        Ok(&self.s_hat / d)
    }
}

/// One stored posterior state. Factorizations are recomputed on demand
/// rather than kept with every draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraw {
    pub b: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
    pub tau: CutoffVector,
}

/// Matrix-t predictive `Y* ~ T(Q, D, S, dof)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDistribution {
    pub location: DMatrix<f64>,
    pub row_scale: DMatrix<f64>,
    pub col_scale: DMatrix<f64>,
    /// Inverse-Wishart degrees of freedom `delta_hat`.
    pub dof: f64,
}

impl PredictiveDistribution {
    /// Degrees of freedom of each univariate marginal, `dof - m + 1`.
    pub fn marginal_dof(&self) -> f64 {
        self.dof - self.col_scale.nrows() as f64 + 1.0
    }

    /// Scale of the univariate Student-t marginal of entry `(i, j)`.
    pub fn marginal_scale(&self, i: usize, j: usize) -> f64 {
        let v = self.row_scale[(i, i)].max(0.0) * self.col_scale[(j, j)] / self.marginal_dof();
        libm::sqrt(v)
    }

    /// Central credible intervals of every entry at the given level.
    pub fn intervals(&self, level: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        if !(level > 0.0 && level < 1.0) {
            return Err(Error::invalid("interval level must lie in (0, 1)"));
        }
        let t = crate::special::student_t_quantile(0.5 + level / 2.0, self.marginal_dof());
        let (n, m) = self.location.shape();
        let mut lo = self.location.clone();
        let mut hi = self.location.clone();
        for i in 0..n {
            for j in 0..m {
                let w = t * self.marginal_scale(i, j);
                lo[(i, j)] -= w;
                hi[(i, j)] += w;
            }
        }
        Ok((lo, hi))
    }
}

/// Mean predictor for a single posterior draw: `H* B + r^T alpha` with
/// `alpha = R^-1 (Y - H B)` computed once.
#[derive(Debug, Clone)]
pub struct DrawPredictor {
    b: DMatrix<f64>,
    basis: BasisKind,
    p: usize,
    cross: CrossCorrelator,
    factor: CholeskyFactor,
    alpha: DMatrix<f64>,
}

impl DrawPredictor {
    pub fn new(model: &MsgpModel, draw: &PosteriorDraw) -> Result<Self> {
        let r = model.correlation(&draw.tau)?;
        let factor = sparse::factorize(&r)?;
        Self::with_factor(model, draw, factor)
    }

    pub fn with_factor(model: &MsgpModel, draw: &PosteriorDraw, factor: CholeskyFactor) -> Result<Self> {
        if draw.b.shape() != (model.q(), model.m()) {
            return Err(Error::dims("draw B rows", model.q(), draw.b.nrows()));
        }
        let cross = CrossCorrelator::new(model.x(), model.kernel(), &draw.tau.tau)?;
        let resid = model.y() - model.h() * &draw.b;
        let alpha = factor.solve(&resid)?;
        Ok(DrawPredictor {
            b: draw.b.clone(),
            basis: model.basis(),
            p: model.p(),
            cross,
            factor,
            alpha,
        })
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn m(&self) -> usize {
        self.alpha.ncols()
    }

    /// Predictive mean at scaled test points (rows).
    pub fn predict_mean(&self, test: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if test.ncols() != self.p {
            return Err(Error::dims("test design columns", self.p, test.ncols()));
        }
        let (nt, m) = (test.nrows(), self.m());
        let mut out = build_basis(test, self.basis) * &self.b;
        let mut point = alloc::vec![0.0; self.p];
        let mut buf = Vec::new();
        for t in 0..nt {
            for k in 0..self.p {
                point[k] = test[(t, k)];
            }
            self.cross.for_each_nonzero(&point, &mut buf);
            for &(i, r) in &buf {
                for j in 0..m {
                    out[(t, j)] += r * self.alpha[(i, j)];
                }
            }
        }
        Ok(out)
    }
}

/// `Sigma ~ IW(S, d)` through a Bartlett draw of `W ~ Wishart(S^-1, d)`.
pub fn sample_inverse_wishart<R: Rng + ?Sized>(s: &DMatrix<f64>, d: f64, rng: &mut R) -> Result<DMatrix<f64>> {
    let m = s.nrows();
    if !(d > m as f64 - 1.0) {
        return Err(Error::constraint("inverse-Wishart degrees of freedom must exceed m - 1"));
    }
    let s_inv = linalg::spd_inverse(s)?;
    let l = linalg::cholesky(&s_inv)?;
    let mut a = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        let chi = ChiSquared::new(d - i as f64).map_err(|_| Error::constraint("invalid chi-square dof"))?;
        a[(i, i)] = libm::sqrt(chi.sample(rng));
        for j in 0..i {
            a[(i, j)] = StandardNormal.sample(rng);
        }
    }
    let la = l * a;
    let w = &la * la.transpose();
    let mut sigma = linalg::spd_inverse(&w)?;
    linalg::symmetrize(&mut sigma);
    Ok(sigma)
}

/// `B ~ MN(M, U, V)`: `B = M + chol(U) Z chol(V)^T`.
pub fn sample_matrix_normal<R: Rng + ?Sized>(
    mean: &DMatrix<f64>,
    row_cov: &DMatrix<f64>,
    col_cov: &DMatrix<f64>,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    let (q, m) = mean.shape();
    let lu = linalg::cholesky(row_cov)?;
    let lv = linalg::cholesky(col_cov)?;
    let z = DMatrix::<f64>::from_fn(q, m, |_, _| StandardNormal.sample(rng));
    Ok(mean + lu * z * lv.transpose())
}
