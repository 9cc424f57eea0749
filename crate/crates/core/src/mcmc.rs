//! Robust adaptive Metropolis within Gibbs for `{B, Sigma, tau}` and the
//! potential scale reduction factor.
//!
//! `tau` lives on the simplex `{tau_k >= 0, sum tau_k <= c}` and is sampled
//! through the additive logistic map
//! `tau_k = c e^{z_k} / (1 + sum_l e^{z_l})`, with the log-Jacobian added to
//! the target. `(B, Sigma)` are drawn exactly from their conditional
//! posterior given `tau` whenever a draw is stored.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::emulator::{MsgpModel, PosteriorDraw, TauConditional};
use crate::kernels::CutoffVector;
use crate::linalg;
use crate::sparse::FactorCache;
use crate::{special, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub target_accept: f64,
    /// Adaptation step sizes are `j^-gamma`.
    pub gamma: f64,
    /// Initial adaptation factor is `initial_scale * I`.
    pub initial_scale: f64,
    /// Standard deviation of the random start around the simplex centroid in
    /// the unconstrained coordinates (0 starts every chain at the centroid).
    pub init_spread: f64,
    pub adapt: bool,
    /// Clamp `tau` to this value and only run the conjugate Gibbs updates.
    pub fixed_tau: Option<Vec<f64>>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        McmcConfig {
            iterations: 50_000,
            burn_in: 1_000,
            thin: 25,
            target_accept: 0.234,
            gamma: 2.0 / 3.0,
            initial_scale: 0.1,
            init_spread: 0.0,
            adapt: true,
            fixed_tau: None,
        }
    }
}

impl McmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::invalid("thin must be >= 1"));
        }
        if self.burn_in > self.iterations {
            return Err(Error::invalid("burn_in exceeds iterations"));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::invalid("target_accept must lie in (0, 1)"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::invalid("gamma must lie in (0, 1]"));
        }
        if !(self.initial_scale > 0.0) {
            return Err(Error::invalid("initial_scale must be > 0"));
        }
        if !(self.init_spread >= 0.0) {
            return Err(Error::invalid("init_spread must be >= 0"));
        }
        Ok(())
    }

    /// Number of draws kept: `floor((iterations - burn_in) / thin)`.
    pub fn stored_draws(&self) -> usize {
        self.iterations.saturating_sub(self.burn_in) / self.thin.max(1)
    }
}

/// State of the robust adaptive Metropolis sampler on an unconstrained
/// vector.
#[derive(Debug, Clone, PartialEq)]
pub struct RamState {
    pub x: DVector<f64>,
    /// Lower-triangular adaptation factor with positive diagonal.
    pub chol: DMatrix<f64>,
    /// Completed steps.
    pub step: usize,
    pub target_accept: f64,
    pub gamma: f64,
    pub adapt: bool,
    /// Log target at `x`.
    pub log_target: f64,
    /// Times the factor had to be rebuilt after a failed downdate.
    pub rebuilds: usize,
}

impl RamState {
    pub fn new(x: DVector<f64>, log_target: f64, initial_scale: f64, target_accept: f64, gamma: f64) -> Self {
        let d = x.len();
        RamState {
            x,
            chol: DMatrix::identity(d, d) * initial_scale,
            step: 0,
            target_accept,
            gamma,
            adapt: true,
            log_target,
            rebuilds: 0,
        }
    }

    /// Proposal covariance `Upsilon Upsilon^T`.
    pub fn proposal_covariance(&self) -> DMatrix<f64> {
        &self.chol * self.chol.transpose()
    }
}

/// One Metropolis step with proposal `x + Upsilon u`, `u ~ N(0, I)`, and the
/// rank-one adaptation
/// `Upsilon Upsilon^T += eta (alpha - alpha*) (Upsilon u)(Upsilon u)^T / |u|^2`
/// with `eta = min(1, j^-gamma)`. Returns whether the proposal was accepted.
pub fn ram_step<R, F>(state: &mut RamState, mut log_target: F, rng: &mut R) -> bool
where
    R: Rng + ?Sized,
    F: FnMut(&DVector<f64>) -> f64,
{
    let d = state.x.len();
    let u = DVector::<f64>::from_fn(d, |_, _| StandardNormal.sample(rng));
    let step = &state.chol * &u;
    let proposal = &state.x + &step;
    let lp = log_target(&proposal);
    let alpha = if lp.is_finite() {
        libm::exp((lp - state.log_target).min(0.0))
    } else {
        0.0
    };
    let accepted = rng.random::<f64>() < alpha;
    state.step += 1;
    if state.adapt {
        let eta = libm::pow(state.step as f64, -state.gamma).min(1.0);
        let coef = eta * (alpha - state.target_accept);
        let norm2 = u.norm_squared();
        if coef != 0.0 && norm2 > 0.0 {
            let v = &step * libm::sqrt(coef.abs() / norm2);
            let mut updated = state.chol.clone();
            if linalg::cholesky_rank_one(&mut updated, &v, coef.signum()) {
                state.chol = updated;
            } else {
                let mut target = state.proposal_covariance() + coef.signum() * &v * v.transpose();
                linalg::symmetrize(&mut target);
                if let Ok(l) = linalg::cholesky(&target) {
                    state.chol = l;
                }
                state.rebuilds += 1;
            }
        }
    }
    if accepted {
        state.x = proposal;
        state.log_target = lp;
    }
    accepted
}

/// `tau(z)` on the simplex with budget `c` and `log |d tau / d z|`.
pub fn tau_from_unconstrained(z: &DVector<f64>, c: f64) -> (Vec<f64>, f64) {
    let zmax = z.iter().copied().fold(0.0f64, f64::max);
    let denom = libm::exp(-zmax) + z.iter().map(|v| libm::exp(v - zmax)).sum::<f64>();
    let log_denom = zmax + libm::log(denom);
    let tau: Vec<f64> = z.iter().map(|v| c * libm::exp(v - log_denom)).collect();
    let p = z.len() as f64;
    let log_jac = p * libm::log(c) + z.iter().sum::<f64>() - (p + 1.0) * log_denom;
    (tau, log_jac)
}

/// Inverse of [`tau_from_unconstrained`] for `tau` strictly inside the
/// simplex.
pub fn unconstrained_from_tau(tau: &[f64], c: f64) -> Result<DVector<f64>> {
    let slack = c - tau.iter().sum::<f64>();
    if !(slack > 0.0) || tau.iter().any(|t| !(*t > 0.0)) {
        return Err(Error::constraint("tau must lie strictly inside the simplex"));
    }
    Ok(DVector::from_iterator(tau.len(), tau.iter().map(|t| libm::log(t / slack))))
}

/// Output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainResult {
    pub draws: Vec<PosteriorDraw>,
    /// Log marginal posterior of `tau` at every stored draw.
    pub log_posterior: Vec<f64>,
    pub accept_rate: f64,
    pub seed: u64,
    pub warnings: Vec<String>,
    /// Final adaptation factor (unconstrained coordinates).
    pub final_chol: DMatrix<f64>,
}

impl ChainResult {
    /// Scalar parameter traces: every `tau_k`, every entry of `B`
    /// (column-major) and the upper triangle of `Sigma`.
    pub fn parameter_traces(&self) -> (Vec<String>, Vec<Vec<f64>>) {
        let Some(first) = self.draws.first() else {
            return (Vec::new(), Vec::new());
        };
        let names = parameter_names(first);
        let mut traces = vec![Vec::with_capacity(self.draws.len()); names.len()];
        for d in &self.draws {
            for (t, v) in traces.iter_mut().zip(flatten_draw(d)) {
                t.push(v);
            }
        }
        (names, traces)
    }
}

pub fn parameter_names(draw: &PosteriorDraw) -> Vec<String> {
    let mut names = Vec::new();
    for k in 0..draw.tau.tau.len() {
        names.push(format!("tau[{}]", k + 1));
    }
    let (q, m) = draw.b.shape();
    for j in 0..m {
        for i in 0..q {
            names.push(format!("B[{},{}]", i + 1, j + 1));
        }
    }
    for j in 0..m {
        for i in 0..=j {
            names.push(format!("Sigma[{},{}]", i + 1, j + 1));
        }
    }
    names
}

pub fn flatten_draw(draw: &PosteriorDraw) -> Vec<f64> {
    let mut v: Vec<f64> = draw.tau.tau.clone();
    v.extend(draw.b.iter().copied());
    let m = draw.sigma.nrows();
    for j in 0..m {
        for i in 0..=j {
            v.push(draw.sigma[(i, j)]);
        }
    }
    v
}

/// Runs one chain of the sampler. The output is a pure function of
/// `(model, config, seed)`.
pub fn run_chain(model: &MsgpModel, config: &McmcConfig, seed: u64) -> Result<ChainResult> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cache = FactorCache::new();
    let c = model.budget();
    let p = model.p();
    let mut warnings = Vec::new();
    let mut draws = Vec::with_capacity(config.stored_draws());
    let mut log_posterior = Vec::with_capacity(config.stored_draws());

    let store = |j: usize| j > config.burn_in && (j - config.burn_in) % config.thin == 0;

    if let Some(fixed) = &config.fixed_tau {
        let tau = model.cutoff(fixed.clone())?;
        let cond = model.conditional(&tau, Some(&mut cache))?;
        for j in 1..=config.iterations {
            if store(j) {
                draws.push(model.sample_b_sigma(&cond, &mut rng)?);
                log_posterior.push(cond.log_marginal);
            }
        }
        return Ok(ChainResult {
            draws,
            log_posterior,
            accept_rate: 0.0,
            seed,
            warnings,
            final_chol: DMatrix::zeros(p, p),
        });
    }

    // Start near the centroid (z = 0), redrawing if the start is infeasible.
    let mut current: Option<(DVector<f64>, TauConditional, f64)> = None;
    for attempt in 0..100 {
        let spread = if attempt == 0 { config.init_spread } else { config.init_spread.max(0.5) };
        let z = DVector::<f64>::from_fn(p, |_, _| { let e: f64 = StandardNormal.sample(&mut rng); spread * e });
        let (tau, log_jac) = tau_from_unconstrained(&z, c);
        let tau = CutoffVector { tau, c, omega: model.omega() };
        if let Ok(cond) = model.conditional(&tau, Some(&mut cache)) {
            if cond.log_marginal.is_finite() {
                let lt = cond.log_marginal + log_jac;
                current = Some((z, cond, lt));
                break;
            }
        }
    }
    let (z0, mut cond, lt0) =
        current.ok_or_else(|| Error::Degenerate("no feasible starting value for tau".into()))?;
    let mut state = RamState::new(z0, lt0, config.initial_scale, config.target_accept, config.gamma);
    state.adapt = config.adapt;
    let mut accepted = 0usize;

    for j in 1..=config.iterations {
        let mut proposal_cond: Option<TauConditional> = None;
        let ok = ram_step(
            &mut state,
            |z| {
                let (tau, log_jac) = tau_from_unconstrained(z, c);
                let tau = CutoffVector { tau, c, omega: model.omega() };
                match model.conditional(&tau, Some(&mut cache)) {
                    Ok(pc) if pc.log_marginal.is_finite() => {
                        let lt = pc.log_marginal + log_jac;
                        proposal_cond = Some(pc);
                        lt
                    }
                    _ => f64::NEG_INFINITY,
                }
            },
            &mut rng,
        );
        if ok {
            accepted += 1;
            if let Some(pc) = proposal_cond {
                cond = pc;
            }
        }
        if store(j) {
            draws.push(model.sample_b_sigma(&cond, &mut rng)?);
            log_posterior.push(cond.log_marginal);
        }
    }

    let accept_rate = if config.iterations > 0 {
        accepted as f64 / config.iterations as f64
    } else {
        0.0
    };
    if config.iterations > 0 && accept_rate < 0.05 {
        warnings.push(format!(
            "tau acceptance rate {accept_rate:.4} is far below the target {}",
            config.target_accept
        ));
    }
    if state.rebuilds > 0 {
        warnings.push(format!("adaptation factor rebuilt {} times after failed downdates", state.rebuilds));
    }
    Ok(ChainResult {
        draws,
        log_posterior,
        accept_rate,
        seed,
        warnings,
        final_chol: state.chol,
    })
}

/// Rejects repeated chain seeds.
pub fn check_distinct_seeds(seeds: &[u64]) -> Result<()> {
    for (i, s) in seeds.iter().enumerate() {
        if seeds[..i].contains(s) {
            return Err(Error::invalid(format!("duplicate chain seed {s}")));
        }
    }
    if seeds.is_empty() {
        return Err(Error::invalid("at least one chain is required"));
    }
    Ok(())
}

/// Runs chains one after another; the std crate runs the same chains
/// concurrently with identical results.
pub fn run_chains_sequential(model: &MsgpModel, config: &McmcConfig, seeds: &[u64]) -> Result<Vec<ChainResult>> {
    check_distinct_seeds(seeds)?;
    seeds.iter().map(|&s| run_chain(model, config, s)).collect()
}

/// Gelman–Rubin diagnostic for one scalar parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct PsrfEntry {
    pub name: String,
    pub point: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PsrfReport {
    pub entries: Vec<PsrfEntry>,
}

impl PsrfReport {
    pub fn max_point(&self) -> f64 {
        self.entries.iter().map(|e| e.point).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Fraction of parameters whose point estimate is below `threshold`.
    pub fn fraction_below(&self, threshold: f64) -> f64 {
        if self.entries.is_empty() {
            return 1.0;
        }
        self.entries.iter().filter(|e| e.point < threshold).count() as f64 / self.entries.len() as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn var(v: &[f64]) -> f64 {
    let mu = mean(v);
    v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (v.len() as f64 - 1.0)
}

fn cov(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0)
}

/// Potential scale reduction factor of one parameter from `chains` equal
/// length traces, with the upper limit of the `confidence` interval. Uses
/// the sampling-variability corrections of Brooks and Gelman (1998).
pub fn psrf_scalar(chains: &[&[f64]], confidence: f64) -> Result<(f64, f64)> {
    let mc = chains.len();
    if mc < 2 {
        return Err(Error::invalid("PSRF needs at least two chains"));
    }
    let n = chains[0].len();
    if chains.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("PSRF needs chains of equal length"));
    }
    if n < 10 {
        return Err(Error::invalid("PSRF needs chains of length >= 10"));
    }
    let (nf, mf) = (n as f64, mc as f64);
    let s2: Vec<f64> = chains.iter().map(|c| var(c)).collect();
    let xbar: Vec<f64> = chains.iter().map(|c| mean(c)).collect();
    let xbar2: Vec<f64> = xbar.iter().map(|x| x * x).collect();
    let w = mean(&s2);
    let b = nf * var(&xbar);
    if w == 0.0 {
        return Ok(if b == 0.0 { (1.0, 1.0) } else { (f64::INFINITY, f64::INFINITY) });
    }
    let muhat = mean(&xbar);
    let var_w = var(&s2) / mf;
    let var_b = 2.0 * b * b / (mf - 1.0);
    let cov_wb = (nf / mf) * (cov(&s2, &xbar2) - 2.0 * muhat * cov(&s2, &xbar));
    let v = (nf - 1.0) / nf * w + (1.0 + 1.0 / mf) * b / nf;
    let var_v = ((nf - 1.0) * (nf - 1.0) * var_w
        + (1.0 + 1.0 / mf) * (1.0 + 1.0 / mf) * var_b
        + 2.0 * (nf - 1.0) * (1.0 + 1.0 / mf) * cov_wb)
        / (nf * nf);
    let df_adj = if var_v > 0.0 {
        let df_v = 2.0 * v * v / var_v;
        (df_v + 3.0) / (df_v + 1.0)
    } else {
        1.0
    };
    let b_df = mf - 1.0;
    let w_df = if var_w > 0.0 { 2.0 * w * w / var_w } else { f64::INFINITY };
    let r2_fixed = (nf - 1.0) / nf;
    let r2_random = (1.0 + 1.0 / mf) * (1.0 / nf) * (b / w);
    let point = libm::sqrt(df_adj * (r2_fixed + r2_random));
    let q = special::f_quantile(0.5 * (1.0 + confidence), b_df, w_df);
    let upper = libm::sqrt(df_adj * (r2_fixed + q * r2_random));
    Ok((point, upper))
}

/// Per-parameter PSRF with 95% upper limits over named traces; `traces[c][k]`
/// is the trace of parameter `k` in chain `c`.
pub fn psrf(names: &[String], traces: &[Vec<Vec<f64>>]) -> Result<PsrfReport> {
    if traces.len() < 2 {
        return Err(Error::invalid("PSRF needs at least two chains"));
    }
    let mut entries = Vec::with_capacity(names.len());
    for (k, name) in names.iter().enumerate() {
        let per_chain: Vec<&[f64]> = traces
            .iter()
            .map(|t| t.get(k).map(|v| v.as_slice()).ok_or_else(|| Error::invalid("chains have different parameters")))
            .collect::<Result<_>>()?;
        let (point, upper) = psrf_scalar(&per_chain, 0.95)?;
        entries.push(PsrfEntry {
            name: name.clone(),
            point,
            upper,
        });
    }
    Ok(PsrfReport { entries })
}

/// PSRF of every scalar parameter of a set of chains.
pub fn compute_psrf(chains: &[ChainResult]) -> Result<PsrfReport> {
    if chains.len() < 2 {
        return Err(Error::invalid("PSRF needs at least two chains"));
    }
    let n = chains[0].draws.len();
    if chains.iter().any(|c| c.draws.len() != n) {
        return Err(Error::invalid("PSRF needs chains of equal length"));
    }
    let mut names = Vec::new();
    let mut traces = Vec::with_capacity(chains.len());
    for c in chains {
        let (nm, t) = c.parameter_traces();
        names = nm;
        traces.push(t);
    }
    psrf(&names, &traces)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn logistic_map_round_trip_and_jacobian() {
        let z = DVector::from_vec(vec![0.3, -1.2, 2.0]);
        let (tau, log_jac) = tau_from_unconstrained(&z, 2.5);
        assert!(tau.iter().sum::<f64>() < 2.5);
        let back = unconstrained_from_tau(&tau, 2.5).unwrap();
        assert!((back - &z).amax() < 1e-12);
        // Finite-difference Jacobian determinant.
        let h = 1e-6;
        let mut jac = DMatrix::<f64>::zeros(3, 3);
        for k in 0..3 {
            let mut zp = z.clone();
            zp[k] += h;
            let mut zm = z.clone();
            zm[k] -= h;
            let (tp, _) = tau_from_unconstrained(&zp, 2.5);
            let (tm, _) = tau_from_unconstrained(&zm, 2.5);
            for i in 0..3 {
                jac[(i, k)] = (tp[i] - tm[i]) / (2.0 * h);
            }
        }
        assert_relative_eq!(jac.determinant().abs().ln(), log_jac, epsilon = 1e-6);
    }

    #[test]
    fn flat_target_always_accepts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = RamState::new(DVector::zeros(2), 0.0, 0.1, 0.234, 2.0 / 3.0);
        for _ in 0..500 {
            assert!(ram_step(&mut s, |_| 0.0, &mut rng));
        }
        assert!(s.chol[(0, 0)] > 0.0 && s.chol[(1, 1)] > 0.0);
    }

    #[test]
    fn stored_draw_count() {
        assert_eq!(McmcConfig::default().stored_draws(), 1_960);
        let c = McmcConfig { iterations: 100, burn_in: 100, ..McmcConfig::default() };
        assert_eq!(c.stored_draws(), 0);
    }

    #[test]
    fn psrf_identical_chains() {
        let a: Vec<f64> = (0..200).map(|i| libm::sin(i as f64 * 0.7)).collect();
        let (point, upper) = psrf_scalar(&[&a, &a, &a], 0.95).unwrap();
        assert_relative_eq!(point, libm::sqrt(199.0 / 200.0), epsilon = 1e-12);
        assert_relative_eq!(upper, point, epsilon = 1e-12);
    }

    #[test]
    fn psrf_rejects_bad_shapes() {
        let a = [0.0; 20];
        let b = [0.0; 19];
        assert!(psrf_scalar(&[&a, &b], 0.95).is_err());
        assert!(psrf_scalar(&[&a], 0.95).is_err());
        assert!(psrf_scalar(&[&a[..5], &a[..5]], 0.95).is_err());
    }

    #[test]
    fn duplicate_seeds_rejected() {
        assert!(check_distinct_seeds(&[1, 2, 1]).is_err());
        assert!(check_distinct_seeds(&[1, 2, 3]).is_ok());
    }
}
