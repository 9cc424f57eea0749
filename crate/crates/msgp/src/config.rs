//! Run configuration. Every section is optional and unknown keys are
//! rejected.
//!
//! ```json
//! {
//!   "kernel": {"family": "bohman", "omega": 0.9, "nugget": 1e-8},
//!   "basis": "linear",
//!   "mcmc": {"iterations": 50000, "burn_in": 1000, "thin": 25, "chains": 3,
//!            "target_accept": 0.234, "gamma": 0.6667, "seeds": [1, 2, 3]},
//!   "sa": {"s": 5000, "seed": 11},
//!   "cv": {"folds": 5, "omegas": [0.8, 0.9, 0.95, 0.99]}
//! }
//! ```

use std::path::Path;

use msgp_core::emulator::{BasisKind, MniwPrior, ModelConfig, TauPrior};
use msgp_core::kernels::{self, CutoffRule, KernelFamily, KernelSpec};
use msgp_core::mcmc::McmcConfig;
use msgp_core::sensitivity::{BlockMode, Estimator};
use msgp_core::DMatrix;
use serde::{Deserialize, Serialize};

use crate::{MsgpError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    pub basis: BasisName,
    pub prior: PriorConfig,
    pub mcmc: McmcSection,
    pub outputs: OutputSection,
    pub sa: SaSection,
    pub cv: CvSection,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    #[default]
    Bohman,
    TruncatedPower,
    MaternWendland,
    PowerExponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CutoffRuleName {
    #[default]
    ZeroFraction,
    LiteralQuantile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Phi {
    Scalar(f64),
    PerDimension(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelConfig {
    pub family: FamilyName,
    /// Truncated power shape (default 1.5).
    pub alpha: Option<f64>,
    /// Truncated power exponent (default: the validity bound for `alpha`).
    pub nu: Option<f64>,
    /// Matérn inverse range (scalar) or power exponential rates.
    pub phi: Option<Phi>,
    pub taper_dim: Option<u32>,
    pub taper_k: Option<u32>,
    pub omega: f64,
    pub nugget: f64,
    pub cutoff_rule: CutoffRuleName,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            family: FamilyName::Bohman,
            alpha: None,
            nu: None,
            phi: None,
            taper_dim: None,
            taper_k: None,
            omega: 0.9,
            nugget: kernels::DEFAULT_NUGGET,
            cutoff_rule: CutoffRuleName::ZeroFraction,
        }
    }
}

impl KernelConfig {
    pub fn to_spec(&self, p: usize) -> Result<KernelSpec> {
        let family = match self.family {
            FamilyName::Bohman => KernelFamily::Bohman,
            FamilyName::TruncatedPower => {
                let alpha = self.alpha.unwrap_or(1.5);
                let nu = match self.nu {
                    Some(nu) => nu,
                    None => kernels::truncated_power_nu_bound(alpha)
                        .ok_or_else(|| MsgpError::config(format!("no valid nu for alpha = {alpha}")))?,
                };
                KernelFamily::TruncatedPower { alpha, nu }
            }
            FamilyName::MaternWendland => {
                let phi = match &self.phi {
                    None => 1.0,
                    Some(Phi::Scalar(v)) => *v,
                    Some(Phi::PerDimension(_)) => {
                        return Err(MsgpError::config("matern_wendland takes a scalar phi"));
                    }
                };
                KernelFamily::MaternWendland {
                    phi,
                    taper_dim: self.taper_dim.unwrap_or(1),
                    taper_k: self.taper_k.unwrap_or(2),
                }
            }
            FamilyName::PowerExponential => {
                let phi = match &self.phi {
                    None => vec![1.0; p],
                    Some(Phi::Scalar(v)) => vec![*v; p],
                    Some(Phi::PerDimension(v)) => {
                        if v.len() != p {
                            return Err(MsgpError::config(format!(
                                "power_exponential phi has {} entries for {p} inputs",
                                v.len()
                            )));
                        }
                        v.clone()
                    }
                };
                KernelFamily::PowerExponential { phi }
            }
        };
        let spec = KernelSpec {
            family,
            nugget: self.nugget,
        };
        spec.validate().map_err(|e| MsgpError::config(format!("kernel: {e}")))?;
        Ok(spec)
    }

    pub fn cutoff_rule(&self) -> CutoffRule {
        match self.cutoff_rule {
            CutoffRuleName::ZeroFraction => CutoffRule::ZeroFraction,
            CutoffRuleName::LiteralQuantile => CutoffRule::LiteralQuantile,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BasisName {
    Constant,
    #[default]
    Linear,
}

impl From<BasisName> for BasisKind {
    fn from(b: BasisName) -> Self {
        match b {
            BasisName::Constant => BasisKind::Constant,
            BasisName::Linear => BasisKind::Linear,
        }
    }
}

/// Scalar parameterization of the MNIW prior: `B0 = b0 * 1`,
/// `Lambda0 = lambda0 * I`, `S0 = s0 * I`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PriorConfig {
    pub b0: f64,
    pub lambda0: f64,
    pub s0: f64,
    /// Defaults to `m + 2`.
    pub delta0: Option<f64>,
    /// Exponential rates of the `tau` prior; empty means uniform.
    pub tau_rates: Vec<f64>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            b0: 0.0,
            lambda0: 1e-4,
            s0: 1.0,
            delta0: None,
            tau_rates: Vec::new(),
        }
    }
}

impl PriorConfig {
    pub fn to_prior(&self, q: usize, m: usize) -> MniwPrior {
        MniwPrior {
            b0: DMatrix::from_element(q, m, self.b0),
            lambda0: DMatrix::identity(q, q) * self.lambda0,
            s0: DMatrix::identity(m, m) * self.s0,
            delta0: self.delta0.unwrap_or(m as f64 + 2.0),
            tau_prior: if self.tau_rates.is_empty() {
                TauPrior::UniformSimplex
            } else {
                TauPrior::Exponential {
                    rates: self.tau_rates.clone(),
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct McmcSection {
    pub iterations: usize,
    pub burn_in: usize,
    pub thin: usize,
    pub chains: usize,
    pub target_accept: f64,
    pub gamma: f64,
    pub initial_scale: f64,
    pub init_spread: f64,
    pub adapt: bool,
    /// One seed per chain; derived from the global seed when empty.
    pub seeds: Vec<u64>,
    pub fixed_tau: Option<Vec<f64>>,
}

impl Default for McmcSection {
    fn default() -> Self {
        let d = McmcConfig::default();
        McmcSection {
            iterations: d.iterations,
            burn_in: d.burn_in,
            thin: d.thin,
            chains: 3,
            target_accept: d.target_accept,
            gamma: d.gamma,
            initial_scale: d.initial_scale,
            init_spread: 0.5,
            adapt: d.adapt,
            seeds: Vec::new(),
            fixed_tau: None,
        }
    }
}

impl McmcSection {
    pub fn to_config(&self) -> McmcConfig {
        McmcConfig {
            iterations: self.iterations,
            burn_in: self.burn_in,
            thin: self.thin,
            target_accept: self.target_accept,
            gamma: self.gamma,
            initial_scale: self.initial_scale,
            init_spread: self.init_spread,
            adapt: self.adapt,
            fixed_tau: self.fixed_tau.clone(),
        }
    }

    /// Chain seeds: the configured list, or `base + 1000 * (c + 1)`.
    pub fn chain_seeds(&self, base: u64) -> Result<Vec<u64>> {
        if self.seeds.is_empty() {
            return Ok((0..self.chains as u64).map(|c| base.wrapping_add(1000 * (c + 1))).collect());
        }
        if self.seeds.len() != self.chains {
            return Err(MsgpError::config(format!(
                "mcmc.seeds has {} entries for {} chains",
                self.seeds.len(),
                self.chains
            )));
        }
        Ok(self.seeds.clone())
    }
}

/// One aggregated output column: the row mean of `columns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputGroup {
    pub name: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub standardize: bool,
    /// Aggregate the raw outputs into groups before fitting.
    pub groups: Vec<OutputGroup>,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            standardize: true,
            groups: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorName {
    Uncentered,
    #[default]
    Centered,
    Contrast,
}

impl From<EstimatorName> for Estimator {
    fn from(e: EstimatorName) -> Self {
        match e {
            EstimatorName::Uncentered => Estimator::Uncentered,
            EstimatorName::Centered => Estimator::Centered,
            EstimatorName::Contrast => Estimator::Contrast,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SaSection {
    pub s: usize,
    pub seed: u64,
    pub estimator: EstimatorName,
    /// Only accumulate the diagonals of the covariance blocks.
    pub diagonal_only: bool,
    /// Posterior draws used, evenly spaced over the pooled chains.
    pub max_draws: Option<usize>,
    /// Fresh Saltelli matrices for every draw instead of shared ones.
    pub resample_per_draw: bool,
    pub chunk: usize,
    pub grid: usize,
    /// Base sample size of the main-effect curves (0 disables them).
    pub main_effect_s: usize,
}

impl Default for SaSection {
    fn default() -> Self {
        SaSection {
            s: 5000,
            seed: 11,
            estimator: EstimatorName::Centered,
            diagonal_only: false,
            max_draws: Some(200),
            resample_per_draw: false,
            chunk: 5000,
            grid: 21,
            main_effect_s: 500,
        }
    }
}

impl SaSection {
    pub fn block_mode(&self) -> BlockMode {
        if self.diagonal_only {
            BlockMode::Diagonal
        } else {
            BlockMode::Full
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CvSection {
    pub folds: usize,
    pub omegas: Vec<f64>,
    /// Also run the Matérn·Wendland kernel at every sparsity level.
    pub include_taper: bool,
    /// Posterior `tau` draws averaged for the held-out predictions.
    pub max_draws: usize,
    pub seed: u64,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection {
            folds: 5,
            omegas: vec![0.8, 0.9, 0.95, 0.99],
            include_taper: false,
            max_draws: 20,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| MsgpError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| MsgpError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            MsgpError::Config(msg) => MsgpError::config(format!("{}: {msg}", path.display())),
            e => e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configuration serializes")
    }

    /// SHA-256 of the canonical (compact) JSON form.
    pub fn digest(&self) -> String {
        crate::io::sha256_hex(serde_json::to_string(self).expect("configuration serializes").as_bytes())
    }

    /// Validates everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if !(self.kernel.omega > 0.0 && self.kernel.omega < 1.0) {
            return Err(MsgpError::config("kernel.omega must lie in (0, 1)"));
        }
        if self.mcmc.chains == 0 {
            return Err(MsgpError::config("mcmc.chains must be >= 1"));
        }
        self.mcmc
            .to_config()
            .validate()
            .map_err(|e| MsgpError::config(format!("mcmc: {e}")))?;
        if self.mcmc.iterations > 0 && self.mcmc.to_config().stored_draws() == 0 {
            return Err(MsgpError::config("mcmc settings keep no draws"));
        }
        if !self.mcmc.seeds.is_empty() {
            msgp_core::mcmc::check_distinct_seeds(&self.mcmc.seeds).map_err(|e| MsgpError::config(e.to_string()))?;
        }
        if self.sa.s < msgp_core::sensitivity::MIN_SALTELLI_ROWS {
            return Err(MsgpError::config(format!(
                "sa.s must be >= {}",
                msgp_core::sensitivity::MIN_SALTELLI_ROWS
            )));
        }
        if self.sa.grid < 2 {
            return Err(MsgpError::config("sa.grid must be >= 2"));
        }
        if self.sa.max_draws == Some(0) {
            return Err(MsgpError::config("sa.max_draws must be >= 1"));
        }
        if self.cv.folds < 2 {
            return Err(MsgpError::config("cv.folds must be >= 2"));
        }
        if self.cv.omegas.iter().any(|w| !(*w > 0.0 && *w < 1.0)) {
            return Err(MsgpError::config("cv.omegas must lie in (0, 1)"));
        }
        if self.threads == Some(0) {
            return Err(MsgpError::config("threads must be >= 1"));
        }
        if self.prior.lambda0 <= 0.0 || self.prior.s0 <= 0.0 {
            return Err(MsgpError::config("prior.lambda0 and prior.s0 must be > 0"));
        }
        Ok(())
    }

    /// Core model configuration for `p` inputs and `m` outputs.
    pub fn model_config(&self, p: usize, m: usize) -> Result<ModelConfig> {
        let basis: BasisKind = self.basis.into();
        Ok(ModelConfig {
            basis,
            kernel: self.kernel.to_spec(p)?,
            prior: Some(self.prior.to_prior(basis.q(p), m)),
            omega: self.kernel.omega,
            cutoff_rule: self.kernel.cutoff_rule(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_json(r#"{"kernel": {"family": "bohman", "sigma": 1}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"mcmc": {"chains": 2}, "extra": 1}"#).is_err());
    }

    #[test]
    fn spec_example_parses() {
        let cfg = RunConfig::from_json(
            r#"{"kernel": {"family": "truncated_power", "alpha": 1.5, "nu": 2, "omega": 0.9, "nugget": 1e-8},
                "mcmc": {"iterations": 50000, "burn_in": 1000, "thin": 25, "chains": 3,
                         "target_accept": 0.234, "gamma": 0.6667, "seeds": [1, 2, 3]}}"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.mcmc.chain_seeds(0).unwrap(), vec![1, 2, 3]);
        let spec = cfg.kernel.to_spec(4).unwrap();
        assert_eq!(spec.family, KernelFamily::TruncatedPower { alpha: 1.5, nu: 2.0 });
    }

    #[test]
    fn invalid_truncated_power_pair_is_a_config_error() {
        let cfg = RunConfig::from_json(r#"{"kernel": {"family": "truncated_power", "alpha": 1.5, "nu": 1}}"#).unwrap();
        assert!(matches!(cfg.kernel.to_spec(2), Err(MsgpError::Config(_))));
    }

    #[test]
    fn duplicate_seeds_fail_validation() {
        let cfg = RunConfig::from_json(r#"{"mcmc": {"chains": 2, "seeds": [5, 5]}}"#).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn round_trip_and_digest_are_stable() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.digest(), cfg.digest());
        assert_eq!(cfg.digest().len(), 64);
    }
}
