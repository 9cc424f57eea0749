//! Thread-level parallelism: independent MCMC chains and the per-draw
//! sensitivity analysis. Results are always collected in input order, so
//! output does not depend on the worker count.

use msgp_core::design::VariableKind;
use msgp_core::emulator::{DrawPredictor, MsgpModel, PosteriorDraw};
use msgp_core::mcmc::{self, ChainResult, McmcConfig};
use msgp_core::sensitivity::{
    self, BlockMode, DrawIndices, Estimator, IndexPosterior, InputDistribution, MainEffectCurve, SaltelliMatrices,
};
use msgp_core::DMatrix;
use rayon::prelude::*;

use crate::{MsgpError, Result};

/// A pool with `threads` workers, or one per core.
pub fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build().map_err(|e| MsgpError::config(format!("thread pool: {e}")))
}

/// Runs one chain per seed concurrently. Duplicate seeds are rejected.
pub fn run_chains(
    model: &MsgpModel,
    config: &McmcConfig,
    seeds: &[u64],
    pool: &rayon::ThreadPool,
) -> Result<Vec<ChainResult>> {
    mcmc::check_distinct_seeds(seeds)?;
    config.validate()?;
    let results: Vec<msgp_core::Result<ChainResult>> =
        pool.install(|| seeds.par_iter().map(|&s| mcmc::run_chain(model, config, s)).collect());
    Ok(results.into_iter().collect::<msgp_core::Result<Vec<_>>>()?)
}

/// At most `max` draws evenly spaced over `draws`, in order.
pub fn select_draws<'a>(draws: &[&'a PosteriorDraw], max: Option<usize>) -> Vec<&'a PosteriorDraw> {
    let total = draws.len();
    match max {
        Some(k) if k < total => (0..k).map(|i| draws[i * total / k]).collect(),
        _ => draws.to_vec(),
    }
}

/// Sampling distributions of the scaled inputs: uniform on `[-1, 1]` for
/// continuous variables and equiprobable scaled level codes for categorical
/// ones.
pub fn input_distributions(model: &MsgpModel) -> Vec<InputDistribution> {
    model
        .design()
        .specs
        .iter()
        .map(|s| match &s.kind {
            VariableKind::Continuous { .. } => InputDistribution::Uniform { lower: -1.0, upper: 1.0 },
            VariableKind::Categorical { levels } => InputDistribution::Discrete {
                values: (0..levels.len()).map(|c| s.scale(c as f64)).collect(),
            },
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SaOptions {
    pub s: usize,
    pub seed: u64,
    pub estimator: Estimator,
    pub mode: BlockMode,
    pub chunk: usize,
    pub resample_per_draw: bool,
    pub grid: usize,
    /// Base sample size of the main-effect curves (0 disables them).
    pub main_effect_s: usize,
}

impl Default for SaOptions {
    fn default() -> Self {
        SaOptions {
            s: 5000,
            seed: 11,
            estimator: Estimator::Centered,
            mode: BlockMode::Full,
            chunk: 5000,
            resample_per_draw: false,
            grid: 21,
            main_effect_s: 500,
        }
    }
}

impl From<&crate::config::SaSection> for SaOptions {
    fn from(c: &crate::config::SaSection) -> Self {
        SaOptions {
            s: c.s,
            seed: c.seed,
            estimator: c.estimator.into(),
            mode: c.block_mode(),
            chunk: c.chunk,
            resample_per_draw: c.resample_per_draw,
            grid: c.grid,
            main_effect_s: c.main_effect_s,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SaResult {
    pub posterior: IndexPosterior,
    pub main_effects: Vec<MainEffectCurve>,
    /// Output correlation matrix used by the projection indices.
    pub output_correlation: DMatrix<f64>,
    /// True if the correlation matrix had to be repaired to be PSD.
    pub correlation_floored: bool,
    pub draws_used: usize,
}

/// Emulator response surface of one posterior draw in raw output units.
struct Surface<'a> {
    model: &'a MsgpModel,
    predictor: DrawPredictor,
}

impl Surface<'_> {
    fn eval(&self, x: &DMatrix<f64>) -> msgp_core::Result<DMatrix<f64>> {
        let z = self.predictor.predict_mean(x)?;
        self.model.outputs().destandardize_values(&z)
    }
}

/// Posterior distribution of the sensitivity indices: for every draw the
/// posterior-mean surface is pushed through the Saltelli matrices and the
/// indices computed; draws are processed in parallel and reduced in order.
pub fn sensitivity(
    model: &MsgpModel,
    draws: &[&PosteriorDraw],
    opts: &SaOptions,
    pool: &rayon::ThreadPool,
) -> Result<SaResult> {
    if draws.is_empty() {
        return Err(MsgpError::data("no posterior draws to analyse"));
    }
    let dists = input_distributions(model);
    let raw = model.outputs().destandardize_values(model.y())?;
    let (r, floored) = sensitivity::output_correlation_matrix(&raw, &model.outputs().names)?;
    let shared = if opts.resample_per_draw {
        None
    } else {
        Some(sensitivity::build_saltelli(&dists, opts.s, opts.seed)?)
    };
    let me_base = if opts.main_effect_s > 0 {
        Some(sensitivity::main_effect_base(&dists, opts.main_effect_s, opts.seed.wrapping_add(1))?)
    } else {
        None
    };
    let grids: Vec<Vec<f64>> = dists.iter().map(|d| d.grid(opts.grid)).collect();

    type PerDraw = (DrawIndices, Vec<DMatrix<f64>>);
    let per_draw = |(k, draw): (usize, &&PosteriorDraw)| -> Result<PerDraw> {
        let surface = Surface {
            model,
            predictor: DrawPredictor::new(model, draw)?,
        };
        let own;
        let mats: &SaltelliMatrices = match &shared {
            Some(m) => m,
            None => {
                own = sensitivity::build_saltelli(&dists, opts.s, opts.seed.wrapping_add(k as u64))?;
                &own
            }
        };
        let acc = sensitivity::accumulate(mats, model.m(), opts.mode, opts.chunk, |x| surface.eval(x))?;
        let decomp = acc.decomposition(opts.estimator)?;
        let indices = sensitivity::draw_indices(&decomp, &r)?;
        let mut effects = Vec::new();
        if let Some(base) = &me_base {
            for (j, grid) in grids.iter().enumerate() {
                effects.push(sensitivity::main_effect(base, j, grid, |x| surface.eval(x))?);
            }
        }
        Ok((indices, effects))
    };
    let results: Vec<Result<PerDraw>> = pool.install(|| draws.par_iter().enumerate().map(per_draw).collect());
    let results = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut indices = Vec::with_capacity(results.len());
    let mut effects: Vec<Vec<DMatrix<f64>>> = vec![Vec::new(); model.p()];
    for (ind, eff) in results {
        indices.push(ind);
        for (j, e) in eff.into_iter().enumerate() {
            effects[j].push(e);
        }
    }
    let main_effects = if me_base.is_some() {
        effects
            .iter()
            .enumerate()
            .map(|(j, e)| sensitivity::summarize_main_effect(j, grids[j].clone(), e))
            .collect::<msgp_core::Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(SaResult {
        posterior: sensitivity::summarize_draws(indices)?,
        main_effects,
        output_correlation: r,
        correlation_floored: floored,
        draws_used: draws.len(),
    })
}
