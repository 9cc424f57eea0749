//! K-fold cross-validation over kernels and sparsity levels.
//!
//! Each fold is fitted by MCMC on the remaining folds; held-out points are
//! predicted by the matrix-t location averaged over evenly spaced posterior
//! `tau` draws. `P = 1 - SSE/SST` with `SST` taken around the fold's training
//! mean, and `rho` is the RMSE. Both use the standardized outputs.

use std::time::Instant;

use msgp_core::design::{DesignMatrix, OutputMatrix};
use msgp_core::emulator::MsgpModel;
use msgp_core::kernels::KernelFamily;
use msgp_core::mcmc;
use msgp_core::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{MsgpError, Result};

/// Per-output `P` and `rho` of one fold (or of the pooled folds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub p: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Metrics {
    pub fn mean_p(&self) -> f64 {
        self.p.iter().sum::<f64>() / self.p.len() as f64
    }

    pub fn mean_rho(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }
}

/// Sums behind [`Metrics`]: per output, SSE, SST and the point count.
#[derive(Debug, Clone, PartialEq)]
struct Sums {
    sse: Vec<f64>,
    sst: Vec<f64>,
    count: usize,
}

impl Sums {
    fn of(observed: &DMatrix<f64>, predicted: &DMatrix<f64>, train_mean: &[f64]) -> Self {
        let m = observed.ncols();
        let mut sse = vec![0.0; m];
        let mut sst = vec![0.0; m];
        for j in 0..m {
            for i in 0..observed.nrows() {
                let e = observed[(i, j)] - predicted[(i, j)];
                let d = observed[(i, j)] - train_mean[j];
                sse[j] += e * e;
                sst[j] += d * d;
            }
        }
        Sums {
            sse,
            sst,
            count: observed.nrows(),
        }
    }

    fn add(&mut self, other: &Sums) {
        for j in 0..self.sse.len() {
            self.sse[j] += other.sse[j];
            self.sst[j] += other.sst[j];
        }
        self.count += other.count;
    }

    fn metrics(&self) -> Metrics {
        Metrics {
            p: self.sse.iter().zip(&self.sst).map(|(e, t)| 1.0 - e / t).collect(),
            rho: self.sse.iter().map(|e| (e / self.count as f64).sqrt()).collect(),
        }
    }
}

/// `P` and `rho` of predictions against observations.
pub fn metrics(observed: &DMatrix<f64>, predicted: &DMatrix<f64>, train_mean: &[f64]) -> Metrics {
    Sums::of(observed, predicted, train_mean).metrics()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    /// Held-out row indices into the full data set.
    pub test_rows: Vec<usize>,
    pub train_mean: Vec<f64>,
    /// Held-out observations and predictions, row-major (standardized).
    pub observed: Vec<Vec<f64>>,
    pub predicted: Vec<Vec<f64>>,
    pub metrics: Metrics,
    pub fit_seconds: f64,
    pub accept_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvLevel {
    pub kernel: String,
    pub omega: f64,
    pub folds: Vec<FoldResult>,
    /// Pooled over folds: `1 - sum SSE / sum SST` and the overall RMSE.
    pub aggregate: Metrics,
    pub mean_p: f64,
    pub mean_rho: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub config_digest: String,
    pub k: usize,
    pub output_names: Vec<String>,
    pub levels: Vec<CvLevel>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>], m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j])
}

impl CvLevel {
    /// Recomputes every metric from the persisted predictions.
    pub fn recompute(&self, m: usize) -> (Vec<Metrics>, Metrics) {
        let mut total: Option<Sums> = None;
        let mut per_fold = Vec::new();
        for f in &self.folds {
            let s = Sums::of(&from_rows(&f.observed, m), &from_rows(&f.predicted, m), &f.train_mean);
            per_fold.push(s.metrics());
            match &mut total {
                Some(t) => t.add(&s),
                None => total = Some(s),
            }
        }
        (per_fold, total.expect("at least two folds").metrics())
    }
}

impl CvReport {
    /// Comparison table: one row per (kernel, omega).
    pub fn table(&self) -> String {
        let mut out = String::from("kernel,omega,mean_P,mean_rho,fit_seconds\n");
        for l in &self.levels {
            out.push_str(&format!(
                "{},{},{:.4},{:.4},{:.3}\n",
                l.kernel, l.omega, l.mean_p, l.mean_rho, l.fit_seconds
            ));
        }
        out
    }
}

/// Shuffled assignment of `n` rows to `k` folds of near-equal size.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (pos, i) in idx.into_iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

fn kernel_label(f: &KernelFamily) -> &'static str {
    match f {
        KernelFamily::PowerExponential { .. } => "power_exponential",
        KernelFamily::Bohman => "bohman",
        KernelFamily::TruncatedPower { .. } => "truncated_power",
        KernelFamily::MaternWendland { .. } => "matern_wendland",
    }
}

fn subset(design: &DesignMatrix, outputs: &OutputMatrix, rows: &[usize]) -> Result<(DesignMatrix, OutputMatrix)> {
    let x = design.values.select_rows(rows);
    let y = outputs.values.select_rows(rows);
    let d = DesignMatrix::with_scaling(x, design.specs.clone(), design.scaled)?;
    let mut o = OutputMatrix::new(y, outputs.names.clone())?;
    o.column_means.clone_from(&outputs.column_means);
    o.column_sds.clone_from(&outputs.column_sds);
    o.standardized = outputs.standardized;
    Ok((d, o))
}

struct Job {
    level: usize,
    fold: usize,
    config: RunConfig,
}

fn run_fold(
    config: &RunConfig,
    design: &DesignMatrix,
    outputs: &OutputMatrix,
    folds: &[Vec<usize>],
    fold: usize,
    seed: u64,
) -> Result<FoldResult> {
    let test_rows = &folds[fold];
    let train_rows: Vec<usize> = folds
        .iter()
        .enumerate()
        .filter(|(f, _)| *f != fold)
        .flat_map(|(_, r)| r.iter().copied())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let (xtr, ytr) = subset(design, outputs, &train_rows)?;
    let xte = design.values.select_rows(test_rows);
    let yte = outputs.values.select_rows(test_rows);
    let m = outputs.m();
    let q = config.basis_q(design.p());
    if train_rows.len() <= q {
        return Err(MsgpError::data(format!(
            "fold {fold}: {} training rows cannot support a basis of rank {q}",
            train_rows.len()
        )));
    }
    let train_mean: Vec<f64> = (0..m).map(|j| ytr.values.column(j).mean()).collect();

    let start = Instant::now();
    let model_cfg = config.model_config(design.p(), m)?;
    let model = MsgpModel::new(xtr, ytr, &model_cfg)?;
    let chain = mcmc::run_chain(&model, &config.mcmc.to_config(), seed)?;
    let fit_seconds = start.elapsed().as_secs_f64();

    let draws: Vec<_> = chain.draws.iter().collect();
    let chosen = crate::parallel::select_draws(&draws, Some(config.cv.max_draws.max(1)));
    let mut pred = DMatrix::<f64>::zeros(xte.nrows(), m);
    let mut cache = msgp_core::sparse::FactorCache::new();
    for d in &chosen {
        let cond = model.conditional(&d.tau, Some(&mut cache))?;
        pred += model.predict_matrix_t(&cond, &xte)?.location;
    }
    pred /= chosen.len() as f64;
    let metrics = metrics(&yte, &pred, &train_mean);
    Ok(FoldResult {
        fold,
        test_rows: test_rows.clone(),
        train_mean,
        observed: rows_of(&yte),
        predicted: rows_of(&pred),
        metrics,
        fit_seconds,
        accept_rate: chain.accept_rate,
    })
}

/// Cross-validates every sparsity level in `config.cv.omegas` (and the
/// tapered Matérn kernel when `config.cv.include_taper` is set) on a scaled
/// design and standardized outputs.
pub fn cross_validate(
    design: &DesignMatrix,
    outputs: &OutputMatrix,
    config: &RunConfig,
    pool: &rayon::ThreadPool,
) -> Result<CvReport> {
    let k = config.cv.folds;
    let n = design.n();
    if k < 2 {
        return Err(MsgpError::config("cross-validation needs at least two folds"));
    }
    if n < 2 * k {
        return Err(MsgpError::data(format!("{n} points are too few for {k} folds")));
    }
    if outputs.n() != n {
        return Err(MsgpError::data("design and outputs have different row counts"));
    }
    let folds = fold_assignment(n, k, config.cv.seed);

    let mut level_cfgs: Vec<RunConfig> = Vec::new();
    let mut families = vec![config.kernel.family];
    if config.cv.include_taper && config.kernel.family != crate::config::FamilyName::MaternWendland {
        families.push(crate::config::FamilyName::MaternWendland);
    }
    for fam in families {
        for &omega in &config.cv.omegas {
            let mut c = config.clone();
            c.kernel.family = fam;
            c.kernel.omega = omega;
            level_cfgs.push(c);
        }
    }
    let jobs: Vec<Job> = level_cfgs
        .iter()
        .enumerate()
        .flat_map(|(l, c)| {
            (0..k).map(move |f| Job {
                level: l,
                fold: f,
                config: c.clone(),
            })
        })
        .collect();
    let results: Vec<Result<FoldResult>> = pool.install(|| {
        jobs.par_iter()
            .map(|j| {
                let seed = config.cv.seed.wrapping_add(7919 * (j.fold as u64 + 1));
                run_fold(&j.config, design, outputs, &folds, j.fold, seed)
            })
            .collect()
    });

    let mut levels: Vec<CvLevel> = level_cfgs
        .iter()
        .map(|c| -> Result<CvLevel> {
            let spec = c.kernel.to_spec(design.p())?;
            Ok(CvLevel {
                kernel: kernel_label(&spec.family).to_string(),
                omega: c.kernel.omega,
                folds: Vec::new(),
                aggregate: Metrics {
                    p: Vec::new(),
                    rho: Vec::new(),
                },
                mean_p: 0.0,
                mean_rho: 0.0,
                fit_seconds: 0.0,
            })
        })
        .collect::<Result<_>>()?;
    for (job, res) in jobs.iter().zip(results) {
        levels[job.level].folds.push(res?);
    }
    let m = outputs.m();
    for l in &mut levels {
        let (_, agg) = l.recompute(m);
        l.mean_p = agg.mean_p();
        l.mean_rho = agg.mean_rho();
        l.aggregate = agg;
        l.fit_seconds = l.folds.iter().map(|f| f.fit_seconds).sum();
    }
    Ok(CvReport {
        config_digest: config.digest(),
        k,
        output_names: outputs.names.clone(),
        levels,
    })
}
