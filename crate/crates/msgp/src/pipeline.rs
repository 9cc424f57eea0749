//! Command implementations behind the `msgp` binary. Every stage wraps its
//! errors with a stage tag (`design-validation`, `standardize`, `fit`,
//! `diag`, `sa`, ...).

use std::path::{Path, PathBuf};

use msgp_core::design::{self, DesignMatrix, LhsOptions, OutputMatrix, VariableSpec};
use msgp_core::emulator::MsgpModel;
use msgp_core::mcmc::{self, PsrfReport};
use msgp_core::sensitivity::{self, BlockMode, Estimator, Summary};
use msgp_core::testfns::{self, TestFunction};
use msgp_core::DMatrix;
use serde::Serialize;

use crate::archive::ModelArchive;
use crate::config::RunConfig;
use crate::StageExt;
use crate::parallel::{self, SaOptions, SaResult};
use crate::{io, MsgpError, Result};

/// Fails with an IO error naming `path` if it is not a readable file.
pub fn require_file(path: &Path) -> Result<()> {
    std::fs::metadata(path).map(|_| ()).map_err(|e| MsgpError::io(path, e))
}

/// Rejects designs the emulator cannot use.
pub fn validate_design(design: &DesignMatrix, outputs: &OutputMatrix) -> Result<()> {
    if design.n() != outputs.n() {
        return Err(MsgpError::data(format!(
            "design has {} rows but outputs have {}",
            design.n(),
            outputs.n()
        )));
    }
    if let Some((i, j)) = design.duplicate_row() {
        return Err(MsgpError::data(format!("design rows {} and {} are identical", i + 1, j + 1)));
    }
    Ok(())
}

/// Applies the configured output aggregation to raw outputs.
pub fn aggregate(config: &RunConfig, outputs: &OutputMatrix) -> Result<OutputMatrix> {
    if config.outputs.groups.is_empty() {
        return Ok(outputs.clone());
    }
    let mut map = vec![usize::MAX; outputs.m()];
    for (g, group) in config.outputs.groups.iter().enumerate() {
        for col in &group.columns {
            let j = outputs
                .names
                .iter()
                .position(|n| n == col)
                .ok_or_else(|| MsgpError::config(format!("output group `{}`: no column `{col}`", group.name)))?;
            if map[j] != usize::MAX {
                return Err(MsgpError::config(format!("output column `{col}` is in two groups")));
            }
            map[j] = g;
        }
    }
    if let Some(j) = map.iter().position(|&g| g == usize::MAX) {
        return Err(MsgpError::config(format!("output column `{}` is in no group", outputs.names[j])));
    }
    let names: Vec<String> = config.outputs.groups.iter().map(|g| g.name.clone()).collect();
    Ok(design::aggregate_outputs(outputs, &map, &names)?)
}

/// Scaled design and (optionally standardized) outputs fed to the emulator.
pub fn model_inputs(
    config: &RunConfig,
    design_raw: &DesignMatrix,
    outputs_raw: &OutputMatrix,
) -> Result<(DesignMatrix, OutputMatrix)> {
    let x = design::scale_inputs(design_raw).stage("design-validation")?;
    let y = if config.outputs.standardize {
        design::standardize_outputs(outputs_raw).stage("standardize")?
    } else {
        outputs_raw.clone()
    };
    Ok((x, y))
}

/// Fits the emulator: validation, standardization, model building and the
/// parallel chains. `outputs_raw` must already be aggregated.
pub fn fit(
    config: &RunConfig,
    design_raw: &DesignMatrix,
    outputs_raw: &OutputMatrix,
    seed: u64,
    pool: &rayon::ThreadPool,
    digests: (Option<String>, Option<String>),
) -> Result<(ModelArchive, MsgpModel)> {
    config.validate().stage("config")?;
    validate_design(design_raw, outputs_raw).stage("design-validation")?;
    let (x, y) = model_inputs(config, design_raw, outputs_raw)?;
    let model_cfg = config.model_config(x.p(), y.m()).stage("fit")?;
    let model = MsgpModel::new(x, y, &model_cfg).stage("fit")?;
    let seeds = config.mcmc.chain_seeds(seed).stage("fit")?;
    let chains = parallel::run_chains(&model, &config.mcmc.to_config(), &seeds, pool).stage("fit")?;
    let archive = ModelArchive::new(config, design_raw, outputs_raw, &model, &chains, digests);
    Ok((archive, model))
}

/// PSRF of every parameter over the archived chains.
pub fn diagnose(archive: &ModelArchive) -> Result<PsrfReport> {
    let first = archive
        .chains
        .first()
        .and_then(|c| c.first())
        .ok_or_else(|| MsgpError::data("archive holds no draws"))?;
    let names = mcmc::parameter_names(first);
    let traces: Vec<Vec<Vec<f64>>> = archive
        .chains
        .iter()
        .map(|chain| {
            let flat: Vec<Vec<f64>> = chain.iter().map(mcmc::flatten_draw).collect();
            (0..names.len()).map(|k| flat.iter().map(|f| f[k]).collect()).collect()
        })
        .collect();
    Ok(mcmc::psrf(&names, &traces)?)
}

pub fn write_psrf(path: &Path, report: &PsrfReport, digest: &str) -> Result<()> {
    let rows: Vec<Vec<String>> = report
        .entries
        .iter()
        .map(|e| vec![e.name.clone(), e.point.to_string(), e.upper.to_string()])
        .collect();
    io::write_rows(path, &["parameter", "psrf", "upper_95"], &rows, Some(digest))
}

/// Runs the sensitivity analysis on (a subsample of) the archived draws.
pub fn analyse(
    archive: &ModelArchive,
    model: &MsgpModel,
    opts: &SaOptions,
    max_draws: Option<usize>,
    pool: &rayon::ThreadPool,
) -> Result<SaResult> {
    let pooled = archive.pooled_draws();
    let draws = parallel::select_draws(&pooled, max_draws);
    parallel::sensitivity(model, &draws, opts, pool)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexSummary {
    pub input: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputIndexSummary {
    pub input: String,
    pub output: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub q975: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexTables {
    /// Trace-based generalized first-order and total indices.
    pub first_order: Vec<IndexSummary>,
    pub total: Vec<IndexSummary>,
    pub projection: Vec<IndexSummary>,
    pub projection_interaction: Vec<IndexSummary>,
    pub projection_total: Vec<IndexSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerOutputTables {
    pub first_order: Vec<OutputIndexSummary>,
    pub total: Vec<OutputIndexSummary>,
}

/// The `indices.json` document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndexReport {
    pub config_digest: String,
    pub s: usize,
    pub seed: u64,
    pub estimator: String,
    pub draws_used: usize,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub indices: IndexTables,
    pub per_output: PerOutputTables,
    /// Inputs ordered by the absolute posterior-mean projection index.
    pub ranking: Vec<String>,
    pub output_correlation_floored: bool,
}

fn summary(input: &str, s: &Summary) -> IndexSummary {
    IndexSummary {
        input: input.to_string(),
        mean: s.mean,
        sd: s.sd,
        q025: s.q025,
        q975: s.q975,
    }
}

pub fn index_report(result: &SaResult, model: &MsgpModel, opts: &SaOptions, digest: &str) -> IndexReport {
    let inputs = model.design().names();
    let outputs = model.outputs().names.clone();
    let post = &result.posterior;
    let table = |v: &[Summary]| -> Vec<IndexSummary> { inputs.iter().zip(v).map(|(n, s)| summary(n, s)).collect() };
    let per_output = |v: &[Vec<Summary>]| -> Vec<OutputIndexSummary> {
        let mut out = Vec::new();
        for (j, row) in v.iter().enumerate() {
            for (k, s) in row.iter().enumerate() {
                out.push(OutputIndexSummary {
                    input: inputs[j].clone(),
                    output: outputs[k].clone(),
                    mean: s.mean,
                    sd: s.sd,
                    q025: s.q025,
                    q975: s.q975,
                });
            }
        }
        out
    };
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    order.sort_by(|&a, &b| post.projection[b].mean.abs().total_cmp(&post.projection[a].mean.abs()));
    IndexReport {
        config_digest: digest.to_string(),
        s: opts.s,
        seed: opts.seed,
        estimator: match opts.estimator {
            Estimator::Uncentered => "uncentered",
            Estimator::Centered => "centered",
            Estimator::Contrast => "contrast",
        }
        .to_string(),
        draws_used: result.draws_used,
        inputs: inputs.clone(),
        outputs: outputs.clone(),
        indices: IndexTables {
            first_order: table(&post.first),
            total: table(&post.total),
            projection: table(&post.projection),
            projection_interaction: table(&post.projection_interaction),
            projection_total: table(&post.projection_total),
        },
        per_output: PerOutputTables {
            first_order: per_output(&post.first_by_output),
            total: per_output(&post.total_by_output),
        },
        ranking: order.into_iter().map(|j| inputs[j].clone()).collect(),
        output_correlation_floored: result.correlation_floored,
    }
}

/// Long-format main-effect table: input, raw-unit grid value, output, mean
/// and 95% band.
pub fn write_main_effects(path: &Path, result: &SaResult, model: &MsgpModel, digest: &str) -> Result<()> {
    let specs = &model.design().specs;
    let outputs = &model.outputs().names;
    let mut rows = Vec::new();
    for curve in &result.main_effects {
        let spec = &specs[curve.input];
        for (g, &z) in curve.grid.iter().enumerate() {
            let raw = spec.unscale(z);
            let value = match &spec.kind {
                design::VariableKind::Categorical { levels } => levels[raw as usize].clone(),
                design::VariableKind::Continuous { .. } => raw.to_string(),
            };
            for (k, name) in outputs.iter().enumerate() {
                rows.push(vec![
                    spec.name.clone(),
                    value.clone(),
                    name.clone(),
                    curve.mean[(g, k)].to_string(),
                    curve.lower[(g, k)].to_string(),
                    curve.upper[(g, k)].to_string(),
                ]);
            }
        }
    }
    io::write_rows(path, &["input", "value", "output", "mean", "lower", "upper"], &rows, Some(digest))
}

/// Matrix-t predictions at raw-unit test points, using the posterior mean
/// of `tau`. Returns the location and central 95% bounds in raw output
/// units.
pub fn predict(
    archive: &ModelArchive,
    model: &MsgpModel,
    test_raw: &DesignMatrix,
) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let draws = archive.pooled_draws();
    if draws.is_empty() {
        return Err(MsgpError::data("archive holds no draws"));
    }
    let p = model.p();
    let mut tau = vec![0.0; p];
    for d in &draws {
        for k in 0..p {
            tau[k] += d.tau.tau[k] / draws.len() as f64;
        }
    }
    let tau = model.cutoff(tau)?;
    let cond = model.conditional(&tau, None)?;
    let test = design::scale_inputs(test_raw)?;
    let pred = model.predict_matrix_t(&cond, &test.values)?;
    let (lo, hi) = pred.intervals(0.95)?;
    let outs = model.outputs();
    Ok((
        outs.destandardize_values(&pred.location)?,
        outs.destandardize_values(&lo)?,
        outs.destandardize_values(&hi)?,
    ))
}

/// Paths written by [`run_pipeline`].
#[derive(Debug, Clone)]
pub struct PipelineArtifacts {
    pub model: PathBuf,
    pub psrf: PathBuf,
    pub indices: PathBuf,
    pub main_effects: PathBuf,
}

/// design-validation → standardize → fit → diag → sa, writing the model
/// archive, PSRF table, index JSON and main-effect table into `out_dir`.
pub fn run_pipeline(
    config: &RunConfig,
    spec_path: &Path,
    design_path: &Path,
    outputs_path: &Path,
    out_dir: &Path,
    seed: u64,
) -> Result<PipelineArtifacts> {
    config.validate().stage("config")?;
    require_file(design_path).stage("design-validation")?;
    require_file(outputs_path).stage("design-validation")?;
    let specs = io::read_specs(spec_path).stage("design-validation")?;
    let design_raw = io::read_design(design_path, &specs).stage("design-validation")?;
    let outputs_raw = io::read_outputs(outputs_path).stage("design-validation")?;
    let outputs_raw = aggregate(config, &outputs_raw).stage("design-validation")?;
    let digests = (
        Some(io::file_digest(design_path).stage("design-validation")?),
        Some(io::file_digest(outputs_path).stage("design-validation")?),
    );
    let pool = parallel::thread_pool(config.threads).stage("config")?;
    let (archive, model) = fit(config, &design_raw, &outputs_raw, seed, &pool, digests)?;
    let digest = config.digest();
    let artifacts = PipelineArtifacts {
        model: out_dir.join("model.jsonl"),
        psrf: out_dir.join("psrf.csv"),
        indices: out_dir.join("indices.json"),
        main_effects: out_dir.join("main_effects.csv"),
    };
    archive.save(&artifacts.model).stage("fit")?;
    if archive.chains.len() >= 2 {
        let report = diagnose(&archive).stage("diag")?;
        write_psrf(&artifacts.psrf, &report, &digest).stage("diag")?;
    } else {
        io::write_rows(&artifacts.psrf, &["parameter", "psrf", "upper_95"], &[], Some(&digest)).stage("diag")?;
    }
    let opts = SaOptions::from(&config.sa);
    let result = analyse(&archive, &model, &opts, config.sa.max_draws, &pool).stage("sa")?;
    io::write_json(&artifacts.indices, &index_report(&result, &model, &opts, &digest)).stage("sa")?;
    write_main_effects(&artifacts.main_effects, &result, &model, &digest).stage("sa")?;
    Ok(artifacts)
}

/// `design` command: optimized LHS crossed with categorical variables.
pub fn make_design(specs: &[VariableSpec], n: usize, optimize: bool, cap: usize, seed: u64) -> Result<DesignMatrix> {
    let options = if optimize { LhsOptions::optimized() } else { LhsOptions::default() };
    let cont = design::lhs_sample(specs, n, options, seed)?;
    Ok(design::mixed_design(&cont, specs, cap, seed.wrapping_add(1))?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolGOracleDoc {
    pub function: String,
    pub a: Vec<f64>,
    pub inputs: Vec<String>,
    pub variance: f64,
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
}

/// Brute-force Saltelli indices of a vector-valued function, used as the
/// oracle for the arctangent benchmark.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BruteForceOracle {
    pub function: String,
    pub s: usize,
    pub seed: u64,
    pub inputs: Vec<String>,
    /// Trace-based generalized indices.
    pub first_order: Vec<f64>,
    pub total: Vec<f64>,
    pub projection: Vec<f64>,
    pub projection_total: Vec<f64>,
}

/// Rows used to estimate the output correlation matrix of the oracle.
const ORACLE_CORRELATION_ROWS: usize = 20_000;

pub fn brute_force_oracle(f: &TestFunction, s: usize, seed: u64) -> Result<BruteForceOracle> {
    let dists = f.input_distribution();
    let mats = sensitivity::build_saltelli(&dists, s, seed)?;
    let acc = sensitivity::accumulate(&mats, f.m(), BlockMode::Diagonal, 10_000, |x| f.eval_rows(x))?;
    let decomp = acc.decomposition(Estimator::Centered)?;
    let (first, total) = sensitivity::generalized_indices(&decomp)?;
    let rows = s.min(ORACLE_CORRELATION_ROWS);
    let y = f.eval_rows(&mats.a0.rows(0, rows).into_owned())?;
    let names: Vec<String> = (1..=f.m()).map(|k| format!("y{k}")).collect();
    let (r, _) = sensitivity::output_correlation_matrix(&y, &names)?;
    let proj = sensitivity::projection_indices(&decomp, &r)?;
    Ok(BruteForceOracle {
        function: f.name().to_string(),
        s,
        seed,
        inputs: (1..=f.p()).map(|k| format!("x{k}")).collect(),
        first_order: first,
        total,
        projection: proj.first,
        projection_total: proj.total,
    })
}

/// `testfn` command: writes `spec.json`, `design.csv`, `outputs.csv`,
/// `oracle.json` and a ready-to-fit `run.json` into `out_dir`.
pub fn testfn_bundle(
    f: &TestFunction,
    n: usize,
    seed: u64,
    optimize: bool,
    oracle_s: usize,
    out_dir: &Path,
) -> Result<RunConfig> {
    let (lo, hi) = f.bounds();
    let specs: Vec<VariableSpec> = (1..=f.p()).map(|k| VariableSpec::continuous(format!("x{k}"), lo, hi)).collect();
    let design = make_design(&specs, n, optimize, design::DEFAULT_CROSS_CAP, seed).stage("design")?;
    let y = f.eval_rows(&design.values).stage("design")?;
    let names: Vec<String> = match f {
        TestFunction::SobolG { .. } => vec!["g".to_string()],
        TestFunction::ArctanTemporal { q } => (1..=*q).map(|k| format!("t{k}")).collect(),
    };
    let outputs = OutputMatrix::new(y, names)?;

    let mut config = RunConfig::default();
    config.mcmc.iterations = 10_000;
    config.mcmc.burn_in = 1_000;
    config.mcmc.thin = 10;
    config.mcmc.seeds = (1..=config.mcmc.chains as u64).map(|c| seed.wrapping_mul(1000).wrapping_add(c)).collect();
    config.sa.seed = seed.wrapping_add(11);
    if let TestFunction::SobolG { .. } = f {
        config.kernel.omega = 0.5;
    }
    let digest = config.digest();

    io::write_specs(&out_dir.join("spec.json"), &specs)?;
    io::write_design(&out_dir.join("design.csv"), &design, Some(&digest))?;
    io::write_matrix(&out_dir.join("outputs.csv"), &outputs.names, &outputs.values, Some(&digest))?;
    io::write_text(&out_dir.join("run.json"), &(config.to_json() + "\n"))?;
    match f {
        TestFunction::SobolG { a } => {
            let o = testfns::sobol_g_oracle(a)?;
            io::write_json(
                &out_dir.join("oracle.json"),
                &SobolGOracleDoc {
                    function: f.name().to_string(),
                    a: a.clone(),
                    inputs: specs.iter().map(|s| s.name.clone()).collect(),
                    variance: o.variance,
                    first_order: o.first,
                    total: o.total,
                },
            )?;
        }
        TestFunction::ArctanTemporal { .. } => {
            let o = brute_force_oracle(f, oracle_s, seed.wrapping_add(99)).stage("oracle")?;
            io::write_json(&out_dir.join("oracle.json"), &o)?;
        }
    }
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arctan_brute_force_matches_closed_form() {
        // Y(t) = a cos t + b sin t with independent a, b: the generalized
        // first-order index of x1 is sum cos^2 / (sum cos^2 + sum sin^2).
        let q = 100;
        let f = TestFunction::ArctanTemporal { q };
        let o = brute_force_oracle(&f, 200_000, 5).unwrap();
        let t = testfns::arctan_times(q);
        let c2: f64 = t.iter().map(|t| t.cos().powi(2)).sum();
        let s2: f64 = t.iter().map(|t| t.sin().powi(2)).sum();
        let s1 = c2 / (c2 + s2);
        assert!((o.first_order[0] - s1).abs() < 0.01, "{:?}", o.first_order);
        assert!((o.first_order[1] - (1.0 - s1)).abs() < 0.01);
        assert!((o.total[0] - s1).abs() < 0.01);
    }
}
