use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use msgp::archive::ModelArchive;
use msgp::config::RunConfig;
use msgp::StageExt;
use msgp::parallel::{self, SaOptions};
use msgp::{io, pipeline, validation, MsgpError, Result};
use msgp_core::testfns::{TestFunction, SOBOL_G_A};

#[derive(Parser)]
#[command(name = "msgp", version, about = "Sparse multivariate Gaussian-process emulation and sensitivity analysis")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a (maximin) Latin hypercube design.
    Design {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        optimize: bool,
        #[arg(long, default_value_t = msgp_core::design::DEFAULT_CROSS_CAP)]
        cross_cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a benchmark bundle: design, outputs, oracle indices, run config.
    Testfn {
        /// `sobol-g` or `arctan`.
        #[arg(long)]
        name: String,
        /// g-function coefficients.
        #[arg(long, value_delimiter = ',')]
        a: Option<Vec<f64>>,
        /// Number of time points of the arctangent function.
        #[arg(long, default_value_t = 100)]
        q: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        optimize: bool,
        /// Saltelli sample size of the brute-force oracle.
        #[arg(long, default_value_t = 1_000_000)]
        oracle_s: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the emulator and write a model archive.
    Fit {
        #[arg(long)]
        design: PathBuf,
        /// Variable spec (default: `<design>.spec.json` or `spec.json` next to the design).
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// K-fold cross-validation over sparsity levels.
    Cv {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        omegas: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Matrix-t predictions at new points.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Posterior sensitivity indices and main effects.
    Sa {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long)]
        max_draws: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Main-effect table (default: `<out stem>_main_effects.csv`).
        #[arg(long)]
        effects: Option<PathBuf>,
    },
    /// PSRF convergence diagnostics.
    Diag {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: fit, diagnostics and sensitivity analysis.
    Run {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        outputs: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let cfg = match path {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn spec_path(design: &Path, spec: Option<PathBuf>) -> PathBuf {
    if let Some(s) = spec {
        return s;
    }
    let sidecar = design.with_extension("spec.json");
    if sidecar.exists() {
        return sidecar;
    }
    design.with_file_name("spec.json")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}"))
}

fn run(cli: Cli) -> Result<()> {
    let mut config = load_config(cli.config.as_deref())?;
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    let seed = cli.seed.unwrap_or(0);
    match cli.command {
        Command::Design {
            spec,
            n,
            optimize,
            cross_cap,
            out,
        } => {
            let specs = io::read_specs(&spec).stage("design")?;
            let d = pipeline::make_design(&specs, n, optimize, cross_cap, seed).stage("design")?;
            io::write_design(&out, &d, Some(&config.digest()))?;
            if let (Some(a), Some(b)) = (d.info.initial_min_distance, d.info.final_min_distance) {
                eprintln!("min distance (unit cube): initial {a:.5}, final {b:.5}");
            }
            for w in &d.info.warnings {
                eprintln!("warning: {w}");
            }
        }
        Command::Testfn {
            name,
            a,
            q,
            n,
            optimize,
            oracle_s,
            out,
        } => {
            let f = match name.as_str() {
                "sobol-g" | "sobol_g" => TestFunction::SobolG {
                    a: a.unwrap_or_else(|| SOBOL_G_A.to_vec()),
                },
                "arctan" | "arctan-temporal" => TestFunction::ArctanTemporal { q },
                other => return Err(MsgpError::config(format!("unknown test function `{other}`"))),
            };
            pipeline::testfn_bundle(&f, n, seed, optimize, oracle_s, &out)?;
            eprintln!("wrote {} bundle to {}", f.name(), out.display());
        }
        Command::Fit {
            design,
            spec,
            outputs,
            out,
        } => {
            pipeline::require_file(&design).stage("design-validation")?;
            pipeline::require_file(&outputs).stage("design-validation")?;
            let specs = io::read_specs(&spec_path(&design, spec)).stage("design-validation")?;
            let d = io::read_design(&design, &specs).stage("design-validation")?;
            let y = io::read_outputs(&outputs).stage("design-validation")?;
            let y = pipeline::aggregate(&config, &y).stage("design-validation")?;
            let digests = (Some(io::file_digest(&design)?), Some(io::file_digest(&outputs)?));
            let pool = parallel::thread_pool(config.threads)?;
            let (archive, _) = pipeline::fit(&config, &d, &y, seed, &pool, digests)?;
            archive.save(&out).stage("fit")?;
            for (c, info) in archive.header.chains.iter().enumerate() {
                eprintln!("chain {c}: seed {}, acceptance {:.3}, {} draws", info.seed, info.accept_rate, info.draws);
                for w in &info.warnings {
                    eprintln!("warning (chain {c}): {w}");
                }
            }
        }
        Command::Cv {
            design,
            spec,
            outputs,
            folds,
            omegas,
            out,
        } => {
            if let Some(k) = folds {
                config.cv.folds = k;
            }
            if let Some(w) = omegas {
                config.cv.omegas = w;
            }
            config.cv.seed = cli.seed.unwrap_or(config.cv.seed);
            config.validate()?;
            pipeline::require_file(&design).stage("design-validation")?;
            pipeline::require_file(&outputs).stage("design-validation")?;
            let specs = io::read_specs(&spec_path(&design, spec)).stage("design-validation")?;
            let d = io::read_design(&design, &specs).stage("design-validation")?;
            let y = io::read_outputs(&outputs).stage("design-validation")?;
            let y = pipeline::aggregate(&config, &y).stage("design-validation")?;
            pipeline::validate_design(&d, &y).stage("design-validation")?;
            let (x, y) = pipeline::model_inputs(&config, &d, &y)?;
            let pool = parallel::thread_pool(config.threads)?;
            let report = validation::cross_validate(&x, &y, &config, &pool).stage("cv")?;
            io::write_json(&out, &report)?;
            print!("{}", report.table());
        }
        Command::Predict { model, design, out } => {
            let archive = ModelArchive::load(&model)?;
            let m = archive.model().stage("predict")?;
            let test = io::read_design(&design, &m.design().specs).stage("predict")?;
            let (mean, lo, hi) = pipeline::predict(&archive, &m, &test).stage("predict")?;
            let mut header = Vec::new();
            let mut cols = Vec::new();
            for (k, name) in m.outputs().names.iter().enumerate() {
                for (suffix, mat) in [("mean", &mean), ("lower", &lo), ("upper", &hi)] {
                    header.push(format!("{name}_{suffix}"));
                    cols.push(mat.column(k).into_owned());
                }
            }
            let table = msgp_core::DMatrix::from_columns(&cols);
            io::write_matrix(&out, &header, &table, Some(&archive.header.config_digest))?;
        }
        Command::Sa {
            model,
            s,
            max_draws,
            out,
            effects,
        } => {
            let archive = ModelArchive::load(&model)?;
            let cfg = match &cli.config {
                Some(_) => config.clone(),
                None => archive.header.config.clone(),
            };
            let mut opts = SaOptions::from(&cfg.sa);
            if let Some(s) = s {
                opts.s = s;
            }
            if let Some(sd) = cli.seed {
                opts.seed = sd;
            }
            let max_draws = max_draws.or(cfg.sa.max_draws);
            let m = archive.model().stage("sa")?;
            let pool = parallel::thread_pool(config.threads)?;
            let result = pipeline::analyse(&archive, &m, &opts, max_draws, &pool).stage("sa")?;
            let digest = archive.header.config_digest.clone();
            io::write_json(&out, &pipeline::index_report(&result, &m, &opts, &digest))?;
            let effects = effects.unwrap_or_else(|| with_suffix(&out, "_main_effects.csv"));
            if !result.main_effects.is_empty() {
                pipeline::write_main_effects(&effects, &result, &m, &digest)?;
            }
        }
        Command::Diag { model, out } => {
            let archive = ModelArchive::load(&model)?;
            let report = pipeline::diagnose(&archive).stage("diag")?;
            pipeline::write_psrf(&out, &report, &archive.header.config_digest)?;
            eprintln!(
                "max PSRF {:.4}; {:.1}% of parameters below 1.1",
                report.max_point(),
                100.0 * report.fraction_below(1.1)
            );
        }
        Command::Run {
            design,
            spec,
            outputs,
            out,
        } => {
            let spec = spec_path(&design, spec);
            let a = pipeline::run_pipeline(&config, &spec, &design, &outputs, &out, seed)?;
            eprintln!("wrote {}", a.indices.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
