//! Fitted-model archive in JSON lines.
//!
//! Line 1 is an [`ArchiveHeader`]: format tag, run configuration and its
//! digest, SHA-256 digests of the input files, the variable specs, the raw
//! design and outputs used for fitting, the cut-off budget and per-chain
//! summaries. Every following line is one [`DrawRecord`]:
//!
//! ```json
//! {"chain": 0, "index": 0, "tau": [..], "b": [..], "sigma": [..], "log_marginal": -12.5}
//! ```
//!
//! `b` (`q × m`) and `sigma` (`m × m`) are stored column-major. Draws appear
//! in chain order, then iteration order.

use std::fs;
use std::path::Path;

use msgp_core::design::{DesignMatrix, OutputMatrix};
use msgp_core::emulator::{MsgpModel, PosteriorDraw};
use msgp_core::kernels::CutoffVector;
use msgp_core::mcmc::ChainResult;
use msgp_core::DMatrix;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::{io, MsgpError, Result};

pub const FORMAT: &str = "msgp-archive";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainInfo {
    pub seed: u64,
    pub accept_rate: f64,
    pub draws: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchiveHeader {
    pub format: String,
    pub version: u32,
    pub config: RunConfig,
    pub config_digest: String,
    pub design_digest: Option<String>,
    pub outputs_digest: Option<String>,
    /// Variable spec document (see [`io`]).
    pub specs: serde_json::Value,
    /// Raw design, row-major, categorical columns as level codes.
    pub design: Vec<Vec<f64>>,
    pub output_names: Vec<String>,
    /// Raw outputs after any aggregation, row-major.
    pub outputs: Vec<Vec<f64>>,
    pub budget: f64,
    pub omega: f64,
    pub chains: Vec<ChainInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DrawRecord {
    pub chain: usize,
    pub index: usize,
    pub tau: Vec<f64>,
    pub b: Vec<f64>,
    pub sigma: Vec<f64>,
    pub log_marginal: f64,
}

/// A fitted model: header plus the stored draws of every chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelArchive {
    pub header: ArchiveHeader,
    pub chains: Vec<Vec<PosteriorDraw>>,
    pub log_marginal: Vec<Vec<f64>>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != p) {
        return Err(MsgpError::data(format!("archive {what} rows have unequal lengths")));
    }
    Ok(DMatrix::from_fn(n, p, |i, k| rows[i][k]))
}

/// Training data as stored in the archive.
pub struct FitData {
    pub design: DesignMatrix,
    pub outputs: OutputMatrix,
}

impl ModelArchive {
    pub fn new(
        config: &RunConfig,
        design_raw: &DesignMatrix,
        outputs_raw: &OutputMatrix,
        model: &MsgpModel,
        chains: &[ChainResult],
        digests: (Option<String>, Option<String>),
    ) -> Self {
        let specs = serde_json::from_str(&io::specs_to_json(&design_raw.specs)).expect("spec json");
        ModelArchive {
            header: ArchiveHeader {
                format: FORMAT.to_string(),
                version: VERSION,
                config: config.clone(),
                config_digest: config.digest(),
                design_digest: digests.0,
                outputs_digest: digests.1,
                specs,
                design: rows_of(&design_raw.values),
                output_names: outputs_raw.names.clone(),
                outputs: rows_of(&outputs_raw.values),
                budget: model.budget(),
                omega: model.omega(),
                chains: chains
                    .iter()
                    .map(|c| ChainInfo {
                        seed: c.seed,
                        accept_rate: c.accept_rate,
                        draws: c.draws.len(),
                        warnings: c.warnings.clone(),
                    })
                    .collect(),
            },
            chains: chains.iter().map(|c| c.draws.clone()).collect(),
            log_marginal: chains.iter().map(|c| c.log_posterior.clone()).collect(),
        }
    }

    /// Raw design and outputs used for fitting.
    pub fn fit_data(&self) -> Result<FitData> {
        let specs = io::specs_from_json(&self.header.specs.to_string())?;
        let design = DesignMatrix::new(matrix_from_rows(&self.header.design, "design")?, specs)?;
        let outputs = OutputMatrix::new(
            matrix_from_rows(&self.header.outputs, "output")?,
            self.header.output_names.clone(),
        )?;
        Ok(FitData { design, outputs })
    }

    /// Rebuilds the emulator exactly as it was fitted.
    pub fn model(&self) -> Result<MsgpModel> {
        let data = self.fit_data()?;
        let (x, y) = crate::pipeline::model_inputs(&self.header.config, &data.design, &data.outputs)?;
        let cfg = self.header.config.model_config(x.p(), y.m())?;
        Ok(MsgpModel::with_budget(x, y, &cfg, self.header.budget)?)
    }

    /// All draws pooled in chain order.
    pub fn pooled_draws(&self) -> Vec<&PosteriorDraw> {
        self.chains.iter().flatten().collect()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for (c, draws) in self.chains.iter().enumerate() {
            for (k, d) in draws.iter().enumerate() {
                let rec = DrawRecord {
                    chain: c,
                    index: k,
                    tau: d.tau.tau.clone(),
                    b: d.b.as_slice().to_vec(),
                    sigma: d.sigma.as_slice().to_vec(),
                    log_marginal: self.log_marginal[c][k],
                };
                out.push_str(&serde_json::to_string(&rec).expect("draw serializes"));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines.next().ok_or_else(|| MsgpError::data("empty model archive"))?;
        let header: ArchiveHeader =
            serde_json::from_str(first).map_err(|e| MsgpError::data(format!("archive header: {e}")))?;
        if header.format != FORMAT || header.version != VERSION {
            return Err(MsgpError::data(format!(
                "unsupported archive format {} v{}",
                header.format, header.version
            )));
        }
        let p = header.design.first().map_or(0, Vec::len);
        let m = header.output_names.len();
        let q = header.config.basis_q(p);
        let mut chains: Vec<Vec<PosteriorDraw>> = vec![Vec::new(); header.chains.len()];
        let mut log_marginal: Vec<Vec<f64>> = vec![Vec::new(); header.chains.len()];
        for (line_no, line) in lines.enumerate() {
            let rec: DrawRecord = serde_json::from_str(line)
                .map_err(|e| MsgpError::data(format!("archive line {}: {e}", line_no + 2)))?;
            if rec.chain >= chains.len() || rec.index != chains[rec.chain].len() {
                return Err(MsgpError::data(format!("archive line {}: draw out of order", line_no + 2)));
            }
            if rec.tau.len() != p || rec.b.len() != q * m || rec.sigma.len() != m * m {
                return Err(MsgpError::data(format!("archive line {}: wrong parameter sizes", line_no + 2)));
            }
            chains[rec.chain].push(PosteriorDraw {
                b: DMatrix::from_column_slice(q, m, &rec.b),
                sigma: DMatrix::from_column_slice(m, m, &rec.sigma),
                tau: CutoffVector {
                    tau: rec.tau,
                    c: header.budget,
                    omega: header.omega,
                },
            });
            log_marginal[rec.chain].push(rec.log_marginal);
        }
        for (c, info) in header.chains.iter().enumerate() {
            if chains[c].len() != info.draws {
                return Err(MsgpError::data(format!(
                    "archive chain {c}: header lists {} draws, found {}",
                    info.draws,
                    chains[c].len()
                )));
            }
        }
        Ok(ModelArchive {
            header,
            chains,
            log_marginal,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_text(path, &self.to_jsonl())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| MsgpError::io(path, e))?;
        Self::from_jsonl(&text).map_err(|e| match e {
            MsgpError::Data(msg) => MsgpError::data(format!("{}: {msg}", path.display())),
            e => e,
        })
    }
}

impl RunConfig {
    pub(crate) fn basis_q(&self, p: usize) -> usize {
        msgp_core::emulator::BasisKind::from(self.basis).q(p)
    }
}
