//! CSV and JSON file formats.
//!
//! * Variable specs: `{"variables": [{"name": "x1", "kind": "continuous",
//!   "lower": 0, "upper": 1}, {"name": "site", "kind": "categorical",
//!   "levels": ["a", "b"]}]}`.
//! * Designs: header row of variable names, one row per point, raw units;
//!   categorical cells hold level labels (integer codes are also accepted).
//! * Outputs and tables: header row plus numeric rows.
//!
//! Floats are written in shortest round-trip form. Lines starting with `#`
//! are comments; written files carry `# config_digest=<sha256>` when a digest
//! is supplied.

use std::fs;
use std::path::Path;

use msgp_core::design::{DesignMatrix, OutputMatrix, VariableKind, VariableSpec};
use msgp_core::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{MsgpError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| MsgpError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum SpecEntryKind {
    Continuous { name: String, lower: f64, upper: f64 },
    Categorical { name: String, levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SpecFile {
    variables: Vec<SpecEntryKind>,
}

pub fn specs_from_json(text: &str) -> Result<Vec<VariableSpec>> {
    let file: SpecFile = serde_json::from_str(text).map_err(|e| MsgpError::config(format!("variable spec: {e}")))?;
    let specs: Vec<VariableSpec> = file
        .variables
        .into_iter()
        .map(|v| match v {
            SpecEntryKind::Continuous { name, lower, upper } => VariableSpec::continuous(name, lower, upper),
            SpecEntryKind::Categorical { name, levels } => VariableSpec::categorical(name, levels),
        })
        .collect();
    for s in &specs {
        s.validate().map_err(|e| MsgpError::config(format!("variable spec: {e}")))?;
    }
    Ok(specs)
}

pub fn specs_to_json(specs: &[VariableSpec]) -> String {
    let file = SpecFile {
        variables: specs
            .iter()
            .map(|s| match &s.kind {
                VariableKind::Continuous { lower, upper } => SpecEntryKind::Continuous {
                    name: s.name.clone(),
                    lower: *lower,
                    upper: *upper,
                },
                VariableKind::Categorical { levels } => SpecEntryKind::Categorical {
                    name: s.name.clone(),
                    levels: levels.clone(),
                },
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("spec serializes")
}

pub fn read_specs(path: &Path) -> Result<Vec<VariableSpec>> {
    let text = fs::read_to_string(path).map_err(|e| MsgpError::io(path, e))?;
    specs_from_json(&text).map_err(|e| match e {
        MsgpError::Config(msg) => MsgpError::config(format!("{}: {msg}", path.display())),
        e => e,
    })
}

pub fn write_specs(path: &Path, specs: &[VariableSpec]) -> Result<()> {
    write_text(path, &specs_to_json(specs))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| MsgpError::io(dir, e))?;
        }
    }
    fs::write(path, text).map_err(|e| MsgpError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| MsgpError::data(e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

/// Header and rows of a CSV file, skipping `#` comment lines.
fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path).map_err(|e| MsgpError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let bad = |e: csv::Error| MsgpError::data(format!("{}: {e}", path.display()));
    let header: Vec<String> = reader.headers().map_err(bad)?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(MsgpError::data(format!("{}: missing header row", path.display())));
    }
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(bad)?;
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn parse_number(path: &Path, row: usize, col: &str, cell: &str) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| {
        MsgpError::data(format!(
            "{}: row {}, column {col}: '{cell}' is not a number",
            path.display(),
            row + 1
        ))
    })
}

/// Reads a raw-unit design whose columns match `specs` by name.
pub fn read_design(path: &Path, specs: &[VariableSpec]) -> Result<DesignMatrix> {
    let (header, rows) = read_csv(path)?;
    let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
    if header.iter().map(String::as_str).ne(names.iter().copied()) {
        return Err(MsgpError::data(format!(
            "{}: header {:?} does not match the variable spec {:?}",
            path.display(),
            header,
            names
        )));
    }
    let mut values = DMatrix::<f64>::zeros(rows.len(), specs.len());
    for (i, row) in rows.iter().enumerate() {
        for (k, spec) in specs.iter().enumerate() {
            let cell = &row[k];
            values[(i, k)] = match &spec.kind {
                VariableKind::Continuous { .. } => parse_number(path, i, &spec.name, cell)?,
                VariableKind::Categorical { levels } => match levels.iter().position(|l| l == cell) {
                    Some(code) => code as f64,
                    None => {
                        let code = parse_number(path, i, &spec.name, cell)?;
                        if code.fract() != 0.0 || code < 0.0 || code >= levels.len() as f64 {
                            return Err(MsgpError::data(format!(
                                "{}: row {}, column {}: unknown level '{cell}'",
                                path.display(),
                                i + 1,
                                spec.name
                            )));
                        }
                        code
                    }
                },
            };
        }
    }
    DesignMatrix::new(values, specs.to_vec()).map_err(|e| MsgpError::data(format!("{}: {e}", path.display())))
}

fn digest_line(out: &mut String, digest: Option<&str>) {
    if let Some(d) = digest {
        out.push_str("# config_digest=");
        out.push_str(d);
        out.push('\n');
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Writes a design in raw units (scaled designs are mapped back first).
pub fn write_design(path: &Path, design: &DesignMatrix, digest: Option<&str>) -> Result<()> {
    let mut out = String::new();
    digest_line(&mut out, digest);
    out.push_str(&design.specs.iter().map(|s| csv_field(&s.name)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for i in 0..design.n() {
        let row: Vec<String> = design
            .specs
            .iter()
            .enumerate()
            .map(|(k, spec)| {
                let v = if design.scaled {
                    spec.unscale(design.values[(i, k)])
                } else {
                    design.values[(i, k)]
                };
                match &spec.kind {
                    VariableKind::Continuous { .. } => v.to_string(),
                    VariableKind::Categorical { levels } => csv_field(&levels[v as usize]),
                }
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn read_outputs(path: &Path) -> Result<OutputMatrix> {
    let (header, rows) = read_csv(path)?;
    let mut values = DMatrix::<f64>::zeros(rows.len(), header.len());
    for (i, row) in rows.iter().enumerate() {
        for (k, name) in header.iter().enumerate() {
            values[(i, k)] = parse_number(path, i, name, &row[k])?;
        }
    }
    OutputMatrix::new(values, header).map_err(|e| MsgpError::data(format!("{}: {e}", path.display())))
}

/// Writes a numeric table with a header row.
pub fn write_matrix(path: &Path, header: &[String], values: &DMatrix<f64>, digest: Option<&str>) -> Result<()> {
    if header.len() != values.ncols() {
        return Err(MsgpError::data(format!(
            "{}: {} column names for {} columns",
            path.display(),
            header.len(),
            values.ncols()
        )));
    }
    let mut out = String::new();
    digest_line(&mut out, digest);
    out.push_str(&header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for i in 0..values.nrows() {
        let row: Vec<String> = (0..values.ncols()).map(|k| values[(i, k)].to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Writes rows of string cells with a header row.
pub fn write_rows(path: &Path, header: &[&str], rows: &[Vec<String>], digest: Option<&str>) -> Result<()> {
    let mut out = String::new();
    digest_line(&mut out, digest);
    out.push_str(&header.iter().map(|h| csv_field(h)).collect::<Vec<_>>().join(","));
    out.push('\n');
    for row in rows {
        out.push_str(&row.iter().map(|c| csv_field(c)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

/// Reads a numeric table written by [`write_matrix`].
pub fn read_matrix(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let out = read_outputs(path)?;
    Ok((out.names, out.values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_json_round_trip() {
        let specs = vec![
            VariableSpec::continuous("a", -1.0, 2.5),
            VariableSpec::categorical("site", ["north", "south, east"]),
        ];
        assert_eq!(specs_from_json(&specs_to_json(&specs)).unwrap(), specs);
        assert!(specs_from_json(r#"{"variables": [{"name": "a", "kind": "continuous", "lower": 1, "upper": 0}]}"#).is_err());
    }

    #[test]
    fn design_csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let specs = vec![
            VariableSpec::continuous("a", 0.0, 1.0),
            VariableSpec::categorical("site", ["north", "south, east"]),
        ];
        let values = DMatrix::from_row_slice(3, 2, &[0.1, 0.0, 1.0 / 3.0, 1.0, 0.987654321012345, 1.0]);
        let d = DesignMatrix::new(values.clone(), specs.clone()).unwrap();
        write_design(&path, &d, Some("abc")).unwrap();
        let back = read_design(&path, &specs).unwrap();
        assert_eq!(back.values, values);
    }

    #[test]
    fn design_header_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        fs::write(&path, "b,a\n0.1,0.2\n").unwrap();
        let specs = vec![VariableSpec::continuous("a", 0.0, 1.0), VariableSpec::continuous("b", 0.0, 1.0)];
        assert!(matches!(read_design(&path, &specs), Err(MsgpError::Data(_))));
    }

    #[test]
    fn missing_file_names_the_path() {
        let err = read_outputs(Path::new("/nonexistent/y.csv")).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("/nonexistent/y.csv"));
    }
}
