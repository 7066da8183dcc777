//! CSV input and output.
//!
//! Output files start with `# key: value` comment lines carrying the config
//! hash, seed and crate version; readers skip lines starting with `#`.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::DataSchema;
use crate::dataset::Dataset;
use crate::error::{PogitError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Meta {
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
}

impl Meta {
    pub fn new(config_bytes: &[u8], seed: u64) -> Self {
        Meta {
            config_sha256: sha256_hex(config_bytes),
            seed,
            version: VERSION.to_string(),
        }
    }

    fn write_header(&self, out: &mut impl Write) -> std::io::Result<()> {
        writeln!(out, "# config_sha256: {}", self.config_sha256)?;
        writeln!(out, "# seed: {}", self.seed)?;
        writeln!(out, "# version: {}", self.version)
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_count(raw: &str, column: &str, row: usize) -> Result<u64> {
    let raw = raw.trim();
    if let Ok(v) = raw.parse::<u64>() {
        return Ok(v);
    }
    match raw.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 2f64.powi(53) => Ok(v as u64),
        _ => Err(PogitError::InvalidData(format!(
            "column '{column}' row {row}: '{raw}' is not a non-negative integer count"
        ))),
    }
}

fn parse_real(raw: &str, column: &str, row: usize) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        PogitError::InvalidData(format!(
            "column '{column}' row {row}: '{raw}' is not a number"
        ))
    })
}

/// Read a dataset laid out by `schema` from any CSV source.
pub fn parse_dataset(source: impl Read, schema: &DataSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            PogitError::Schema(format!(
                "missing column '{name}' (found: {})",
                headers.join(", ")
            ))
        })
    };
    let count_idx = find(&schema.count)?;
    let exposure_idx = schema.exposure.as_deref().map(find).transpose()?;
    let truth_idx = schema.true_count.as_deref().map(find).transpose()?;
    let covariates: Vec<(String, usize)> = match &schema.covariates {
        Some(cols) => cols
            .iter()
            .map(|c| Ok((c.clone(), find(c)?)))
            .collect::<Result<_>>()?,
        None => headers
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != count_idx && Some(*i) != exposure_idx && Some(*i) != truth_idx)
            .map(|(i, h)| (h.clone(), i))
            .collect(),
    };

    let mut counts = Vec::new();
    let mut exposure = Vec::new();
    let mut truth = Vec::new();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); covariates.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        counts.push(parse_count(&record[count_idx], &schema.count, row)?);
        if let (Some(i), Some(name)) = (exposure_idx, &schema.exposure) {
            exposure.push(parse_real(&record[i], name, row)?);
        }
        if let (Some(i), Some(name)) = (truth_idx, &schema.true_count) {
            truth.push(parse_count(&record[i], name, row)?);
        }
        for (col, (name, i)) in columns.iter_mut().zip(&covariates) {
            col.push(parse_real(&record[*i], name, row)?);
        }
    }

    let mut data = Dataset::new(counts);
    for ((name, _), values) in covariates.into_iter().zip(columns) {
        data = data.with_covariate(name, values);
    }
    if exposure_idx.is_some() {
        data = data.with_exposure(exposure);
    }
    if truth_idx.is_some() {
        data = data.with_true_counts(truth);
    }
    data.validate()?;
    Ok(data)
}

pub fn read_dataset(path: &Path, schema: &DataSchema) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| PogitError::io(path.display().to_string(), e))?;
    parse_dataset(file, schema)
}

/// Write `header` and pre-formatted `rows` after the metadata comment lines.
pub fn write_table<S: AsRef<str>>(
    out: &mut impl Write,
    meta: &Meta,
    header: &[S],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let io = |e| PogitError::io("<csv output>", e);
    meta.write_header(out).map_err(io)?;
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(header.iter().map(AsRef::as_ref))?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush().map_err(io)?;
    Ok(())
}

pub fn write_table_file<S: AsRef<str>>(
    path: &Path,
    meta: &Meta,
    header: &[S],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<()> {
    let mut file = File::create(path).map_err(|e| PogitError::io(path.display().to_string(), e))?;
    write_table(&mut file, meta, header, rows)
}

/// Write a dataset under the column names of `schema`, covariates in name order.
pub fn write_dataset(
    out: &mut impl Write,
    data: &Dataset,
    schema: &DataSchema,
    meta: &Meta,
) -> Result<()> {
    let mut header: Vec<String> = data.covariates.keys().cloned().collect();
    header.push(schema.count.clone());
    if data.exposure.is_some() {
        let name = schema.exposure.clone().ok_or_else(|| {
            PogitError::Schema(
                "dataset has exposure but the schema names no exposure column".into(),
            )
        })?;
        header.push(name);
    }
    if data.true_counts.is_some() {
        let name = schema.true_count.clone().ok_or_else(|| {
            PogitError::Schema(
                "dataset has true counts but the schema names no column for them".into(),
            )
        })?;
        header.push(name);
    }
    let rows = (0..data.len()).map(|i| {
        let mut row: Vec<String> = data.covariates.values().map(|c| fmt_f64(c[i])).collect();
        row.push(data.counts[i].to_string());
        if let Some(e) = &data.exposure {
            row.push(fmt_f64(e[i]));
        }
        if let Some(t) = &data.true_counts {
            row.push(t[i].to_string());
        }
        row
    });
    write_table(out, meta, &header, rows)
}
