//! Dataset CSV ingestion and export, run-configuration files, and results
//! serialization.
//!
//! Every file this module writes begins with a comment line carrying the
//! tool version, a hash of the effective configuration, and the base seed,
//! so any result on disk can be traced back to the run that produced it.
//! Floating-point values are serialized with 17 significant digits, which
//! round-trips 64-bit floats exactly.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bench::{ExperimentSpec, Method, MseCell, QqReport, RealDataReport, ReplicationRecord, TimingRow};
use crate::datagen::{DesignKind, ScenarioSpec};
use crate::error::{Error, Result};
use crate::glm::{Dataset, Family, ResponseStore};
use crate::sampling::SamplingWeights;

/// Render a float with 17 significant digits so parsing it back is exact.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// First 16 hex digits of the SHA-256 of `bytes`.
pub fn content_hash(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of a value's canonical JSON serialization; see [`content_hash`].
pub fn hash_of<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_string(value).expect("value serializes");
    content_hash(canonical.as_bytes())
}

/// First line of every output file: tool version, configuration hash, seed.
pub fn output_header(config_hash: &str, base_seed: u64) -> String {
    format!(
        "# osumc {} config_hash={config_hash} base_seed={base_seed}",
        env!("CARGO_PKG_VERSION")
    )
}

// ---------------------------------------------------------------------------
// CSV schema and ingestion
// ---------------------------------------------------------------------------

/// Which columns of a CSV hold the features.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureColumns {
    /// Every column except the response.
    AllOthers,
    /// An explicit list of header names.
    List(Vec<String>),
}

/// How to interpret a dataset CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CsvSchema {
    /// Header name of the response column; `None` means the first column.
    /// Setting it requires a header.
    pub response_column: Option<String>,
    pub feature_columns: FeatureColumns,
    pub delimiter: u8,
    pub has_header: bool,
    /// Cell content that marks an unobserved response (after trimming).
    pub missing_token: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            response_column: None,
            feature_columns: FeatureColumns::AllOthers,
            delimiter: b',',
            has_header: true,
            missing_token: String::new(),
        }
    }
}

/// A parsed dataset plus the naming/observation bookkeeping callers report.
#[derive(Debug)]
pub struct LoadedCsv {
    pub dataset: Dataset,
    pub response_name: String,
    pub feature_names: Vec<String>,
    /// Number of rows whose response is observed.
    pub observed_responses: usize,
}

/// Load a dataset from a CSV file.
///
/// Features must parse as finite reals; a cell equal to the schema's missing
/// token is allowed only in the response column and yields a masked response
/// store. Lines starting with `#` are skipped, so exported files load back
/// directly. Error coordinates (`line`, `row`, `column`) are all 1-based file
/// coordinates, counting the header and comment lines.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<LoadedCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_error)?;

    let headers: Option<Vec<String>> = if schema.has_header {
        Some(reader.headers().map_err(csv_error)?.iter().map(String::from).collect())
    } else {
        None
    };

    let records: Vec<csv::StringRecord> = reader
        .records()
        .collect::<std::result::Result<_, _>>()
        .map_err(csv_error)?;
    if records.is_empty() {
        return Err(Error::Parse {
            line: if schema.has_header { 2 } else { 1 },
            message: "no data rows".into(),
        });
    }
    let width = headers.as_ref().map_or(records[0].len(), Vec::len);
    if width < 2 {
        return Err(Error::InvalidValue {
            key: "feature_columns".into(),
            message: format!("a dataset needs at least 2 columns, file has {width}"),
        });
    }
    let names: Vec<String> = match &headers {
        Some(h) => h.clone(),
        None => (0..width).map(|j| format!("c{j}")).collect(),
    };

    let response_idx = match (&schema.response_column, &headers) {
        (Some(name), Some(h)) => {
            h.iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::InvalidValue {
                    key: "response_column".into(),
                    message: format!("column `{name}` not found in header"),
                })?
        }
        (Some(_), None) => {
            return Err(Error::InvalidValue {
                key: "response_column".into(),
                message: "naming the response column requires a header".into(),
            })
        }
        (None, _) => 0,
    };

    let feature_idx: Vec<usize> = match (&schema.feature_columns, &headers) {
        (FeatureColumns::AllOthers, _) => (0..width).filter(|&j| j != response_idx).collect(),
        (FeatureColumns::List(list), Some(h)) => {
            let mut seen = HashSet::new();
            let mut idx = Vec::with_capacity(list.len());
            for name in list {
                let j = h
                    .iter()
                    .position(|c| c == name)
                    .ok_or_else(|| Error::InvalidValue {
                        key: "feature_columns".into(),
                        message: format!("column `{name}` not found in header"),
                    })?;
                if j == response_idx {
                    return Err(Error::InvalidValue {
                        key: "feature_columns".into(),
                        message: format!("column `{name}` is the response column"),
                    });
                }
                if !seen.insert(j) {
                    return Err(Error::InvalidValue {
                        key: "feature_columns".into(),
                        message: format!("column `{name}` listed twice"),
                    });
                }
                idx.push(j);
            }
            idx
        }
        (FeatureColumns::List(_), None) => {
            return Err(Error::InvalidValue {
                key: "feature_columns".into(),
                message: "naming feature columns requires a header".into(),
            })
        }
    };
    if feature_idx.is_empty() {
        return Err(Error::InvalidValue {
            key: "feature_columns".into(),
            message: "no feature columns selected".into(),
        });
    }

    let n = records.len();
    let p = feature_idx.len();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut observed = vec![true; n];
    let mut observed_responses = 0usize;

    for (i, record) in records.iter().enumerate() {
        let line = record
            .position()
            .map_or(i + 1, |pos| pos.line() as usize);
        let cell = |j: usize| -> Result<&str> {
            record.get(j).ok_or_else(|| Error::Parse {
                line,
                message: format!("row has {} fields, expected {width}", record.len()),
            })
        };
        let resp = cell(response_idx)?;
        if resp == schema.missing_token {
            observed[i] = false;
        } else {
            let v = parse_cell(resp, line, response_idx)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: line,
                    column: response_idx + 1,
                });
            }
            y[i] = v;
            observed_responses += 1;
        }
        for (k, &j) in feature_idx.iter().enumerate() {
            let text = cell(j)?;
            if text == schema.missing_token && !schema.missing_token.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!(
                        "missing value in feature column `{}`; only the response may be missing",
                        names[j]
                    ),
                });
            }
            let v = parse_cell(text, line, j)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue {
                    row: line,
                    column: j + 1,
                });
            }
            x[(i, k)] = v;
        }
    }

    let store = if observed_responses == n {
        ResponseStore::Full(y)
    } else {
        ResponseStore::Masked {
            values: y,
            observed,
        }
    };
    Ok(LoadedCsv {
        dataset: Dataset::new(x, store)?,
        response_name: names[response_idx].clone(),
        feature_names: feature_idx.iter().map(|&j| names[j].clone()).collect(),
        observed_responses,
    })
}

fn parse_cell(text: &str, line: usize, column: usize) -> Result<f64> {
    f64::from_str(text).map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse `{text}` in column {} as a number", column + 1),
    })
}

fn csv_error(e: csv::Error) -> Error {
    let line = e
        .position()
        .map_or(0, |pos| pos.line() as usize);
    match e.kind() {
        csv::ErrorKind::Io(_) => match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            _ => unreachable!("kind checked above"),
        },
        _ => Error::Parse {
            line,
            message: e.to_string(),
        },
    }
}

/// Export a dataset as CSV: response column `y` first, then features
/// `x1..xp`, all floats with 17 significant digits. Unobserved responses in
/// a masked store become empty cells; measurement-gated stores are not
/// exportable (serializing one would sidestep its accounting).
pub fn export_csv<W: Write>(w: &mut W, dataset: &Dataset, header: &str) -> Result<()> {
    let (n, p) = (dataset.n(), dataset.p());
    writeln!(w, "{header}")?;
    let mut cols = vec!["y".to_string()];
    cols.extend((1..=p).map(|j| format!("x{j}")));
    writeln!(w, "{}", cols.join(","))?;
    for i in 0..n {
        let mut row = Vec::with_capacity(p + 1);
        match dataset.store() {
            ResponseStore::Full(v) => row.push(fmt17(v[i])),
            ResponseStore::Masked { values, observed } => {
                row.push(if observed[i] { fmt17(values[i]) } else { String::new() })
            }
            ResponseStore::Oracle(_) => {
                return Err(Error::InvalidValue {
                    key: "dataset".into(),
                    message: "cannot export a measurement-gated response store".into(),
                })
            }
        }
        for j in 0..p {
            row.push(fmt17(dataset.x()[(i, j)]));
        }
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Run configuration files
// ---------------------------------------------------------------------------

/// Effective configuration of a benchmark run: the experiment grid plus
/// where to put the output files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    pub spec: ExperimentSpec,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            spec: ExperimentSpec::new(
                ScenarioSpec::new(DesignKind::MzNormal, 10_000, 20, 1),
                vec![Method::Osumc, Method::Uniform],
                vec![200, 500, 1000],
            ),
            output_dir: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    /// Hash of the effective experiment: first 16 hex digits of the SHA-256
    /// of the canonical serialization of the experiment settings. Comments,
    /// key order, and the output location do not affect it; any change to
    /// what is computed does.
    pub fn hash(&self) -> String {
        hash_of(&self.spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()
    }
}

/// Keys understood by [`parse_run_config`], with one line per key.
pub const CONFIG_KEYS: [&str; 18] = [
    "family",
    "design",
    "n",
    "p",
    "seed",
    "beta0",
    "noise_sd",
    "methods",
    "r_values",
    "r0",
    "replications",
    "tol",
    "max_iter",
    "slev_alpha",
    "weight_floor",
    "parallelism",
    "gated",
    "output_dir",
];

/// Parse a flat `key = value` configuration file. `#` starts a comment,
/// blank lines are skipped, every key is optional (defaults apply), unknown
/// keys and duplicate keys are errors.
pub fn parse_run_config(text: &str) -> Result<RunConfig> {
    let mut pairs: Vec<(usize, String, String)> = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: line_no,
            message: format!("expected `key = value`, got `{line}`"),
        })?;
        let key = key.trim().to_string();
        let value = value.trim().to_string();
        if !CONFIG_KEYS.contains(&key.as_str()) {
            return Err(Error::UnknownKey(key));
        }
        if !seen.insert(key.clone()) {
            return Err(Error::Parse {
                line: line_no,
                message: format!("duplicate key `{key}`"),
            });
        }
        pairs.push((line_no, key, value));
    }

    let mut config = RunConfig::default();
    // The design fixes the default family; apply it before an explicit
    // family key regardless of their order in the file.
    for (_, _, value) in pairs.iter().filter(|(_, k, _)| k == "design") {
        let design = DesignKind::parse(value)?;
        config.spec.scenario.design = design;
        config.spec.scenario.family = design.family();
    }
    for (line, key, value) in &pairs {
        let spec = &mut config.spec;
        match key.as_str() {
            "design" => {}
            "family" => spec.scenario.family = Family::parse(value)?,
            "n" => spec.scenario.n = parse_value(key, value, *line)?,
            "p" => spec.scenario.p = parse_value(key, value, *line)?,
            "seed" => spec.scenario.seed = parse_value(key, value, *line)?,
            "beta0" => {
                let coords = parse_list::<f64>(key, value, *line)?;
                spec.scenario.beta0 = Some(DVector::from_vec(coords));
            }
            "noise_sd" => spec.scenario.noise_sd = Some(parse_value(key, value, *line)?),
            "methods" => {
                let names = parse_list::<String>(key, value, *line)?;
                spec.methods = names
                    .iter()
                    .map(|s| Method::parse(s))
                    .collect::<Result<_>>()?;
            }
            "r_values" => spec.r_values = parse_list(key, value, *line)?,
            "r0" => spec.r0 = parse_value(key, value, *line)?,
            "replications" => spec.replications = parse_value(key, value, *line)?,
            "tol" => spec.tol = parse_value(key, value, *line)?,
            "max_iter" => spec.max_iter = parse_value(key, value, *line)?,
            "slev_alpha" => spec.slev_alpha = parse_value(key, value, *line)?,
            "weight_floor" => spec.weight_floor = parse_value(key, value, *line)?,
            "parallelism" => {
                let k: usize = parse_value(key, value, *line)?;
                if k == 0 {
                    return Err(Error::InvalidValue {
                        key: "parallelism".into(),
                        message: "thread count must be at least 1 (omit the key for the default pool)"
                            .into(),
                    });
                }
                spec.parallelism = Some(k);
            }
            "gated" => spec.gated = parse_value(key, value, *line)?,
            "output_dir" => config.output_dir = PathBuf::from(value),
            other => return Err(Error::UnknownKey(other.to_string())),
        }
    }
    Ok(config)
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse::<T>().map_err(|e| Error::InvalidValue {
        key: key.to_string(),
        message: format!("`{value}` at line {line}: {e}"),
    })
}

fn parse_list<T: FromStr>(key: &str, value: &str, line: usize) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<&str> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect();
    if items.is_empty() {
        return Err(Error::InvalidValue {
            key: key.to_string(),
            message: format!("empty list at line {line}"),
        });
    }
    items
        .into_iter()
        .map(|s| parse_value(key, s, line))
        .collect()
}

// ---------------------------------------------------------------------------
// Results serialization
// ---------------------------------------------------------------------------

const RECORD_COLUMNS: [&str; 8] = [
    "method",
    "r",
    "replication",
    "seed",
    "mse",
    "time_ms",
    "responses_measured",
    "converged",
];

/// Write per-replication records. Columns: `method, r, replication, seed,
/// mse, time_ms, responses_measured, converged, beta_1..beta_p`.
pub fn write_records_csv<W: Write>(
    w: &mut W,
    header: &str,
    records: &[ReplicationRecord],
) -> Result<()> {
    writeln!(w, "{header}")?;
    let p = records.first().map_or(0, |r| r.beta.len());
    if records.iter().any(|r| r.beta.len() != p) {
        return Err(Error::DimensionMismatch(
            "records carry estimates of different lengths".into(),
        ));
    }
    let mut cols: Vec<String> = RECORD_COLUMNS.iter().map(|s| s.to_string()).collect();
    cols.extend((1..=p).map(|j| format!("beta_{j}")));
    writeln!(w, "{}", cols.join(","))?;
    for rec in records {
        let mut row = vec![
            rec.method.name().to_string(),
            rec.r.to_string(),
            rec.replication.to_string(),
            rec.seed.to_string(),
            fmt17(rec.mse),
            fmt17(rec.time_ms),
            rec.responses_measured.to_string(),
            rec.converged.to_string(),
        ];
        row.extend(rec.beta.iter().map(|&b| fmt17(b)));
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Read records written by [`write_records_csv`]. Comment lines are skipped.
pub fn read_records_csv<R: BufRead>(r: R) -> Result<Vec<ReplicationRecord>> {
    let mut lines = r.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((idx, line)) => {
                let line = line?;
                if line.starts_with('#') || line.trim().is_empty() {
                    continue;
                }
                break (idx + 1, line);
            }
            None => {
                return Err(Error::Parse {
                    line: 1,
                    message: "empty records file".into(),
                })
            }
        }
    };
    let (header_line, header_text) = header;
    let cols: Vec<&str> = header_text.split(',').map(str::trim).collect();
    for (want, got) in RECORD_COLUMNS.iter().zip(&cols) {
        if want != got {
            return Err(Error::Parse {
                line: header_line,
                message: format!("expected column `{want}`, found `{got}`"),
            });
        }
    }
    if cols.len() < RECORD_COLUMNS.len() {
        return Err(Error::Parse {
            line: header_line,
            message: format!(
                "expected at least {} columns, found {}",
                RECORD_COLUMNS.len(),
                cols.len()
            ),
        });
    }
    for (j, col) in cols.iter().enumerate().skip(RECORD_COLUMNS.len()) {
        let expected = format!("beta_{}", j - RECORD_COLUMNS.len() + 1);
        if *col != expected {
            return Err(Error::Parse {
                line: header_line,
                message: format!("expected column `{expected}`, found `{col}`"),
            });
        }
    }
    let p = cols.len() - RECORD_COLUMNS.len();

    let mut records = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        let line = line?;
        if line.starts_with('#') || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != cols.len() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("row has {} fields, expected {}", fields.len(), cols.len()),
            });
        }
        let field = |name: &str, value: &str| -> Error {
            Error::Parse {
                line: line_no,
                message: format!("cannot parse `{value}` as {name}"),
            }
        };
        records.push(ReplicationRecord {
            method: Method::parse(fields[0])?,
            r: fields[1].parse().map_err(|_| field("r", fields[1]))?,
            replication: fields[2]
                .parse()
                .map_err(|_| field("replication", fields[2]))?,
            seed: fields[3].parse().map_err(|_| field("seed", fields[3]))?,
            mse: fields[4].parse().map_err(|_| field("mse", fields[4]))?,
            time_ms: fields[5]
                .parse()
                .map_err(|_| field("time_ms", fields[5]))?,
            responses_measured: fields[6]
                .parse()
                .map_err(|_| field("responses_measured", fields[6]))?,
            converged: fields[7]
                .parse()
                .map_err(|_| field("converged", fields[7]))?,
            beta: fields[8..8 + p]
                .iter()
                .map(|s| s.parse().map_err(|_| field("beta", s)))
                .collect::<Result<_>>()?,
        });
    }
    Ok(records)
}

/// Write aggregate cells. Columns: `method, r, mse, std_error, converged,
/// failed, mean_time_ms, mean_responses`.
pub fn write_cells_csv<W: Write>(w: &mut W, header: &str, cells: &[MseCell]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(
        w,
        "method,r,mse,std_error,converged,failed,mean_time_ms,mean_responses"
    )?;
    for c in cells {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            c.method.name(),
            c.r,
            fmt17(c.mse),
            fmt17(c.std_error),
            c.converged,
            c.failed,
            fmt17(c.mean_time_ms),
            fmt17(c.mean_responses),
        )?;
    }
    Ok(())
}

/// Write aggregate cells in long format: one `(method, r, metric, value)`
/// row per metric.
pub fn write_long_csv<W: Write>(w: &mut W, header: &str, cells: &[MseCell]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "method,r,metric,value")?;
    for c in cells {
        let metrics: [(&str, f64); 6] = [
            ("mse", c.mse),
            ("std_error", c.std_error),
            ("converged", c.converged as f64),
            ("failed", c.failed as f64),
            ("mean_time_ms", c.mean_time_ms),
            ("mean_responses", c.mean_responses),
        ];
        for (name, value) in metrics {
            writeln!(w, "{},{},{},{}", c.method.name(), c.r, name, fmt17(value))?;
        }
    }
    Ok(())
}

/// Write Q-Q pairs with the correlation in a second comment line.
/// Columns: `theoretical, observed`.
pub fn write_qq_csv<W: Write>(w: &mut W, header: &str, report: &QqReport) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(
        w,
        "# correlation={} df={} replications={}",
        fmt17(report.correlation),
        report.df,
        report.pairs.len()
    )?;
    writeln!(w, "theoretical,observed")?;
    for &(t, o) in &report.pairs {
        writeln!(w, "{},{}", fmt17(t), fmt17(o))?;
    }
    Ok(())
}

/// Write a sampling distribution. Columns: `index, pi`.
pub fn write_weights_csv<W: Write>(
    w: &mut W,
    header: &str,
    weights: &SamplingWeights,
) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(w, "# strategy={}", weights.strategy())?;
    writeln!(w, "index,pi")?;
    for (i, &pi) in weights.pi().iter().enumerate() {
        writeln!(w, "{},{}", i, fmt17(pi))?;
    }
    Ok(())
}

/// Write a held-out evaluation report. Columns: `method, r, median_rel_mse,
/// median_pred_ratio, converged, failed`.
pub fn write_real_data_csv<W: Write>(
    w: &mut W,
    header: &str,
    report: &RealDataReport,
) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(
        w,
        "# family={} n_train={} n_test={} replications={}",
        report.family, report.n_train, report.n_test, report.replications
    )?;
    writeln!(
        w,
        "method,r,median_rel_mse,median_pred_ratio,converged,failed"
    )?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},{},{},{}",
            row.method.name(),
            row.r,
            fmt17(row.median_rel_mse),
            fmt17(row.median_pred_ratio),
            row.converged,
            row.failed,
        )?;
    }
    Ok(())
}

/// Write a timing table. Columns: `method, r, runs, median_total_ms,
/// median_pilot_ms, median_weights_ms, median_sample_ms, median_solve_ms`.
pub fn write_timing_csv<W: Write>(w: &mut W, header: &str, rows: &[TimingRow]) -> Result<()> {
    writeln!(w, "{header}")?;
    writeln!(
        w,
        "method,r,runs,median_total_ms,median_pilot_ms,median_weights_ms,\
         median_sample_ms,median_solve_ms"
    )?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.method.name(),
            row.r,
            row.runs,
            fmt17(row.median_total_ms),
            fmt17(row.median_pilot_ms),
            fmt17(row.median_weights_ms),
            fmt17(row.median_sample_ms),
            fmt17(row.median_solve_ms),
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::BufReader;

    use crate::datagen::gen_scenario;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write as _;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    #[test]
    fn missing_response_cells_become_a_masked_store() {
        let f = write_temp("y,x1,x2\n1.0,2.0,3.0\n,4.0,5.0\n0.0,6.0,7.0\n");
        let loaded = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(loaded.dataset.n(), 3);
        assert_eq!(loaded.dataset.p(), 2);
        assert_eq!(loaded.observed_responses, 2);
        assert!(!loaded.dataset.is_fully_observed());
        assert_eq!(loaded.dataset.response(0).unwrap(), 1.0);
        assert!(loaded.dataset.response(1).is_err());
        assert_eq!(loaded.response_name, "y");
        assert_eq!(loaded.feature_names, vec!["x1", "x2"]);
    }

    #[test]
    fn export_then_load_is_bit_identical() {
        let scenario = crate::datagen::ScenarioSpec::new(DesignKind::Ga, 50, 4, 99);
        let (data, _) = gen_scenario(&scenario, 0).unwrap();
        let mut buf = Vec::new();
        export_csv(&mut buf, &data, &output_header("cafe", 99)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# osumc"));

        let f = write_temp(&text);
        let loaded = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(loaded.dataset.n(), 50);
        assert_eq!(loaded.dataset.p(), 4);
        assert_eq!(loaded.dataset.x(), data.x());
        let y0 = data.full_responses().unwrap();
        let y1 = loaded.dataset.full_responses().unwrap();
        assert_eq!(y0, y1, "responses must round-trip bit-identically");
    }

    #[test]
    fn named_response_and_feature_subset_are_resolved() {
        let f = write_temp("a,b,target,c\n1,2,3,4\n5,6,7,8\n");
        let schema = CsvSchema {
            response_column: Some("target".into()),
            feature_columns: FeatureColumns::List(vec!["c".into(), "a".into()]),
            ..CsvSchema::default()
        };
        let loaded = load_csv(f.path(), &schema).unwrap();
        assert_eq!(loaded.dataset.p(), 2);
        assert_eq!(loaded.feature_names, vec!["c", "a"]);
        assert_eq!(loaded.dataset.x()[(0, 0)], 4.0);
        assert_eq!(loaded.dataset.x()[(0, 1)], 1.0);
        assert_eq!(loaded.dataset.response(1).unwrap(), 7.0);

        let bad = CsvSchema {
            response_column: Some("nope".into()),
            ..CsvSchema::default()
        };
        assert!(matches!(
            load_csv(f.path(), &bad).unwrap_err(),
            Error::InvalidValue { .. }
        ));
    }

    #[test]
    fn bad_cells_carry_file_coordinates() {
        let f = write_temp("y,x1\n1.0,2.0\n3.0,oops\n");
        let err = load_csv(f.path(), &CsvSchema::default()).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("oops"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }

        let f2 = write_temp("y,x1\n1.0,inf\n");
        let err2 = load_csv(f2.path(), &CsvSchema::default()).unwrap_err();
        assert!(
            matches!(err2, Error::NonFiniteValue { row: 2, column: 2 }),
            "{err2:?}"
        );
    }

    #[test]
    fn missing_feature_cells_are_rejected() {
        let f = write_temp("y;x1\n1.0;NA\n");
        let schema = CsvSchema {
            delimiter: b';',
            missing_token: "NA".into(),
            ..CsvSchema::default()
        };
        let err = load_csv(f.path(), &schema).unwrap_err();
        match err {
            Error::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("only the response"), "{message}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn headerless_files_use_positional_columns() {
        let f = write_temp("1.5,2.0,3.0\n2.5,4.0,5.0\n");
        let schema = CsvSchema {
            has_header: false,
            ..CsvSchema::default()
        };
        let loaded = load_csv(f.path(), &schema).unwrap();
        assert_eq!(loaded.dataset.n(), 2);
        assert_eq!(loaded.dataset.p(), 2);
        assert_eq!(loaded.response_name, "c0");
        assert_eq!(loaded.dataset.response(1).unwrap(), 2.5);
    }

    #[test]
    fn config_files_parse_with_defaults_and_reject_junk() {
        let text = "\
# experiment grid
family = logistic
design = mzNormal
n = 5000
p = 8
seed = 77
methods = osumc, uniform, slev
r_values = 100, 200
r0 = 120
replications = 40
tol = 1e-10
max_iter = 60
slev_alpha = 0.85
weight_floor = 0.05
parallelism = 2
gated = true
output_dir = out/run1
";
        let config = parse_run_config(text).unwrap();
        assert_eq!(config.spec.scenario.family, Family::Logistic);
        assert_eq!(config.spec.scenario.n, 5000);
        assert_eq!(config.spec.scenario.p, 8);
        assert_eq!(config.spec.scenario.seed, 77);
        assert_eq!(
            config.spec.methods,
            vec![Method::Osumc, Method::Uniform, Method::Slev]
        );
        assert_eq!(config.spec.r_values, vec![100, 200]);
        assert_eq!(config.spec.r0, 120);
        assert_eq!(config.spec.replications, 40);
        assert_eq!(config.spec.tol, 1e-10);
        assert_eq!(config.spec.max_iter, 60);
        assert_eq!(config.spec.slev_alpha, 0.85);
        assert_eq!(config.spec.weight_floor, 0.05);
        assert_eq!(config.spec.parallelism, Some(2));
        assert!(config.spec.gated);
        assert_eq!(config.output_dir, PathBuf::from("out/run1"));
        config.validate().unwrap();

        let err = parse_run_config("bogus_key = 3\n").unwrap_err();
        assert!(
            matches!(err, Error::UnknownKey(ref k) if k == "bogus_key"),
            "{err:?}"
        );
        let dup = parse_run_config("n = 3\nn = 4\n").unwrap_err();
        assert!(matches!(dup, Error::Parse { line: 2, .. }), "{dup:?}");
        assert!(parse_run_config("n\n").is_err());
        assert!(parse_run_config("parallelism = 0\n").is_err());
    }

    #[test]
    fn design_key_sets_the_family_unless_overridden() {
        let a = parse_run_config("design = GA\n").unwrap();
        assert_eq!(a.spec.scenario.family, Family::Linear);
        let b = parse_run_config("family = linear\ndesign = case1\n").unwrap();
        // case1 defaults to poisson, but the explicit family wins.
        assert_eq!(b.spec.scenario.family, Family::Linear);
    }

    #[test]
    fn config_hash_tracks_semantics_not_formatting() {
        let a = parse_run_config("n = 4000\n# comment\nseed = 5\n").unwrap();
        let b = parse_run_config("seed = 5\nn = 4000   # inline comment\n").unwrap();
        let c = parse_run_config("seed = 6\nn = 4000\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 16);
        assert!(a.hash().chars().all(|ch| ch.is_ascii_hexdigit()));
    }

    #[test]
    fn records_round_trip_including_nan_rows() {
        let records = vec![
            ReplicationRecord {
                method: Method::Osumc,
                r: 100,
                replication: 0,
                seed: 9,
                mse: 0.125,
                time_ms: 3.5,
                responses_measured: 150,
                converged: true,
                beta: vec![1.0 / 3.0, -2.0e-15],
            },
            ReplicationRecord {
                method: Method::Uniform,
                r: 100,
                replication: 1,
                seed: 9,
                mse: f64::NAN,
                time_ms: 1.0,
                responses_measured: 100,
                converged: false,
                beta: vec![f64::NAN, f64::NAN],
            },
        ];
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &output_header("beef", 9), &records).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("# osumc"));
        let back = read_records_csv(BufReader::new(text.as_bytes())).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].method, Method::Osumc);
        assert_eq!(back[0].beta, records[0].beta, "floats must round-trip exactly");
        assert_eq!(back[0].mse, 0.125);
        assert!(back[1].mse.is_nan());
        assert!(back[1].beta[0].is_nan());
        assert!(!back[1].converged);

        let err = read_records_csv(BufReader::new("method,r\n".as_bytes())).unwrap_err();
        assert!(matches!(err, Error::Parse { .. }), "{err:?}");
    }

    #[test]
    fn aggregate_writers_emit_documented_schemas() {
        let cells = vec![MseCell {
            method: Method::Osumc,
            r: 200,
            mse: 0.5,
            std_error: 0.01,
            converged: 99,
            failed: 1,
            mean_time_ms: 4.0,
            mean_responses: 350.0,
        }];
        let mut buf = Vec::new();
        write_cells_csv(&mut buf, "# h", &cells).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("method,r,mse,std_error"));
        assert!(text.contains("osumc,200,"));

        let mut long = Vec::new();
        write_long_csv(&mut long, "# h", &cells).unwrap();
        let text = String::from_utf8(long).unwrap();
        assert_eq!(text.lines().count(), 2 + 6);
        assert!(text.contains("osumc,200,mse,"));
        assert!(text.contains("osumc,200,mean_responses,"));
    }
}
