//! File formats.
//!
//! Tables are comma-separated with an exact header:
//!
//! | table        | header                        |
//! |--------------|-------------------------------|
//! | predictions  | `y,t,g,q0,q1`                 |
//! | leave-out    | `y,t,g_wo,q_wo`               |
//! | dataset      | `y,t,<covariate names...>`    |
//!
//! Numbers must be finite; `t` must be the integer `0` or `1`. Structured
//! documents (run config, group spec, fit config, simulation config, plot
//! data, ground truth) are JSON carrying `schema_version` (currently 1).

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapConfig;
use crate::calibration::LeaveOutPredictions;
use crate::error::{Error, Result};
use crate::frame::{AlphaGrid, Estimand, PredictionFrame};
use crate::models::{Dataset, FitConfig, GroupSpec};
use crate::simulator::SimConfig;

pub const SCHEMA_VERSION: u32 = 1;

pub const PREDICTION_COLUMNS: [&str; 5] = ["y", "t", "g", "q0", "q1"];
pub const LEAVE_OUT_COLUMNS: [&str; 4] = ["y", "t", "g_wo", "q_wo"];

/// Filename prefix that carries a leave-out table's group name.
pub const LEAVE_OUT_PREFIX: &str = "leave_out_";

pub(crate) fn schema_version() -> u32 {
    SCHEMA_VERSION
}

struct Table {
    path: PathBuf,
    header: Vec<String>,
    rows: Vec<(usize, csv::StringRecord)>,
}

fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(BufReader::new(file));
    let csv_err = |e: csv::Error| Error::Schema {
        file: path.to_path_buf(),
        message: e.to_string(),
    };
    let header = reader
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        rows.push((i + 1, rec.map_err(csv_err)?));
    }
    Ok(Table {
        path: path.to_path_buf(),
        header,
        rows,
    })
}

impl Table {
    fn expect_header(&self, expected: &[&str]) -> Result<()> {
        if self.header.iter().map(String::as_str).eq(expected.iter().copied()) {
            return Ok(());
        }
        let missing: Vec<&str> = expected
            .iter()
            .copied()
            .filter(|c| !self.header.iter().any(|h| h == c))
            .collect();
        let unexpected: Vec<&str> = self
            .header
            .iter()
            .map(String::as_str)
            .filter(|h| !expected.contains(h))
            .collect();
        let mut message = format!("header must be exactly `{}`", expected.join(","));
        if !missing.is_empty() {
            message.push_str(&format!("; missing columns: {}", missing.join(", ")));
        }
        if !unexpected.is_empty() {
            message.push_str(&format!("; unexpected columns: {}", unexpected.join(", ")));
        }
        if missing.is_empty() && unexpected.is_empty() {
            message.push_str("; columns are out of order or repeated");
        }
        Err(Error::Schema {
            file: self.path.clone(),
            message,
        })
    }

    fn cell_error(&self, row: usize, col: usize, message: impl Into<String>) -> Error {
        Error::Cell {
            file: self.path.clone(),
            row,
            column: self.header[col].clone(),
            message: message.into(),
        }
    }

    fn number(&self, row: usize, rec: &csv::StringRecord, col: usize) -> Result<f64> {
        let raw = &rec[col];
        match raw.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            Ok(_) => Err(self.cell_error(row, col, format!("non-finite value `{raw}`"))),
            Err(_) => Err(self.cell_error(row, col, format!("not a number: `{raw}`"))),
        }
    }

    fn treatment(&self, row: usize, rec: &csv::StringRecord, col: usize) -> Result<bool> {
        match &rec[col] {
            "0" => Ok(false),
            "1" => Ok(true),
            raw => Err(self.cell_error(row, col, format!("treatment must be 0 or 1, got `{raw}`"))),
        }
    }

    fn probability(&self, row: usize, rec: &csv::StringRecord, col: usize) -> Result<f64> {
        let v = self.number(row, rec, col)?;
        if (0.0..=1.0).contains(&v) {
            Ok(v)
        } else {
            Err(self.cell_error(row, col, format!("probability {v} lies outside [0, 1]")))
        }
    }

    fn wrap(&self, e: Error) -> Error {
        match e {
            Error::InvalidInput(message) => Error::Schema {
                file: self.path.clone(),
                message,
            },
            Error::Degenerate(message) => Error::Degenerate(format!("{}: {message}", self.path.display())),
            other => other,
        }
    }
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<PredictionFrame> {
    let table = read_table(path.as_ref())?;
    table.expect_header(&PREDICTION_COLUMNS)?;
    let n = table.rows.len();
    let (mut y, mut t, mut g, mut q0, mut q1) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (row, rec) in &table.rows {
        y.push(table.number(*row, rec, 0)?);
        t.push(table.treatment(*row, rec, 1)?);
        g.push(table.probability(*row, rec, 2)?);
        q0.push(table.number(*row, rec, 3)?);
        q1.push(table.number(*row, rec, 4)?);
    }
    PredictionFrame::new(y, t, g, q0, q1).map_err(|e| table.wrap(e))
}

/// Group name for a leave-out file: the stem with any `leave_out_` prefix
/// removed.
pub fn group_from_path(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.strip_prefix(LEAVE_OUT_PREFIX)
        .map(str::to_string)
        .unwrap_or(stem)
}

pub fn read_leave_out(path: impl AsRef<Path>, group: &str) -> Result<LeaveOutPredictions> {
    let table = read_table(path.as_ref())?;
    table.expect_header(&LEAVE_OUT_COLUMNS)?;
    let n = table.rows.len();
    let (mut y, mut t, mut g, mut q) = (
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    );
    for (row, rec) in &table.rows {
        y.push(table.number(*row, rec, 0)?);
        t.push(table.treatment(*row, rec, 1)?);
        g.push(table.probability(*row, rec, 2)?);
        q.push(table.number(*row, rec, 3)?);
    }
    LeaveOutPredictions::new(group, y, t, g, q).map_err(|e| table.wrap(e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let table = read_table(path.as_ref())?;
    if table.header.len() < 2 || table.header[0] != "y" || table.header[1] != "t" {
        return Err(Error::Schema {
            file: table.path.clone(),
            message: "dataset header must start with `y,t`".into(),
        });
    }
    let p = table.header.len() - 2;
    let mut y = Vec::with_capacity(table.rows.len());
    let mut t = Vec::with_capacity(table.rows.len());
    let mut cols = vec![Vec::with_capacity(table.rows.len()); p];
    for (row, rec) in &table.rows {
        y.push(table.number(*row, rec, 0)?);
        t.push(table.treatment(*row, rec, 1)?);
        for (j, col) in cols.iter_mut().enumerate() {
            col.push(table.number(*row, rec, j + 2)?);
        }
    }
    Dataset::new(y, t, table.header[2..].to_vec(), cols).map_err(|e| table.wrap(e))
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let to_err = |e: csv::Error| Error::Schema {
        file: path.to_path_buf(),
        message: e.to_string(),
    };
    w.write_record(header).map_err(to_err)?;
    for r in rows {
        w.write_record(&r).map_err(to_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn flag(t: bool) -> String {
    if t { "1" } else { "0" }.to_string()
}

pub fn write_predictions(path: impl AsRef<Path>, frame: &PredictionFrame) -> Result<()> {
    let rows = (0..frame.len()).map(|i| {
        vec![
            frame.y()[i].to_string(),
            flag(frame.t()[i]),
            frame.g()[i].to_string(),
            frame.q0()[i].to_string(),
            frame.q1()[i].to_string(),
        ]
    });
    write_rows(path.as_ref(), &PREDICTION_COLUMNS, rows)
}

pub fn write_leave_out(path: impl AsRef<Path>, lo: &LeaveOutPredictions) -> Result<()> {
    let rows = (0..lo.len()).map(|i| {
        vec![
            lo.y()[i].to_string(),
            flag(lo.t()[i]),
            lo.g_wo()[i].to_string(),
            lo.q_wo()[i].to_string(),
        ]
    });
    write_rows(path.as_ref(), &LEAVE_OUT_COLUMNS, rows)
}

pub fn write_dataset(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut header = vec!["y", "t"];
    header.extend(data.names().iter().map(String::as_str));
    let rows = (0..data.len()).map(|i| {
        let mut r = vec![data.y()[i].to_string(), flag(data.t()[i])];
        r.extend(data.columns().iter().map(|c| c[i].to_string()));
        r
    });
    write_rows(path.as_ref(), &header, rows)
}

/// Canonical JSON text: pretty-printed, struct field order, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let path = path.as_ref();
    let mut file = File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(to_canonical_json(value).as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn check_version(path: &Path, version: u32) -> Result<()> {
    if version == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(Error::Json {
            file: path.to_path_buf(),
            message: format!("unsupported schema_version {version}; expected {SCHEMA_VERSION}"),
        })
    }
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| Error::Json {
        file: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn invalid(path: &Path, e: Error) -> Error {
    match e {
        Error::InvalidInput(message) | Error::Domain(message) => Error::Json {
            file: path.to_path_buf(),
            message,
        },
        other => other,
    }
}

/// `start,stop,count` description of an evenly spaced alpha grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl GridSpec {
    pub fn to_grid(self) -> Result<AlphaGrid> {
        AlphaGrid::linspace(self.start, self.stop, self.count)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            start: AlphaGrid::DEFAULT_START,
            stop: AlphaGrid::DEFAULT_STOP,
            count: AlphaGrid::DEFAULT_COUNT,
        }
    }
}

/// Settings for building an Austen plot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "schema_version")]
    pub schema_version: u32,
    /// Defaults to `|tau_hat|` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_bias: Option<f64>,
    #[serde(default)]
    pub estimand: Estimand,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bootstrap: Option<BootstrapConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            target_bias: None,
            estimand: Estimand::Ate,
            alpha_grid: None,
            bootstrap: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let Some(t) = self.target_bias {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "target bias must be positive, got {t}"
                )));
            }
        }
        if let Some(g) = self.alpha_grid {
            g.to_grid()?;
        }
        if let Some(b) = &self.bootstrap {
            b.validate()?;
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<AlphaGrid> {
        self.alpha_grid.unwrap_or_default().to_grid()
    }
}

pub fn read_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let cfg: RunConfig = read_json(path)?;
    check_version(path, cfg.schema_version)?;
    cfg.validate().map_err(|e| invalid(path, e))?;
    Ok(cfg)
}

pub fn read_group_spec(path: impl AsRef<Path>) -> Result<GroupSpec> {
    let path = path.as_ref();
    let spec: GroupSpec = read_json(path)?;
    check_version(path, spec.schema_version)?;
    Ok(spec)
}

pub fn read_fit_config(path: impl AsRef<Path>) -> Result<FitConfig> {
    let path = path.as_ref();
    let cfg: FitConfig = read_json(path)?;
    check_version(path, cfg.schema_version)?;
    cfg.validate().map_err(|e| invalid(path, e))?;
    Ok(cfg)
}

pub fn read_sim_config(path: impl AsRef<Path>) -> Result<SimConfig> {
    let path = path.as_ref();
    let cfg: SimConfig = read_json(path)?;
    check_version(path, cfg.schema_version)?;
    cfg.validate().map_err(|e| invalid(path, e))?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, text).unwrap();
        p
    }

    #[test]
    fn reads_well_formed_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "y,t,g,q0,q1\n1.5,1,0.3,1,2\n0.2,0,0.6,0.1,1.1\n2,1,0.5,1,2.5\n");
        let f = read_predictions(&p).unwrap();
        assert_eq!(f.len(), 3);
        assert_eq!(f.clipped_rows(), 0);
        assert_eq!(f.t(), &[true, false, true]);
    }

    #[test]
    fn boundary_propensity_is_clipped() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "y,t,g,q0,q1\n1,1,1.0,0,1\n0,0,0.5,0,1\n");
        let f = read_predictions(&p).unwrap();
        assert_eq!(f.clipped_rows(), 1);
        assert_eq!(f.g()[0], 1.0 - 1e-6);
    }

    #[test]
    fn header_errors_name_missing_columns() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "y,t,g,q\n1,1,0.5,1\n");
        let msg = read_predictions(&p).unwrap_err().to_string();
        assert!(msg.contains("missing columns: q0, q1"), "{msg}");
        assert!(msg.contains("unexpected columns: q"), "{msg}");
        assert!(msg.contains("p.csv"), "{msg}");
    }

    #[test]
    fn cell_errors_carry_coordinates() {
        let dir = tempfile::tempdir().unwrap();
        let cases = [
            ("y,t,g,q0,q1\n1,1,0.5,0,1\n1,0,0.5,abc,1\n", "row 2, column `q0`"),
            ("y,t,g,q0,q1\n1,2,0.5,0,1\n1,0,0.5,0,1\n", "row 1, column `t`"),
            ("y,t,g,q0,q1\n1,1,0.5,0,1\nNaN,0,0.5,0,1\n", "row 2, column `y`"),
            ("y,t,g,q0,q1\n1,1,1.5,0,1\n1,0,0.5,0,1\n", "row 1, column `g`"),
            ("y,t,g,q0,q1\n1,1,0.5,0,inf\n1,0,0.5,0,1\n", "row 1, column `q1`"),
        ];
        for (text, expect) in cases {
            let p = write(dir.path(), "bad.csv", text);
            let msg = read_predictions(&p).unwrap_err().to_string();
            assert!(msg.contains(expect), "{msg} should mention {expect}");
        }
    }

    #[test]
    fn ragged_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "p.csv", "y,t,g,q0,q1\n1,1,0.5,0\n");
        assert!(read_predictions(&p).is_err());
    }

    #[test]
    fn group_names_from_filenames() {
        assert_eq!(group_from_path(Path::new("out/leave_out_income.csv")), "income");
        assert_eq!(group_from_path(Path::new("age.csv")), "age");
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_estimands() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "c.json", r#"{"schema_version":1,"colour":"red"}"#);
        let msg = read_config(&p).unwrap_err().to_string();
        assert!(msg.contains("unknown field `colour`"), "{msg}");
        assert!(msg.contains("target_bias") && msg.contains("estimand"), "{msg}");

        let p = write(dir.path(), "c.json", r#"{"estimand":"ATC"}"#);
        assert!(read_config(&p).is_err());
        let p = write(dir.path(), "c.json", r#"{"estimand":"att","target_bias":2}"#);
        let cfg = read_config(&p).unwrap();
        assert_eq!(cfg.estimand, Estimand::Att);
        let p = write(dir.path(), "c.json", r#"{"target_bias":0}"#);
        assert!(read_config(&p).is_err());
        let p = write(dir.path(), "c.json", r#"{"schema_version":2}"#);
        assert!(read_config(&p).is_err());
        let p = write(dir.path(), "c.json", r#"{"alpha_grid":{"start":0.5,"stop":0.1,"count":3}}"#);
        assert!(read_config(&p).is_err());
        let p = write(dir.path(), "c.json", r#"{"bootstrap":{"replicates":0}}"#);
        assert!(read_config(&p).is_err());
    }
}
