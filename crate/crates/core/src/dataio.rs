//! Smart-meter CSV ingestion and preprocessing.
//!
//! A [`Schema`] (TOML) maps CSV columns to roles: model feature, active or
//! reactive power target, or ignored. Each column also has a physical kind
//! that selects its default plausibility bounds for [`clean`]. The pipeline
//! is `load_csv → clean → impute → split`, then [`Dataset::matrix`] extracts
//! the feature matrix and target vector for one target.
//!
//! Example schema:
//!
//! ```toml
//! timestamp = "timestamp"
//! capacity = 25.0          # kVA, normalizer for the capacity metric
//! time_of_day = true       # append the 15-minute interval index as a feature
//!
//! [[columns]]
//! name = "va"
//! role = "feature"
//! kind = "voltage"
//!
//! [[columns]]
//! name = "p"
//! role = "active"
//! kind = "power"
//! ```

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("missing mandatory column {0:?}")]
    MissingColumn(String),
    #[error("line {line}: duplicate timestamp {timestamp} (first seen on line {first_line})")]
    DuplicateTimestamp {
        line: u64,
        first_line: u64,
        timestamp: NaiveDateTime,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("need at least 2 usable rows to split, found {0}")]
    TooFewRows(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("schema has no {0} target column")]
    MissingTarget(Target),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Feature,
    Active,
    Reactive,
    Ignore,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Voltage,
    Current,
    PowerFactor,
    Power,
    #[default]
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Target {
    Active,
    Reactive,
}

impl Target {
    pub fn role(self) -> Role {
        match self {
            Target::Active => Role::Active,
            Target::Reactive => Role::Reactive,
        }
    }
}

impl std::fmt::Display for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Target::Active => "active",
            Target::Reactive => "reactive",
        })
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "active" | "p" => Ok(Target::Active),
            "reactive" | "q" => Ok(Target::Reactive),
            other => Err(format!(
                "unknown target {other:?}, expected active or reactive"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    pub name: String,
    pub role: Role,
    #[serde(default)]
    pub kind: Kind,
    /// Overrides the kind's default lower bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
}

impl ColumnSpec {
    pub fn new(name: &str, role: Role, kind: Kind) -> Self {
        Self {
            name: name.to_string(),
            role,
            kind,
            min: None,
            max: None,
        }
    }
}

fn default_nominal_voltage() -> f64 {
    220.0
}

fn default_timestamp() -> String {
    "timestamp".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    #[serde(default = "default_timestamp")]
    pub timestamp: String,
    /// Inverter rating (kVA); bounds power columns and normalizes metrics.
    pub capacity: f64,
    #[serde(default = "default_nominal_voltage")]
    pub nominal_voltage: f64,
    /// Adds the interval-of-day index (0..96 for 15-minute data) as the last
    /// feature.
    #[serde(default)]
    pub time_of_day: bool,
    pub columns: Vec<ColumnSpec>,
}

/// Name of the derived time-of-day feature.
pub const TIME_OF_DAY: &str = "interval_of_day";

impl Schema {
    /// The standard smart-meter layout: three phase voltages and currents,
    /// power factor, previous P/Q setting points, the interval of day, and
    /// `p`/`q` targets.
    pub fn standard(capacity: f64) -> Self {
        use Kind::*;
        use Role::*;
        let mut columns: Vec<ColumnSpec> = ["va", "vb", "vc"]
            .iter()
            .map(|n| ColumnSpec::new(n, Feature, Voltage))
            .collect();
        columns.extend(
            ["ia", "ib", "ic"]
                .iter()
                .map(|n| ColumnSpec::new(n, Feature, Current)),
        );
        columns.push(ColumnSpec::new("pf", Feature, PowerFactor));
        columns.push(ColumnSpec::new("p_set_prev", Feature, Power));
        columns.push(ColumnSpec::new("q_set_prev", Feature, Power));
        columns.push(ColumnSpec::new("p", Active, Power));
        columns.push(ColumnSpec::new("q", Reactive, Power));
        Self {
            timestamp: default_timestamp(),
            capacity,
            nominal_voltage: default_nominal_voltage(),
            time_of_day: true,
            columns,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, DataError> {
        let schema: Schema = toml::from_str(text).map_err(|e| DataError::Schema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema TOML encoding cannot fail")
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            return Err(DataError::Schema("capacity must be positive".into()));
        }
        let mut seen = HashSet::new();
        for c in &self.columns {
            if !seen.insert(c.name.as_str()) || c.name == self.timestamp {
                return Err(DataError::Schema(format!(
                    "column {:?} declared twice",
                    c.name
                )));
            }
        }
        for role in [Role::Active, Role::Reactive] {
            if self.columns.iter().filter(|c| c.role == role).count() > 1 {
                return Err(DataError::Schema(format!(
                    "more than one {role:?} target column"
                )));
            }
        }
        if self.feature_names().is_empty() {
            return Err(DataError::Schema("no feature columns".into()));
        }
        Ok(())
    }

    /// Feature names in matrix column order. Target columns never appear.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .columns
            .iter()
            .filter(|c| c.role == Role::Feature)
            .map(|c| c.name.clone())
            .collect();
        if self.time_of_day {
            names.push(TIME_OF_DAY.to_string());
        }
        names
    }

    /// Plausibility bounds for column `i`, `None` when unbounded.
    pub fn bounds(&self, i: usize) -> (Option<f64>, Option<f64>) {
        let c = &self.columns[i];
        let (lo, hi) = match c.kind {
            Kind::Voltage => (Some(0.0), Some(1.5 * self.nominal_voltage)),
            Kind::PowerFactor => (Some(-1.0), Some(1.0)),
            Kind::Power => (Some(-self.capacity), Some(self.capacity)),
            Kind::Current | Kind::Other => (None, None),
        };
        (c.min.or(lo), c.max.or(hi))
    }
}

/// One row of a dataset. `values` follows the schema's column order.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementRecord {
    pub timestamp: NaiveDateTime,
    /// Line in the source file (header is line 1).
    pub line: u64,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub records: Vec<MeasurementRecord>,
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.naive_utc());
    }
    [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ]
    .iter()
    .find_map(|f| NaiveDateTime::parse_from_str(s, f).ok())
}

fn parse_cell(raw: &str) -> Result<Option<f64>, String> {
    let s = raw.trim();
    if s.is_empty() {
        return Ok(None);
    }
    let v = s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"))?;
    Ok(v.is_finite().then_some(v))
}

pub fn read_csv<R: Read>(reader: R, schema: &Schema) -> Result<Dataset, DataError> {
    schema.validate()?;
    let mut rdr = csv::ReaderBuilder::new().from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let position = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };
    let ts_col = position(&schema.timestamp)?;
    let cols = schema
        .columns
        .iter()
        .map(|c| position(&c.name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let raw_ts = rec.get(ts_col).unwrap_or("");
        let timestamp = parse_timestamp(raw_ts).ok_or_else(|| DataError::Parse {
            line,
            message: format!("unparseable timestamp {raw_ts:?}"),
        })?;
        let values = cols
            .iter()
            .zip(&schema.columns)
            .map(|(&j, spec)| {
                if spec.role == Role::Ignore {
                    return Ok(None);
                }
                parse_cell(rec.get(j).unwrap_or("")).map_err(|m| DataError::Parse {
                    line,
                    message: format!("column {}: {m}", spec.name),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        records.push(MeasurementRecord {
            timestamp,
            line,
            values,
        });
    }
    records.sort_by_key(|r| r.timestamp);
    for w in records.windows(2) {
        if w[0].timestamp == w[1].timestamp {
            let (first, dup) = if w[0].line < w[1].line {
                (&w[0], &w[1])
            } else {
                (&w[1], &w[0])
            };
            return Err(DataError::DuplicateTimestamp {
                line: dup.line,
                first_line: first.line,
                timestamp: dup.timestamp,
            });
        }
    }
    Ok(Dataset {
        schema: schema.clone(),
        records,
    })
}

pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset, DataError> {
    let f = std::fs::File::open(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(std::io::BufReader::new(f), schema)
}

#[derive(Debug, Clone, PartialEq)]
pub enum CleanAction {
    CellRejected {
        line: u64,
        column: String,
        value: f64,
    },
    RowDropped {
        line: u64,
    },
}

impl std::fmt::Display for CleanAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CleanAction::CellRejected {
                line,
                column,
                value,
            } => write!(
                f,
                "line {line}: {column}={value} out of bounds, marked missing"
            ),
            CleanAction::RowDropped { line } => {
                write!(f, "line {line}: no valid cells, row dropped")
            }
        }
    }
}

/// Marks out-of-bounds cells missing and drops rows left with no valid
/// feature or target cell. Never fails; every change is logged.
pub fn clean(dataset: &Dataset) -> (Dataset, Vec<CleanAction>) {
    let schema = &dataset.schema;
    let bounds: Vec<_> = (0..schema.columns.len())
        .map(|i| schema.bounds(i))
        .collect();
    let mut log = Vec::new();
    let mut records = Vec::with_capacity(dataset.records.len());
    for rec in &dataset.records {
        let mut rec = rec.clone();
        for (j, cell) in rec.values.iter_mut().enumerate() {
            let Some(v) = *cell else { continue };
            let (lo, hi) = bounds[j];
            if lo.is_some_and(|lo| v < lo) || hi.is_some_and(|hi| v > hi) {
                *cell = None;
                log.push(CleanAction::CellRejected {
                    line: rec.line,
                    column: schema.columns[j].name.clone(),
                    value: v,
                });
            }
        }
        let any_valid = rec
            .values
            .iter()
            .zip(&schema.columns)
            .any(|(v, c)| c.role != Role::Ignore && v.is_some());
        if any_valid {
            records.push(rec);
        } else {
            log.push(CleanAction::RowDropped { line: rec.line });
        }
    }
    (
        Dataset {
            schema: schema.clone(),
            records,
        },
        log,
    )
}

/// Default longest gap (in rows) that [`impute`] fills: one hour of
/// 15-minute data.
pub const DEFAULT_MAX_GAP: usize = 4;

/// Linearly interpolates interior runs of at most `max_gap` missing cells
/// per column. Runs touching either end of the dataset and longer runs stay
/// missing. Observed cells are never changed.
pub fn impute(dataset: &Dataset, max_gap: usize) -> Dataset {
    let mut out = dataset.clone();
    let n = out.records.len();
    for (j, spec) in dataset.schema.columns.iter().enumerate() {
        if spec.role == Role::Ignore {
            continue;
        }
        let mut last_obs: Option<usize> = None;
        for i in 0..n {
            let Some(right) = out.records[i].values[j] else {
                continue;
            };
            if let Some(l) = last_obs {
                let gap = i - l - 1;
                if gap >= 1 && gap <= max_gap {
                    let left = out.records[l].values[j].expect("observed");
                    let span = (i - l) as f64;
                    for k in l + 1..i {
                        let t = (k - l) as f64 / span;
                        out.records[k].values[j] = Some(left + (right - left) * t);
                    }
                }
            }
            last_obs = Some(i);
        }
    }
    out
}

/// Chronological split: the first `round(fraction · n)` rows train, the
/// rest test. Both halves are kept non-empty.
pub fn split(dataset: &Dataset, train_fraction: f64) -> Result<(Dataset, Dataset), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::BadFraction(train_fraction));
    }
    let n = dataset.records.len();
    if n < 2 {
        return Err(DataError::TooFewRows(n));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let part = |r: &[MeasurementRecord]| Dataset {
        schema: dataset.schema.clone(),
        records: r.to_vec(),
    };
    Ok((
        part(&dataset.records[..n_train]),
        part(&dataset.records[n_train..]),
    ))
}

fn interval_of_day(ts: &NaiveDateTime) -> f64 {
    ((ts.hour() * 60 + ts.minute()) / 15) as f64
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.columns.iter().position(|c| c.name == name)
    }

    fn target_index(&self, target: Target) -> Result<usize, DataError> {
        self.schema
            .columns
            .iter()
            .position(|c| c.role == target.role())
            .ok_or(DataError::MissingTarget(target))
    }

    fn feature_row(&self, rec: &MeasurementRecord) -> Option<Vec<f64>> {
        let mut row = Vec::new();
        for (v, c) in rec.values.iter().zip(&self.schema.columns) {
            if c.role == Role::Feature {
                row.push((*v)?);
            }
        }
        if self.schema.time_of_day {
            row.push(interval_of_day(&rec.timestamp));
        }
        Some(row)
    }

    /// Rows with every feature and the chosen target present.
    pub fn usable(&self, target: Target) -> Result<Dataset, DataError> {
        let t = self.target_index(target)?;
        let records = self
            .records
            .iter()
            .filter(|r| r.values[t].is_some() && self.feature_row(r).is_some())
            .cloned()
            .collect();
        Ok(Dataset {
            schema: self.schema.clone(),
            records,
        })
    }

    /// Feature matrix and target vector over usable rows.
    pub fn matrix(&self, target: Target) -> Result<(FeatureMatrix, Vec<f64>), DataError> {
        let t = self.target_index(target)?;
        let names = self.schema.feature_names();
        let mut data = Vec::new();
        let mut y = Vec::new();
        for rec in &self.records {
            let (Some(target), Some(row)) = (rec.values[t], self.feature_row(rec)) else {
                continue;
            };
            data.extend(row);
            y.push(target);
        }
        Ok((FeatureMatrix::from_vec(y.len(), names.len(), data), y))
    }
}

/// Writes a feature matrix as CSV with a header of feature names.
pub fn write_feature_csv<W: Write>(w: W, names: &[String], x: &FeatureMatrix) -> csv::Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(names)?;
    for row in x.rows() {
        wtr.write_record(row.iter().map(|v| {
            if v.is_nan() {
                String::new()
            } else {
                v.to_string()
            }
        }))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a headed numeric CSV into a matrix; empty cells become NaN.
pub fn read_feature_csv<R: Read>(reader: R) -> Result<(Vec<String>, FeatureMatrix), DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let names: Vec<String> = rdr
        .headers()
        .map_err(|e| DataError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .iter()
        .map(String::from)
        .collect();
    let mut data = Vec::new();
    let mut n = 0;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| DataError::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        for cell in rec.iter() {
            let v = if cell.is_empty() {
                f64::NAN
            } else {
                cell.parse::<f64>().map_err(|e| DataError::Parse {
                    line,
                    message: format!("{cell:?}: {e}"),
                })?
            };
            data.push(v);
        }
        n += 1;
    }
    Ok((names.clone(), FeatureMatrix::from_vec(n, names.len(), data)))
}

/// Writes a one-column CSV of values at full (shortest round-trip) precision.
pub fn write_column_csv<W: Write>(mut w: W, header: &str, values: &[f64]) -> std::io::Result<()> {
    writeln!(w, "{header}")?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    Ok(())
}
