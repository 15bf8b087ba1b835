//! Forecast accuracy metrics and prediction-stream parity reports.
//!
//! The capacity-normalized error is the RMSE divided by the inverter's
//! rated capacity, in percent. Lower is better and zero is a perfect match.
//! Normalizing by capacity instead of by each actual value keeps the metric
//! defined when measured power is zero.

use std::fmt;
use std::io::Read;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1} values")]
    LengthMismatch(usize, usize),
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("actual values have zero variance; R² is undefined")]
    ZeroVariance,
    #[error("capacity must be positive and finite, got {0}")]
    BadCapacity(f64),
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("prediction file: {0}")]
    Read(String),
}

fn check_pair(a: &[f64], b: &[f64], min_n: usize) -> Result<(), MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    if a.len() < min_n {
        return Err(MetricsError::TooFewSamples {
            need: min_n,
            got: a.len(),
        });
    }
    Ok(())
}

/// Coefficient of determination `1 - SS_res / SS_tot`. Negative when the
/// prediction is worse than the mean of `actual`.
pub fn r_squared(actual: &[f64], predicted: &[f64]) -> Result<f64, MetricsError> {
    check_pair(actual, predicted, 2)?;
    if let Some(i) = actual.iter().chain(predicted).position(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite(i % actual.len()));
    }
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let ss_tot: f64 = actual.iter().map(|y| (y - mean) * (y - mean)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let ss_res: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    Ok(1.0 - ss_res / ss_tot)
}

pub fn rmse(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    check_pair(a, b, 1)?;
    let ss: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((ss / a.len() as f64).sqrt())
}

/// `100 · sqrt(mean(((y - ŷ) / capacity)²))`.
pub fn capacity_mape(
    actual: &[f64],
    predicted: &[f64],
    capacity: f64,
) -> Result<f64, MetricsError> {
    if !(capacity > 0.0 && capacity.is_finite()) {
        return Err(MetricsError::BadCapacity(capacity));
    }
    check_pair(actual, predicted, 1)?;
    let ss: f64 = actual
        .iter()
        .zip(predicted)
        .map(|(y, p)| {
            let e = (y - p) / capacity;
            e * e
        })
        .sum();
    Ok((ss / actual.len() as f64).sqrt() * 100.0)
}

pub fn max_abs_err(a: &[f64], b: &[f64]) -> Result<f64, MetricsError> {
    check_pair(a, b, 1)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    /// `None` when the reference stream has zero variance or fewer than two
    /// samples.
    pub r2: Option<f64>,
    pub cap_mape_pct: f64,
    pub rmse: f64,
    pub max_abs_err: f64,
    pub n: usize,
    pub capacity: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "n,capacity,r2,cap_mape_pct,rmse,max_abs_err";

    pub fn csv_row(&self) -> String {
        let r2 = self.r2.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.n, self.capacity, r2, self.cap_mape_pct, self.rmse, self.max_abs_err
        )
    }

    pub fn is_zero(&self) -> bool {
        self.cap_mape_pct == 0.0 && self.rmse == 0.0 && self.max_abs_err == 0.0
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "samples        {:>22}", self.n)?;
        writeln!(f, "capacity       {:>22}", self.capacity)?;
        match self.r2 {
            Some(r2) => writeln!(f, "R^2            {r2:>22.10}")?,
            None => writeln!(f, "R^2            {:>22}", "undefined")?,
        }
        writeln!(f, "cap-MAPE (%)   {:>22.13}", self.cap_mape_pct)?;
        writeln!(f, "RMSE           {:>22.15}", self.rmse)?;
        write!(f, "max |diff|     {:>22.15}", self.max_abs_err)
    }
}

/// Accuracy of `predicted` against `actual`.
pub fn evaluate(
    actual: &[f64],
    predicted: &[f64],
    capacity: f64,
) -> Result<MetricsReport, MetricsError> {
    let cap_mape_pct = capacity_mape(actual, predicted, capacity)?;
    let r2 = match r_squared(actual, predicted) {
        Ok(v) => Some(v),
        Err(MetricsError::ZeroVariance | MetricsError::TooFewSamples { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        r2,
        cap_mape_pct,
        rmse: rmse(actual, predicted)?,
        max_abs_err: max_abs_err(actual, predicted)?,
        n: actual.len(),
        capacity,
    })
}

/// Agreement between a reference prediction stream and a candidate stream
/// produced by another build or device.
pub fn parity_report(
    reference: &[f64],
    candidate: &[f64],
    capacity: f64,
) -> Result<MetricsReport, MetricsError> {
    evaluate(reference, candidate, capacity)
}

/// Reads a one-column CSV with a header row.
pub fn read_prediction_csv<R: Read>(reader: R) -> Result<Vec<f64>, MetricsError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| MetricsError::Read(e.to_string()))?;
        if rec.len() != 1 {
            return Err(MetricsError::Read(format!(
                "line {}: expected one column, found {}",
                i + 2,
                rec.len()
            )));
        }
        let v = rec[0]
            .parse::<f64>()
            .map_err(|e| MetricsError::Read(format!("line {}: {e}", i + 2)))?;
        out.push(v);
    }
    Ok(out)
}
