//! Single-sample inference latency measurement.
//!
//! Each prediction is timed on its own with a monotonic clock, after a
//! warmup, on the calling thread only. Outputs are folded into a checksum so
//! the calls cannot be optimized away. Feature parsing is not timed.

use std::fmt;
use std::hint::black_box;
use std::time::Instant;

use serde::Serialize;

use crate::matrix::FeatureMatrix;
use crate::model::{GBTEnsemble, ModelError};

pub const DEFAULT_WARMUP: usize = 100;
pub const MIN_TIMED_PREDICTIONS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    /// Distinct input rows.
    pub samples: usize,
    /// Passes over the input rows.
    pub repetitions: usize,
    pub warmup: usize,
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub checksum: f64,
}

impl BenchReport {
    pub fn timed_predictions(&self) -> usize {
        self.samples * self.repetitions
    }
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "single-sample inference latency (model evaluation only, feature I/O excluded)"
        )?;
        writeln!(f, "samples      {}", self.samples)?;
        writeln!(f, "repetitions  {}", self.repetitions)?;
        writeln!(f, "warmup       {}", self.warmup)?;
        writeln!(f, "predictions  {}", self.timed_predictions())?;
        writeln!(f, "mean_us      {:.4}", self.mean_us)?;
        writeln!(f, "p50_us       {:.4}", self.p50_us)?;
        writeln!(f, "p95_us       {:.4}", self.p95_us)?;
        write!(f, "checksum     {}", self.checksum)
    }
}

/// Passes needed for at least [`MIN_TIMED_PREDICTIONS`] timed calls.
pub fn default_repetitions(samples: usize) -> usize {
    MIN_TIMED_PREDICTIONS.div_ceil(samples.max(1)).max(1)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    // nearest rank
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

pub fn run_bench(
    model: &GBTEnsemble,
    rows: &FeatureMatrix,
    repetitions: Option<usize>,
    warmup: usize,
) -> Result<BenchReport, ModelError> {
    if rows.n_cols() != model.n_features {
        return Err(ModelError::Dimension {
            expected: model.n_features,
            got: rows.n_cols(),
        });
    }
    if rows.n_rows() == 0 {
        return Err(ModelError::Format("no input rows to benchmark".into()));
    }
    let reps = repetitions
        .unwrap_or_else(|| default_repetitions(rows.n_rows()))
        .max(1);

    let mut checksum = 0.0;
    for i in 0..warmup {
        checksum += black_box(model.predict(black_box(rows.row(i % rows.n_rows())))?);
    }
    let mut times_us = Vec::with_capacity(reps * rows.n_rows());
    for _ in 0..reps {
        for row in rows.rows() {
            let start = Instant::now();
            let y = model.predict(black_box(row));
            let elapsed = start.elapsed();
            checksum += black_box(y?);
            times_us.push(elapsed.as_nanos() as f64 / 1000.0);
        }
    }
    let mean_us = times_us.iter().sum::<f64>() / times_us.len() as f64;
    times_us.sort_by(f64::total_cmp);
    Ok(BenchReport {
        samples: rows.n_rows(),
        repetitions: reps,
        warmup,
        mean_us,
        p50_us: percentile(&times_us, 0.5),
        p95_us: percentile(&times_us, 0.95),
        checksum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CompactRegressionTree;

    #[test]
    fn single_sample_single_rep() {
        let mut m = GBTEnsemble::new(2, 0.0);
        m.push(CompactRegressionTree::stump(1, 0.5, 1.0, 2.0), 1.0);
        let x = FeatureMatrix::from_rows(&[[0.7, 0.0]]);
        let r = run_bench(&m, &x, Some(1), 0).unwrap();
        assert_eq!(r.samples, 1);
        assert_eq!(r.repetitions, 1);
        assert_eq!(r.checksum, 2.0);
        assert!(r.p50_us <= r.p95_us);
    }

    #[test]
    fn default_reps_reach_minimum() {
        assert_eq!(default_repetitions(1), 1000);
        assert_eq!(default_repetitions(576), 2);
        assert_eq!(default_repetitions(5000), 1);
    }

    #[test]
    fn rejects_wrong_width() {
        let m = GBTEnsemble::new(3, 0.0);
        let x = FeatureMatrix::from_rows(&[[0.0, 1.0]]);
        assert!(matches!(
            run_bench(&m, &x, None, 0),
            Err(ModelError::Dimension { .. })
        ));
    }

    #[test]
    fn percentiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(percentile(&v, 0.5), 50.0);
        assert_eq!(percentile(&v, 0.95), 95.0);
        assert_eq!(percentile(&[3.0], 0.95), 3.0);
    }
}
