//! LSBoost regression-tree forecasting and V-Q droop control for microgrid
//! edge devices.
//!
//! * [`model`]: compact regression trees, ensembles, `GBTM` model files
//! * [`trainer`]: least-squares boosting with exact greedy CART trees
//! * [`droop`]: V-Q droop setpoints and inverter power-flow equations
//! * [`metrics`]: R², capacity-normalized error, RMSE and parity reports
//! * [`dataio`]: smart-meter CSV ingestion, cleaning, imputation, splitting
//! * [`cli`]: the `gridedge` command-line front end

pub mod bench;
pub mod cli;
pub mod dataio;
pub mod droop;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod synth;
pub mod trainer;

pub use matrix::FeatureMatrix;
pub use model::{CompactRegressionTree, GBTEnsemble, ModelError};
pub use trainer::TrainConfig;

/// How data-parallel inner loops are run.
///
/// `Parallel` uses the rayon pool when the `parallel` feature is enabled and
/// falls back to `Sequential` otherwise. Both produce bit-identical results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}
