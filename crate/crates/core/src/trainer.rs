//! Least-squares boosting (LSBoost) with exact greedy CART regression trees.
//!
//! The ensemble starts from the mean target. Each round fits a tree to the
//! current residuals by exhaustive split search, then subtracts the tree's
//! shrunken output from the residuals. Regularization is structural: depth
//! cap, minimum leaf size and the learning rate.

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;
use crate::model::{CompactRegressionTree, GBTEnsemble};
use crate::Execution;

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyInput,
    #[error("feature matrix has no columns")]
    NoFeatures,
    #[error("feature matrix has {rows} rows but {targets} targets were given")]
    LengthMismatch { rows: usize, targets: usize },
    #[error("target {index} is not finite")]
    NonFiniteTarget { index: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Boosting rounds.
    pub n_trees: usize,
    /// Shrinkage applied to every tree, in (0, 1].
    pub learn_rate: f64,
    /// Maximum tree depth; the root is depth 0.
    pub max_depth: usize,
    /// Minimum number of training rows in a leaf.
    pub min_leaf: usize,
    pub seed: u64,
    /// Fraction of rows drawn (without replacement) for each tree. 1 disables
    /// subsampling.
    pub subsample: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            learn_rate: 0.1,
            max_depth: 5,
            min_leaf: 5,
            seed: 0,
            subsample: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if self.n_trees == 0 {
            return bad("n_trees must be at least 1");
        }
        if !(self.learn_rate > 0.0 && self.learn_rate <= 1.0) {
            return bad("learn_rate must lie in (0, 1]");
        }
        if self.max_depth == 0 {
            return bad("max_depth must be at least 1");
        }
        if self.min_leaf == 0 {
            return bad("min_leaf must be at least 1");
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad("subsample must lie in (0, 1]");
        }
        Ok(())
    }
}

/// A split chosen for one node. `feature` is 0-based.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    /// `S_L²/n_L + S_R²/n_R`; maximizing it minimizes the children's SSE.
    pub score: f64,
}

/// Relative slack under which two split scores count as equal. Equal scores
/// keep the earlier candidate: lower feature, then smaller threshold.
pub const SCORE_TIE_TOLERANCE: f64 = 1e-12;

fn better(candidate: f64, incumbent: f64, tol: f64) -> bool {
    candidate > incumbent + tol
}

/// Threshold strictly above `lo` and at most `hi`, so `lo < t <= hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mut mid = (lo + hi) / 2.0;
    if !mid.is_finite() {
        mid = lo / 2.0 + hi / 2.0;
    }
    if mid <= lo {
        hi
    } else {
        mid
    }
}

/// Best split of `rows` on one feature, or `None` when no candidate leaves
/// `min_leaf` rows on both sides.
fn best_split_on_feature(
    features: &FeatureMatrix,
    residuals: &[f64],
    rows: &[usize],
    feature: usize,
    min_leaf: usize,
    tol: f64,
) -> Option<Split> {
    let mut observed: Vec<(f64, f64)> = Vec::with_capacity(rows.len());
    let mut nan_sum = 0.0;
    for &i in rows {
        let v = features.get(i, feature);
        if v.is_nan() {
            nan_sum += residuals[i];
        } else {
            observed.push((v, residuals[i]));
        }
    }
    observed.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total: f64 = observed.iter().map(|p| p.1).sum::<f64>() + nan_sum;
    let n = rows.len();

    let mut best: Option<Split> = None;
    let mut left_sum = 0.0;
    for k in 0..observed.len().saturating_sub(1) {
        left_sum += observed[k].1;
        let (lo, hi) = (observed[k].0, observed[k + 1].0);
        if lo == hi {
            continue;
        }
        let n_left = k + 1;
        let n_right = n - n_left;
        if n_left < min_leaf || n_right < min_leaf {
            continue;
        }
        let right_sum = total - left_sum;
        let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / n_right as f64;
        if best.is_none_or(|b| better(score, b.score, tol)) {
            best = Some(Split {
                feature,
                threshold: midpoint(lo, hi),
                score,
            });
        }
    }
    best
}

/// Exhaustive split search over every feature. Per-feature searches are
/// independent and may run in parallel; they are reduced in feature order
/// so the outcome does not depend on `exec`.
pub fn best_split(
    features: &FeatureMatrix,
    residuals: &[f64],
    rows: &[usize],
    min_leaf: usize,
    exec: Execution,
) -> Option<Split> {
    let sum_sq: f64 = rows.iter().map(|&i| residuals[i] * residuals[i]).sum();
    let tol = SCORE_TIE_TOLERANCE * sum_sq;
    let search = |j| best_split_on_feature(features, residuals, rows, j, min_leaf, tol);
    let per_feature: Vec<Option<Split>> = match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..features.n_cols()).into_par_iter().map(search).collect()
        }
        _ => (0..features.n_cols()).map(search).collect(),
    };
    per_feature
        .into_iter()
        .flatten()
        .fold(None, |best, s| match best {
            Some(b) if !better(s.score, b.score, tol) => Some(b),
            _ => Some(s),
        })
}

fn mean_of(residuals: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| residuals[i]).sum::<f64>() / rows.len() as f64
}

/// Grows one regression tree on `rows` of the training set.
///
/// Nodes are numbered breadth-first, so every child index exceeds its
/// parent's. Leaves carry the mean residual of their rows; internal nodes
/// carry the mean of theirs too, which is what prediction returns when a
/// missing value stops the descent there.
pub fn fit_tree_rows(
    features: &FeatureMatrix,
    residuals: &[f64],
    rows: &[usize],
    config: &TrainConfig,
    exec: Execution,
) -> Result<CompactRegressionTree, TrainError> {
    if rows.is_empty() {
        return Err(TrainError::EmptyInput);
    }
    if features.n_cols() == 0 {
        return Err(TrainError::NoFeatures);
    }
    if features.n_rows() != residuals.len() {
        return Err(TrainError::LengthMismatch {
            rows: features.n_rows(),
            targets: residuals.len(),
        });
    }
    if let Some(index) = rows.iter().copied().find(|&i| !residuals[i].is_finite()) {
        return Err(TrainError::NonFiniteTarget { index });
    }
    config.validate()?;

    let mut tree = CompactRegressionTree {
        cut_predictor_index: vec![0],
        children: vec![[0, 0]],
        cut_point: vec![0.0],
        nan_cut_points: vec![false],
        node_mean: vec![mean_of(residuals, rows)],
    };
    let mut queue = VecDeque::from([(0usize, rows.to_vec(), 0usize)]);
    while let Some((node, node_rows, depth)) = queue.pop_front() {
        if depth >= config.max_depth || node_rows.len() < 2 * config.min_leaf {
            continue;
        }
        let Some(split) = best_split(features, residuals, &node_rows, config.min_leaf, exec) else {
            continue;
        };
        let node_sum: f64 = node_rows.iter().map(|&i| residuals[i]).sum();
        let parent_score = node_sum * node_sum / node_rows.len() as f64;
        let sum_sq: f64 = node_rows.iter().map(|&i| residuals[i] * residuals[i]).sum();
        if !better(split.score, parent_score, SCORE_TIE_TOLERANCE * sum_sq) {
            continue;
        }
        let (left, right): (Vec<usize>, Vec<usize>) = node_rows
            .iter()
            .partition(|&&i| features.get(i, split.feature) < split.threshold);

        let left_id = tree.n_nodes();
        for part in [&left, &right] {
            tree.cut_predictor_index.push(0);
            tree.children.push([0, 0]);
            tree.cut_point.push(0.0);
            tree.nan_cut_points.push(false);
            tree.node_mean.push(mean_of(residuals, part));
        }
        tree.cut_predictor_index[node] = split.feature as u32 + 1;
        tree.children[node] = [left_id as u32 + 1, left_id as u32 + 2];
        tree.cut_point[node] = split.threshold;
        queue.push_back((left_id, left, depth + 1));
        queue.push_back((left_id + 1, right, depth + 1));
    }
    Ok(tree)
}

/// Fits one tree to all rows of `features`.
pub fn fit_tree(
    features: &FeatureMatrix,
    residuals: &[f64],
    config: &TrainConfig,
) -> Result<CompactRegressionTree, TrainError> {
    let rows: Vec<usize> = (0..features.n_rows()).collect();
    fit_tree_rows(features, residuals, &rows, config, Execution::default())
}

/// Result of a boosting run.
#[derive(Debug, Clone)]
pub struct BoostOutcome {
    pub model: GBTEnsemble,
    /// Training RMSE after each round; entry 0 is the bias-only model.
    pub train_rmse: Vec<f64>,
    /// Final residuals `y - bias - Σ η t_k(x)`, accumulated round by round.
    pub residuals: Vec<f64>,
}

fn rmse_of(r: &[f64]) -> f64 {
    (r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64).sqrt()
}

pub fn fit_lsboost_with(
    features: &FeatureMatrix,
    targets: &[f64],
    config: &TrainConfig,
    exec: Execution,
) -> Result<BoostOutcome, TrainError> {
    config.validate()?;
    if targets.is_empty() || features.n_rows() == 0 {
        return Err(TrainError::EmptyInput);
    }
    if features.n_cols() == 0 {
        return Err(TrainError::NoFeatures);
    }
    if features.n_rows() != targets.len() {
        return Err(TrainError::LengthMismatch {
            rows: features.n_rows(),
            targets: targets.len(),
        });
    }
    if let Some(index) = targets.iter().position(|t| !t.is_finite()) {
        return Err(TrainError::NonFiniteTarget { index });
    }

    let n = targets.len();
    let bias = targets.iter().sum::<f64>() / n as f64;
    let mut residuals: Vec<f64> = targets.iter().map(|y| y - bias).collect();
    let mut model = GBTEnsemble::new(features.n_cols(), bias);
    let mut train_rmse = vec![rmse_of(&residuals)];
    let all_rows: Vec<usize> = (0..n).collect();
    let n_sub = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let eta = config.learn_rate;

    for round in 0..config.n_trees {
        let rows = if n_sub < n {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(round as u64));
            let mut picked = sample(&mut rng, n, n_sub).into_vec();
            picked.sort_unstable();
            picked
        } else {
            all_rows.clone()
        };
        let tree = fit_tree_rows(features, &residuals, &rows, config, exec)?;
        let update = |(i, r): (usize, &mut f64)| {
            // trees from the trainer never fail on their own training rows
            let t = tree
                .predict(features.row(i))
                .expect("fresh tree is well formed");
            *r -= eta * t;
        };
        match exec {
            #[cfg(feature = "parallel")]
            Execution::Parallel => {
                use rayon::prelude::*;
                residuals.par_iter_mut().enumerate().for_each(update);
            }
            _ => residuals.iter_mut().enumerate().for_each(update),
        }
        model.push(tree, eta);
        train_rmse.push(rmse_of(&residuals));
    }
    Ok(BoostOutcome {
        model,
        train_rmse,
        residuals,
    })
}

pub fn fit_lsboost(
    features: &FeatureMatrix,
    targets: &[f64],
    config: &TrainConfig,
) -> Result<GBTEnsemble, TrainError> {
    fit_lsboost_with(features, targets, config, Execution::default()).map(|o| o.model)
}

/// Writes `round,train_rmse` rows, one per boosting round.
pub fn write_training_log<W: Write>(mut w: W, train_rmse: &[f64]) -> std::io::Result<()> {
    writeln!(w, "round,train_rmse")?;
    for (round, rmse) in train_rmse.iter().enumerate() {
        writeln!(w, "{round},{rmse}")?;
    }
    Ok(())
}
