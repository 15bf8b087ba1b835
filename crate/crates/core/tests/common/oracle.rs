//! Exhaustive split search used as a reference for the tree grower.

use gridedge::{CompactRegressionTree, FeatureMatrix};
use rand::Rng;

/// Tree grown by brute force: every (feature, threshold) pair is tried by
/// partitioning the rows and computing both children's SSE from scratch.
#[derive(Debug)]
pub enum OracleNode {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: Box<OracleNode>,
        right: Box<OracleNode>,
    },
}

fn sse(values: &[f64]) -> f64 {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - mean) * (v - mean)).sum()
}

fn candidate_thresholds(col: &[f64]) -> Vec<f64> {
    let mut v: Vec<f64> = col.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v.windows(2)
        .map(|w| {
            let mid = (w[0] + w[1]) / 2.0;
            if mid <= w[0] {
                w[1]
            } else {
                mid
            }
        })
        .collect()
}

pub fn oracle(
    x: &FeatureMatrix,
    r: &[f64],
    rows: &[usize],
    depth_left: usize,
    min_leaf: usize,
) -> OracleNode {
    let vals: Vec<f64> = rows.iter().map(|&i| r[i]).collect();
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    if depth_left == 0 || rows.len() < 2 * min_leaf {
        return OracleNode::Leaf(mean);
    }
    let scale = vals.iter().map(|v| v * v).sum::<f64>();
    let tol = 1e-10 * scale;
    let parent = sse(&vals);
    let mut best: Option<(f64, usize, f64)> = None;
    for j in 0..x.n_cols() {
        let col: Vec<f64> = rows.iter().map(|&i| x.get(i, j)).collect();
        for t in candidate_thresholds(&col) {
            let (l, rr): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x.get(i, j) < t);
            if l.len() < min_leaf || rr.len() < min_leaf {
                continue;
            }
            let total = sse(&l.iter().map(|&i| r[i]).collect::<Vec<_>>())
                + sse(&rr.iter().map(|&i| r[i]).collect::<Vec<_>>());
            // strict improvement required, so equal SSE keeps the earlier
            // (lower feature, smaller threshold) candidate
            if best.is_none_or(|(b, _, _)| total < b - tol) {
                best = Some((total, j, t));
            }
        }
    }
    match best {
        Some((total, feature, threshold)) if total < parent - tol => {
            let (l, rr): (Vec<usize>, Vec<usize>) =
                rows.iter().partition(|&&i| x.get(i, feature) < threshold);
            OracleNode::Split {
                feature,
                threshold,
                left: Box::new(oracle(x, r, &l, depth_left - 1, min_leaf)),
                right: Box::new(oracle(x, r, &rr, depth_left - 1, min_leaf)),
            }
        }
        _ => OracleNode::Leaf(mean),
    }
}

/// Checks that `tree`, from `node` down, has the oracle's shape, features
/// and thresholds.
pub fn compare(
    tree: &CompactRegressionTree,
    node: usize,
    expected: &OracleNode,
) -> Result<(), String> {
    let id = node + 1;
    match expected {
        OracleNode::Leaf(mean) => {
            if !tree.is_leaf(node) {
                return Err(format!("node {id}: expected leaf"));
            }
            if (tree.node_mean[node] - mean).abs() > 1e-12 * (1.0 + mean.abs()) {
                return Err(format!(
                    "node {id}: mean {} vs {mean}",
                    tree.node_mean[node]
                ));
            }
            Ok(())
        }
        OracleNode::Split {
            feature,
            threshold,
            left,
            right,
        } => {
            if tree.is_leaf(node) {
                return Err(format!(
                    "node {id}: expected split on x{} < {threshold}",
                    feature + 1
                ));
            }
            let got = (
                tree.cut_predictor_index[node] as usize,
                tree.cut_point[node],
            );
            if got != (feature + 1, *threshold) {
                return Err(format!(
                    "node {id}: split x{} < {} vs x{} < {threshold}",
                    got.0,
                    got.1,
                    feature + 1
                ));
            }
            let [l, r] = tree.children[node];
            compare(tree, l as usize - 1, left)?;
            compare(tree, r as usize - 1, right)
        }
    }
}

pub fn random_dataset<R: Rng>(
    rng: &mut R,
    discrete: bool,
) -> (FeatureMatrix, Vec<f64>, usize, usize) {
    let n = rng.gen_range(2..=30);
    let p = rng.gen_range(1..=4);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            (0..p)
                .map(|_| {
                    if discrete {
                        rng.gen_range(0..5) as f64
                    } else {
                        rng.gen_range(-3.0..3.0)
                    }
                })
                .collect()
        })
        .collect();
    let y = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    (
        FeatureMatrix::from_rows(&rows),
        y,
        rng.gen_range(1..=2),
        rng.gen_range(1..=3),
    )
}
