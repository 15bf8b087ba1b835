#![allow(dead_code)]

pub mod inverters;
pub mod oracle;

use gridedge::{CompactRegressionTree, FeatureMatrix, GBTEnsemble};
use rand::Rng;

/// Random structurally valid tree, nodes numbered breadth-first.
pub fn random_tree<R: Rng>(
    rng: &mut R,
    n_features: usize,
    max_depth: usize,
) -> CompactRegressionTree {
    let mut t = CompactRegressionTree::leaf(rng.gen_range(-10.0..10.0));
    let mut queue = std::collections::VecDeque::from([(0usize, 0usize)]);
    while let Some((node, depth)) = queue.pop_front() {
        if depth >= max_depth || !rng.gen_bool(0.7) {
            continue;
        }
        let first = t.n_nodes();
        for _ in 0..2 {
            t.cut_predictor_index.push(0);
            t.children.push([0, 0]);
            t.cut_point.push(0.0);
            t.nan_cut_points.push(false);
            t.node_mean.push(rng.gen_range(-10.0..10.0));
        }
        t.cut_predictor_index[node] = rng.gen_range(1..=n_features as u32);
        t.children[node] = [first as u32 + 1, first as u32 + 2];
        t.cut_point[node] = rng.gen_range(-1.0..1.0);
        t.nan_cut_points[node] = rng.gen_bool(0.1);
        queue.push_back((first, depth + 1));
        queue.push_back((first + 1, depth + 1));
    }
    t
}

pub fn random_model<R: Rng>(
    rng: &mut R,
    n_features: usize,
    n_trees: usize,
    max_depth: usize,
) -> GBTEnsemble {
    let mut m = GBTEnsemble::new(n_features, rng.gen_range(-5.0..5.0));
    for _ in 0..n_trees {
        let t = random_tree(rng, n_features, max_depth);
        m.push(t, rng.gen_range(0.01..1.0));
    }
    m
}

/// Feature vector with roughly 10% NaN entries.
pub fn random_input<R: Rng>(rng: &mut R, n_features: usize) -> Vec<f64> {
    (0..n_features)
        .map(|_| {
            if rng.gen_bool(0.1) {
                f64::NAN
            } else {
                rng.gen_range(-1.5..1.5)
            }
        })
        .collect()
}

/// `y = 3x₁ − 2x₂ + x₃²` on `n` uniform points in the unit cube.
pub fn polynomial_fixture<R: Rng>(rng: &mut R, n: usize) -> (FeatureMatrix, Vec<f64>) {
    let rows: Vec<[f64; 3]> = (0..n).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
    let y = rows
        .iter()
        .map(|r| 3.0 * r[0] - 2.0 * r[1] + r[2] * r[2])
        .collect();
    (FeatureMatrix::from_rows(&rows), y)
}

pub fn first_rows(x: &FeatureMatrix, n: usize) -> FeatureMatrix {
    x.select_rows(&(0..n).collect::<Vec<_>>())
}

pub fn last_rows(x: &FeatureMatrix, from: usize) -> FeatureMatrix {
    x.select_rows(&(from..x.n_rows()).collect::<Vec<_>>())
}
