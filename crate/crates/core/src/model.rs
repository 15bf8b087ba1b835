//! Compact regression trees and additive tree ensembles.
//!
//! A [`CompactRegressionTree`] is stored as five parallel arrays indexed by
//! node, with 1-based node and feature indices:
//!
//! | array                 | internal node                     | leaf   |
//! |-----------------------|-----------------------------------|--------|
//! | `cut_predictor_index` | feature used by the split (1..=p) | `0`    |
//! | `children`            | `(left, right)`, both > parent    | `(0,0)`|
//! | `cut_point`           | split threshold                   | unused |
//! | `nan_cut_points`      | stop descent here when `true`     | unused |
//! | `node_mean`           | response if descent stops here    | value  |
//!
//! Prediction walks from the root: a missing feature value (NaN) or a set
//! `nan_cut_points` flag stops the walk at the current node, otherwise the
//! walk goes left when `x < cut_point` and right otherwise, so ties go right.
//!
//! A [`GBTEnsemble`] adds a bias to a weighted sum of trees.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::FeatureMatrix;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model corruption in tree {tree}, node {node}: {reason}")]
    Corrupt {
        tree: usize,
        node: usize,
        reason: &'static str,
    },
    #[error("feature vector has length {got}, model expects {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("not a model file: bad magic bytes")]
    BadMagic,
    #[error("unsupported model format version {0}")]
    Version(u16),
    #[error("truncated model payload: {0}")]
    Truncated(&'static str),
    #[error("malformed model payload: {0}")]
    Format(String),
    #[error("model failed validation with {} violation(s): {}", .0.len(), first_violation(.0))]
    Invalid(Vec<Violation>),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn first_violation(v: &[Violation]) -> String {
    v.first().map(|v| v.to_string()).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    EmptyTree,
    LengthMismatch,
    FeatureIndexOutOfRange,
    ChildNotGreaterThanParent,
    ChildIndexOutOfRange,
    LeafWithChildren,
    UnreachableNode,
    SharedNode,
    NonFiniteCutPoint,
    NonFiniteNodeMean,
    BadWeight,
    NonFiniteBias,
    ZeroFeatures,
    TreeCountMismatch,
}

impl ViolationKind {
    pub fn message(self) -> &'static str {
        match self {
            Self::EmptyTree => "tree has no nodes",
            Self::LengthMismatch => "node arrays differ in length",
            Self::FeatureIndexOutOfRange => "feature index out of range",
            Self::ChildNotGreaterThanParent => "child index not greater than parent",
            Self::ChildIndexOutOfRange => "child index out of range",
            Self::LeafWithChildren => "leaf node has children",
            Self::UnreachableNode => "node unreachable from root",
            Self::SharedNode => "node has more than one parent",
            Self::NonFiniteCutPoint => "non-finite cut point on a splitting node",
            Self::NonFiniteNodeMean => "non-finite node mean",
            Self::BadWeight => "tree weight is not a positive finite real",
            Self::NonFiniteBias => "bias is not finite",
            Self::ZeroFeatures => "model declares zero features",
            Self::TreeCountMismatch => "number of weights differs from number of trees",
        }
    }
}

/// One broken invariant. `tree` and `node` are 1-based when present.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub tree: Option<usize>,
    pub node: Option<usize>,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.tree, self.node) {
            (Some(t), Some(n)) => write!(f, "tree {t} node {n}: {}", self.kind.message()),
            (Some(t), None) => write!(f, "tree {t}: {}", self.kind.message()),
            _ => write!(f, "model: {}", self.kind.message()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompactRegressionTree {
    pub cut_predictor_index: Vec<u32>,
    pub children: Vec<[u32; 2]>,
    pub cut_point: Vec<f64>,
    pub nan_cut_points: Vec<bool>,
    pub node_mean: Vec<f64>,
}

impl CompactRegressionTree {
    pub fn leaf(value: f64) -> Self {
        Self {
            cut_predictor_index: vec![0],
            children: vec![[0, 0]],
            cut_point: vec![0.0],
            nan_cut_points: vec![false],
            node_mean: vec![value],
        }
    }

    /// Depth-1 tree splitting `feature` (1-based) at `threshold`.
    pub fn stump(feature: u32, threshold: f64, left: f64, right: f64) -> Self {
        Self {
            cut_predictor_index: vec![feature, 0, 0],
            children: vec![[2, 3], [0, 0], [0, 0]],
            cut_point: vec![threshold, 0.0, 0.0],
            nan_cut_points: vec![false; 3],
            node_mean: vec![(left + right) / 2.0, left, right],
        }
    }

    pub fn n_nodes(&self) -> usize {
        self.cut_predictor_index.len()
    }

    pub fn is_leaf(&self, node: usize) -> bool {
        self.cut_predictor_index[node] == 0
    }

    /// Depth of the deepest leaf, root at depth 0.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.n_nodes()];
        let mut max = 0;
        for i in 0..self.n_nodes() {
            if !self.is_leaf(i) {
                for c in self.children[i] {
                    let c = c as usize - 1;
                    depth[c] = depth[i] + 1;
                    max = max.max(depth[c]);
                }
            }
        }
        max
    }

    /// Index (0-based) of the node where descent stops for `x`.
    ///
    /// Every step is bounds-checked and the walk is capped at `n_nodes`
    /// iterations, so a corrupt tree yields an error rather than a panic or
    /// an endless loop.
    pub fn stopping_node(&self, x: &[f64]) -> Result<usize, ModelError> {
        let corrupt = |node: usize, reason| ModelError::Corrupt {
            tree: 0,
            node: node + 1,
            reason,
        };
        let n = self.n_nodes();
        let mut m = 0usize;
        for _ in 0..=n {
            let feature = *self
                .cut_predictor_index
                .get(m)
                .ok_or_else(|| corrupt(m, "node index out of range"))?;
            if feature == 0 {
                return Ok(m);
            }
            let d = *x
                .get(feature as usize - 1)
                .ok_or_else(|| corrupt(m, "feature index out of range"))?;
            let stop_here = self
                .nan_cut_points
                .get(m)
                .ok_or_else(|| corrupt(m, "node index out of range"))?;
            if d.is_nan() || *stop_here {
                return Ok(m);
            }
            let [left, right] = *self
                .children
                .get(m)
                .ok_or_else(|| corrupt(m, "node index out of range"))?;
            let next = if d < self.cut_point[m] { left } else { right };
            if next == 0 {
                return Err(corrupt(m, "missing child"));
            }
            m = next as usize - 1;
        }
        Err(corrupt(m, "descent does not terminate"))
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        let m = self.stopping_node(x)?;
        self.node_mean.get(m).copied().ok_or(ModelError::Corrupt {
            tree: 0,
            node: m + 1,
            reason: "node index out of range",
        })
    }

    /// Checks every structural invariant. `tree` labels the violations.
    pub fn violations(&self, n_features: usize, tree: Option<usize>) -> Vec<Violation> {
        let mut out = Vec::new();
        let mut push = |node: Option<usize>, kind| out.push(Violation { tree, node, kind });
        let n = self.n_nodes();
        if n == 0 {
            push(None, ViolationKind::EmptyTree);
            return out;
        }
        if self.children.len() != n
            || self.cut_point.len() != n
            || self.nan_cut_points.len() != n
            || self.node_mean.len() != n
        {
            push(None, ViolationKind::LengthMismatch);
            return out;
        }
        let mut parents = vec![0u32; n];
        for i in 0..n {
            let node = Some(i + 1);
            if !self.node_mean[i].is_finite() {
                push(node, ViolationKind::NonFiniteNodeMean);
            }
            let feature = self.cut_predictor_index[i] as usize;
            let [l, r] = self.children[i];
            if feature == 0 {
                if l != 0 || r != 0 {
                    push(node, ViolationKind::LeafWithChildren);
                }
                continue;
            }
            if feature > n_features {
                push(node, ViolationKind::FeatureIndexOutOfRange);
            }
            if !self.nan_cut_points[i] && !self.cut_point[i].is_finite() {
                push(node, ViolationKind::NonFiniteCutPoint);
            }
            for c in [l, r] {
                let c = c as usize;
                if c <= i + 1 {
                    push(node, ViolationKind::ChildNotGreaterThanParent);
                } else if c > n {
                    push(node, ViolationKind::ChildIndexOutOfRange);
                } else {
                    parents[c - 1] += 1;
                }
            }
        }
        // Children always point forward, so one parent per non-root node
        // is enough for the arrays to form a single tree.
        for (i, &count) in parents.iter().enumerate().skip(1) {
            match count {
                0 => push(Some(i + 1), ViolationKind::UnreachableNode),
                1 => {}
                _ => push(Some(i + 1), ViolationKind::SharedNode),
            }
        }
        if parents[0] != 0 {
            push(Some(1), ViolationKind::SharedNode);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GBTEnsemble {
    pub n_features: usize,
    pub bias: f64,
    pub trees: Vec<CompactRegressionTree>,
    pub weights: Vec<f64>,
}

impl GBTEnsemble {
    pub fn new(n_features: usize, bias: f64) -> Self {
        Self {
            n_features,
            bias,
            trees: Vec::new(),
            weights: Vec::new(),
        }
    }

    pub fn push(&mut self, tree: CompactRegressionTree, weight: f64) {
        self.trees.push(tree);
        self.weights.push(weight);
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Every invariant violation of the ensemble and its trees.
    pub fn violations(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.n_features == 0 {
            out.push(Violation {
                tree: None,
                node: None,
                kind: ViolationKind::ZeroFeatures,
            });
        }
        if !self.bias.is_finite() {
            out.push(Violation {
                tree: None,
                node: None,
                kind: ViolationKind::NonFiniteBias,
            });
        }
        if self.weights.len() != self.trees.len() {
            out.push(Violation {
                tree: None,
                node: None,
                kind: ViolationKind::TreeCountMismatch,
            });
        }
        for (k, tree) in self.trees.iter().enumerate() {
            if let Some(&w) = self.weights.get(k) {
                if !(w.is_finite() && w > 0.0) {
                    out.push(Violation {
                        tree: Some(k + 1),
                        node: None,
                        kind: ViolationKind::BadWeight,
                    });
                }
            }
            out.extend(tree.violations(self.n_features, Some(k + 1)));
        }
        out
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ModelError::Invalid(v))
        }
    }

    /// `bias + Σ weight_k · tree_k(x)`, accumulated in tree order.
    pub fn predict(&self, x: &[f64]) -> Result<f64, ModelError> {
        if x.len() != self.n_features {
            return Err(ModelError::Dimension {
                expected: self.n_features,
                got: x.len(),
            });
        }
        let mut acc = self.bias;
        for (k, (tree, w)) in self.trees.iter().zip(&self.weights).enumerate() {
            let t = tree.predict(x).map_err(|e| match e {
                ModelError::Corrupt { node, reason, .. } => ModelError::Corrupt {
                    tree: k + 1,
                    node,
                    reason,
                },
                other => other,
            })?;
            acc += w * t;
        }
        Ok(acc)
    }

    /// Predicts every row. Rows are independent, so with the `parallel`
    /// feature they are evaluated on the rayon pool; results are identical
    /// either way.
    pub fn predict_batch(
        &self,
        rows: &FeatureMatrix,
        exec: crate::Execution,
    ) -> Result<Vec<f64>, ModelError> {
        if rows.n_cols() != self.n_features {
            return Err(ModelError::Dimension {
                expected: self.n_features,
                got: rows.n_cols(),
            });
        }
        match exec {
            #[cfg(feature = "parallel")]
            crate::Execution::Parallel => {
                use rayon::prelude::*;
                (0..rows.n_rows())
                    .into_par_iter()
                    .map(|i| self.predict(rows.row(i)))
                    .collect()
            }
            _ => rows.rows().map(|r| self.predict(r)).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Binary format
// ---------------------------------------------------------------------------

pub const MAGIC: &[u8; 4] = b"GBTM";
pub const FORMAT_VERSION: u16 = 1;

/// Encodes the model in the little-endian `GBTM` v1 layout.
pub fn serialize_model(model: &GBTEnsemble) -> Vec<u8> {
    let n_nodes: usize = model.trees.iter().map(|t| t.n_nodes()).sum();
    let mut out = Vec::with_capacity(24 + model.n_trees() * 12 + n_nodes * 33);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&0u16.to_le_bytes());
    out.extend_from_slice(&(model.n_features as u32).to_le_bytes());
    out.extend_from_slice(&model.bias.to_le_bytes());
    out.extend_from_slice(&(model.n_trees() as u32).to_le_bytes());
    for (tree, w) in model.trees.iter().zip(&model.weights) {
        out.extend_from_slice(&w.to_le_bytes());
        out.extend_from_slice(&(tree.n_nodes() as u32).to_le_bytes());
        for v in &tree.cut_predictor_index {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for [l, r] in &tree.children {
            out.extend_from_slice(&l.to_le_bytes());
            out.extend_from_slice(&r.to_le_bytes());
        }
        for v in &tree.cut_point {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend(tree.nan_cut_points.iter().map(|&b| b as u8));
        for v in &tree.node_mean {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], ModelError> {
        if self.buf.len() < n {
            return Err(ModelError::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn u32s(&mut self, n: usize, what: &'static str) -> Result<Vec<u32>, ModelError> {
        let raw = self.take(n.checked_mul(4).ok_or(ModelError::Truncated(what))?, what)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn f64s(&mut self, n: usize, what: &'static str) -> Result<Vec<f64>, ModelError> {
        let raw = self.take(n.checked_mul(8).ok_or(ModelError::Truncated(what))?, what)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Decodes a `GBTM` v1 payload and validates the result.
pub fn deserialize_model(bytes: &[u8]) -> Result<GBTEnsemble, ModelError> {
    let mut r = Reader { buf: bytes };
    if r.take(4, "magic")? != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.u16("version")?;
    if version != FORMAT_VERSION {
        return Err(ModelError::Version(version));
    }
    let reserved = r.u16("reserved")?;
    if reserved != 0 {
        return Err(ModelError::Format(format!(
            "reserved field is {reserved}, expected 0"
        )));
    }
    let n_features = r.u32("n_features")? as usize;
    let bias = r.f64("bias")?;
    let n_trees = r.u32("n_trees")? as usize;
    let mut model = GBTEnsemble::new(n_features, bias);
    for _ in 0..n_trees {
        let weight = r.f64("tree weight")?;
        let n = r.u32("n_nodes")? as usize;
        let cut_predictor_index = r.u32s(n, "cut_predictor_index")?;
        let children = r
            .u32s(n.saturating_mul(2), "children")?
            .chunks_exact(2)
            .map(|c| [c[0], c[1]])
            .collect();
        let cut_point = r.f64s(n, "cut_point")?;
        let nan_cut_points = r
            .take(n, "nan_cut_points")?
            .iter()
            .map(|&b| match b {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(ModelError::Format(format!("nan_cut_points byte {other}"))),
            })
            .collect::<Result<_, _>>()?;
        let node_mean = r.f64s(n, "node_mean")?;
        model.push(
            CompactRegressionTree {
                cut_predictor_index,
                children,
                cut_point,
                nan_cut_points,
                node_mean,
            },
            weight,
        );
    }
    if !r.buf.is_empty() {
        return Err(ModelError::Format(format!(
            "{} trailing bytes after last tree",
            r.buf.len()
        )));
    }
    model.validate()?;
    Ok(model)
}

// ---------------------------------------------------------------------------
// JSON mirror
// ---------------------------------------------------------------------------

/// Reals are written as shortest round-trip decimals; non-finite values
/// (possible only in unused leaf cut points) are written as strings.
mod real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("NaN")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "NaN" => Ok(f64::NAN),
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                _ => Err(de::Error::custom(format!("invalid real {s:?}"))),
            },
        }
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        #[derive(Deserialize)]
        struct Wrapped(#[serde(with = "super")] f64);

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            struct Item(f64);
            impl serde::Serialize for Item {
                fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                    super::serialize(&self.0, s)
                }
            }
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for &x in v {
                seq.serialize_element(&Item(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let items = Vec::<Wrapped>::deserialize(d)?;
            Ok(items.into_iter().map(|w| w.0).collect())
        }
    }
}

#[derive(Serialize, Deserialize)]
struct JsonTree {
    #[serde(with = "real")]
    weight: f64,
    n_nodes: u32,
    cut_predictor_index: Vec<u32>,
    children: Vec<[u32; 2]>,
    #[serde(with = "real::vec")]
    cut_point: Vec<f64>,
    nan_cut_points: Vec<bool>,
    #[serde(with = "real::vec")]
    node_mean: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct JsonModel {
    format: String,
    version: u16,
    n_features: u32,
    #[serde(with = "real")]
    bias: f64,
    n_trees: u32,
    trees: Vec<JsonTree>,
}

pub fn model_to_json(model: &GBTEnsemble) -> String {
    let doc = JsonModel {
        format: "GBTM".into(),
        version: FORMAT_VERSION,
        n_features: model.n_features as u32,
        bias: model.bias,
        n_trees: model.n_trees() as u32,
        trees: model
            .trees
            .iter()
            .zip(&model.weights)
            .map(|(t, &weight)| JsonTree {
                weight,
                n_nodes: t.n_nodes() as u32,
                cut_predictor_index: t.cut_predictor_index.clone(),
                children: t.children.clone(),
                cut_point: t.cut_point.clone(),
                nan_cut_points: t.nan_cut_points.clone(),
                node_mean: t.node_mean.clone(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("model JSON encoding cannot fail")
}

pub fn model_from_json(text: &str) -> Result<GBTEnsemble, ModelError> {
    let doc: JsonModel =
        serde_json::from_str(text).map_err(|e| ModelError::Format(e.to_string()))?;
    if doc.version != FORMAT_VERSION {
        return Err(ModelError::Version(doc.version));
    }
    if doc.n_trees as usize != doc.trees.len() {
        return Err(ModelError::Format(format!(
            "n_trees is {} but {} trees are listed",
            doc.n_trees,
            doc.trees.len()
        )));
    }
    let mut model = GBTEnsemble::new(doc.n_features as usize, doc.bias);
    for t in doc.trees {
        if t.n_nodes as usize != t.cut_predictor_index.len() {
            return Err(ModelError::Format(
                "n_nodes disagrees with node arrays".into(),
            ));
        }
        model.push(
            CompactRegressionTree {
                cut_predictor_index: t.cut_predictor_index,
                children: t.children,
                cut_point: t.cut_point,
                nan_cut_points: t.nan_cut_points,
                node_mean: t.node_mean,
            },
            t.weight,
        );
    }
    model.validate()?;
    Ok(model)
}

/// Loads a model file in either the binary or the JSON representation.
pub fn load_model(path: &std::path::Path) -> Result<GBTEnsemble, ModelError> {
    let bytes = std::fs::read(path)?;
    let first = bytes.iter().find(|b| !b.is_ascii_whitespace());
    if bytes.starts_with(MAGIC) || first != Some(&b'{') {
        deserialize_model(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| ModelError::Format(e.to_string()))?;
        model_from_json(text)
    }
}

pub fn save_model(path: &std::path::Path, model: &GBTEnsemble) -> Result<(), ModelError> {
    std::fs::write(path, serialize_model(model))?;
    Ok(())
}
