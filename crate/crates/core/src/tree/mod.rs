//! Honest trees: double-sample regression and causal trees, propensity trees,
//! and an adaptive causal tree kept for comparison.
//!
//! Which observations a tree may consult when placing splits depends on the
//! mode:
//!
//! | mode                       | split criterion sees            | leaves average      |
//! |----------------------------|---------------------------------|---------------------|
//! | `regression_double_sample` | J responses, I and J features   | I responses         |
//! | `causal_double_sample`     | J responses and treatments, I and J features and treatments | I responses by arm |
//! | `propensity`               | features and treatments only    | subsample by arm    |
//! | `causal_adaptive`          | everything                      | subsample by arm    |
//!
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values of the node's points (I and J together for double-sample trees).
//! Every split leaves at least `ceil(alpha * m)` of the node's `m`
//! estimation points on each side, and at least `min_leaf` of them (per
//! treatment arm, in the causal modes).

mod grow;
pub mod split;

use serde::{Deserialize, Serialize};

use crate::config::{ForestConfig, ForestMode};
use crate::dataset::Dataset;
use crate::error::{GroveError, Result};
use crate::sampling::{RandomStream, SubsampleRecord};

pub use split::{criterion_causal, criterion_gini, criterion_mse, regular_side_min, SplitCandidate};

/// Estimation-sample sums and counts held by a leaf.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeafStats {
    pub n_treated: usize,
    pub n_control: usize,
    pub sum_y_treated: f64,
    pub sum_y_control: f64,
    pub n_total: usize,
    pub sum_y: f64,
}

impl LeafStats {
    /// Leaf mean response.
    pub fn mean(&self) -> f64 {
        self.sum_y / self.n_total as f64
    }

    /// Difference of arm means.
    pub fn effect(&self) -> f64 {
        self.sum_y_treated / self.n_treated as f64 - self.sum_y_control / self.n_control as f64
    }

    pub fn estimate(&self, mode: ForestMode) -> f64 {
        if mode.is_causal() {
            self.effect()
        } else {
            self.mean()
        }
    }
}

/// `x` goes left at a split iff `x[feature] <= threshold`. `feature` is a
/// zero-based column index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: Box<Node>, right: Box<Node> },
    Leaf(LeafStats),
}

impl Node {
    pub fn leaf_for(&self, x: &[f64]) -> &LeafStats {
        let mut node = self;
        loop {
            match node {
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] <= *threshold { left } else { right };
                }
                Node::Leaf(stats) => return stats,
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
            Node::Leaf(_) => 0,
        }
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            Node::Split { left, right, .. } => left.num_leaves() + right.num_leaves(),
            Node::Leaf(_) => 1,
        }
    }

    /// Splits in pre-order.
    pub fn splits(&self) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        self.collect_splits(&mut out);
        out
    }

    fn collect_splits(&self, out: &mut Vec<(usize, f64)>) {
        if let Node::Split { feature, threshold, left, right } = self {
            out.push((*feature, *threshold));
            left.collect_splits(out);
            right.collect_splits(out);
        }
    }

    pub fn leaves(&self) -> Vec<&LeafStats> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            match node {
                Node::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
                Node::Leaf(stats) => out.push(stats),
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub mode: ForestMode,
    pub record: SubsampleRecord,
    pub root: Node,
}

impl Tree {
    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.root.leaf_for(x).estimate(self.mode)
    }

    /// Depth-0 tree averaging every subsample response.
    pub fn trivial(data: &Dataset, record: SubsampleRecord) -> Tree {
        let mut stats = LeafStats::default();
        for &r in &record.indices {
            let s = data.sample(r);
            stats.n_total += 1;
            stats.sum_y += s.y;
            match s.w {
                Some(true) => {
                    stats.n_treated += 1;
                    stats.sum_y_treated += s.y;
                }
                _ => {
                    stats.n_control += 1;
                    stats.sum_y_control += s.y;
                }
            }
        }
        Tree { mode: ForestMode::RegressionDoubleSample, record, root: Node::Leaf(stats) }
    }
}

/// `predict_tree`: the leaf estimate for `x`.
pub fn predict_tree(tree: &Tree, x: &[f64]) -> f64 {
    tree.predict(x)
}

/// Grows one tree on the rows in `record`.
///
/// Fails with [`GroveError::DegenerateSubsample`] when a causal or
/// propensity tree's estimation sample lacks `min_leaf` rows of either arm.
pub fn grow_tree(
    data: &Dataset,
    record: SubsampleRecord,
    cfg: &ForestConfig,
    stream: &mut RandomStream,
) -> Result<Tree> {
    if cfg.mode.is_double_sample() != record.is_double_sample() {
        return Err(GroveError::Parameter(format!(
            "subsample record does not match mode {}",
            cfg.mode
        )));
    }
    if cfg.mode.is_causal() && !data.has_treatment() {
        return Err(GroveError::Config(format!("mode {} requires a treatment column", cfg.mode)));
    }
    let mut ws = grow::Workspace::new(data, &record, cfg);
    if cfg.mode.is_causal() {
        let (treated, control) = ws.estimation_counts();
        if treated < cfg.min_leaf || control < cfg.min_leaf {
            return Err(GroveError::DegenerateSubsample {
                tree_index: record.tree_index,
                min_leaf: cfg.min_leaf,
            });
        }
    }
    let m = ws.len();
    let root = ws.grow(0, m, stream);
    Ok(Tree { mode: cfg.mode, record, root })
}

/// The split a tree grown on `record` would place at its root, if any.
pub fn select_split(
    data: &Dataset,
    record: &SubsampleRecord,
    cfg: &ForestConfig,
    stream: &mut RandomStream,
) -> Option<(usize, f64)> {
    let ws = grow::Workspace::new(data, record, cfg);
    ws.choose(0, ws.len(), stream)
}

/// Structural checks on a grown tree: regularity of every split and leaf
/// sizes on the estimation sample. Returns a description of the first
/// violation.
pub fn audit_tree(tree: &Tree, data: &Dataset, cfg: &ForestConfig) -> std::result::Result<(), String> {
    fn walk(
        node: &Node,
        rows: Vec<usize>,
        data: &Dataset,
        cfg: &ForestConfig,
        path: &mut String,
    ) -> std::result::Result<(), String> {
        let k = cfg.min_leaf;
        match node {
            Node::Split { feature, threshold, left, right } => {
                let (l, r): (Vec<usize>, Vec<usize>) =
                    rows.iter().partition(|&&i| data.sample(i).x[*feature] <= *threshold);
                let need = regular_side_min(cfg.alpha, rows.len()).max(1);
                if l.len() < need || r.len() < need {
                    return Err(format!(
                        "split at {path} leaves {}/{} of {} estimation points (need {need})",
                        l.len(),
                        r.len(),
                        rows.len()
                    ));
                }
                path.push('L');
                walk(left, l, data, cfg, path)?;
                path.pop();
                path.push('R');
                walk(right, r, data, cfg, path)?;
                path.pop();
                Ok(())
            }
            Node::Leaf(stats) => {
                if stats.n_total != rows.len() {
                    return Err(format!("leaf {path} counts {} rows, routing gives {}", stats.n_total, rows.len()));
                }
                if cfg.mode.is_causal() {
                    if stats.n_treated < k || stats.n_control < k {
                        return Err(format!(
                            "leaf {path} holds {} treated / {} control (min {k})",
                            stats.n_treated, stats.n_control
                        ));
                    }
                } else if stats.n_total < k || stats.n_total > 2 * k - 1 {
                    return Err(format!("leaf {path} holds {} points (want {k}..={})", stats.n_total, 2 * k - 1));
                }
                Ok(())
            }
        }
    }
    walk(&tree.root, tree.record.estimation_rows().to_vec(), data, cfg, &mut String::from("root"))
}
