//! Gradient-boosted decision trees on logistic loss over sparse rows.
//!
//! Each round fits a regression tree to the gradient and hessian of the
//! class-weighted log-loss using exact greedy split search. Leaf values are
//! Newton steps `-G / (H + lambda)`. Features absent from a sparse row read
//! as zero when routed through a split.
//!
//! After fitting, a round's leaves are halved until the weighted training
//! loss does not increase, so the loss sequence over rounds is monotone even
//! at large learning rates.

mod io;
mod tree;

use serde::{Deserialize, Serialize};

pub use tree::{best_split, leaf_weight, split_gain, GradientStats, Node, SplitCandidate, Tree, TreeSettings};

use crate::error::{Error, Result};
use crate::vectorizer::SparseVector;

const MAX_STEP_HALVINGS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    pub scale_pos_weight: f64,
    pub min_gain_prune: f64,
    pub min_samples_leaf: usize,
    pub l2_regularization: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            n_estimators: 100,
            learning_rate: 1.0,
            max_depth: 40,
            scale_pos_weight: 1.5,
            min_gain_prune: 0.0,
            min_samples_leaf: 1,
            l2_regularization: 1.0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidParams(msg.to_string()));
        if self.n_estimators < 1 {
            return bad("n_estimators must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if self.max_depth < 1 {
            return bad("max_depth must be at least 1");
        }
        if !(self.scale_pos_weight.is_finite() && self.scale_pos_weight > 0.0) {
            return bad("scale_pos_weight must be positive");
        }
        if !(self.min_gain_prune.is_finite() && self.min_gain_prune >= 0.0) {
            return bad("min_gain_prune must be nonnegative");
        }
        if self.min_samples_leaf < 1 {
            return bad("min_samples_leaf must be at least 1");
        }
        if !(self.l2_regularization.is_finite() && self.l2_regularization >= 0.0) {
            return bad("l2_regularization must be nonnegative");
        }
        Ok(())
    }

    fn tree_settings(&self) -> TreeSettings {
        TreeSettings {
            max_depth: self.max_depth,
            min_samples_leaf: self.min_samples_leaf,
            l2_regularization: self.l2_regularization,
            min_gain_prune: self.min_gain_prune,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub(crate) base_score: f64,
    pub(crate) trees: Vec<Tree>,
    pub(crate) params: GbdtParams,
    pub(crate) feature_names: Vec<String>,
    pub(crate) feature_importances: Vec<f64>,
    pub(crate) training_loss: Vec<f64>,
}

/// Margin decomposition of one prediction.
#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// `base_score` plus the learning-rate-scaled cover-weighted mean of
    /// every tree: the margin before any split decision is taken.
    pub expected_margin: f64,
    /// Nonzero contributions keyed by feature index, ascending.
    pub contributions: Vec<(usize, f64)>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub index: usize,
    pub name: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceReport {
    /// Number of features with strictly positive importance.
    pub n_positive: usize,
    pub top: Vec<FeatureScore>,
}

pub fn sigmoid(margin: f64) -> f64 {
    if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    }
}

// p * (1 - p) without cancellation near 0 and 1.
fn sigmoid_derivative(margin: f64) -> f64 {
    let e = (-margin.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

// Weighted log(1 + exp(-y * m)) with y in {-1, +1}.
fn weighted_log_loss(margins: &[f64], labels: &[u8], weights: &[f64]) -> f64 {
    let total: f64 = margins
        .iter()
        .zip(labels)
        .zip(weights)
        .map(|((&m, &y), &w)| {
            let z = if y == 1 { m } else { -m };
            let softplus = if z > 0.0 {
                (-z).exp().ln_1p()
            } else {
                -z + z.exp().ln_1p()
            };
            w * softplus
        })
        .sum();
    total / weights.iter().sum::<f64>()
}

/// Trains with positives weighted by `params.scale_pos_weight`.
pub fn train_gbdt(
    rows: &[SparseVector],
    labels: &[u8],
    params: &GbdtParams,
    feature_names: &[String],
) -> Result<GbdtModel> {
    let weights: Vec<f64> = labels
        .iter()
        .map(|&y| if y == 1 { params.scale_pos_weight } else { 1.0 })
        .collect();
    train_gbdt_weighted(rows, labels, &weights, params, feature_names)
}

/// Trains with explicit per-sample weights; `params.scale_pos_weight` is
/// not applied on top.
pub fn train_gbdt_weighted(
    rows: &[SparseVector],
    labels: &[u8],
    weights: &[f64],
    params: &GbdtParams,
    feature_names: &[String],
) -> Result<GbdtModel> {
    params.validate()?;
    if rows.is_empty() {
        return Err(Error::InsufficientData("no training rows".into()));
    }
    if labels.len() != rows.len() || weights.len() != rows.len() {
        return Err(Error::DimensionMismatch {
            expected: rows.len(),
            found: if labels.len() != rows.len() {
                labels.len()
            } else {
                weights.len()
            },
        });
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::Validation(format!("label {bad} is not binary")));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
        return Err(Error::Validation("sample weights must be positive".into()));
    }
    let dim = feature_names.len();
    if let Some(row) = rows.iter().find(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: row.dim(),
        });
    }
    if !labels.contains(&0) || !labels.contains(&1) {
        return Err(Error::SingleClass);
    }

    // Canonical row order makes the fit independent of input order,
    // including the floating-point summation order inside split search.
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| compare_samples((&rows[a], labels[a], weights[a]), (&rows[b], labels[b], weights[b])));
    let rows: Vec<SparseVector> = order.iter().map(|&i| rows[i].clone()).collect();
    let labels: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
    let weights: Vec<f64> = order.iter().map(|&i| weights[i]).collect();

    let w_pos: f64 = labels
        .iter()
        .zip(&weights)
        .filter(|(y, _)| **y == 1)
        .map(|(_, w)| w)
        .sum();
    let w_neg: f64 = labels
        .iter()
        .zip(&weights)
        .filter(|(y, _)| **y == 0)
        .map(|(_, w)| w)
        .sum();
    let base_score = (w_pos / w_neg).ln();
    let settings = params.tree_settings();
    let n = rows.len();
    let mut margins = vec![base_score; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut loss = weighted_log_loss(&margins, &labels, &weights);
    let mut training_loss = vec![loss];
    let mut trees = Vec::with_capacity(params.n_estimators);

    for _ in 0..params.n_estimators {
        for i in 0..n {
            let p = sigmoid(margins[i]);
            grad[i] = weights[i] * (p - f64::from(labels[i]));
            hess[i] = weights[i] * sigmoid_derivative(margins[i]);
        }
        let stats = GradientStats {
            grad: &grad,
            hess: &hess,
            weight: &weights,
        };
        let mut tree = Tree::fit(&rows, &stats, &settings);
        let outputs: Vec<f64> = rows.iter().map(|r| tree.predict(r)).collect();

        // scale is a power of two, so scaled leaves reproduce these margins exactly
        let lr = params.learning_rate;
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_STEP_HALVINGS {
            let candidate: Vec<f64> = margins
                .iter()
                .zip(&outputs)
                .map(|(m, o)| m + lr * (o * scale))
                .collect();
            let candidate_loss = weighted_log_loss(&candidate, &labels, &weights);
            if candidate_loss <= loss {
                margins = candidate;
                loss = candidate_loss;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted {
            scale = 0.0;
        }
        if scale != 1.0 {
            tree.scale_leaves(scale);
        }
        training_loss.push(loss);
        trees.push(tree);
    }

    let feature_importances = gain_importances(&trees, dim);
    Ok(GbdtModel {
        base_score,
        trees,
        params: *params,
        feature_names: feature_names.to_vec(),
        feature_importances,
        training_loss,
    })
}

fn compare_samples(a: (&SparseVector, u8, f64), b: (&SparseVector, u8, f64)) -> std::cmp::Ordering {
    let entries = a.0.entries().iter().zip(b.0.entries());
    for (x, y) in entries {
        let ord = x.0.cmp(&y.0).then_with(|| x.1.total_cmp(&y.1));
        if ord.is_ne() {
            return ord;
        }
    }
    a.0.nnz()
        .cmp(&b.0.nnz())
        .then_with(|| a.1.cmp(&b.1))
        .then_with(|| a.2.total_cmp(&b.2))
}

/// Total split gain per feature, normalized to sum to one.
pub(crate) fn gain_importances(trees: &[Tree], dim: usize) -> Vec<f64> {
    let mut totals = vec![0.0; dim];
    for tree in trees {
        for node in tree.nodes() {
            if let Node::Split { feature, gain, .. } = *node {
                totals[feature] += gain;
            }
        }
    }
    let sum: f64 = totals.iter().sum();
    if sum > 0.0 {
        for t in &mut totals {
            *t /= sum;
        }
    }
    totals
}

impl GbdtModel {
    /// A model with no trees; predicts `sigmoid(base_score)` everywhere.
    pub fn constant(base_score: f64, feature_names: Vec<String>, params: GbdtParams) -> Self {
        let dim = feature_names.len();
        GbdtModel {
            base_score,
            trees: Vec::new(),
            params,
            feature_names,
            feature_importances: vec![0.0; dim],
            training_loss: Vec::new(),
        }
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn params(&self) -> &GbdtParams {
        &self.params
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_importances(&self) -> &[f64] {
        &self.feature_importances
    }

    /// Weighted training log-loss before the first round and after each round.
    pub fn training_loss(&self) -> &[f64] {
        &self.training_loss
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_trained(&self) -> bool {
        !self.trees.is_empty()
    }

    fn check_dim(&self, row: &SparseVector) -> Result<()> {
        if row.dim() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: row.dim(),
            });
        }
        Ok(())
    }

    pub fn predict_margin(&self, row: &SparseVector) -> Result<f64> {
        self.check_dim(row)?;
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        Ok(self.base_score + self.params.learning_rate * sum)
    }

    /// Probability of the hateful class, kept strictly inside (0, 1).
    pub fn predict_proba(&self, row: &SparseVector) -> Result<f64> {
        let p = sigmoid(self.predict_margin(row)?);
        Ok(p.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
    }

    /// Features with positive importance, descending by score then name.
    pub fn feature_importance_report(&self, top_k: usize) -> ImportanceReport {
        let mut scored: Vec<FeatureScore> = self
            .feature_importances
            .iter()
            .enumerate()
            .filter(|(_, s)| **s > 0.0)
            .map(|(index, &score)| FeatureScore {
                index,
                name: self.feature_names[index].clone(),
                score,
            })
            .collect();
        let n_positive = scored.len();
        scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.name.cmp(&b.name)));
        scored.truncate(top_k);
        ImportanceReport {
            n_positive,
            top: scored,
        }
    }

    /// Path attribution: every split on the decision path credits its
    /// feature with the change in cover-weighted expected leaf value
    /// between the node and the child taken.
    pub fn explain(&self, row: &SparseVector) -> Result<Attribution> {
        self.check_dim(row)?;
        let lr = self.params.learning_rate;
        let mut per_feature = std::collections::BTreeMap::<usize, f64>::new();
        let mut expected_margin = self.base_score;
        let mut margin = self.base_score;
        for tree in &self.trees {
            let expected = expected_values(tree);
            expected_margin += lr * expected[0];
            let mut i = 0;
            loop {
                match tree.nodes()[i] {
                    Node::Leaf { value, .. } => {
                        margin += lr * value;
                        break;
                    }
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                        ..
                    } => {
                        let next = if row.get(feature) < threshold { left } else { right };
                        *per_feature.entry(feature).or_default() += lr * (expected[next] - expected[i]);
                        i = next;
                    }
                }
            }
        }
        Ok(Attribution {
            expected_margin,
            contributions: per_feature.into_iter().filter(|(_, c)| *c != 0.0).collect(),
            margin,
        })
    }

    /// Top contributions by magnitude, ties by feature index.
    pub fn attribute_prediction(&self, row: &SparseVector, top_k: usize) -> Result<Vec<FeatureScore>> {
        let mut contributions = self.explain(row)?.contributions;
        contributions.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then_with(|| a.0.cmp(&b.0)));
        Ok(contributions
            .into_iter()
            .take(top_k)
            .map(|(index, score)| FeatureScore {
                index,
                name: self.feature_names[index].clone(),
                score,
            })
            .collect())
    }
}

/// Cover-weighted mean leaf value below every node.
fn expected_values(tree: &Tree) -> Vec<f64> {
    let nodes = tree.nodes();
    let mut expected = vec![0.0; nodes.len()];
    // preorder: children always follow their parent
    for i in (0..nodes.len()).rev() {
        expected[i] = match nodes[i] {
            Node::Leaf { value, .. } => value,
            Node::Split { left, right, .. } => {
                let (cl, cr) = (nodes[left].cover(), nodes[right].cover());
                if cl + cr > 0.0 {
                    (cl * expected[left] + cr * expected[right]) / (cl + cr)
                } else {
                    0.5 * (expected[left] + expected[right])
                }
            }
        };
    }
    expected
}
