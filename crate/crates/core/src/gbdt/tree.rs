use std::cmp::Ordering;

use crate::vectorizer::SparseVector;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        gain: f64,
        /// Training weight that reached this node.
        cover: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Node::Leaf { .. })
    }
}

/// Regression tree stored in preorder; `nodes[0]` is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

/// Settings that shape a single tree.
#[derive(Debug, Clone, Copy)]
pub struct TreeSettings {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub l2_regularization: f64,
    pub min_gain_prune: f64,
}

/// Per-sample second-order statistics for one boosting round.
pub struct GradientStats<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    /// Sample weights used for node cover.
    pub weight: &'a [f64],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Second-order split gain with L2 leaf regularization.
pub fn split_gain(g_left: f64, h_left: f64, g_right: f64, h_right: f64, lambda: f64) -> f64 {
    let score = |g: f64, h: f64| g * g / (h + lambda);
    0.5 * (score(g_left, h_left) + score(g_right, h_right) - score(g_left + g_right, h_left + h_right))
}

pub fn leaf_weight(g: f64, h: f64, lambda: f64) -> f64 {
    let w = -g / (h + lambda);
    // avoid -0.0 so that serialized models stay canonical
    if w == 0.0 {
        0.0
    } else {
        w
    }
}

/// Threshold strictly above `lo` and at most `hi`.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) / 2.0;
    if mid > lo {
        mid
    } else {
        hi
    }
}

struct Bucket {
    value: f64,
    g: f64,
    h: f64,
    n: usize,
}

impl Tree {
    pub(crate) fn from_nodes(nodes: Vec<Node>) -> Self {
        Tree { nodes }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Sum of split gains across the tree.
    pub fn total_gain(&self) -> f64 {
        self.nodes
            .iter()
            .map(|n| match n {
                Node::Split { gain, .. } => *gain,
                Node::Leaf { .. } => 0.0,
            })
            .sum()
    }

    /// Index of the leaf that `row` lands in. Absent features compare as 0.
    pub fn leaf_index(&self, row: &SparseVector) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row.get(feature) < threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, row: &SparseVector) -> f64 {
        match self.nodes[self.leaf_index(row)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub(crate) fn scale_leaves(&mut self, factor: f64) {
        for node in &mut self.nodes {
            if let Node::Leaf { value, .. } = node {
                *value *= factor;
                if *value == 0.0 {
                    *value = 0.0;
                }
            }
        }
    }

    /// Greedy exact-split fit on the given gradient statistics.
    pub fn fit(rows: &[SparseVector], stats: &GradientStats<'_>, settings: &TreeSettings) -> Tree {
        let mut builder = Builder {
            rows,
            stats,
            settings,
            nodes: Vec::new(),
        };
        let all: Vec<usize> = (0..rows.len()).collect();
        builder.build(&all, 0);
        Tree { nodes: builder.nodes }
    }
}

struct Builder<'a> {
    rows: &'a [SparseVector],
    stats: &'a GradientStats<'a>,
    settings: &'a TreeSettings,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    /// Appends the subtree for `members` in preorder and returns its root index.
    fn build(&mut self, members: &[usize], depth: usize) -> usize {
        let (g, h, cover) = members.iter().fold((0.0, 0.0, 0.0), |(g, h, c), &r| {
            (g + self.stats.grad[r], h + self.stats.hess[r], c + self.stats.weight[r])
        });
        let lambda = self.settings.l2_regularization;
        let index = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: leaf_weight(g, h, lambda),
            cover,
        });

        if depth >= self.settings.max_depth || members.len() < 2 * self.settings.min_samples_leaf {
            return index;
        }
        let Some(best) = best_split(self.rows, self.stats, members, g, h, self.settings) else {
            return index;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = members
            .iter()
            .partition(|&&r| self.rows[r].get(best.feature) < best.threshold);
        let left = self.build(&left_rows, depth + 1);
        let right = self.build(&right_rows, depth + 1);

        let prunable =
            best.gain < self.settings.min_gain_prune && self.nodes[left].is_leaf() && self.nodes[right].is_leaf();
        if prunable {
            self.nodes.truncate(index + 1);
        } else {
            self.nodes[index] = Node::Split {
                feature: best.feature,
                threshold: best.threshold,
                gain: best.gain,
                cover,
                left,
                right,
            };
        }
        index
    }
}

/// Gains this close count as tied, so the earlier (lower-index) candidate
/// keeps the split. The same partition reached through different features
/// sums its gradients in a different order, and rounding alone must not
/// decide between them.
const GAIN_TIE_RTOL: f64 = 1e-9;

/// Best strictly-positive-gain split over all features present in
/// `members`. Ties keep the lowest feature index, then the lowest threshold.
pub fn best_split(
    rows: &[SparseVector],
    stats: &GradientStats<'_>,
    members: &[usize],
    g_total: f64,
    h_total: f64,
    settings: &TreeSettings,
) -> Option<SplitCandidate> {
    let mut entries: Vec<(usize, f64, usize)> = members
        .iter()
        .flat_map(|&r| rows[r].entries().iter().map(move |&(f, v)| (f, v, r)))
        .collect();
    entries.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| a.1.total_cmp(&b.1))
            .then_with(|| a.2.cmp(&b.2))
    });

    let n = members.len();
    let min_leaf = settings.min_samples_leaf.max(1);
    let mut best: Option<SplitCandidate> = None;
    let mut buckets: Vec<Bucket> = Vec::new();

    let mut start = 0;
    while start < entries.len() {
        let feature = entries[start].0;
        let end = start + entries[start..].iter().take_while(|e| e.0 == feature).count();

        buckets.clear();
        let (mut g_nz, mut h_nz) = (0.0, 0.0);
        for &(_, value, r) in &entries[start..end] {
            let (g, h) = (stats.grad[r], stats.hess[r]);
            g_nz += g;
            h_nz += h;
            match buckets.last_mut() {
                Some(last) if last.value == value => {
                    last.g += g;
                    last.h += h;
                    last.n += 1;
                }
                _ => buckets.push(Bucket { value, g, h, n: 1 }),
            }
        }
        let n_zero = n - (end - start);
        if n_zero > 0 {
            let at = buckets.partition_point(|b| b.value.total_cmp(&0.0) == Ordering::Less);
            buckets.insert(
                at,
                Bucket {
                    value: 0.0,
                    g: g_total - g_nz,
                    h: h_total - h_nz,
                    n: n_zero,
                },
            );
        }

        let (mut g_left, mut h_left, mut n_left) = (0.0, 0.0, 0);
        for pair in buckets.windows(2) {
            g_left += pair[0].g;
            h_left += pair[0].h;
            n_left += pair[0].n;
            if n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            let gain = split_gain(
                g_left,
                h_left,
                g_total - g_left,
                h_total - h_left,
                settings.l2_regularization,
            );
            if gain > 0.0 && !best.is_some_and(|b| gain <= b.gain * (1.0 + GAIN_TIE_RTOL)) {
                best = Some(SplitCandidate {
                    feature,
                    threshold: midpoint(pair[0].value, pair[1].value),
                    gain,
                });
            }
        }
        start = end;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn settings(max_depth: usize) -> TreeSettings {
        TreeSettings {
            max_depth,
            min_samples_leaf: 1,
            l2_regularization: 1.0,
            min_gain_prune: 0.0,
        }
    }

    fn rows(values: &[f64]) -> Vec<SparseVector> {
        values.iter().map(|&v| SparseVector::from_dense(&[v])).collect()
    }

    #[test]
    fn stump_separates_sign() {
        let xs = rows(&[-2.0, -1.0, 1.0, 2.0]);
        let grad = [0.5, 0.5, -0.5, -0.5];
        let hess = [0.25; 4];
        let weight = [1.0; 4];
        let stats = GradientStats {
            grad: &grad,
            hess: &hess,
            weight: &weight,
        };
        let tree = Tree::fit(&xs, &stats, &settings(1));
        match tree.nodes()[0] {
            Node::Split {
                feature,
                threshold,
                gain,
                cover,
                ..
            } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 0.0);
                // 0.5 * (1^2/1.5 + 1^2/1.5 - 0)
                assert!((gain - 2.0 / 3.0).abs() < 1e-15);
                assert_eq!(cover, 4.0);
            }
            ref other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.predict(&SparseVector::from_dense(&[-5.0])), -1.0 / 1.5);
        assert_eq!(tree.predict(&SparseVector::from_dense(&[5.0])), 1.0 / 1.5);
    }

    #[test]
    fn absent_values_route_as_zero() {
        // feature 0 present only on two rows, the rest read as zero
        let xs = vec![
            SparseVector::new(2, vec![(0, 3.0)]).unwrap(),
            SparseVector::new(2, vec![(0, 4.0)]).unwrap(),
            SparseVector::new(2, vec![(1, 1.0)]).unwrap(),
            SparseVector::zeros(2),
        ];
        let grad = [-1.0, -1.0, 1.0, 1.0];
        let hess = [1.0; 4];
        let weight = [1.0; 4];
        let stats = GradientStats {
            grad: &grad,
            hess: &hess,
            weight: &weight,
        };
        let tree = Tree::fit(&xs, &stats, &settings(1));
        match tree.nodes()[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(feature, 0);
                assert_eq!(threshold, 1.5);
            }
            ref other => panic!("expected split, got {other:?}"),
        }
        assert!(tree.predict(&SparseVector::zeros(2)) < 0.0);
    }

    #[test]
    fn no_signal_gives_single_leaf() {
        let xs = rows(&[1.0, 2.0, 3.0]);
        let grad = [0.0; 3];
        let hess = [0.25; 3];
        let weight = [1.0; 3];
        let stats = GradientStats {
            grad: &grad,
            hess: &hess,
            weight: &weight,
        };
        let tree = Tree::fit(&xs, &stats, &settings(4));
        assert_eq!(tree.nodes(), &[Node::Leaf { value: 0.0, cover: 3.0 }]);
    }

    #[test]
    fn pruning_collapses_weak_splits() {
        let xs = rows(&[-2.0, -1.0, 1.0, 2.0]);
        let grad = [0.5, 0.5, -0.5, -0.5];
        let hess = [0.25; 4];
        let weight = [1.0; 4];
        let stats = GradientStats {
            grad: &grad,
            hess: &hess,
            weight: &weight,
        };
        let mut s = settings(3);
        s.min_gain_prune = 10.0;
        assert_eq!(Tree::fit(&xs, &stats, &s).len(), 1);
    }

    #[test]
    fn min_samples_leaf_respected() {
        let xs = rows(&[1.0, 2.0, 3.0, 4.0]);
        let grad = [1.0, -1.0, -1.0, -1.0];
        let hess = [1.0; 4];
        let weight = [1.0; 4];
        let stats = GradientStats {
            grad: &grad,
            hess: &hess,
            weight: &weight,
        };
        let mut s = settings(1);
        s.min_samples_leaf = 2;
        match Tree::fit(&xs, &stats, &s).nodes()[0] {
            Node::Split { threshold, .. } => assert_eq!(threshold, 2.5),
            ref other => panic!("expected split, got {other:?}"),
        }
    }

    #[test]
    fn midpoint_never_collapses_onto_lower_value() {
        let lo = 1.0_f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        assert_eq!(midpoint(lo, hi), hi);
        assert_eq!(midpoint(-1.0, 1.0), 0.0);
    }
}
