//! Greedy split search against exhaustive enumeration of every cut.

use memelens_core::gbdt::{best_split, split_gain, GradientStats, Node, Tree, TreeSettings};
use memelens_core::vectorizer::SparseVector;
use proptest::prelude::*;

const SETTINGS: TreeSettings = TreeSettings {
    max_depth: 2,
    min_samples_leaf: 1,
    l2_regularization: 1.0,
    min_gain_prune: 0.0,
};

/// Best gain over all (feature, cut) pairs, sums recomputed from scratch.
// every row is indexed by the same feature, so a range loop reads best
#[allow(clippy::needless_range_loop)]
fn exhaustive_gain(dense: &[Vec<f64>], grad: &[f64], hess: &[f64], members: &[usize]) -> f64 {
    let dim = dense.first().map_or(0, Vec::len);
    let mut best = f64::NEG_INFINITY;
    for f in 0..dim {
        for &cut in members.iter().map(|&r| &dense[r][f]) {
            let (left, right): (Vec<usize>, Vec<usize>) = members.iter().partition(|&&r| dense[r][f] < cut);
            if left.is_empty() || right.is_empty() {
                continue;
            }
            let sum = |rows: &[usize], v: &[f64]| rows.iter().map(|&r| v[r]).sum::<f64>();
            let gain = split_gain(
                sum(&left, grad),
                sum(&left, hess),
                sum(&right, grad),
                sum(&right, hess),
                SETTINGS.l2_regularization,
            );
            best = best.max(gain);
        }
    }
    best
}

fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (2usize..=25, 1usize..=3).prop_flat_map(|(n, dim)| {
        (
            // small value grid so ties and implicit zeros are common
            prop::collection::vec(prop::collection::vec((-2i32..=3).prop_map(|v| v as f64 * 0.5), dim), n),
            prop::collection::vec(-1.0f64..1.0, n),
            prop::collection::vec(0.05f64..1.0, n),
        )
    })
}

fn members_of(tree: &Tree, dense: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); tree.len()];
    for (r, row) in dense.iter().enumerate() {
        let mut i = 0;
        loop {
            members[i].push(r);
            match tree.nodes()[i] {
                Node::Leaf { .. } => break,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if row[feature] < threshold { left } else { right },
            }
        }
    }
    members
}

fn depth_of(tree: &Tree) -> Vec<usize> {
    let mut depth = vec![0; tree.len()];
    for (i, node) in tree.nodes().iter().enumerate() {
        if let Node::Split { left, right, .. } = *node {
            depth[left] = depth[i] + 1;
            depth[right] = depth[i] + 1;
        }
    }
    depth
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn root_split_matches_exhaustive((dense, grad, hess) in instance()) {
        let rows: Vec<SparseVector> = dense.iter().map(|r| SparseVector::from_dense(r)).collect();
        let weight = vec![1.0; rows.len()];
        let stats = GradientStats { grad: &grad, hess: &hess, weight: &weight };
        let members: Vec<usize> = (0..rows.len()).collect();
        let (g, h) = (grad.iter().sum(), hess.iter().sum());
        let exhaustive = exhaustive_gain(&dense, &grad, &hess, &members);
        match best_split(&rows, &stats, &members, g, h, &SETTINGS) {
            Some(found) => {
                prop_assert!((found.gain - exhaustive).abs() <= 1e-9 * exhaustive.abs().max(1.0));
                let (left, _): (Vec<usize>, Vec<usize>) =
                    members.iter().partition(|&&r| dense[r][found.feature] < found.threshold);
                let g_left: f64 = left.iter().map(|&r| grad[r]).sum();
                let h_left: f64 = left.iter().map(|&r| hess[r]).sum();
                let realized = split_gain(g_left, h_left, g - g_left, h - h_left, 1.0);
                prop_assert!((realized - found.gain).abs() <= 1e-9 * found.gain.abs().max(1.0));
            }
            None => prop_assert!(exhaustive <= 1e-12, "missed a split with gain {}", exhaustive),
        }
    }

    #[test]
    fn every_depth_two_node_is_locally_optimal((dense, grad, hess) in instance()) {
        let rows: Vec<SparseVector> = dense.iter().map(|r| SparseVector::from_dense(r)).collect();
        let weight = vec![1.0; rows.len()];
        let stats = GradientStats { grad: &grad, hess: &hess, weight: &weight };
        let tree = Tree::fit(&rows, &stats, &SETTINGS);
        let members = members_of(&tree, &dense);
        let depth = depth_of(&tree);
        for (i, node) in tree.nodes().iter().enumerate() {
            let exhaustive = exhaustive_gain(&dense, &grad, &hess, &members[i]);
            match *node {
                Node::Split { gain, .. } => {
                    prop_assert!((gain - exhaustive).abs() <= 1e-9 * exhaustive.abs().max(1.0));
                }
                Node::Leaf { .. } if depth[i] < SETTINGS.max_depth && members[i].len() >= 2 => {
                    prop_assert!(exhaustive <= 1e-12);
                }
                Node::Leaf { .. } => {}
            }
        }
    }
}
