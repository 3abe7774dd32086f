//! Gini decision trees and bagged forests of them.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Leaf { positive: usize, negative: usize },
    /// `x[feature] <= threshold` goes to `left`.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// Flat tree; node 0 is the root and children always follow their parent.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

#[derive(Clone, Debug)]
pub(crate) struct TreeParams {
    /// Splits gaining less Gini impurity than this become leaves.
    /// `None` splits every impure node that can be split.
    pub min_impurity_decrease: Option<f64>,
    /// Features drawn per node; `None` uses all.
    pub max_features: Option<usize>,
}

fn gini(pos: usize, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let p = pos as f64 / n as f64;
    2.0 * p * (1.0 - p)
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Best split of `idx` over `features`. Ties keep the first candidate
/// (lowest feature, then lowest threshold).
fn best_split(x: &[Vec<f64>], y: &[bool], idx: &[usize], features: &[usize]) -> Option<Best> {
    let n = idx.len();
    let pos_total = idx.iter().filter(|&&i| y[i]).count();
    let parent = gini(pos_total, n);
    let mut best: Option<Best> = None;
    let mut order: Vec<usize> = idx.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let mut pos_left = 0;
        for k in 1..n {
            pos_left += y[order[k - 1]] as usize;
            let (lo, hi) = (x[order[k - 1]][f], x[order[k]][f]);
            if lo == hi {
                continue;
            }
            let (nl, nr) = (k, n - k);
            let child = (nl as f64 * gini(pos_left, nl) + nr as f64 * gini(pos_total - pos_left, nr)) / n as f64;
            let gain = parent - child;
            if best.as_ref().is_none_or(|b| gain > b.gain) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Best { gain, feature: f, threshold });
            }
        }
    }
    best
}

impl DecisionTree {
    pub(crate) fn fit_indices(x: &[Vec<f64>], y: &[bool], idx: Vec<usize>, params: &TreeParams, rng: &mut impl Rng) -> Self {
        let d = x.first().map_or(0, Vec::len);
        let mut nodes = Vec::new();
        // (slot, samples); slot is filled once the node kind is known.
        let mut stack = vec![(0usize, idx)];
        nodes.push(Node::Leaf { positive: 0, negative: 0 });
        while let Some((slot, idx)) = stack.pop() {
            let positive = idx.iter().filter(|&&i| y[i]).count();
            let negative = idx.len() - positive;
            let leaf = Node::Leaf { positive, negative };
            if positive == 0 || negative == 0 {
                nodes[slot] = leaf;
                continue;
            }
            let all: Vec<usize> = (0..d).collect();
            let split = match params.max_features {
                Some(m) if m < d => {
                    let mut drawn = sample(rng, d, m).into_vec();
                    drawn.sort_unstable();
                    best_split(x, y, &idx, &drawn).or_else(|| best_split(x, y, &idx, &all))
                }
                _ => best_split(x, y, &idx, &all),
            };
            let Some(split) = split else {
                nodes[slot] = leaf;
                continue;
            };
            if params.min_impurity_decrease.is_some_and(|min| split.gain < min) {
                nodes[slot] = leaf;
                continue;
            }
            let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][split.feature] <= split.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf { positive: 0, negative: 0 });
            let right = nodes.len();
            nodes.push(Node::Leaf { positive: 0, negative: 0 });
            nodes[slot] = Node::Split { feature: split.feature, threshold: split.threshold, left, right };
            stack.push((right, r));
            stack.push((left, l));
        }
        Self { nodes }
    }

    pub fn fit(x: &[Vec<f64>], y: &[bool], min_impurity_decrease: Option<f64>) -> Result<Self> {
        check_two_classes(y)?;
        let params = TreeParams { min_impurity_decrease, max_features: None };
        Ok(Self::fit_indices(x, y, (0..x.len()).collect(), &params, &mut ChaCha8Rng::seed_from_u64(0)))
    }

    /// Leaf counts reached by `x`; majority wins, ties go positive.
    pub fn predict(&self, x: &[f64]) -> bool {
        let mut k = 0;
        loop {
            match self.nodes[k] {
                Node::Leaf { positive, negative } => return positive >= negative,
                Node::Split { feature, threshold, left, right } => k = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], k: usize) -> usize {
            match nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    /// Checks child links point forward and features are in range.
    pub(crate) fn validate(&self, n_features: usize) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut parents = vec![0usize; self.nodes.len()];
        for (k, node) in self.nodes.iter().enumerate() {
            if let Node::Split { feature, threshold, left, right } = *node {
                if feature >= n_features {
                    return Err(format!("node {k} splits on feature {feature} of {n_features}"));
                }
                if !threshold.is_finite() {
                    return Err(format!("node {k} has a non-finite threshold"));
                }
                for c in [left, right] {
                    if c <= k || c >= self.nodes.len() {
                        return Err(format!("node {k} links to {c}"));
                    }
                    parents[c] += 1;
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err("nodes do not form a tree".into());
        }
        Ok(())
    }
}

pub(crate) fn check_two_classes(y: &[bool]) -> Result<()> {
    if y.iter().all(|&v| v) || y.iter().all(|&v| !v) {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Bootstrap-aggregated trees with √d features drawn per node.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<DecisionTree>,
}

impl RandomForest {
    pub fn fit(x: &[Vec<f64>], y: &[bool], n_trees: usize, seed: u64) -> Result<Self> {
        check_two_classes(y)?;
        if n_trees == 0 {
            return Err(Error::config("rf_trees", "must be at least 1"));
        }
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        let params = TreeParams { min_impurity_decrease: None, max_features: Some(((d as f64).sqrt() as usize).max(1)) };
        let mut master = ChaCha8Rng::seed_from_u64(seed);
        let seeds: Vec<u64> = (0..n_trees).map(|_| master.next_u64()).collect();
        let trees = seeds
            .into_par_iter()
            .map(|s| {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                DecisionTree::fit_indices(x, y, idx, &params, &mut rng)
            })
            .collect();
        Ok(Self { trees })
    }

    /// Majority vote; ties go positive.
    pub fn predict(&self, x: &[f64]) -> bool {
        let pos = self.trees.iter().filter(|t| t.predict(x)).count();
        2 * pos >= self.trees.len()
    }
}
