//! Bagged CART trees: variance-reduction splits for regression, Gini splits
//! for classification.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::matrix::FeatureMatrix;
use crate::error::{Error, Result};
use crate::numeric::sqrt;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `floor(sqrt(p))` (at least 1).
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 10, min_leaf: 5, max_features: None, bootstrap: true, seed: 0 }
    }
}

impl ForestParams {
    fn validate(&self) -> Result<()> {
        if self.n_trees == 0 || self.min_leaf == 0 {
            return Err(Error::InvalidInput("forest needs n_trees >= 1 and min_leaf >= 1".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::InvalidInput("max_features must be positive".into()));
        }
        Ok(())
    }

    fn features_per_split(&self, p: usize) -> usize {
        self.max_features.unwrap_or_else(|| (sqrt(p as f64) as usize).max(1)).min(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf { value: usize },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

/// A single tree; leaf payloads are stored in a flat table of width `width`.
#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
    leaves: Vec<f64>,
    width: usize,
}

impl Tree {
    fn leaf_for(&self, row: &[f64]) -> &[f64] {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value } => return &self.leaves[value * self.width..(value + 1) * self.width],
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Target<'a> {
    Regression(&'a [f64]),
    Classification { labels: &'a [usize], n_classes: usize },
}

impl Target<'_> {
    fn width(&self) -> usize {
        match self {
            Target::Regression(_) => 1,
            Target::Classification { n_classes, .. } => *n_classes,
        }
    }

    fn leaf_value(&self, idx: &[usize], out: &mut Vec<f64>) {
        match *self {
            Target::Regression(y) => {
                out.push(idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64);
            }
            Target::Classification { labels, n_classes } => {
                let start = out.len();
                out.resize(start + n_classes, 0.0);
                for &i in idx {
                    out[start + labels[i]] += 1.0;
                }
                let n = idx.len() as f64;
                out[start..].iter_mut().for_each(|v| *v /= n);
            }
        }
    }

    fn is_pure(&self, idx: &[usize]) -> bool {
        match *self {
            Target::Regression(y) => idx.iter().all(|&i| y[i] == y[idx[0]]),
            Target::Classification { labels, .. } => idx.iter().all(|&i| labels[i] == labels[idx[0]]),
        }
    }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    target: Target<'a>,
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl Builder<'_> {
    fn build<R: Rng + ?Sized>(&self, idx: Vec<usize>, rng: &mut R) -> Tree {
        let mut tree = Tree { nodes: Vec::new(), leaves: Vec::new(), width: self.target.width() };
        self.grow(&mut tree, idx, 0, rng);
        tree
    }

    fn make_leaf(&self, tree: &mut Tree, idx: &[usize]) -> usize {
        let value = tree.leaves.len() / tree.width;
        self.target.leaf_value(idx, &mut tree.leaves);
        tree.nodes.push(Node::Leaf { value });
        tree.nodes.len() - 1
    }

    fn grow<R: Rng + ?Sized>(&self, tree: &mut Tree, idx: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf || self.target.is_pure(&idx) {
            return self.make_leaf(tree, &idx);
        }
        let Some(best) = self.best_split(&idx, rng) else {
            return self.make_leaf(tree, &idx);
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        let at = tree.nodes.len();
        tree.nodes.push(Node::Leaf { value: 0 });
        let left = self.grow(tree, left_idx, depth + 1, rng);
        let right = self.grow(tree, right_idx, depth + 1, rng);
        tree.nodes[at] = Node::Split { feature: best.feature, threshold: best.threshold, left, right };
        at
    }

    /// Best split over a random subset of `mtry` features, by largest
    /// decrease in impurity. `None` when no split improves the node.
    fn best_split<R: Rng + ?Sized>(&self, idx: &[usize], rng: &mut R) -> Option<BestSplit> {
        let p = self.x.n_cols();
        let mut features: Vec<usize> = (0..p).collect();
        for i in 0..self.mtry {
            let j = rng.random_range(i..p);
            features.swap(i, j);
        }
        let n = idx.len();
        let parent = self.node_score(idx);
        let mut best: Option<BestSplit> = None;
        let mut sorted = idx.to_vec();
        for &f in &features[..self.mtry] {
            sorted.sort_by(|&a, &b| self.x.get(a, f).total_cmp(&self.x.get(b, f)));
            match self.target {
                Target::Regression(y) => {
                    let total: f64 = sorted.iter().map(|&i| y[i]).sum();
                    let mut left_sum = 0.0;
                    for pos in 0..n - 1 {
                        left_sum += y[sorted[pos]];
                        let n_left = pos + 1;
                        if n_left < self.min_leaf || n - n_left < self.min_leaf {
                            continue;
                        }
                        let (a, b) = (self.x.get(sorted[pos], f), self.x.get(sorted[pos + 1], f));
                        if a == b {
                            continue;
                        }
                        let right_sum = total - left_sum;
                        let score = left_sum * left_sum / n_left as f64 + right_sum * right_sum / (n - n_left) as f64;
                        consider(&mut best, f, 0.5 * (a + b), score);
                    }
                }
                Target::Classification { labels, n_classes } => {
                    let mut right = vec![0.0; n_classes];
                    for &i in &sorted {
                        right[labels[i]] += 1.0;
                    }
                    let mut left = vec![0.0; n_classes];
                    let mut left_sq = 0.0;
                    let mut right_sq: f64 = right.iter().map(|c| c * c).sum();
                    for pos in 0..n - 1 {
                        let c = labels[sorted[pos]];
                        left_sq += 2.0 * left[c] + 1.0;
                        right_sq -= 2.0 * right[c] - 1.0;
                        left[c] += 1.0;
                        right[c] -= 1.0;
                        let n_left = pos + 1;
                        if n_left < self.min_leaf || n - n_left < self.min_leaf {
                            continue;
                        }
                        let (a, b) = (self.x.get(sorted[pos], f), self.x.get(sorted[pos + 1], f));
                        if a == b {
                            continue;
                        }
                        let score = left_sq / n_left as f64 + right_sq / (n - n_left) as f64;
                        consider(&mut best, f, 0.5 * (a + b), score);
                    }
                }
            }
        }
        // Scores are "sum of squares over size": larger means lower impurity.
        best.filter(|b| b.score > parent + 1e-12 * parent.abs().max(1.0))
    }

    fn node_score(&self, idx: &[usize]) -> f64 {
        let n = idx.len() as f64;
        match self.target {
            Target::Regression(y) => {
                let s: f64 = idx.iter().map(|&i| y[i]).sum();
                s * s / n
            }
            Target::Classification { labels, n_classes } => {
                let mut counts = vec![0.0; n_classes];
                for &i in idx {
                    counts[labels[i]] += 1.0;
                }
                counts.iter().map(|c| c * c).sum::<f64>() / n
            }
        }
    }
}

fn consider(best: &mut Option<BestSplit>, feature: usize, threshold: f64, score: f64) {
    if best.as_ref().is_none_or(|b| score > b.score) {
        *best = Some(BestSplit { feature, threshold, score });
    }
}

/// An ensemble of trees sharing one output width.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    width: usize,
    n_features: usize,
}

impl Forest {
    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Average of the leaf payloads reached by `row`.
    pub fn predict_row(&self, row: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for tree in &self.trees {
            for (o, v) in out.iter_mut().zip(tree.leaf_for(row)) {
                *o += v;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|v| *v /= n);
    }
}

fn fit_forest(x: &FeatureMatrix, target: Target<'_>, params: &ForestParams) -> Result<Forest> {
    params.validate()?;
    let n = x.n_rows();
    if n == 0 {
        return Err(Error::InvalidInput("forest needs at least one row".into()));
    }
    let builder = Builder {
        x,
        target,
        max_depth: params.max_depth,
        min_leaf: params.min_leaf,
        mtry: params.features_per_split(x.n_cols()),
    };
    let trees = (0..params.n_trees)
        .map(|t| {
            let mut r = rng::stream(params.seed, t as u64);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| r.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            builder.build(idx, &mut r)
        })
        .collect();
    Ok(Forest { trees, width: target.width(), n_features: x.n_cols() })
}

pub fn fit_forest_regressor(x: &FeatureMatrix, y: &[f64], params: &ForestParams) -> Result<Forest> {
    if x.n_rows() != y.len() {
        return Err(Error::InvalidInput("X and y lengths differ".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forest targets"));
    }
    fit_forest(x, Target::Regression(y), params)
}

pub fn fit_forest_classifier(x: &FeatureMatrix, labels: &[usize], n_classes: usize, params: &ForestParams) -> Result<Forest> {
    if x.n_rows() != labels.len() {
        return Err(Error::InvalidInput("X and label lengths differ".into()));
    }
    if n_classes < 2 {
        return Err(Error::InvalidInput("need at least two classes".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&d| d >= n_classes) {
        return Err(Error::InvalidInput(alloc::format!("label {bad} outside 0..{n_classes}")));
    }
    fit_forest(x, Target::Classification { labels, n_classes }, params)
}

impl Forest {
    pub(crate) fn width(&self) -> usize {
        self.width
    }
}
