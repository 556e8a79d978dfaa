//! Random-forest classifier, built from scratch.
//!
//! Each tree is grown on a bootstrap sample (with replacement, original
//! size) with Gini-impurity splits searched over a random subset of
//! `ceil(sqrt(F))` features per node; candidate thresholds are midpoints
//! between consecutive observed values, so splits depend only on the value
//! order. Trees grow until `max_depth`, purity, or the `min_leaf` floor.
//!
//! Per-tree seeds derive from the master seed, trees train in parallel and
//! are collected in index order: the same seed and data produce identical
//! forests regardless of thread count. The prediction score of a vector is
//! the fraction of trees voting positive (leaf majority, ties 0.5), which
//! is what the ROC threshold sweep operates on.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{FeatureMatrix, SparseVec};
use crate::seed;

#[derive(Debug, Error)]
pub enum ForestError {
    #[error("empty training matrix")]
    EmptyTrainingSet,
    #[error("rows ({rows}) and labels ({labels}) differ")]
    RowLabelMismatch { rows: usize, labels: usize },
    #[error("training labels contain a single class")]
    SingleClass,
    #[error("vector indexes feature {got} but the forest was trained on {expected} features")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("forest has no trees")]
    EmptyForest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: u32,
    /// Features considered per split; `None` means `ceil(sqrt(F))`.
    pub features_per_split: Option<usize>,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 100, max_depth: 25, min_leaf: 5, features_per_split: None, seed: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Node {
    Split { feature: u32, threshold: f64, left: u32, right: u32 },
    Leaf { pos: u32, neg: u32 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Majority vote of the reached leaf: 1.0 positive, 0.0 negative,
    /// 0.5 on a tie.
    pub fn vote(&self, v: &SparseVec) -> f64 {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if v.get(*feature) <= *threshold { *left as usize } else { *right as usize };
                }
                Node::Leaf { pos, neg } => {
                    return match pos.cmp(neg) {
                        std::cmp::Ordering::Greater => 1.0,
                        std::cmp::Ordering::Less => 0.0,
                        std::cmp::Ordering::Equal => 0.5,
                    }
                }
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedForest {
    pub version: u32,
    pub params: ForestParams,
    pub n_features: usize,
    /// Positive fraction of the training labels.
    pub positive_fraction: f64,
    /// Accuracy over rows scored only by trees whose bootstrap missed them.
    pub oob_accuracy: Option<f64>,
    pub trees: Vec<Tree>,
}

impl TrainedForest {
    /// Fraction of trees voting positive, in `[0, 1]`.
    pub fn predict_score(&self, v: &SparseVec) -> Result<f64, ForestError> {
        if self.trees.is_empty() {
            return Err(ForestError::EmptyForest);
        }
        if let Some(max) = v.max_index() {
            if max as usize >= self.n_features {
                return Err(ForestError::DimensionMismatch {
                    got: max as usize,
                    expected: self.n_features,
                });
            }
        }
        let votes: f64 = self.trees.iter().map(|t| t.vote(v)).sum();
        Ok(votes / self.trees.len() as f64)
    }

    /// Scores for every row of a matrix, in row order.
    pub fn predict_scores(&self, m: &FeatureMatrix) -> Result<Vec<f64>, ForestError> {
        if m.n_features != self.n_features {
            return Err(ForestError::DimensionMismatch {
                got: m.n_features,
                expected: self.n_features,
            });
        }
        if self.trees.is_empty() {
            return Err(ForestError::EmptyForest);
        }
        Ok(m.rows
            .par_iter()
            .map(|row| {
                self.trees.iter().map(|t| t.vote(row)).sum::<f64>() / self.trees.len() as f64
            })
            .collect())
    }
}

/// Train a forest. Requires both classes present.
pub fn train(
    matrix: &FeatureMatrix,
    labels: &[bool],
    params: ForestParams,
) -> Result<TrainedForest, ForestError> {
    let n_rows = matrix.n_rows();
    if n_rows == 0 || matrix.n_features == 0 {
        return Err(ForestError::EmptyTrainingSet);
    }
    if labels.len() != n_rows {
        return Err(ForestError::RowLabelMismatch { rows: n_rows, labels: labels.len() });
    }
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 || positives == n_rows {
        return Err(ForestError::SingleClass);
    }

    let columns = matrix.to_columns();
    let k = params
        .features_per_split
        .unwrap_or_else(|| (matrix.n_features as f64).sqrt().ceil() as usize)
        .clamp(1, matrix.n_features);

    let built: Vec<(Tree, Vec<bool>)> = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = seed::derive(params.seed, "tree", t as u64);
            grow_tree(matrix, labels, &columns, k, &params, tree_seed)
        })
        .collect();

    let mut trees = Vec::with_capacity(built.len());
    let mut in_bag: Vec<Vec<bool>> = Vec::with_capacity(built.len());
    for (tree, bag) in built {
        trees.push(tree);
        in_bag.push(bag);
    }

    // out-of-bag score: each row voted on only by trees that never saw it
    let mut oob_correct = 0usize;
    let mut oob_total = 0usize;
    for row in 0..n_rows {
        let mut votes = 0.0;
        let mut n = 0usize;
        for (tree, bag) in trees.iter().zip(&in_bag) {
            if !bag[row] {
                votes += tree.vote(&matrix.rows[row]);
                n += 1;
            }
        }
        if n > 0 {
            oob_total += 1;
            let predicted = votes / n as f64 > 0.5;
            if predicted == labels[row] {
                oob_correct += 1;
            }
        }
    }
    let oob_accuracy =
        if oob_total > 0 { Some(oob_correct as f64 / oob_total as f64) } else { None };

    Ok(TrainedForest {
        version: FOREST_FORMAT_VERSION,
        params,
        n_features: matrix.n_features,
        positive_fraction: positives as f64 / n_rows as f64,
        oob_accuracy,
        trees,
    })
}

/// Grow one tree on a bootstrap sample. Returns the tree and the in-bag
/// row mask.
fn grow_tree(
    matrix: &FeatureMatrix,
    labels: &[bool],
    columns: &[Vec<(u32, f64)>],
    features_per_split: usize,
    params: &ForestParams,
    tree_seed: u64,
) -> (Tree, Vec<bool>) {
    let n_rows = matrix.n_rows();
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed);
    let mut weight = vec![0u32; n_rows];
    for _ in 0..n_rows {
        weight[rng.random_range(0..n_rows)] += 1;
    }
    let in_bag: Vec<bool> = weight.iter().map(|&w| w > 0).collect();
    let rows: Vec<u32> = (0..n_rows as u32).filter(|&r| weight[r as usize] > 0).collect();

    let mut builder = TreeBuilder {
        matrix,
        labels,
        columns,
        weight: &weight,
        features_per_split,
        min_leaf: params.min_leaf,
        max_depth: params.max_depth,
        rng,
        in_node: vec![false; n_rows],
        nodes: Vec::new(),
        feature_pool: (0..matrix.n_features as u32).collect(),
    };
    builder.build(rows, 0);
    (Tree { nodes: builder.nodes }, in_bag)
}

struct TreeBuilder<'a> {
    matrix: &'a FeatureMatrix,
    labels: &'a [bool],
    columns: &'a [Vec<(u32, f64)>],
    weight: &'a [u32],
    features_per_split: usize,
    min_leaf: u32,
    max_depth: usize,
    rng: ChaCha8Rng,
    in_node: Vec<bool>,
    nodes: Vec<Node>,
    feature_pool: Vec<u32>,
}

struct BestSplit {
    feature: u32,
    threshold: f64,
    impurity: f64,
}

impl TreeBuilder<'_> {
    /// Appends the subtree for `rows` and returns its root index.
    fn build(&mut self, rows: Vec<u32>, depth: usize) -> u32 {
        let (pos_w, tot_w) = self.node_counts(&rows);
        let neg_w = tot_w - pos_w;
        let make_leaf = |nodes: &mut Vec<Node>| {
            nodes.push(Node::Leaf { pos: pos_w, neg: neg_w });
            (nodes.len() - 1) as u32
        };
        if depth >= self.max_depth
            || pos_w == 0
            || neg_w == 0
            || tot_w < 2 * self.min_leaf
        {
            return make_leaf(&mut self.nodes);
        }
        let Some(split) = self.find_split(&rows, pos_w, tot_w) else {
            return make_leaf(&mut self.nodes);
        };

        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows
            .iter()
            .partition(|&&r| self.matrix.rows[r as usize].get(split.feature) <= split.threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());

        let at = self.nodes.len() as u32;
        self.nodes.push(Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: 0,
            right: 0,
        });
        let left = self.build(left_rows, depth + 1);
        let right = self.build(right_rows, depth + 1);
        let _ = split.impurity;
        match &mut self.nodes[at as usize] {
            Node::Split { left: l, right: r, .. } => {
                *l = left;
                *r = right;
            }
            Node::Leaf { .. } => unreachable!(),
        }
        at
    }

    fn node_counts(&self, rows: &[u32]) -> (u32, u32) {
        let mut pos = 0u32;
        let mut tot = 0u32;
        for &r in rows {
            let w = self.weight[r as usize];
            tot += w;
            if self.labels[r as usize] {
                pos += w;
            }
        }
        (pos, tot)
    }

    fn find_split(&mut self, rows: &[u32], node_pos: u32, node_tot: u32) -> Option<BestSplit> {
        for &r in rows {
            self.in_node[r as usize] = true;
        }
        // sample candidate features without replacement
        let pool_len = self.feature_pool.len();
        for i in 0..self.features_per_split.min(pool_len) {
            let j = self.rng.random_range(i..pool_len);
            self.feature_pool.swap(i, j);
        }

        let mut best: Option<BestSplit> = None;
        for i in 0..self.features_per_split.min(pool_len) {
            let feature = self.feature_pool[i];
            if let Some(cand) = self.best_threshold(feature, node_pos, node_tot) {
                let better = match &best {
                    None => true,
                    Some(b) => cand.impurity < b.impurity,
                };
                if better {
                    best = Some(cand);
                }
            }
        }
        for &r in rows {
            self.in_node[r as usize] = false;
        }
        best
    }

    /// Best Gini threshold for one feature within the node (marked in
    /// `in_node`), or `None` when the feature is constant there or no cut
    /// satisfies `min_leaf`.
    fn best_threshold(&self, feature: u32, node_pos: u32, node_tot: u32) -> Option<BestSplit> {
        // (value, weight, positive weight) for rows where the feature is
        // nonzero; the implicit zero block is appended afterwards.
        let mut present: Vec<(f64, u32, u32)> = Vec::new();
        let mut present_w = 0u32;
        let mut present_pos = 0u32;
        for &(row, value) in &self.columns[feature as usize] {
            if self.in_node[row as usize] {
                let w = self.weight[row as usize];
                let p = if self.labels[row as usize] { w } else { 0 };
                present.push((value, w, p));
                present_w += w;
                present_pos += p;
            }
        }
        let zero_w = node_tot - present_w;
        let zero_pos = node_pos - present_pos;
        if zero_w > 0 {
            present.push((0.0, zero_w, zero_pos));
        }
        present.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        // merge equal values
        let mut groups: Vec<(f64, u32, u32)> = Vec::with_capacity(present.len());
        for (v, w, p) in present {
            match groups.last_mut() {
                Some(last) if last.0 == v => {
                    last.1 += w;
                    last.2 += p;
                }
                _ => groups.push((v, w, p)),
            }
        }
        if groups.len() < 2 {
            return None;
        }

        let tot = node_tot as f64;
        let mut best: Option<BestSplit> = None;
        let mut left_w = 0u32;
        let mut left_pos = 0u32;
        for pair in groups.windows(2) {
            let (v, w, p) = pair[0];
            left_w += w;
            left_pos += p;
            let right_w = node_tot - left_w;
            let right_pos = node_pos - left_pos;
            if left_w < self.min_leaf || right_w < self.min_leaf {
                continue;
            }
            let impurity = (left_w as f64 / tot) * gini(left_pos, left_w)
                + (right_w as f64 / tot) * gini(right_pos, right_w);
            let better = match &best {
                None => true,
                Some(b) => impurity < b.impurity,
            };
            if better {
                best = Some(BestSplit { feature, threshold: (v + pair[1].0) / 2.0, impurity });
            }
        }
        // reject splits that do not improve on the node impurity
        best.filter(|b| b.impurity < gini(node_pos, node_tot) - 1e-12)
    }
}

fn gini(pos: u32, tot: u32) -> f64 {
    if tot == 0 {
        return 0.0;
    }
    let p = pos as f64 / tot as f64;
    1.0 - p * p - (1.0 - p) * (1.0 - p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::accuracy;

    fn separable_1d(n: usize) -> (FeatureMatrix, Vec<bool>) {
        // feature < 0 => class false, feature > 0 => class true
        let rows: Vec<Vec<f64>> =
            (0..n).map(|i| vec![if i % 2 == 0 { -1.0 - (i as f64) } else { 1.0 + (i as f64) }]).collect();
        let labels: Vec<bool> = (0..n).map(|i| i % 2 == 1).collect();
        (FeatureMatrix::from_dense(rows), labels)
    }

    #[test]
    fn separable_data_trains_to_perfect_accuracy() {
        let (m, labels) = separable_1d(200);
        let forest = train(&m, &labels, ForestParams { n_trees: 20, seed: 3, ..Default::default() }).unwrap();
        let scores = forest.predict_scores(&m).unwrap();
        assert_eq!(accuracy(&scores, &labels, 0.5), 1.0);
    }

    #[test]
    fn random_labels_score_near_chance_out_of_bag() {
        use rand::Rng;
        use rand::SeedableRng;
        // labels independent of features: OOB accuracy hovers around 0.5
        let mut accs = Vec::new();
        for seed in 0..3u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let rows: Vec<Vec<f64>> =
                (0..2000).map(|_| vec![rng.random::<f64>(), rng.random::<f64>()]).collect();
            let labels: Vec<bool> = (0..2000).map(|i| i % 2 == 0).collect();
            let m = FeatureMatrix::from_dense(rows);
            let forest =
                train(&m, &labels, ForestParams { n_trees: 30, seed, ..Default::default() }).unwrap();
            accs.push(forest.oob_accuracy.unwrap());
        }
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert!((mean - 0.5).abs() < 0.05, "oob accuracies {accs:?}");
    }

    #[test]
    fn full_feature_consideration_is_deterministic_on_separable_data() {
        let (m, labels) = separable_1d(50);
        let params = ForestParams {
            n_trees: 10,
            max_depth: usize::MAX,
            min_leaf: 1,
            features_per_split: Some(1),
            seed: 9,
        };
        let f1 = train(&m, &labels, params).unwrap();
        let f2 = train(&m, &labels, params).unwrap();
        let s1 = f1.predict_scores(&m).unwrap();
        let s2 = f2.predict_scores(&m).unwrap();
        assert_eq!(s1, s2);
        assert_eq!(accuracy(&s1, &labels, 0.5), 1.0);
    }

    #[test]
    fn rejects_single_class_and_empty_input() {
        let m = FeatureMatrix::from_dense(vec![vec![1.0], vec![2.0]]);
        assert!(matches!(
            train(&m, &[true, true], ForestParams::default()),
            Err(ForestError::SingleClass)
        ));
        let empty = FeatureMatrix::from_dense(vec![]);
        assert!(matches!(
            train(&empty, &[], ForestParams::default()),
            Err(ForestError::EmptyTrainingSet)
        ));
    }

    #[test]
    fn vote_fraction_counts_trees() {
        // hand-built forest of 4 stump leaves voting +,+,-,-
        let leaf = |pos, neg| Tree { nodes: vec![Node::Leaf { pos, neg }] };
        let forest = TrainedForest {
            version: FOREST_FORMAT_VERSION,
            params: ForestParams::default(),
            n_features: 1,
            positive_fraction: 0.5,
            oob_accuracy: None,
            trees: vec![leaf(3, 1), leaf(2, 0), leaf(0, 2), leaf(1, 3)],
        };
        let v = SparseVec::from_dense(&[0.5]);
        assert_eq!(forest.predict_score(&v).unwrap(), 0.5);
    }

    #[test]
    fn empty_forest_and_dimension_guard() {
        let forest = TrainedForest {
            version: FOREST_FORMAT_VERSION,
            params: ForestParams::default(),
            n_features: 2,
            positive_fraction: 0.5,
            oob_accuracy: None,
            trees: vec![],
        };
        let v = SparseVec::from_dense(&[0.0, 1.0]);
        assert!(matches!(forest.predict_score(&v), Err(ForestError::EmptyForest)));

        let forest = TrainedForest {
            trees: vec![Tree { nodes: vec![Node::Leaf { pos: 1, neg: 0 }] }],
            ..forest
        };
        let wide = SparseVec::from_dense(&[0.0, 0.0, 7.0]);
        assert!(matches!(forest.predict_score(&wide), Err(ForestError::DimensionMismatch { .. })));
    }

    #[test]
    fn monotone_feature_relabeling_preserves_scores() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..120)
            .map(|_| vec![rng.random_range(0.0..4.0), rng.random_range(-2.0..2.0)])
            .collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + r[1] > 1.5).collect();
        let m = FeatureMatrix::from_dense(rows.clone());
        // strictly increasing transform of feature 0 (preserves sign of 0
        // so the sparse zero block is unchanged)
        let transformed: Vec<Vec<f64>> =
            rows.iter().map(|r| vec![r[0].powi(3), r[1]]).collect();
        let mt = FeatureMatrix::from_dense(transformed);
        let params = ForestParams { n_trees: 15, seed: 77, ..Default::default() };
        let s1 = train(&m, &labels, params).unwrap().predict_scores(&m).unwrap();
        let s2 = train(&mt, &labels, params).unwrap().predict_scores(&mt).unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn training_is_identical_across_thread_counts() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rows: Vec<Vec<f64>> =
            (0..300).map(|_| vec![rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
        let labels: Vec<bool> = rows.iter().map(|r| r[0] + 0.3 * r[1] > 0.6).collect();
        let m = FeatureMatrix::from_dense(rows);
        let params = ForestParams { n_trees: 24, seed: 4, ..Default::default() };
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| {
                let f = train(&m, &labels, params).unwrap();
                (serde_json::to_string(&f).unwrap(), f.predict_scores(&m).unwrap())
            })
        };
        let (f1, s1) = run(1);
        let (f4, s4) = run(4);
        assert_eq!(f1, f4, "serialized forests differ across worker counts");
        assert_eq!(s1, s4);
    }

    #[test]
    fn serialization_round_trips() {
        let (m, labels) = separable_1d(40);
        let forest = train(&m, &labels, ForestParams { n_trees: 5, seed: 1, ..Default::default() }).unwrap();
        let json = serde_json::to_string(&forest).unwrap();
        let back: TrainedForest = serde_json::from_str(&json).unwrap();
        assert_eq!(back.version, FOREST_FORMAT_VERSION);
        assert_eq!(
            forest.predict_scores(&m).unwrap(),
            back.predict_scores(&m).unwrap()
        );
    }
}
