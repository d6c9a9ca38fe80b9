//! Regression random forest used as the nuisance learner, and cross-fitting.
//!
//! Trees grow by exhaustive sum-of-squares splits over a random subset of
//! `mtry` features per node. Thresholds sit at midpoints between consecutive
//! distinct feature values; a row goes left when `x <= threshold`. Equal gains
//! go to the lowest feature index, then the lowest threshold. Tree `i` draws
//! from `derive_seed(spec.seed, Stream::Tree, i)`, so a forest is identical
//! however its trees are scheduled.

use ndarray::{ArrayView2, Axis};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::FoldPlan;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, Rng, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestSpec {
    pub n_trees: usize,
    /// Features tried per split; `None` means all of them.
    pub mtry: Option<usize>,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for ForestSpec {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            min_leaf: 1,
            max_depth: None,
            seed: 0,
            bootstrap: true,
        }
    }
}

impl ForestSpec {
    pub fn resolved_mtry(&self, p: usize) -> usize {
        self.mtry.unwrap_or(p.max(1))
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::argument("n_trees must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(Error::argument("min_leaf must be at least 1"));
        }
        let mtry = self.resolved_mtry(p);
        if p > 0 && (mtry == 0 || mtry > p) {
            return Err(Error::argument(format!("mtry must lie in [1, {p}], got {mtry}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        count: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    fn predict_row(&self, row: impl Fn(usize) -> f64) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row(*feature) <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaves(&self) -> impl Iterator<Item = (f64, usize)> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Leaf { value, count } => Some((*value, *count)),
            _ => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionForest {
    pub trees: Vec<RegressionTree>,
    pub spec: ForestSpec,
    pub feature_count: usize,
}

/// Column-major copy of the training matrix.
struct Columns {
    data: Vec<Vec<f64>>,
    /// Row indices of each column sorted by value, ties by row.
    sorted: Vec<Vec<u32>>,
}

/// Grows one tree on a (possibly bootstrapped) sample. Each feature keeps the
/// sample positions of the current node sorted by value, laid out in
/// `order[f·n .. (f+1)·n]`; a split stably partitions every feature's segment
/// so children stay sorted without re-sorting.
struct Grower {
    min_leaf: usize,
    max_depth: Option<usize>,
    mtry: usize,
    n: usize,
    /// `values[f·n + s]`: feature `f` of sample position `s`.
    values: Vec<f64>,
    ys: Vec<f64>,
    order: Vec<u32>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    features: Vec<usize>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower {
    fn new(cols: &Columns, y: &[f64], rows: &[usize], spec: &ForestSpec, mtry: usize) -> Self {
        let n = rows.len();
        let p = cols.data.len();
        // Sample positions grouped by source row, via counting sort.
        let n_rows = y.len();
        let mut first = vec![0u32; n_rows + 1];
        for &r in rows {
            first[r + 1] += 1;
        }
        for r in 0..n_rows {
            first[r + 1] += first[r];
        }
        let mut fill = first.clone();
        let mut by_row = vec![0u32; n];
        for (s, &r) in rows.iter().enumerate() {
            by_row[fill[r] as usize] = s as u32;
            fill[r] += 1;
        }
        let mut values = Vec::with_capacity(p * n);
        let mut order = Vec::with_capacity(p * n);
        for (col, sorted_rows) in cols.data.iter().zip(&cols.sorted) {
            values.extend(rows.iter().map(|&r| col[r]));
            for &r in sorted_rows {
                let r = r as usize;
                order.extend_from_slice(&by_row[first[r] as usize..first[r + 1] as usize]);
            }
        }
        Self {
            min_leaf: spec.min_leaf,
            max_depth: spec.max_depth,
            mtry,
            n,
            values,
            ys: rows.iter().map(|&r| y[r]).collect(),
            order,
            goes_left: vec![false; n],
            scratch: Vec::with_capacity(n),
            features: (0..p).collect(),
        }
    }

    fn grow(&mut self, samples: &mut [u32], rng: &mut Rng) -> RegressionTree {
        let mut nodes = Vec::new();
        // (node slot, start, end, depth)
        let mut stack = vec![(0usize, 0usize, samples.len(), 0usize)];
        nodes.push(Node::Leaf { value: 0.0, count: 0 });
        while let Some((slot, start, end, depth)) = stack.pop() {
            let split = self.find_split(&samples[start..end], start, depth, rng);
            match split {
                None => {
                    let idx = &samples[start..end];
                    let sum: f64 = idx.iter().map(|&s| self.ys[s as usize]).sum();
                    nodes[slot] = Node::Leaf {
                        value: sum / idx.len() as f64,
                        count: idx.len(),
                    };
                }
                Some(best) => {
                    let mid = start + self.partition(&mut samples[start..end], start, &best);
                    let left = nodes.len();
                    let right = left + 1;
                    nodes.push(Node::Leaf { value: 0.0, count: 0 });
                    nodes.push(Node::Leaf { value: 0.0, count: 0 });
                    nodes[slot] = Node::Split {
                        feature: best.feature,
                        threshold: best.threshold,
                        left,
                        right,
                    };
                    stack.push((right, mid, end, depth + 1));
                    stack.push((left, start, mid, depth + 1));
                }
            }
        }
        RegressionTree { nodes }
    }

    /// Splits the node's samples and every feature's sorted segment; returns
    /// the size of the left child.
    fn partition(&mut self, idx: &mut [u32], start: usize, best: &BestSplit) -> usize {
        let n = self.n;
        let vals = &self.values[best.feature * n..(best.feature + 1) * n];
        for &s in idx.iter() {
            self.goes_left[s as usize] = vals[s as usize] <= best.threshold;
        }
        let m = idx.len();
        let mut n_left = 0;
        for f in 0..self.features.len() {
            let seg = &mut self.order[f * n + start..f * n + start + m];
            self.scratch.clear();
            let mut w = 0;
            for k in 0..m {
                let s = seg[k];
                if self.goes_left[s as usize] {
                    seg[w] = s;
                    w += 1;
                } else {
                    self.scratch.push(s);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
            n_left = w;
        }
        let mut w = 0;
        for k in 0..m {
            if self.goes_left[idx[k] as usize] {
                idx.swap(k, w);
                w += 1;
            }
        }
        debug_assert!(self.features.is_empty() || w == n_left);
        w
    }

    fn find_split(&mut self, idx: &[u32], start: usize, depth: usize, rng: &mut Rng) -> Option<BestSplit> {
        let m = idx.len();
        if m < 2 * self.min_leaf || self.max_depth.is_some_and(|d| depth >= d) {
            return None;
        }
        let first = self.ys[idx[0] as usize];
        if idx.iter().all(|&s| self.ys[s as usize] == first) {
            return None;
        }
        let total: f64 = idx.iter().map(|&s| self.ys[s as usize]).sum();
        let base = total * total / m as f64;
        let n = self.n;

        // Visit features in random order until `mtry` non-constant ones have
        // been examined; constant features do not count against the budget.
        let p = self.features.len();
        let mut best: Option<BestSplit> = None;
        let mut tried = 0;
        for pos in 0..p {
            if tried == self.mtry {
                break;
            }
            let pick = rng.random_range(pos..p);
            self.features.swap(pos, pick);
            let feature = self.features[pos];
            let seg = &self.order[feature * n + start..feature * n + start + m];
            let vals = &self.values[feature * n..(feature + 1) * n];
            if vals[seg[0] as usize] == vals[seg[m - 1] as usize] {
                continue;
            }
            tried += 1;

            let mut left_sum = 0.0;
            for k in 0..m - 1 {
                left_sum += self.ys[seg[k] as usize];
                let n_left = k + 1;
                let n_right = m - n_left;
                if n_left < self.min_leaf {
                    continue;
                }
                if n_right < self.min_leaf {
                    break;
                }
                let (lo, hi) = (vals[seg[k] as usize], vals[seg[k + 1] as usize]);
                if lo == hi {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / n_left as f64
                    + right_sum * right_sum / n_right as f64
                    - base;
                let better = match &best {
                    None => gain > 0.0,
                    Some(b) => gain > b.gain || (gain == b.gain && feature < b.feature),
                };
                if better {
                    let mut threshold = 0.5 * (lo + hi);
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// Grows `spec.n_trees` regression trees on `(x, y)`.
pub fn fit_forest(x: ArrayView2<f64>, y: &[f64], spec: &ForestSpec) -> Result<RegressionForest> {
    let (n, p) = x.dim();
    if y.len() != n {
        return Err(Error::argument(format!("y has {} entries for {n} rows", y.len())));
    }
    spec.validate(p)?;
    if n < 2 * spec.min_leaf || n == 0 {
        return Err(Error::argument(format!(
            "{n} rows are too few for min_leaf = {} (need at least {})",
            spec.min_leaf,
            (2 * spec.min_leaf).max(1)
        )));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().any(|v| !v.is_finite()) {
        return Err(Error::argument("non-finite training data"));
    }
    let data: Vec<Vec<f64>> = x.axis_iter(Axis(1)).map(|c| c.to_vec()).collect();
    let sorted = data
        .iter()
        .map(|col| {
            let mut o: Vec<u32> = (0..n as u32).collect();
            o.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
            o
        })
        .collect();
    let cols = Columns { data, sorted };
    let mtry = spec.resolved_mtry(p).min(p);

    let trees: Vec<RegressionTree> = (0..spec.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(spec.seed, Stream::Tree, t as u64));
            let rows: Vec<usize> = if spec.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut grower = Grower::new(&cols, y, &rows, spec, mtry);
            let mut samples: Vec<u32> = (0..n as u32).collect();
            grower.grow(&mut samples, &mut rng)
        })
        .collect();

    Ok(RegressionForest {
        trees,
        spec: spec.clone(),
        feature_count: p,
    })
}

impl RegressionForest {
    /// Mean of per-tree leaf values for each row.
    pub fn predict(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.feature_count {
            return Err(Error::argument(format!(
                "forest expects {} features, got {}",
                self.feature_count,
                x.ncols()
            )));
        }
        let k = self.trees.len() as f64;
        Ok(x.rows()
            .into_iter()
            .map(|row| {
                self.trees
                    .iter()
                    .map(|t| t.predict_row(|j| row[j]))
                    .sum::<f64>()
                    / k
            })
            .collect())
    }
}

pub fn predict_forest(model: &RegressionForest, x: ArrayView2<f64>) -> Result<Vec<f64>> {
    model.predict(x)
}

/// A regression learner usable for nuisance estimation.
pub trait NuisanceLearner: Sync {
    type Model: Send;

    /// Fits on `(x, y)`; `seed` drives any internal randomness.
    fn fit(&self, x: ArrayView2<f64>, y: &[f64], seed: u64) -> Result<Self::Model>;

    fn predict(&self, model: &Self::Model, x: ArrayView2<f64>) -> Result<Vec<f64>>;

    /// Fewest training rows the learner accepts.
    fn min_samples(&self) -> usize {
        1
    }
}

/// Random forest learner; the `ForestSpec` seed is replaced by the one passed to `fit`.
#[derive(Debug, Clone, Default)]
pub struct ForestLearner {
    pub spec: ForestSpec,
}

impl NuisanceLearner for ForestLearner {
    type Model = RegressionForest;

    fn fit(&self, x: ArrayView2<f64>, y: &[f64], seed: u64) -> Result<RegressionForest> {
        let spec = ForestSpec {
            seed,
            ..self.spec.clone()
        };
        fit_forest(x, y, &spec)
    }

    fn predict(&self, model: &RegressionForest, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        model.predict(x)
    }

    fn min_samples(&self) -> usize {
        2 * self.spec.min_leaf
    }
}

/// Predicts the training mean everywhere.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanLearner;

impl NuisanceLearner for MeanLearner {
    type Model = f64;

    fn fit(&self, _x: ArrayView2<f64>, y: &[f64], _seed: u64) -> Result<f64> {
        if y.is_empty() {
            return Err(Error::argument("cannot average an empty target"));
        }
        Ok(y.iter().sum::<f64>() / y.len() as f64)
    }

    fn predict(&self, model: &f64, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        Ok(vec![*model; x.nrows()])
    }
}

/// Out-of-fold predictions: for each fold, the learner trains on the rows
/// outside it and predicts the rows inside it.
pub fn cross_fit_predict<L: NuisanceLearner>(
    x: ArrayView2<f64>,
    target: &[f64],
    plan: &FoldPlan,
    learner: &L,
    seed: u64,
) -> Result<Vec<f64>> {
    cross_fit_predict_where(x, target, plan, learner, seed, None)
}

/// As [`cross_fit_predict`], but training only on complement rows with
/// `train_mask[i] == true` (for example, treated units only). Every row of
/// each fold still receives a prediction.
pub fn cross_fit_predict_where<L: NuisanceLearner>(
    x: ArrayView2<f64>,
    target: &[f64],
    plan: &FoldPlan,
    learner: &L,
    seed: u64,
    train_mask: Option<&[bool]>,
) -> Result<Vec<f64>> {
    let n = x.nrows();
    if plan.n() != n || target.len() != n {
        return Err(Error::argument(format!(
            "fold plan covers {} units, target {}, design {n}",
            plan.n(),
            target.len()
        )));
    }
    if let Some(mask) = train_mask {
        if mask.len() != n {
            return Err(Error::argument("training mask length mismatch"));
        }
    }
    let per_fold: Vec<Result<(Vec<usize>, Vec<f64>)>> = (0..plan.k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = plan
                .complement(f)
                .into_iter()
                .filter(|&i| train_mask.is_none_or(|m| m[i]))
                .collect();
            if train.len() < learner.min_samples().max(1) {
                return Err(Error::Fold {
                    fold: f,
                    message: format!(
                        "complement has {} usable training rows, learner needs {}",
                        train.len(),
                        learner.min_samples().max(1)
                    ),
                });
            }
            let held = plan.fold(f);
            let x_train = x.select(Axis(0), &train);
            let y_train: Vec<f64> = train.iter().map(|&i| target[i]).collect();
            let model = learner
                .fit(x_train.view(), &y_train, derive_seed(seed, Stream::CrossFitLearner, f as u64))
                .map_err(|e| Error::Fold {
                    fold: f,
                    message: e.to_string(),
                })?;
            let preds = learner.predict(&model, x.select(Axis(0), &held).view())?;
            Ok((held, preds))
        })
        .collect();

    let mut out = vec![0.0; n];
    for fold in per_fold {
        let (held, preds) = fold?;
        for (i, v) in held.into_iter().zip(preds) {
            out[i] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_folds;
    use ndarray::{array, Array2};

    fn single_tree(min_leaf: usize) -> ForestSpec {
        ForestSpec {
            n_trees: 1,
            mtry: None,
            min_leaf,
            max_depth: None,
            seed: 1,
            bootstrap: false,
        }
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = Array2::from_shape_fn((20, 3), |(i, j)| (i * (j + 1)) as f64);
        let y = vec![4.25; 20];
        let f = fit_forest(x.view(), &y, &ForestSpec::default()).unwrap();
        assert!(f.predict(x.view()).unwrap().iter().all(|&v| v == 4.25));
    }

    #[test]
    fn four_point_split() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let y = [0.0, 0.0, 10.0, 10.0];
        let f = fit_forest(x.view(), &y, &single_tree(2)).unwrap();
        match &f.trees[0].nodes[0] {
            Node::Split { threshold, .. } => assert!(*threshold > 1.0 && *threshold < 2.0),
            other => panic!("expected a split, got {other:?}"),
        }
        let p = f.predict(array![[0.5], [2.5]].view()).unwrap();
        assert_eq!(p, vec![0.0, 10.0]);
    }

    #[test]
    fn memorizing_tree_returns_training_targets() {
        let x = Array2::from_shape_fn((15, 2), |(i, j)| ((i * 7 + j * 5) % 15) as f64 + j as f64 * 0.5);
        let y: Vec<f64> = (0..15).map(|i| (i as f64 * 1.3).sin()).collect();
        let spec = ForestSpec {
            mtry: Some(2),
            ..single_tree(1)
        };
        let f = fit_forest(x.view(), &y, &spec).unwrap();
        assert_eq!(f.predict(x.view()).unwrap(), y);
    }

    #[test]
    fn empty_prediction_input() {
        let x = array![[0.0], [1.0], [2.0], [3.0]];
        let f = fit_forest(x.view(), &[1.0, 2.0, 3.0, 4.0], &single_tree(1)).unwrap();
        assert!(f.predict(Array2::zeros((0, 1)).view()).unwrap().is_empty());
        assert!(f.predict(Array2::zeros((2, 3)).view()).is_err());
    }

    #[test]
    fn too_few_rows_rejected() {
        let x = array![[0.0], [1.0], [2.0]];
        let spec = ForestSpec {
            min_leaf: 2,
            ..ForestSpec::default()
        };
        assert!(fit_forest(x.view(), &[1.0, 2.0, 3.0], &spec).is_err());
    }

    #[test]
    fn leaves_respect_min_leaf() {
        let x = Array2::from_shape_fn((200, 4), |(i, j)| ((i * 31 + j * 17) % 97) as f64);
        let y: Vec<f64> = (0..200).map(|i| ((i * 13) % 29) as f64).collect();
        let f = fit_forest(x.view(), &y, &ForestSpec { n_trees: 10, min_leaf: 5, ..Default::default() }).unwrap();
        for tree in &f.trees {
            assert!(tree.leaves().all(|(_, c)| c >= 5));
        }
    }

    #[test]
    fn mean_learner_cross_fit() {
        let x = Array2::zeros((6, 1));
        let target = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let plan = make_folds(6, 2, 11).unwrap();
        let preds = cross_fit_predict(x.view(), &target, &plan, &MeanLearner, 0).unwrap();
        for f in 0..2 {
            let other: Vec<usize> = plan.complement(f);
            let mean = other.iter().map(|&i| target[i]).sum::<f64>() / other.len() as f64;
            for i in plan.fold(f) {
                assert!((preds[i] - mean).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn empty_training_complement_names_fold() {
        let x = Array2::zeros((4, 1));
        let plan = make_folds(4, 2, 0).unwrap();
        let mask: Vec<bool> = (0..4).map(|i| plan.assignment[i] == 0).collect();
        // fold 0's complement is fold 1, which the mask excludes entirely
        let err = cross_fit_predict_where(x.view(), &[1.0; 4], &plan, &MeanLearner, 0, Some(&mask))
            .unwrap_err();
        assert!(matches!(err, Error::Fold { fold: 0, .. }));
    }
}
