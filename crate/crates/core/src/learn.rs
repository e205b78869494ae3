//! Regression learners, error metrics and recursive feature elimination.
//!
//! Feature matrices are `n × k` [`DMatrix`] values with one row per sample.
//! All fitting is deterministic given the seed.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::derive_seed;
use crate::error::{Error, Result};
use crate::linalg::min_norm_least_squares;
use crate::tsfeat::LagDesign;

pub const DEFAULT_MAPE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; all when `None`.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
    },
}

/// CART regression tree; nodes are stored flat with the root at index 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    pub params: TreeParams,
    /// Total squared-error reduction per feature, normalized to sum 1.
    pub importances: Vec<f64>,
}

fn check_xy(x: &DMatrix<f64>, y: &[f64]) -> Result<()> {
    if x.nrows() == 0 || y.is_empty() {
        return Err(Error::EmptyInput("training rows"));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch(format!("{} feature rows, {} targets", x.nrows(), y.len())));
    }
    if x.ncols() == 0 {
        return Err(Error::EmptyInput("feature columns"));
    }
    Ok(())
}

fn check_predict(x: &DMatrix<f64>, n_features: usize) -> Result<()> {
    if x.ncols() != n_features {
        return Err(Error::DimensionMismatch(format!(
            "model expects {n_features} features, got {}",
            x.ncols()
        )));
    }
    Ok(())
}

struct TreeBuilder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    params: &'a TreeParams,
    rng: &'a mut ChaCha8Rng,
    nodes: Vec<Node>,
    gains: Vec<f64>,
    pairs: Vec<(f64, f64)>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl TreeBuilder<'_> {
    fn leaf(&mut self, idx: &[usize]) -> usize {
        let value = idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(Node::Leaf {
            value,
            n_samples: idx.len(),
        });
        self.nodes.len() - 1
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<BestSplit> {
        let n = idx.len();
        let k = self.x.ncols();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let features: Vec<usize> = match self.params.max_features {
            Some(m) if m < k => {
                let mut f = index::sample(self.rng, k, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..k).collect(),
        };
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        for f in features {
            self.pairs.clear();
            self.pairs.extend(idx.iter().map(|&i| (self.x[(i, f)], self.y[i])));
            self.pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = 0.0;
            for i in 0..n - 1 {
                left += self.pairs[i].1;
                let nl = i + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf || self.pairs[i].0 == self.pairs[i + 1].0 {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - parent;
                let better = match &best {
                    None => true,
                    Some(b) => gain > b.gain + 1e-12 * parent.abs().max(1e-300),
                };
                if better {
                    let (lo, hi) = (self.pairs[i].0, self.pairs[i + 1].0);
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }

    fn build(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let first = self.y[idx[0]];
        let pure = idx.iter().all(|&i| self.y[i] == first);
        let depth_done = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_done || n < self.params.min_samples_split.max(2) || n < 2 * self.params.min_samples_leaf.max(1) {
            return self.leaf(idx);
        }
        let Some(split) = self.best_split(idx) else {
            return self.leaf(idx);
        };
        let mut mid = 0;
        for j in 0..n {
            if self.x[(idx[j], split.feature)] <= split.threshold {
                idx.swap(mid, j);
                mid += 1;
            }
        }
        self.gains[split.feature] += split.gain.max(0.0);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            value: 0.0,
            n_samples: n,
        });
        let (l, r) = idx.split_at_mut(mid);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
            n_samples: n,
        };
        id
    }
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        for x in &mut v {
            *x /= total;
        }
    }
    v
}

/// Fits a tree on the listed rows (repeats allowed) using `rng` for feature
/// subsampling.
pub fn fit_tree_on(
    x: &DMatrix<f64>,
    y: &[f64],
    rows: &[usize],
    params: &TreeParams,
    rng: &mut ChaCha8Rng,
) -> Result<RegressionTree> {
    check_xy(x, y)?;
    if rows.is_empty() {
        return Err(Error::EmptyInput("training rows"));
    }
    if let Some(&r) = rows.iter().find(|&&r| r >= y.len()) {
        return Err(Error::DimensionMismatch(format!("row {r} out of range")));
    }
    let mut idx = rows.to_vec();
    let mut builder = TreeBuilder {
        x,
        y,
        params,
        rng,
        nodes: Vec::new(),
        gains: vec![0.0; x.ncols()],
        pairs: Vec::with_capacity(rows.len()),
    };
    builder.build(&mut idx, 0);
    Ok(RegressionTree {
        nodes: builder.nodes,
        n_features: x.ncols(),
        params: *params,
        importances: normalized(builder.gains),
    })
}

/// Greedy variance-reduction CART. Split ties go to the lower feature index,
/// then the lower threshold.
pub fn fit_tree(x: &DMatrix<f64>, y: &[f64], params: &TreeParams, seed: u64) -> Result<RegressionTree> {
    let rows: Vec<usize> = (0..y.len()).collect();
    fit_tree_on(x, y, &rows, params, &mut ChaCha8Rng::seed_from_u64(seed))
}

impl RegressionTree {
    pub fn predict_row(&self, x: &DMatrix<f64>, row: usize) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => id = if x[(row, *feature)] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_predict(x, self.n_features)?;
        Ok((0..x.nrows()).map(|r| self.predict_row(x, r)).collect())
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

/// Uniform resample of `n` rows with replacement.
pub fn bootstrap_indices(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Resample of `m` rows drawn with probability proportional to `weights`.
pub fn weighted_bootstrap(weights: &[f64], m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cumulative.push(acc);
    }
    (0..m)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            cumulative.partition_point(|c| *c <= u).min(weights.len() - 1)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Share of features examined per split.
    pub feature_fraction: f64,
    pub bootstrap: bool,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            feature_fraction: 1.0,
            bootstrap: true,
            tree: TreeParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<RegressionTree>,
    pub seeds: Vec<u64>,
    pub feature_fraction: f64,
    pub n_features: usize,
}

pub fn fit_random_forest(x: &DMatrix<f64>, y: &[f64], params: &ForestParams, seed: u64) -> Result<ForestModel> {
    check_xy(x, y)?;
    if params.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    if !(params.feature_fraction > 0.0 && params.feature_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "feature_fraction must be in (0, 1], got {}",
            params.feature_fraction
        )));
    }
    let k = x.ncols();
    let tree_params = TreeParams {
        max_features: Some(((params.feature_fraction * k as f64).ceil() as usize).clamp(1, k)),
        ..params.tree
    };
    let seeds: Vec<u64> = (0..params.n_trees as u64).map(|i| derive_seed(seed, i)).collect();
    let trees = seeds
        .par_iter()
        .map(|&s| {
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let rows = if params.bootstrap {
                bootstrap_indices(y.len(), &mut rng)
            } else {
                (0..y.len()).collect()
            };
            fit_tree_on(x, y, &rows, &tree_params, &mut rng)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ForestModel {
        trees,
        seeds,
        feature_fraction: params.feature_fraction,
        n_features: k,
    })
}

impl ForestModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_predict(x, self.n_features)?;
        let n = self.trees.len() as f64;
        Ok((0..x.nrows())
            .map(|r| self.trees.iter().map(|t| t.predict_row(x, r)).sum::<f64>() / n)
            .collect())
    }

    pub fn importances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(&t.importances) {
                *o += v;
            }
        }
        normalized(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaBoostParams {
    pub n_estimators: usize,
    /// Relative-error threshold φ.
    pub phi: f64,
    /// Power `n` in `β = εⁿ`.
    pub power: f64,
    pub learning_rate: f64,
    /// Floor δ for relative-error denominators.
    pub delta: f64,
    pub max_retries: usize,
    pub tree: TreeParams,
}

impl Default for AdaBoostParams {
    fn default() -> Self {
        AdaBoostParams {
            n_estimators: 30,
            phi: 0.05,
            power: 2.0,
            learning_rate: 0.01,
            delta: 1e-3,
            max_retries: 3,
            tree: TreeParams {
                max_depth: Some(3),
                ..TreeParams::default()
            },
        }
    }
}

pub const BETA_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaboostRtModel {
    pub learners: Vec<RegressionTree>,
    /// `ln(1/β_t)` per retained learner.
    pub log_weights: Vec<f64>,
    /// Error rate ε_t per retained learner.
    pub error_rates: Vec<f64>,
    /// Seed behind each retained learner's resample.
    pub seeds: Vec<u64>,
    /// `Σ_i D_{t+1}(i)` after every round's renormalization.
    pub weight_sums: Vec<f64>,
    pub params: AdaBoostParams,
    pub n_features: usize,
}

/// Seed of the `draw`-th weak-learner resample, counting retries.
pub fn adaboost_draw_seed(seed: u64, draw: u64) -> u64 {
    derive_seed(seed, draw)
}

/// AdaBoost.RT with instance weights updated by `β_t^ν` on rows whose
/// relative error is within φ. Rounds with `ε ≥ 1` are redrawn up to
/// `max_retries` times before stopping early.
pub fn fit_adaboost_rt(x: &DMatrix<f64>, y: &[f64], params: &AdaBoostParams, seed: u64) -> Result<AdaboostRtModel> {
    check_xy(x, y)?;
    if params.n_estimators == 0 {
        return Err(Error::InvalidParameter("n_estimators must be at least 1".into()));
    }
    if !(params.phi > 0.0) || !(params.power > 0.0) || !(params.learning_rate > 0.0) || !(params.delta > 0.0) {
        return Err(Error::InvalidParameter("phi, power, learning_rate and delta must be positive".into()));
    }
    let m = y.len();
    let mut d = vec![1.0 / m as f64; m];
    let mut model = AdaboostRtModel {
        learners: Vec::new(),
        log_weights: Vec::new(),
        error_rates: Vec::new(),
        seeds: Vec::new(),
        weight_sums: Vec::new(),
        params: *params,
        n_features: x.ncols(),
    };
    let mut draw = 0u64;
    'rounds: for _ in 0..params.n_estimators {
        let mut retries = 0;
        loop {
            let s = adaboost_draw_seed(seed, draw);
            draw += 1;
            let mut rng = ChaCha8Rng::seed_from_u64(s);
            let rows = weighted_bootstrap(&d, m, &mut rng);
            let tree = fit_tree_on(x, y, &rows, &params.tree, &mut rng)?;
            let pred = tree.predict(x)?;
            let wrong: Vec<bool> = pred
                .iter()
                .zip(y)
                .map(|(p, t)| (p - t).abs() / t.abs().max(params.delta) > params.phi)
                .collect();
            let eps: f64 = d.iter().zip(&wrong).filter(|(_, w)| **w).map(|(di, _)| di).sum();
            if eps >= 1.0 || wrong.iter().all(|w| *w) {
                retries += 1;
                if retries > params.max_retries {
                    break 'rounds;
                }
                continue;
            }
            let beta = eps.powf(params.power).max(BETA_FLOOR);
            if eps > 0.0 {
                let factor = beta.powf(params.learning_rate);
                for (di, w) in d.iter_mut().zip(&wrong) {
                    if !*w {
                        *di *= factor;
                    }
                }
                let total: f64 = d.iter().sum();
                for di in &mut d {
                    *di /= total;
                }
            }
            model.weight_sums.push(d.iter().sum());
            model.learners.push(tree);
            model.log_weights.push(-beta.ln());
            model.error_rates.push(eps);
            model.seeds.push(s);
            break;
        }
    }
    if model.learners.is_empty() {
        return Err(Error::AllRoundsDiscarded { phi: params.phi });
    }
    Ok(model)
}

impl AdaboostRtModel {
    /// `Σ ln(1/β_t)·f_t(x) / Σ ln(1/β_t)`; a plain mean when all weights are
    /// equal.
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_predict(x, self.n_features)?;
        let equal = self.log_weights.iter().all(|w| *w == self.log_weights[0]);
        let total: f64 = self.log_weights.iter().sum();
        let n = self.learners.len() as f64;
        Ok((0..x.nrows())
            .map(|r| {
                if equal {
                    self.learners.iter().map(|t| t.predict_row(x, r)).sum::<f64>() / n
                } else {
                    self.learners
                        .iter()
                        .zip(&self.log_weights)
                        .map(|(t, w)| w * t.predict_row(x, r))
                        .sum::<f64>()
                        / total
                }
            })
            .collect())
    }

    pub fn importances(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        for (t, w) in self.learners.iter().zip(&self.log_weights) {
            for (o, v) in out.iter_mut().zip(&t.importances) {
                *o += w * v;
            }
        }
        normalized(out)
    }
}

/// Ordinary least squares with an intercept. Exactly collinear features (topic
/// shares summing to one, say) get the minimum-norm solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Training standard deviation per feature.
    pub feature_std: Vec<f64>,
}

pub fn fit_linear(x: &DMatrix<f64>, y: &[f64]) -> Result<LinearModel> {
    check_xy(x, y)?;
    let (n, k) = x.shape();
    if n <= k {
        return Err(Error::InsufficientData(format!("{n} rows for {k} features")));
    }
    let z = DMatrix::from_fn(n, k + 1, |r, c| if c == 0 { 1.0 } else { x[(r, c - 1)] });
    let b = min_norm_least_squares(&z, &DMatrix::from_column_slice(n, 1, y), "linear model")?;
    let feature_std = (0..k)
        .map(|c| {
            let col = x.column(c);
            let mean = col.mean();
            (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt()
        })
        .collect();
    Ok(LinearModel {
        intercept: b[0],
        coefficients: b.iter().skip(1).copied().collect(),
        feature_std,
    })
}

impl LinearModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_predict(x, self.coefficients.len())?;
        Ok((0..x.nrows())
            .map(|r| self.intercept + self.coefficients.iter().enumerate().map(|(c, b)| b * x[(r, c)]).sum::<f64>())
            .collect())
    }

    /// `|β_j|·sd(x_j)`.
    pub fn importances(&self) -> Vec<f64> {
        self.coefficients.iter().zip(&self.feature_std).map(|(b, s)| (b * s).abs()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Tree(TreeParams),
    Forest(ForestParams),
    Ada(AdaBoostParams),
    Arx,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Tree(_) => "tree",
            ModelSpec::Forest(_) => "rf",
            ModelSpec::Ada(_) => "ada",
            ModelSpec::Arx => "arx",
        }
    }

    pub fn from_name(name: &str) -> Option<ModelSpec> {
        match name {
            "tree" => Some(ModelSpec::Tree(TreeParams::default())),
            "rf" => Some(ModelSpec::Forest(ForestParams::default())),
            "ada" => Some(ModelSpec::Ada(AdaBoostParams::default())),
            "arx" => Some(ModelSpec::Arx),
            _ => None,
        }
    }

    pub fn fit(&self, x: &DMatrix<f64>, y: &[f64], seed: u64) -> Result<Model> {
        Ok(match self {
            ModelSpec::Tree(p) => Model::Tree(fit_tree(x, y, p, seed)?),
            ModelSpec::Forest(p) => Model::Forest(fit_random_forest(x, y, p, seed)?),
            ModelSpec::Ada(p) => Model::Ada(fit_adaboost_rt(x, y, p, seed)?),
            ModelSpec::Arx => Model::Arx(fit_linear(x, y)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "model", rename_all = "snake_case")]
pub enum Model {
    Tree(RegressionTree),
    Forest(ForestModel),
    Ada(AdaboostRtModel),
    Arx(LinearModel),
}

impl Model {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        match self {
            Model::Tree(m) => m.predict(x),
            Model::Forest(m) => m.predict(x),
            Model::Ada(m) => m.predict(x),
            Model::Arx(m) => m.predict(x),
        }
    }

    /// Impurity importances for tree models, `|standardized coefficient|`
    /// for the linear model.
    pub fn importances(&self) -> Vec<f64> {
        match self {
            Model::Tree(m) => m.importances.clone(),
            Model::Forest(m) => m.importances(),
            Model::Ada(m) => m.importances(),
            Model::Arx(m) => m.importances(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Model> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub rmse: f64,
    pub mae: f64,
    /// Percent.
    pub mape: f64,
}

impl Metrics {
    pub fn mean(&self) -> f64 {
        (self.rmse + self.mae + self.mape) / 3.0
    }
}

fn check_lengths(pred: &[f64], actual: &[f64]) -> Result<()> {
    if pred.is_empty() {
        return Err(Error::EmptyInput("metric inputs"));
    }
    if pred.len() != actual.len() {
        return Err(Error::DimensionMismatch(format!("{} predictions, {} targets", pred.len(), actual.len())));
    }
    Ok(())
}

fn metrics_with(pred: &[f64], actual: &[f64], denom: impl Fn(usize, f64) -> Result<f64>) -> Result<Metrics> {
    check_lengths(pred, actual)?;
    let n = pred.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut rel = 0.0;
    for (i, (p, y)) in pred.iter().zip(actual).enumerate() {
        let e = p - y;
        sq += e * e;
        abs += e.abs();
        rel += e.abs() / denom(i, *y)?;
    }
    Ok(Metrics {
        rmse: (sq / n).sqrt(),
        mae: abs / n,
        mape: 100.0 * rel / n,
    })
}

/// rmse, mae and mape (percent). Zero targets are an error.
pub fn metrics(pred: &[f64], actual: &[f64]) -> Result<Metrics> {
    metrics_with(pred, actual, |i, y| if y == 0.0 { Err(Error::ZeroTarget { index: i }) } else { Ok(y.abs()) })
}

/// As [`metrics`] with mape denominators `max(|y|, floor)`.
pub fn metrics_floored(pred: &[f64], actual: &[f64], floor: f64) -> Result<Metrics> {
    if !(floor > 0.0) {
        return Err(Error::InvalidParameter("mape floor must be positive".into()));
    }
    metrics_with(pred, actual, |_, y| Ok(y.abs().max(floor)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfeParams {
    /// Trailing share of rows held out for validation.
    pub validation_fraction: f64,
    /// Min-max normalize each metric across subset sizes before averaging.
    pub normalize: bool,
    /// Smallest subset whose score is within this tolerance of the best wins:
    /// relative to the best raw mean, absolute on the normalized scale.
    pub tie_tolerance: f64,
    pub mape_floor: f64,
}

impl Default for RfeParams {
    fn default() -> Self {
        RfeParams {
            validation_fraction: 0.2,
            normalize: false,
            tie_tolerance: 0.01,
            mape_floor: DEFAULT_MAPE_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeRow {
    pub p: usize,
    pub metrics: Metrics,
    pub score: f64,
    /// Features kept at this size, in original order.
    pub features: Vec<usize>,
    pub eliminated: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    pub selected: Vec<usize>,
    pub selected_labels: Vec<String>,
    /// Features in the order they were removed.
    pub elimination_order: Vec<usize>,
    /// One row per subset size, `p = 1..k`.
    pub table: Vec<RfeRow>,
    pub chosen_p: usize,
    pub normalized: bool,
}

impl RfeResult {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("p,rmse,mae,mape,mean_score,selected\n");
        for r in &self.table {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.p,
                r.metrics.rmse,
                r.metrics.mae,
                r.metrics.mape,
                r.score,
                u8::from(r.p == self.chosen_p)
            ));
        }
        out
    }
}

/// Recursive feature elimination on a chronological holdout.
///
/// Features are refit and the least important one is dropped, one at a time,
/// from `k` down to 1; each size is scored on the trailing validation rows.
/// Because fits are deterministic, the subset reached at size `p` is the one
/// a fresh elimination run to `p` would reach.
pub fn rfe(
    x: &DMatrix<f64>,
    y: &[f64],
    labels: &[String],
    spec: &ModelSpec,
    params: &RfeParams,
    seed: u64,
) -> Result<RfeResult> {
    check_xy(x, y)?;
    let k = x.ncols();
    if labels.len() != k {
        return Err(Error::DimensionMismatch("one label per feature is required".into()));
    }
    if k < 2 {
        return Err(Error::InsufficientData("RFE needs at least 2 features".into()));
    }
    if !(params.validation_fraction > 0.0 && params.validation_fraction < 1.0) {
        return Err(Error::InvalidParameter("validation_fraction must be in (0, 1)".into()));
    }
    let n = y.len();
    let n_val = ((n as f64 * params.validation_fraction).round() as usize).max(1);
    if n_val >= n {
        return Err(Error::InsufficientData("no training rows left after the holdout".into()));
    }
    let n_train = n - n_val;
    let train_rows: Vec<usize> = (0..n_train).collect();
    let val_rows: Vec<usize> = (n_train..n).collect();
    let x_train = x.select_rows(&train_rows);
    let x_val = x.select_rows(&val_rows);
    let (y_train, y_val) = y.split_at(n_train);

    let mut active: Vec<usize> = (0..k).collect();
    let mut elimination_order = Vec::with_capacity(k - 1);
    let mut table = Vec::with_capacity(k);
    loop {
        let p = active.len();
        let model = spec.fit(&x_train.select_columns(&active), y_train, derive_seed(seed, p as u64))?;
        let pred = model.predict(&x_val.select_columns(&active))?;
        let metrics = metrics_floored(&pred, y_val, params.mape_floor)?;
        table.push(RfeRow {
            p,
            metrics,
            score: metrics.mean(),
            features: active.clone(),
            eliminated: k - p,
        });
        if p == 1 {
            break;
        }
        let importances = model.importances();
        let mut drop = 0;
        for (i, v) in importances.iter().enumerate() {
            if *v <= importances[drop] {
                drop = i;
            }
        }
        elimination_order.push(active.remove(drop));
    }
    table.reverse();

    if params.normalize {
        let span = |f: fn(&Metrics) -> f64| {
            let lo = table.iter().map(|r| f(&r.metrics)).fold(f64::INFINITY, f64::min);
            let hi = table.iter().map(|r| f(&r.metrics)).fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let scales = [span(|m| m.rmse), span(|m| m.mae), span(|m| m.mape)];
        for r in &mut table {
            let vals = [r.metrics.rmse, r.metrics.mae, r.metrics.mape];
            r.score = vals
                .iter()
                .zip(&scales)
                .map(|(v, (lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 })
                .sum::<f64>()
                / 3.0;
        }
    }
    let best = table.iter().map(|r| r.score).fold(f64::INFINITY, f64::min);
    let cutoff = if params.normalize {
        best + params.tie_tolerance
    } else {
        best + params.tie_tolerance * best.abs()
    };
    let chosen = table.iter().find(|r| r.score <= cutoff).expect("table has a minimum");
    Ok(RfeResult {
        selected: chosen.features.clone(),
        selected_labels: chosen.features.iter().map(|&c| labels[c].clone()).collect(),
        elimination_order,
        chosen_p: chosen.p,
        table,
        normalized: params.normalize,
    })
}

/// [`rfe`] over a lag design's columns.
pub fn rfe_select(design: &LagDesign, spec: &ModelSpec, params: &RfeParams, seed: u64) -> Result<RfeResult> {
    rfe(&design.features, &design.target, &design.labels, spec, params, seed)
}
