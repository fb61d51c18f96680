//! Regression learners for the nuisance functions.
//!
//! Every learner is fitted through [`fit`] from a serializable [`LearnerSpec`]
//! and evaluated through [`predict`]. Hyperparameter grids are searched by
//! K-fold cross-validation on squared prediction error. Targets whose values
//! all lie in `{0, 1}` are treated as binary: the penalized and tree learners
//! switch to a logistic link and every learner's predictions are clamped to
//! `[0.001, 0.999]`.

mod boosting;
mod knn;
mod lasso;
mod linear;
mod smoother;
mod stack;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

pub use stack::{fit_stack, StackSummary};

/// Probability clamp applied to predictions of learners fitted on binary targets.
pub const PROBABILITY_CLAMP: (f64, f64) = (0.001, 0.999);

fn default_cv_folds() -> usize {
    5
}

fn default_path_len() -> usize {
    20
}

fn default_min_ratio() -> f64 {
    1e-3
}

fn default_depth() -> usize {
    2
}

fn default_learning_rate() -> f64 {
    0.1
}

fn default_min_leaf() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LearnerKind {
    /// Sample average of the targets.
    Mean,
    /// Ordinary least squares with intercept; minimum-norm on singular designs.
    Linear,
    /// L1-penalized least squares, or L1-penalized logistic likelihood for binary targets.
    PenalizedL1 {
        /// Explicit penalty grid. Empty selects `path_len` log-spaced values
        /// from the smallest all-zero penalty down by `min_ratio`.
        #[serde(default)]
        penalties: Vec<f64>,
        #[serde(default = "default_path_len")]
        path_len: usize,
        #[serde(default = "default_min_ratio")]
        min_ratio: f64,
    },
    /// k-nearest-neighbour average on standardized covariates.
    Knn { neighbours: Vec<usize> },
    /// Gaussian-kernel Nadaraya-Watson smoother on standardized covariates.
    KernelSmoother { bandwidths: Vec<f64> },
    /// Gradient-boosted shallow regression trees; `trees` is the grid of ensemble sizes.
    TreeEnsemble {
        trees: Vec<usize>,
        #[serde(default = "default_depth")]
        depth: usize,
        #[serde(default = "default_learning_rate")]
        learning_rate: f64,
        #[serde(default = "default_min_leaf")]
        min_leaf: usize,
    },
    /// Convex combination of member learners weighted by cross-validated loss.
    Stack { members: Vec<LearnerSpec> },
}

impl LearnerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LearnerKind::Mean => "mean",
            LearnerKind::Linear => "linear",
            LearnerKind::PenalizedL1 { .. } => "penalized_l1",
            LearnerKind::Knn { .. } => "knn",
            LearnerKind::KernelSmoother { .. } => "kernel_smoother",
            LearnerKind::TreeEnsemble { .. } => "tree_ensemble",
            LearnerKind::Stack { .. } => "stack",
        }
    }
}

/// Declarative covariate transforms applied before fitting, in order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureTransform {
    /// Append all pairwise products of the raw covariates.
    PairwiseInteractions,
    /// Remove interaction columns, leaving main effects only.
    DropInteractions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    #[serde(flatten)]
    pub kind: LearnerKind,
    #[serde(default = "default_cv_folds")]
    pub cv_folds: usize,
    #[serde(default)]
    pub features: Vec<FeatureTransform>,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind) -> Self {
        Self { kind, cv_folds: default_cv_folds(), features: Vec::new() }
    }

    pub fn with_features(mut self, features: Vec<FeatureTransform>) -> Self {
        self.features = features;
        self
    }

    pub fn with_cv_folds(mut self, cv_folds: usize) -> Self {
        self.cv_folds = cv_folds;
        self
    }

    pub fn mean() -> Self {
        Self::new(LearnerKind::Mean)
    }

    pub fn linear() -> Self {
        Self::new(LearnerKind::Linear)
    }

    pub fn lasso() -> Self {
        Self::new(LearnerKind::PenalizedL1 {
            penalties: Vec::new(),
            path_len: default_path_len(),
            min_ratio: default_min_ratio(),
        })
    }

    pub fn knn(neighbours: Vec<usize>) -> Self {
        Self::new(LearnerKind::Knn { neighbours })
    }

    pub fn kernel_smoother(bandwidths: Vec<f64>) -> Self {
        Self::new(LearnerKind::KernelSmoother { bandwidths })
    }

    pub fn tree_ensemble(trees: Vec<usize>) -> Self {
        Self::new(LearnerKind::TreeEnsemble {
            trees,
            depth: default_depth(),
            learning_rate: default_learning_rate(),
            min_leaf: default_min_leaf(),
        })
    }

    pub fn stack(members: Vec<LearnerSpec>) -> Self {
        Self::new(LearnerKind::Stack { members })
    }

    /// Stand-in for a Super Learner library: sample mean, linear model with
    /// pairwise interactions, kNN, kernel smoother and boosted stumps.
    pub fn default_stack() -> Self {
        Self::stack(vec![
            Self::mean(),
            Self::linear().with_features(vec![FeatureTransform::PairwiseInteractions]),
            Self::knn(vec![5, 10, 20, 40]),
            Self::kernel_smoother(vec![0.1, 0.2, 0.4, 0.8]),
            Self::tree_ensemble(vec![25, 50, 100, 200]),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        if self.cv_folds < 2 {
            return Err(Error::Parameter(format!("cv_folds must be >= 2, got {}", self.cv_folds)));
        }
        let empty = |what: &str| Err(Error::Parameter(format!("{} grid is empty", what)));
        match &self.kind {
            LearnerKind::Mean | LearnerKind::Linear => Ok(()),
            LearnerKind::PenalizedL1 { penalties, path_len, min_ratio } => {
                if penalties.is_empty() && *path_len == 0 {
                    return empty("penalty");
                }
                if penalties.iter().any(|p| !(*p >= 0.0)) {
                    return Err(Error::Parameter("penalties must be non-negative".into()));
                }
                if penalties.is_empty() && !(*min_ratio > 0.0 && *min_ratio <= 1.0) {
                    return Err(Error::Parameter(format!("min_ratio must lie in (0,1], got {min_ratio}")));
                }
                Ok(())
            }
            LearnerKind::Knn { neighbours } => {
                if neighbours.is_empty() {
                    return empty("neighbour");
                }
                if neighbours.contains(&0) {
                    return Err(Error::Parameter("neighbour counts must be positive".into()));
                }
                Ok(())
            }
            LearnerKind::KernelSmoother { bandwidths } => {
                if bandwidths.is_empty() {
                    return empty("bandwidth");
                }
                if bandwidths.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
                    return Err(Error::Parameter("bandwidths must be positive".into()));
                }
                Ok(())
            }
            LearnerKind::TreeEnsemble { trees, depth, learning_rate, min_leaf } => {
                if trees.is_empty() {
                    return empty("tree count");
                }
                if trees.contains(&0) || *depth == 0 || *min_leaf == 0 {
                    return Err(Error::Parameter("tree counts, depth and min_leaf must be positive".into()));
                }
                if !(*learning_rate > 0.0 && *learning_rate <= 1.0) {
                    return Err(Error::Parameter(format!("learning_rate must lie in (0,1], got {learning_rate}")));
                }
                Ok(())
            }
            LearnerKind::Stack { members } => {
                if members.is_empty() {
                    return Err(Error::Parameter("stack member list is empty".into()));
                }
                for m in members {
                    if matches!(m.kind, LearnerKind::Stack { .. }) {
                        return Err(Error::Parameter("stacks cannot be nested".into()));
                    }
                    m.validate()?;
                }
                Ok(())
            }
        }
    }
}

/// Cross-validation record for a grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    /// Grid values in search order.
    pub grid: Vec<f64>,
    /// Pooled out-of-fold mean squared error per grid value.
    pub losses: Vec<f64>,
    pub chosen: usize,
}

#[derive(Debug, Clone)]
pub(crate) enum Model {
    Mean(f64),
    Linear(linear::LinearModel),
    Lasso(lasso::LassoModel),
    Knn(knn::KnnModel),
    Smoother(smoother::SmootherModel),
    Trees(boosting::BoostedTrees),
    Stack(stack::StackModel),
}

#[derive(Debug, Clone)]
pub struct FittedLearner {
    spec: LearnerSpec,
    model: Model,
    n_inputs: usize,
    binary: bool,
    training_indices: Vec<usize>,
    warnings: Vec<String>,
    cv: Option<CvSummary>,
}

impl FittedLearner {
    pub fn kind(&self) -> &LearnerKind {
        &self.spec.kind
    }

    pub fn spec(&self) -> &LearnerSpec {
        &self.spec
    }

    /// True when the targets were detected as binary.
    pub fn is_binary(&self) -> bool {
        self.binary
    }

    pub fn training_indices(&self) -> &[usize] {
        &self.training_indices
    }

    pub fn with_training_indices(mut self, idx: Vec<usize>) -> Self {
        self.training_indices = idx;
        self
    }

    /// Non-fatal diagnostics raised while fitting (e.g. singular designs).
    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn cv_summary(&self) -> Option<&CvSummary> {
        self.cv.as_ref()
    }

    pub fn stack_summary(&self) -> Option<&StackSummary> {
        match &self.model {
            Model::Stack(s) => Some(&s.summary),
            _ => None,
        }
    }

    /// Intercept and slopes on the transformed design, for linear-family fits.
    pub fn coefficients(&self) -> Option<(f64, Vec<f64>)> {
        match &self.model {
            Model::Linear(m) => Some((m.intercept, m.coef.clone())),
            Model::Lasso(m) => Some(m.original_scale()),
            _ => None,
        }
    }

    /// Largest violation of the lasso optimality conditions on `(x, targets)`,
    /// measured on the standardized problem that was solved.
    pub fn kkt_residual(&self, x: &DMatrix<f64>, targets: &[f64]) -> Option<f64> {
        match &self.model {
            Model::Lasso(m) => Some(m.kkt_residual(&design(x, &self.spec.features), targets)),
            _ => None,
        }
    }

    /// Predictions before the probability clamp.
    pub fn predict_raw(&self, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
        if x_new.ncols() != self.n_inputs {
            return Err(Error::Shape { expected: self.n_inputs, found: x_new.ncols() });
        }
        let z = design(x_new, &self.spec.features);
        let out = match &self.model {
            Model::Mean(m) => vec![*m; z.nrows()],
            Model::Linear(m) => m.predict(&z),
            Model::Lasso(m) => m.predict(&z),
            Model::Knn(m) => m.predict(&z),
            Model::Smoother(m) => m.predict(&z),
            Model::Trees(m) => m.predict(&z),
            Model::Stack(m) => m.predict(x_new)?,
        };
        Ok(out)
    }
}

/// Applies the feature transforms to raw covariates.
pub(crate) fn design(x: &DMatrix<f64>, transforms: &[FeatureTransform]) -> DMatrix<f64> {
    let interactions =
        transforms.last().is_some_and(|t| *t == FeatureTransform::PairwiseInteractions) && x.ncols() > 1;
    if !interactions {
        return x.clone();
    }
    let p = x.ncols();
    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|i| (i + 1..p).map(move |j| (i, j))).collect();
    let mut z = DMatrix::zeros(x.nrows(), p + pairs.len());
    z.columns_mut(0, p).copy_from(x);
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let col = x.column(i).component_mul(&x.column(j));
        z.column_mut(p + c).copy_from(&col);
    }
    z
}

pub(crate) fn is_binary(targets: &[f64]) -> bool {
    targets.iter().all(|&t| t == 0.0 || t == 1.0)
}

pub(crate) fn clamp_probabilities(values: &mut [f64]) {
    for v in values {
        *v = v.clamp(PROBABILITY_CLAMP.0, PROBABILITY_CLAMP.1);
    }
}

/// Balanced random fold labels for `n` rows.
pub(crate) fn fold_labels(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let folds = folds.min(n).max(1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut labels = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        labels[i] = pos % folds;
    }
    labels
}

pub(crate) fn split_by_label(labels: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (i, &l) in labels.iter().enumerate() {
        if l == fold {
            test.push(i);
        } else {
            train.push(i);
        }
    }
    (train, test)
}

pub(crate) fn select(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

/// Grid search by K-fold CV. `path` returns test-set predictions for every
/// grid value given `(train_x, train_y, test_x)`.
pub(crate) fn cv_grid_search<F>(
    x: &DMatrix<f64>,
    y: &[f64],
    cv_folds: usize,
    seed: u64,
    grid: Vec<f64>,
    binary: bool,
    mut path: F,
) -> Result<CvSummary>
where
    F: FnMut(&DMatrix<f64>, &[f64], &DMatrix<f64>) -> Result<Vec<Vec<f64>>>,
{
    let labels = fold_labels(y.len(), cv_folds, seed);
    let n_folds = labels.iter().max().map_or(1, |m| m + 1);
    let mut sse = vec![0.0; grid.len()];
    for f in 0..n_folds {
        let (train, test) = split_by_label(&labels, f);
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let preds = path(&x.select_rows(&train), &select(y, &train), &x.select_rows(&test))?;
        for (g, mut p) in preds.into_iter().enumerate() {
            if binary {
                clamp_probabilities(&mut p);
            }
            sse[g] += test.iter().zip(&p).map(|(&i, v)| (y[i] - v).powi(2)).sum::<f64>();
        }
    }
    let losses: Vec<f64> = sse.iter().map(|s| s / y.len() as f64).collect();
    let chosen = argmin(&losses);
    Ok(CvSummary { grid, losses, chosen })
}

pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v < values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// Column means and population standard deviations; zero spreads map to 1.
pub(crate) fn column_scaling(x: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut sds = Vec::with_capacity(x.ncols());
    for col in x.column_iter() {
        let m = col.sum() / n;
        let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
        means.push(m);
        sds.push(if sd > 1e-12 { sd } else { 1.0 });
    }
    (means, sds)
}

/// Row-major standardized copy of `x`.
pub(crate) fn standardized_rows(x: &DMatrix<f64>, means: &[f64], sds: &[f64]) -> Vec<f64> {
    let p = x.ncols();
    let mut out = Vec::with_capacity(x.nrows() * p);
    for i in 0..x.nrows() {
        for j in 0..p {
            out.push((x[(i, j)] - means[j]) / sds[j]);
        }
    }
    out
}

/// Fits `spec` to `(x, targets)`.
pub fn fit(spec: &LearnerSpec, x: &DMatrix<f64>, targets: &[f64], seed: u64) -> Result<FittedLearner> {
    spec.validate()?;
    if x.nrows() != targets.len() {
        return Err(Error::Shape { expected: x.nrows(), found: targets.len() });
    }
    if targets.len() < 2 {
        return Err(Error::Size(format!("need at least 2 training rows, got {}", targets.len())));
    }
    if !targets.iter().chain(x.iter()).all(|v| v.is_finite()) {
        return Err(Error::Input("training data contains non-finite values".into()));
    }
    let binary = is_binary(targets);
    let mut warnings = Vec::new();
    let mut cv = None;
    let z = design(x, &spec.features);

    let model = match &spec.kind {
        LearnerKind::Mean => Model::Mean(crate::stats::mean(targets)),
        LearnerKind::Linear => {
            let (m, warning) = linear::fit(&z, targets);
            warnings.extend(warning);
            Model::Linear(m)
        }
        LearnerKind::PenalizedL1 { penalties, path_len, min_ratio } => {
            let grid = lasso::penalty_grid(&z, targets, penalties, *path_len, *min_ratio);
            let summary = cv_grid_search(&z, targets, spec.cv_folds, seed, grid.clone(), binary, |tx, ty, vx| {
                Ok(lasso::fit_path(tx, ty, binary, &grid).iter().map(|m| m.predict(vx)).collect())
            })?;
            let model = lasso::fit_path(&z, targets, binary, &grid[..=summary.chosen])
                .pop()
                .expect("non-empty path");
            cv = Some(summary);
            Model::Lasso(model)
        }
        LearnerKind::Knn { neighbours } => {
            let grid: Vec<f64> = neighbours.iter().map(|&k| k as f64).collect();
            let summary = cv_grid_search(&z, targets, spec.cv_folds, seed, grid, binary, |tx, ty, vx| {
                Ok(knn::KnnModel::new(tx, ty, 1).predict_path(vx, neighbours))
            })?;
            let k = neighbours[summary.chosen];
            cv = Some(summary);
            Model::Knn(knn::KnnModel::new(&z, targets, k))
        }
        LearnerKind::KernelSmoother { bandwidths } => {
            let summary =
                cv_grid_search(&z, targets, spec.cv_folds, seed, bandwidths.clone(), binary, |tx, ty, vx| {
                    Ok(smoother::SmootherModel::new(tx, ty, 1.0).predict_path(vx, bandwidths))
                })?;
            let h = bandwidths[summary.chosen];
            cv = Some(summary);
            Model::Smoother(smoother::SmootherModel::new(&z, targets, h))
        }
        LearnerKind::TreeEnsemble { trees, depth, learning_rate, min_leaf } => {
            let params = boosting::BoostParams {
                depth: *depth,
                learning_rate: *learning_rate,
                min_leaf: *min_leaf,
                logistic: binary,
            };
            let grid: Vec<f64> = trees.iter().map(|&t| t as f64).collect();
            let summary = cv_grid_search(&z, targets, spec.cv_folds, seed, grid, binary, |tx, ty, vx| {
                Ok(boosting::fit_staged(tx, ty, &params, trees, Some(vx)).1)
            })?;
            let n_trees = trees[summary.chosen];
            cv = Some(summary);
            Model::Trees(boosting::fit_staged(&z, targets, &params, &[n_trees], None).0)
        }
        LearnerKind::Stack { members } => Model::Stack(stack::fit(members, x, targets, spec.cv_folds, seed)?),
    };

    Ok(FittedLearner {
        spec: spec.clone(),
        model,
        n_inputs: x.ncols(),
        binary,
        training_indices: Vec::new(),
        warnings,
        cv,
    })
}

/// Predicts at `x_new`; binary-target fits are clamped to [`PROBABILITY_CLAMP`].
pub fn predict(model: &FittedLearner, x_new: &DMatrix<f64>) -> Result<Vec<f64>> {
    if !x_new.iter().all(|v| v.is_finite()) {
        return Err(Error::Input("prediction covariates contain non-finite values".into()));
    }
    let mut out = model.predict_raw(x_new)?;
    if model.binary {
        clamp_probabilities(&mut out);
    }
    Ok(out)
}
