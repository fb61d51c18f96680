//! Univariate Nadaraya-Watson regression for the auxiliary corrections.
//!
//! `M̂` regresses the exposure residual `A - ĝ(L)` on the outcome prediction
//! `m̂(L)`; `Ĝ` regresses the outcome residual `Y - θ₀A - m̂(L)` on the
//! propensity prediction `ĝ(L)`. Both are the ratio
//! `Σ K((x - rᵢ)/h) sᵢ / Σ K((x - rᵢ)/h)` for regressor values `r` and
//! responses `s`, with `h` chosen by cross-validation unless fixed.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::learners::{fold_labels, split_by_label};
use crate::stats::{mean, population_sd};

/// Denominators below this are treated as "query outside the support".
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Multipliers of `sd(regressor)·n^(-1/5)` forming the default bandwidth grid.
pub const DEFAULT_GRID_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelFunction {
    #[default]
    Epanechnikov,
    Triangular,
    /// Uniform on `[-1, 1]`; discontinuous, intended for tests.
    Box,
}

impl KernelFunction {
    pub fn eval(self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match self {
            KernelFunction::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelFunction::Triangular => 1.0 - a,
            KernelFunction::Box => 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Bandwidth {
    Fixed(f64),
    #[default]
    Cv,
}

fn default_kernel_cv_folds() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(default)]
    pub kernel: KernelFunction,
    #[serde(default)]
    pub bandwidth: Bandwidth,
    /// Candidate bandwidths for `Cv`; empty selects the default grid.
    #[serde(default)]
    pub bandwidth_grid: Vec<f64>,
    #[serde(default = "default_kernel_cv_folds")]
    pub cv_folds: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self {
            kernel: KernelFunction::default(),
            bandwidth: Bandwidth::Cv,
            bandwidth_grid: Vec::new(),
            cv_folds: default_kernel_cv_folds(),
        }
    }
}

impl KernelSpec {
    pub fn fixed(kernel: KernelFunction, h: f64) -> Self {
        Self { kernel, bandwidth: Bandwidth::Fixed(h), ..Self::default() }
    }

    pub fn cv(kernel: KernelFunction, grid: Vec<f64>) -> Self {
        Self { kernel, bandwidth: Bandwidth::Cv, bandwidth_grid: grid, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if let Bandwidth::Fixed(h) = self.bandwidth {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Parameter(format!("bandwidth must be positive, got {h}")));
            }
        }
        if self.bandwidth_grid.iter().any(|h| !(*h > 0.0 && h.is_finite())) {
            return Err(Error::Parameter("bandwidth grid values must be positive".into()));
        }
        if self.bandwidth == Bandwidth::Cv && self.cv_folds < 2 {
            return Err(Error::Parameter(format!("cv_folds must be >= 2, got {}", self.cv_folds)));
        }
        Ok(())
    }
}

/// Fitted smoother. Training pairs are stored sorted by regressor value.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelFit {
    regressor_values: Vec<f64>,
    response_values: Vec<f64>,
    chosen_bandwidth: f64,
    spec: KernelSpec,
    degenerate: bool,
    response_mean: f64,
    cv_losses: Vec<(f64, f64)>,
}

impl KernelFit {
    pub fn regressor_values(&self) -> &[f64] {
        &self.regressor_values
    }

    pub fn response_values(&self) -> &[f64] {
        &self.response_values
    }

    pub fn chosen_bandwidth(&self) -> f64 {
        self.chosen_bandwidth
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    /// True when the regressor had zero spread; predictions are then the response mean.
    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn response_mean(&self) -> f64 {
        self.response_mean
    }

    /// `(bandwidth, out-of-fold MSE)` for every candidate when chosen by CV.
    pub fn cv_losses(&self) -> &[(f64, f64)] {
        &self.cv_losses
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NwPrediction {
    pub values: Vec<f64>,
    /// Positions of queries whose kernel weights summed below [`DENOMINATOR_FLOOR`].
    pub out_of_support: Vec<usize>,
}

/// Default CV grid: `c·sd(r)·n^(-1/5)` for `c` in [`DEFAULT_GRID_MULTIPLIERS`].
pub fn default_bandwidth_grid(regressor: &[f64]) -> Vec<f64> {
    let base = population_sd(regressor) * (regressor.len() as f64).powf(-0.2);
    DEFAULT_GRID_MULTIPLIERS.iter().map(|c| c * base).collect()
}

struct Sorted<'a> {
    r: &'a [f64],
    s: &'a [f64],
}

impl Sorted<'_> {
    /// Weighted mean at `x`, or `None` when the weights vanish.
    fn eval(&self, kernel: KernelFunction, h: f64, x: f64) -> Option<f64> {
        let lo = self.r.partition_point(|&v| v < x - h);
        let hi = self.r.partition_point(|&v| v <= x + h);
        let (mut num, mut den) = (0.0, 0.0);
        for i in lo..hi {
            let w = kernel.eval((x - self.r[i]) / h);
            num += w * self.s[i];
            den += w;
        }
        (den >= DENOMINATOR_FLOOR).then(|| num / den)
    }
}

fn sort_pairs(regressor: &[f64], response: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut order: Vec<usize> = (0..regressor.len()).collect();
    order.sort_by(|&a, &b| regressor[a].total_cmp(&regressor[b]).then(a.cmp(&b)));
    (order.iter().map(|&i| regressor[i]).collect(), order.iter().map(|&i| response[i]).collect())
}

fn cv_loss(regressor: &[f64], response: &[f64], kernel: KernelFunction, h: f64, labels: &[usize]) -> f64 {
    let n_folds = labels.iter().max().map_or(1, |m| m + 1);
    let mut sse = 0.0;
    for f in 0..n_folds {
        let (train, test) = split_by_label(labels, f);
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let tr: Vec<f64> = train.iter().map(|&i| regressor[i]).collect();
        let ts: Vec<f64> = train.iter().map(|&i| response[i]).collect();
        let fallback = mean(&ts);
        let (r, s) = sort_pairs(&tr, &ts);
        let sorted = Sorted { r: &r, s: &s };
        for &i in &test {
            let pred = sorted.eval(kernel, h, regressor[i]).unwrap_or(fallback);
            sse += (response[i] - pred).powi(2);
        }
    }
    sse / regressor.len() as f64
}

/// Fits the smoother of `response` on `regressor`. `seed` drives the CV fold assignment.
pub fn nw_fit(regressor: &[f64], response: &[f64], spec: &KernelSpec, seed: u64) -> Result<KernelFit> {
    spec.validate()?;
    if regressor.len() != response.len() {
        return Err(Error::Shape { expected: regressor.len(), found: response.len() });
    }
    if regressor.len() < 2 {
        return Err(Error::Size(format!("need at least 2 points, got {}", regressor.len())));
    }
    if !regressor.iter().chain(response).all(|v| v.is_finite()) {
        return Err(Error::Input("kernel regression inputs must be finite".into()));
    }
    let response_mean = mean(response);
    let degenerate = population_sd(regressor) <= 0.0;
    let (r, s) = sort_pairs(regressor, response);

    let mut cv_losses = Vec::new();
    let chosen_bandwidth = match spec.bandwidth {
        Bandwidth::Fixed(h) => h,
        Bandwidth::Cv if degenerate => 1.0,
        Bandwidth::Cv => {
            let grid =
                if spec.bandwidth_grid.is_empty() { default_bandwidth_grid(regressor) } else { spec.bandwidth_grid.clone() };
            let labels = fold_labels(regressor.len(), spec.cv_folds, seed);
            cv_losses = grid.iter().map(|&h| (h, cv_loss(regressor, response, spec.kernel, h, &labels))).collect();
            let mut best = cv_losses[0];
            for &c in &cv_losses[1..] {
                if c.1 < best.1 {
                    best = c;
                }
            }
            best.0
        }
    };

    Ok(KernelFit {
        regressor_values: r,
        response_values: s,
        chosen_bandwidth,
        spec: spec.clone(),
        degenerate,
        response_mean,
        cv_losses,
    })
}

/// Evaluates the fitted smoother at `query_points`. Queries where the kernel
/// weights vanish get the global response mean and are reported.
pub fn nw_predict(fit: &KernelFit, query_points: &[f64]) -> Result<NwPrediction> {
    if let Some(q) = query_points.iter().find(|q| !q.is_finite()) {
        return Err(Error::Input(format!("non-finite query point {q}")));
    }
    if fit.degenerate {
        return Ok(NwPrediction { values: vec![fit.response_mean; query_points.len()], out_of_support: Vec::new() });
    }
    let sorted = Sorted { r: &fit.regressor_values, s: &fit.response_values };
    let mut out_of_support = Vec::new();
    let values = query_points
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            sorted.eval(fit.spec.kernel, fit.chosen_bandwidth, x).unwrap_or_else(|| {
                out_of_support.push(i);
                fit.response_mean
            })
        })
        .collect();
    Ok(NwPrediction { values, out_of_support })
}
