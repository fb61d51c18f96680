//! Cross-fitted score statistics for `H₀: θ = θ₀`.
//!
//! For each fold `I_k` the nuisances `ĝ(L) ≈ E(A|L)` and `m̂(L) ≈ E(Y-θ₀A|L)`
//! are trained on the complement of `I_k`. The doubly robust statistic also
//! smooths the exposure residual on `m̂` (giving `M̂`) and the outcome
//! residual on `ĝ` (giving `Ĝ`), solves for the scalar corrections `α̂_k`,
//! `β̂_k` on the fold, and averages
//!
//! ```text
//! ψ* = r_A·r_Y − Ĝ·r_A − M̂·r_Y,   r_A = A − ĝ − α̂Ĝ,   r_Y = Y − θ₀A − m̂ − β̂M̂.
//! ```
//!
//! Fold means `Ũ_k` are averaged into `ū`, the variance is
//! `σ̂² = K⁻¹ Σ_k mean_{I_k}(ψ²) − ū²`, and the test statistic is `√n·ū/σ̂`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::kernel::{nw_fit, nw_predict, KernelSpec};
use crate::learners::{fit, predict, LearnerSpec};
use crate::rng::derive_seed;
use crate::stats::two_sided_p_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    /// `(A − ĝ)(Y − θ₀A)`
    Ps,
    /// `A(Y − θ₀A − m̂)`
    Or,
    /// `(A − ĝ)(Y − θ₀A − m̂)`
    Dml,
    /// Corrected score `ψ*`.
    Drdml,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 4] = [StatisticKind::Ps, StatisticKind::Or, StatisticKind::Dml, StatisticKind::Drdml];

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::Ps => "ps",
            StatisticKind::Or => "or",
            StatisticKind::Dml => "dml",
            StatisticKind::Drdml => "drdml",
        }
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Parameter(format!("unknown statistic kind `{s}`; expected one of ps, or, dml, drdml")))
    }
}

/// A fixed regression function of the covariate row.
pub type KnownFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// How a nuisance regression is obtained.
#[derive(Clone)]
pub enum Nuisance {
    Learn(LearnerSpec),
    /// Known function used in place of a fitted learner. For the outcome
    /// nuisance it is used as `m̂` whatever the hypothesized `θ₀`.
    Known(KnownFn),
}

impl fmt::Debug for Nuisance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nuisance::Learn(spec) => f.debug_tuple("Learn").field(spec).finish(),
            Nuisance::Known(_) => f.write_str("Known(..)"),
        }
    }
}

/// How `m̂` at `θ₀` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeStrategy {
    /// Regress `Y − θ₀A` on `L` for every `θ₀`.
    #[default]
    Profile,
    /// `m̂_θ = Ê(Y|L) − θ·Ê(A|L)`, both fitted once with the outcome learner.
    Decompose,
}

#[derive(Debug, Clone)]
pub struct NuisanceConfig {
    pub propensity: Nuisance,
    pub outcome: Nuisance,
    pub strategy: OutcomeStrategy,
    /// Train `ĝ`/`m̂` and the kernel corrections on disjoint halves of each
    /// fold complement; when false both use the full complement.
    pub nested_split: bool,
}

impl NuisanceConfig {
    pub fn learned(propensity: LearnerSpec, outcome: LearnerSpec) -> Self {
        Self {
            propensity: Nuisance::Learn(propensity),
            outcome: Nuisance::Learn(outcome),
            strategy: OutcomeStrategy::Profile,
            nested_split: true,
        }
    }

    pub fn with_strategy(mut self, strategy: OutcomeStrategy) -> Self {
        self.strategy = strategy;
        self
    }

    pub fn with_nested_split(mut self, nested: bool) -> Self {
        self.nested_split = nested;
        self
    }
}

/// Nuisance values for the units of one evaluation fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldNuisances {
    /// Units of `I_k`, aligned with every vector below.
    pub indices: Vec<usize>,
    pub g_hat: Vec<f64>,
    pub m_hat: Vec<f64>,
    /// `Ĝ`: smoothed outcome residual given `ĝ`; the direction that updates `ĝ`.
    pub g_update: Vec<f64>,
    /// `M̂`: smoothed exposure residual given `m̂`; the direction that updates `m̂`.
    pub m_update: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub alpha_degenerate: bool,
    pub beta_degenerate: bool,
    /// Bandwidths chosen for `(Ĝ, M̂)` when corrections were fitted.
    pub bandwidths: Option<(f64, f64)>,
    /// Evaluation points that fell outside the kernel support (either smoother).
    pub out_of_support: usize,
}

impl FoldNuisances {
    /// Same `ĝ`, `m̂` with all corrections zeroed.
    pub fn without_corrections(&self) -> Self {
        let zeros = vec![0.0; self.indices.len()];
        Self {
            g_update: zeros.clone(),
            m_update: zeros,
            alpha: 0.0,
            beta: 0.0,
            alpha_degenerate: true,
            beta_degenerate: true,
            bandwidths: None,
            out_of_support: 0,
            ..self.clone()
        }
    }

    pub fn values(&self, j: usize) -> NuisanceValues {
        NuisanceValues {
            g_hat: self.g_hat[j],
            m_hat: self.m_hat[j],
            g_update: self.g_update[j],
            m_update: self.m_update[j],
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

/// Nuisance values for a single unit.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NuisanceValues {
    pub g_hat: f64,
    pub m_hat: f64,
    pub g_update: f64,
    pub m_update: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Solution of a one-dimensional correction equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correction {
    pub value: f64,
    /// The quadratic term was below `1e-12·n`, so the correction was set to zero.
    pub degenerate: bool,
}

fn solve_projection(direction: &[f64], residual: impl Iterator<Item = f64>) -> Correction {
    let n = direction.len() as f64;
    let mut cross = 0.0;
    let mut quad = 0.0;
    for (d, r) in direction.iter().zip(residual) {
        cross += d * r;
        quad += d * d;
    }
    if quad < 1e-12 * n {
        Correction { value: 0.0, degenerate: true }
    } else {
        Correction { value: cross / quad, degenerate: false }
    }
}

/// `α̂` solving `Σ Ĝᵢ (aᵢ − ĝᵢ − αĜᵢ) = 0`.
pub fn solve_alpha(g_update: &[f64], a: &[f64], g_hat: &[f64]) -> Result<Correction> {
    for len in [a.len(), g_hat.len()] {
        if len != g_update.len() {
            return Err(Error::Shape { expected: g_update.len(), found: len });
        }
    }
    if g_update.is_empty() {
        return Err(Error::Size("correction equation needs at least one unit".into()));
    }
    Ok(solve_projection(g_update, a.iter().zip(g_hat).map(|(a, g)| a - g)))
}

/// `β̂` solving `Σ M̂ᵢ (yᵢ − θ₀aᵢ − m̂ᵢ − βM̂ᵢ) = 0`.
pub fn solve_beta(m_update: &[f64], y: &[f64], a: &[f64], theta0: f64, m_hat: &[f64]) -> Result<Correction> {
    for len in [y.len(), a.len(), m_hat.len()] {
        if len != m_update.len() {
            return Err(Error::Shape { expected: m_update.len(), found: len });
        }
    }
    if m_update.is_empty() {
        return Err(Error::Size("correction equation needs at least one unit".into()));
    }
    Ok(solve_projection(m_update, y.iter().zip(a).zip(m_hat).map(|((y, a), m)| y - theta0 * a - m)))
}

/// The corrected score `ψ*` for one unit.
pub fn psi_star(y: f64, a: f64, nuis: &NuisanceValues, theta0: f64) -> f64 {
    let ra = a - nuis.g_hat - nuis.alpha * nuis.g_update;
    let ry = y - theta0 * a - nuis.m_hat - nuis.beta * nuis.m_update;
    ra * ry - nuis.g_update * ra - nuis.m_update * ry
}

/// Score contribution of one unit for `kind`.
pub fn score_value(kind: StatisticKind, y: f64, a: f64, nuis: &NuisanceValues, theta0: f64) -> f64 {
    match kind {
        StatisticKind::Ps => (a - nuis.g_hat) * (y - theta0 * a),
        StatisticKind::Or => a * (y - theta0 * a - nuis.m_hat),
        StatisticKind::Dml => (a - nuis.g_hat) * (y - theta0 * a - nuis.m_hat),
        StatisticKind::Drdml => psi_star(y, a, nuis, theta0),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub size: usize,
    /// Fold mean of the score, `Ũ_k`.
    pub u_tilde: f64,
    /// Fold mean of the squared score.
    pub mean_square: f64,
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResult {
    pub statistic_kind: StatisticKind,
    pub theta0: f64,
    /// `K⁻¹ Σ_k Ũ_k`.
    pub u_bar: f64,
    pub sigma2_hat: f64,
    /// `√n·ū/σ̂`.
    pub standardized: f64,
    pub p_value: f64,
    pub per_fold: Vec<FoldSummary>,
}

impl ScoreResult {
    pub fn rejects(&self, level: f64) -> bool {
        self.p_value < level
    }
}

/// Aggregates per-fold scores into the test statistic.
pub fn aggregate(
    data: &Dataset,
    folds: &[FoldNuisances],
    theta0: f64,
    kind: StatisticKind,
) -> Result<ScoreResult> {
    let (y, a) = (data.y(), data.a());
    let per_fold: Vec<FoldSummary> = folds
        .iter()
        .map(|f| {
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for (j, &i) in f.indices.iter().enumerate() {
                let psi = score_value(kind, y[i], a[i], &f.values(j), theta0);
                sum += psi;
                sum_sq += psi * psi;
            }
            let size = f.indices.len();
            FoldSummary {
                size,
                u_tilde: sum / size as f64,
                mean_square: sum_sq / size as f64,
                alpha: f.alpha,
                beta: f.beta,
            }
        })
        .collect();
    let k = per_fold.len() as f64;
    let u_bar = per_fold.iter().map(|f| f.u_tilde).sum::<f64>() / k;
    let sigma2_hat = per_fold.iter().map(|f| f.mean_square).sum::<f64>() / k - u_bar * u_bar;
    if !(sigma2_hat > 0.0) {
        return Err(Error::DegenerateVariance(sigma2_hat));
    }
    let standardized = (data.n() as f64).sqrt() * u_bar / sigma2_hat.sqrt();
    Ok(ScoreResult {
        statistic_kind: kind,
        theta0,
        u_bar,
        sigma2_hat,
        standardized,
        p_value: two_sided_p_value(standardized),
        per_fold,
    })
}

struct Decomposed {
    y_eval: Vec<f64>,
    a_eval: Vec<f64>,
    y_aux: Vec<f64>,
    a_aux: Vec<f64>,
}

struct FoldCache {
    eval: Vec<usize>,
    train: Vec<usize>,
    aux: Vec<usize>,
    g_eval: Vec<f64>,
    g_aux: Vec<f64>,
    decomposed: Option<Decomposed>,
}

/// Cross-fitting state reusable across hypothesized values `θ₀`.
///
/// The propensity fits (and, under [`OutcomeStrategy::Decompose`], the outcome
/// fits) do not depend on `θ₀` and are computed once. All seeds are derived
/// from the fold index only, so repeated evaluation at different `θ₀` uses
/// common random numbers.
pub struct CrossFitter<'a> {
    data: &'a Dataset,
    plan: &'a FoldPlan,
    config: &'a NuisanceConfig,
    kernel: &'a KernelSpec,
    seed: u64,
    folds: Vec<FoldCache>,
}

fn fold_error(fold: usize, nuisance: &'static str) -> impl Fn(Error) -> Error {
    move |e| Error::Fold { fold, nuisance, source: Box::new(e) }
}

fn known_values(f: &KnownFn, l: &DMatrix<f64>, idx: &[usize]) -> Vec<f64> {
    idx.iter()
        .map(|&i| {
            let row: Vec<f64> = l.row(i).iter().copied().collect();
            f(&row)
        })
        .collect()
}

fn select(values: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| values[i]).collect()
}

/// Fits `spec` on `train` and predicts at each index set in `targets`.
fn fit_and_predict(
    data: &Dataset,
    spec: &LearnerSpec,
    train: &[usize],
    response: &[f64],
    at: &[&[usize]],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    let model = fit(spec, &data.covariates_at(train), response, seed)?;
    at.iter().map(|idx| predict(&model, &data.covariates_at(idx))).collect()
}

impl<'a> CrossFitter<'a> {
    pub fn new(
        data: &'a Dataset,
        plan: &'a FoldPlan,
        config: &'a NuisanceConfig,
        kernel: &'a KernelSpec,
        seed: u64,
    ) -> Result<Self> {
        if plan.n() != data.n() {
            return Err(Error::Shape { expected: data.n(), found: plan.n() });
        }
        kernel.validate()?;
        for n in [&config.propensity, &config.outcome] {
            if let Nuisance::Learn(spec) = n {
                spec.validate()?;
            }
        }
        let folds = (0..plan.k())
            .into_par_iter()
            .map(|k| Self::prepare_fold(data, plan, config, k, seed))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { data, plan, config, kernel, seed, folds })
    }

    fn prepare_fold(data: &Dataset, plan: &FoldPlan, config: &NuisanceConfig, k: usize, seed: u64) -> Result<FoldCache> {
        let eval = plan.fold(k).to_vec();
        let (train, aux) = if config.nested_split {
            let s = plan.inner_split(k);
            (s.outer.clone(), s.inner.clone())
        } else {
            let c = plan.complement(k);
            (c.clone(), c)
        };
        let (g_eval, g_aux) = match &config.propensity {
            Nuisance::Known(f) => (known_values(f, data.l(), &eval), known_values(f, data.l(), &aux)),
            Nuisance::Learn(spec) => {
                let mut p = fit_and_predict(
                    data,
                    spec,
                    &train,
                    &select(data.a(), &train),
                    &[&eval, &aux],
                    derive_seed(seed, &[k as u64, 0]),
                )
                .map_err(fold_error(k, "propensity"))?;
                let g_aux = p.pop().expect("two prediction sets");
                (p.pop().expect("two prediction sets"), g_aux)
            }
        };
        let decomposed = match (&config.outcome, config.strategy) {
            (Nuisance::Learn(spec), OutcomeStrategy::Decompose) => {
                let mut py = fit_and_predict(
                    data,
                    spec,
                    &train,
                    &select(data.y(), &train),
                    &[&eval, &aux],
                    derive_seed(seed, &[k as u64, 2]),
                )
                .map_err(fold_error(k, "outcome mean"))?;
                let mut pa = fit_and_predict(
                    data,
                    spec,
                    &train,
                    &select(data.a(), &train),
                    &[&eval, &aux],
                    derive_seed(seed, &[k as u64, 3]),
                )
                .map_err(fold_error(k, "exposure mean"))?;
                Some(Decomposed {
                    y_aux: py.pop().expect("two prediction sets"),
                    y_eval: py.pop().expect("two prediction sets"),
                    a_aux: pa.pop().expect("two prediction sets"),
                    a_eval: pa.pop().expect("two prediction sets"),
                })
            }
            _ => None,
        };
        Ok(FoldCache { eval, train, aux, g_eval, g_aux, decomposed })
    }

    pub fn data(&self) -> &Dataset {
        self.data
    }

    pub fn plan(&self) -> &FoldPlan {
        self.plan
    }

    /// Out-of-fold `ĝ` for every unit, in dataset order.
    pub fn propensity_predictions(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.data.n()];
        for f in &self.folds {
            for (&i, &g) in f.eval.iter().zip(&f.g_eval) {
                out[i] = g;
            }
        }
        out
    }

    /// Out-of-fold `m̂` at `θ₀` for every unit, in dataset order.
    pub fn outcome_predictions(&self, theta0: f64) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.data.n()];
        for (k, f) in self.folds.iter().enumerate() {
            let (m_eval, _) = self.outcome_fit(k, theta0, false)?;
            for (&i, m) in f.eval.iter().zip(m_eval) {
                out[i] = m;
            }
        }
        Ok(out)
    }

    /// `m̂` at `θ₀` on the evaluation fold and (if requested) the auxiliary set.
    fn outcome_fit(&self, k: usize, theta0: f64, need_aux: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        let f = &self.folds[k];
        match (&self.config.outcome, &f.decomposed) {
            (Nuisance::Known(func), _) => Ok((
                known_values(func, self.data.l(), &f.eval),
                if need_aux { known_values(func, self.data.l(), &f.aux) } else { Vec::new() },
            )),
            (Nuisance::Learn(_), Some(d)) => {
                let combine = |ym: &[f64], am: &[f64]| ym.iter().zip(am).map(|(y, a)| y - theta0 * a).collect();
                Ok((combine(&d.y_eval, &d.a_eval), if need_aux { combine(&d.y_aux, &d.a_aux) } else { Vec::new() }))
            }
            (Nuisance::Learn(spec), None) => {
                let (y, a) = (self.data.y(), self.data.a());
                let response: Vec<f64> = f.train.iter().map(|&i| y[i] - theta0 * a[i]).collect();
                let at: Vec<&[usize]> = if need_aux { vec![&f.eval, &f.aux] } else { vec![&f.eval] };
                let mut p = fit_and_predict(self.data, spec, &f.train, &response, &at, derive_seed(self.seed, &[k as u64, 1]))
                    .map_err(fold_error(k, "outcome"))?;
                let aux = if need_aux { p.pop().expect("two prediction sets") } else { Vec::new() };
                Ok((p.pop().expect("prediction set"), aux))
            }
        }
    }

    fn fold_nuisances(&self, k: usize, theta0: f64, corrections: bool) -> Result<FoldNuisances> {
        let f = &self.folds[k];
        let (y, a) = (self.data.y(), self.data.a());
        let (m_eval, m_aux) = self.outcome_fit(k, theta0, corrections)?;
        let size = f.eval.len();
        let mut out = FoldNuisances {
            indices: f.eval.clone(),
            g_hat: f.g_eval.clone(),
            m_hat: m_eval,
            g_update: vec![0.0; size],
            m_update: vec![0.0; size],
            alpha: 0.0,
            beta: 0.0,
            alpha_degenerate: true,
            beta_degenerate: true,
            bandwidths: None,
            out_of_support: 0,
        };
        if !corrections {
            return Ok(out);
        }

        // M̂: exposure residual smoothed on m̂; Ĝ: outcome residual smoothed on ĝ.
        let a_resid: Vec<f64> = f.aux.iter().zip(&f.g_aux).map(|(&i, g)| a[i] - g).collect();
        let y_resid: Vec<f64> = f.aux.iter().zip(&m_aux).map(|(&i, m)| y[i] - theta0 * a[i] - m).collect();
        let m_fit = nw_fit(&m_aux, &a_resid, self.kernel, derive_seed(self.seed, &[k as u64, 4]))
            .map_err(fold_error(k, "exposure-residual smoother"))?;
        let g_fit = nw_fit(&f.g_aux, &y_resid, self.kernel, derive_seed(self.seed, &[k as u64, 5]))
            .map_err(fold_error(k, "outcome-residual smoother"))?;
        let m_pred = nw_predict(&m_fit, &out.m_hat)?;
        let g_pred = nw_predict(&g_fit, &out.g_hat)?;
        out.out_of_support = m_pred.out_of_support.len() + g_pred.out_of_support.len();
        out.m_update = m_pred.values;
        out.g_update = g_pred.values;
        out.bandwidths = Some((g_fit.chosen_bandwidth(), m_fit.chosen_bandwidth()));

        let a_fold = select(a, &f.eval);
        let y_fold = select(y, &f.eval);
        let alpha = solve_alpha(&out.g_update, &a_fold, &out.g_hat)?;
        let beta = solve_beta(&out.m_update, &y_fold, &a_fold, theta0, &out.m_hat)?;
        out.alpha = alpha.value;
        out.alpha_degenerate = alpha.degenerate;
        out.beta = beta.value;
        out.beta_degenerate = beta.degenerate;
        Ok(out)
    }

    /// Per-fold nuisances at `θ₀`; kernel corrections only when `corrections`.
    pub fn nuisances(&self, theta0: f64, corrections: bool) -> Result<Vec<FoldNuisances>> {
        (0..self.folds.len())
            .into_par_iter()
            .map(|k| self.fold_nuisances(k, theta0, corrections))
            .collect()
    }

    pub fn score(&self, theta0: f64, kind: StatisticKind) -> Result<ScoreResult> {
        let folds = self.nuisances(theta0, kind == StatisticKind::Drdml)?;
        aggregate(self.data, &folds, theta0, kind)
    }

    /// All requested statistics from one set of nuisance fits.
    pub fn score_all(&self, theta0: f64, kinds: &[StatisticKind]) -> Result<Vec<ScoreResult>> {
        let folds = self.nuisances(theta0, kinds.contains(&StatisticKind::Drdml))?;
        kinds.iter().map(|&kind| aggregate(self.data, &folds, theta0, kind)).collect()
    }
}

/// Cross-fitted test of `θ = θ₀` with statistic `kind`.
pub fn score_test(
    data: &Dataset,
    plan: &FoldPlan,
    theta0: f64,
    kind: StatisticKind,
    learners: &NuisanceConfig,
    kernel: &KernelSpec,
    seed: u64,
) -> Result<ScoreResult> {
    CrossFitter::new(data, plan, learners, kernel, seed)?.score(theta0, kind)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_fold_plan;

    #[test]
    fn alpha_hand_examples() {
        let c = solve_alpha(&[0.0, 0.0], &[1.0, 2.0], &[0.0, 0.0]).unwrap();
        assert_eq!(c, Correction { value: 0.0, degenerate: true });
        let c = solve_alpha(&[1.0, 1.0], &[2.0, 4.0], &[0.0, 0.0]).unwrap();
        assert_eq!(c, Correction { value: 3.0, degenerate: false });
        let c = solve_alpha(&[1.0, -1.0], &[0.7, 0.7], &[0.2, 0.2]).unwrap();
        assert_eq!(c.value, 0.0);
        assert!(!c.degenerate);
    }

    #[test]
    fn beta_hand_examples() {
        let c = solve_beta(&[0.0; 3], &[1.0, 2.0, 3.0], &[0.0; 3], 1.0, &[0.0; 3]).unwrap();
        assert!(c.degenerate && c.value == 0.0);
        // Residuals y - θ₀a - m̂ = (2, 6).
        let c = solve_beta(&[2.0, 2.0], &[3.0, 8.0], &[1.0, 1.0], 1.0, &[0.0, 1.0]).unwrap();
        assert_eq!(c.value, 2.0);
    }

    #[test]
    fn shape_mismatch_is_error() {
        assert!(matches!(solve_alpha(&[1.0], &[1.0, 2.0], &[0.0]), Err(Error::Shape { .. })));
        assert!(matches!(solve_beta(&[1.0], &[1.0], &[1.0], 0.0, &[0.0, 1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn psi_star_hand_example() {
        let nuis = NuisanceValues { g_hat: 0.5, m_hat: 1.0, g_update: 0.2, m_update: 0.1, alpha: 1.0, beta: 2.0 };
        let v = psi_star(3.0, 1.0, &nuis, 1.0);
        assert!((v - 0.1).abs() < 1e-12, "{v}");
    }

    #[test]
    fn psi_star_reduces_to_dml_score() {
        let nuis = NuisanceValues { g_hat: 0.3, m_hat: -0.4, ..Default::default() };
        for (y, a) in [(1.3, 1.0), (-2.0, 0.0), (0.25, 1.0)] {
            assert_eq!(psi_star(y, a, &nuis, 0.7), (a - 0.3) * (y - 0.7 * a - -0.4));
        }
    }

    #[test]
    fn psi_star_vanishes_with_zero_residuals() {
        let nuis = NuisanceValues { g_hat: 1.0, m_hat: 2.0, g_update: 0.9, m_update: -3.0, alpha: 0.0, beta: 0.0 };
        assert_eq!(psi_star(2.0 + 1.5, 1.0, &nuis, 1.5), 0.0);
    }

    #[test]
    fn constructed_null_gives_zero_statistic() {
        // ĝ = m̂ = 0 and θ₀ = 1: scores a(y - a) = (1, -1, 0, 0) sum to zero.
        let l = DMatrix::from_column_slice(4, 1, &[0.1, 0.2, 0.3, 0.4]);
        let data = Dataset::new(vec![2.0, 0.0, 5.0, -1.0], vec![1.0, 1.0, 0.0, 0.0], l).unwrap();
        let plan = make_fold_plan(4, 2, 0.5, 0).unwrap();
        let zero: KnownFn = Arc::new(|_| 0.0);
        let config = NuisanceConfig {
            propensity: Nuisance::Known(zero.clone()),
            outcome: Nuisance::Known(zero),
            strategy: OutcomeStrategy::Profile,
            nested_split: true,
        };
        let kernel = KernelSpec::default();
        let fitter = CrossFitter::new(&data, &plan, &config, &kernel, 0).unwrap();
        let r = fitter.score(1.0, StatisticKind::Dml).unwrap();
        let total: f64 = r.per_fold.iter().map(|f| f.u_tilde * f.size as f64).sum();
        assert!(total.abs() < 1e-15);
        assert!(r.u_bar.abs() < 1e-15);
        assert!(r.standardized.abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_variance_is_error() {
        let l = DMatrix::from_column_slice(4, 1, &[0.1, 0.2, 0.3, 0.4]);
        let data = Dataset::new(vec![1.0; 4], vec![1.0; 4], l).unwrap();
        let plan = make_fold_plan(4, 2, 0.5, 0).unwrap();
        let one: KnownFn = Arc::new(|_| 1.0);
        let config = NuisanceConfig {
            propensity: Nuisance::Known(one.clone()),
            outcome: Nuisance::Known(one),
            strategy: OutcomeStrategy::Profile,
            nested_split: true,
        };
        let err = score_test(&data, &plan, 0.0, StatisticKind::Dml, &config, &KernelSpec::default(), 0).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance(_)));
    }

    #[test]
    fn kind_names_parse() {
        for k in StatisticKind::ALL {
            assert_eq!(k.name().parse::<StatisticKind>().unwrap(), k);
        }
        let err = "foo".parse::<StatisticKind>().unwrap_err().to_string();
        assert!(err.contains("ps, or, dml, drdml"));
    }
}
