//! Data-generating processes, misspecification scenarios and the Monte Carlo
//! driver for size and variance calibration studies.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng as _;
use rand_distr::{Bernoulli, Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{make_fold_plan, Dataset};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::learners::LearnerSpec;
use crate::rng::{derive_seed, rng_from_seed};
use crate::score::{CrossFitter, KnownFn, Nuisance, NuisanceConfig, OutcomeStrategy, ScoreResult, StatisticKind};
use crate::stats::{expit, mean, sample_variance};

/// Scalar expression over a covariate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(f64),
    /// Covariate by zero-based position.
    Var(usize),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Expit(Box<Expr>),
    Sin(Box<Expr>),
    Recip(Box<Expr>),
}

impl Expr {
    pub fn eval(&self, row: &[f64]) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var(j) => row[*j],
            Expr::Add(terms) => terms.iter().map(|t| t.eval(row)).sum(),
            Expr::Mul(terms) => terms.iter().map(|t| t.eval(row)).product(),
            Expr::Neg(e) => -e.eval(row),
            Expr::Exp(e) => e.eval(row).exp(),
            Expr::Expit(e) => expit(e.eval(row)),
            Expr::Sin(e) => e.eval(row).sin(),
            Expr::Recip(e) => 1.0 / e.eval(row),
        }
    }

    fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Const(_) => None,
            Expr::Var(j) => Some(*j),
            Expr::Add(t) | Expr::Mul(t) => t.iter().filter_map(Expr::max_var).max(),
            Expr::Neg(e) | Expr::Exp(e) | Expr::Expit(e) | Expr::Sin(e) | Expr::Recip(e) => e.max_var(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    Uniform { low: f64, high: f64 },
    Bernoulli { p: f64 },
    Normal { mean: f64, sd: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum ExposureLaw {
    /// `A ~ Bernoulli(g(L))`; the propensity expression is a probability.
    #[default]
    Bernoulli,
    /// `A = g(L) + N(0, sd²)`.
    Gaussian { sd: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomDgp {
    pub covariates: Vec<CovariateLaw>,
    /// `E(A|L)`.
    pub propensity: Expr,
    /// `E(Y − θA|L)`.
    pub outcome: Expr,
    #[serde(default)]
    pub exposure: ExposureLaw,
    #[serde(default = "one")]
    pub noise_sd: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum Experiment {
    /// `L₁~U(−2,2)`, `L₂~Bern(½)`, `A~Bern(expit(−L₁+2L₁L₂))`, `Y~N(θA−1+2L₁L₂, 1)`.
    Exp1,
    /// `L₁,L₂~U(0,1)`, `s=expit(20(L₁−½))`, `A~Bern(expit(−1.5+3s+L₂))`, `Y~N(θA+3s+L₂, 1)`.
    Exp2,
    Custom(CustomDgp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default)]
    pub theta_true: f64,
    #[serde(default = "default_n")]
    pub n: usize,
}

fn default_n() -> usize {
    1000
}

fn sigmoid_step(l1: f64) -> f64 {
    1.0 / (1.0 + (-20.0 * (l1 - 0.5)).exp())
}

impl DgpSpec {
    pub fn exp1(n: usize) -> Self {
        Self { experiment: Experiment::Exp1, theta_true: 0.0, n }
    }

    pub fn exp2(n: usize) -> Self {
        Self { experiment: Experiment::Exp2, theta_true: 0.0, n }
    }

    pub fn with_theta(mut self, theta: f64) -> Self {
        self.theta_true = theta;
        self
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n = n;
        self
    }

    pub fn dimension(&self) -> usize {
        match &self.experiment {
            Experiment::Exp1 | Experiment::Exp2 => 2,
            Experiment::Custom(c) => c.covariates.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Parameter(format!("n must be at least 2, got {}", self.n)));
        }
        if !self.theta_true.is_finite() {
            return Err(Error::Parameter("theta_true must be finite".into()));
        }
        if let Experiment::Custom(c) = &self.experiment {
            if c.covariates.is_empty() {
                return Err(Error::Parameter("custom DGP needs at least one covariate".into()));
            }
            for law in &c.covariates {
                let ok = match *law {
                    CovariateLaw::Uniform { low, high } => low < high,
                    CovariateLaw::Bernoulli { p } => (0.0..=1.0).contains(&p),
                    CovariateLaw::Normal { mean, sd } => mean.is_finite() && sd > 0.0,
                };
                if !ok {
                    return Err(Error::Parameter(format!("invalid covariate law {law:?}")));
                }
            }
            let p = c.covariates.len();
            for (name, e) in [("propensity", &c.propensity), ("outcome", &c.outcome)] {
                if e.max_var().is_some_and(|j| j >= p) {
                    return Err(Error::Parameter(format!("{name} expression refers to a covariate beyond the {p} declared")));
                }
            }
            if !(c.noise_sd > 0.0) {
                return Err(Error::Parameter("noise_sd must be positive".into()));
            }
            if let ExposureLaw::Gaussian { sd } = c.exposure {
                if !(sd > 0.0) {
                    return Err(Error::Parameter("exposure sd must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// True `g₀(L) = E(A|L)`.
    pub fn propensity(&self, row: &[f64]) -> f64 {
        match &self.experiment {
            Experiment::Exp1 => expit(-row[0] + 2.0 * row[0] * row[1]),
            Experiment::Exp2 => expit(-1.5 + 3.0 * sigmoid_step(row[0]) + row[1]),
            Experiment::Custom(c) => c.propensity.eval(row),
        }
    }

    /// True `m₀(L) = E(Y − θA|L)`.
    pub fn outcome(&self, row: &[f64]) -> f64 {
        match &self.experiment {
            Experiment::Exp1 => -1.0 + 2.0 * row[0] * row[1],
            Experiment::Exp2 => 3.0 * sigmoid_step(row[0]) + row[1],
            Experiment::Custom(c) => c.outcome.eval(row),
        }
    }

    /// True `E(Y|L) = θ·g₀(L) + m₀(L)`.
    pub fn outcome_regression(&self, row: &[f64]) -> f64 {
        self.theta_true * self.propensity(row) + self.outcome(row)
    }

    pub fn propensity_fn(&self) -> KnownFn {
        let d = self.clone();
        Arc::new(move |row| d.propensity(row))
    }

    pub fn outcome_fn(&self) -> KnownFn {
        let d = self.clone();
        Arc::new(move |row| d.outcome(row))
    }

    fn covariate_laws(&self) -> Vec<CovariateLaw> {
        match &self.experiment {
            Experiment::Exp1 => vec![
                CovariateLaw::Uniform { low: -2.0, high: 2.0 },
                CovariateLaw::Bernoulli { p: 0.5 },
            ],
            Experiment::Exp2 => vec![
                CovariateLaw::Uniform { low: 0.0, high: 1.0 },
                CovariateLaw::Uniform { low: 0.0, high: 1.0 },
            ],
            Experiment::Custom(c) => c.covariates.clone(),
        }
    }

    fn exposure_law(&self) -> ExposureLaw {
        match &self.experiment {
            Experiment::Custom(c) => c.exposure,
            _ => ExposureLaw::Bernoulli,
        }
    }

    fn noise_sd(&self) -> f64 {
        match &self.experiment {
            Experiment::Custom(c) => c.noise_sd,
            _ => 1.0,
        }
    }
}

/// Draws `dgp.n` units; deterministic given `seed`.
pub fn draw(dgp: &DgpSpec, seed: u64) -> Result<Dataset> {
    dgp.validate()?;
    let laws = dgp.covariate_laws();
    let exposure = dgp.exposure_law();
    let noise = Normal::new(0.0, dgp.noise_sd()).map_err(|e| Error::Parameter(e.to_string()))?;
    let (n, p) = (dgp.n, laws.len());
    let mut rng = rng_from_seed(seed);
    let mut l = DMatrix::zeros(n, p);
    let mut y = Vec::with_capacity(n);
    let mut a = Vec::with_capacity(n);
    let mut row = vec![0.0; p];
    for i in 0..n {
        for (j, law) in laws.iter().enumerate() {
            row[j] = match *law {
                CovariateLaw::Uniform { low, high } => Uniform::new(low, high).sample(&mut rng),
                CovariateLaw::Bernoulli { p } => f64::from(u8::from(rng.gen_bool(p))),
                CovariateLaw::Normal { mean, sd } => mean + sd * rng.sample::<f64, _>(rand_distr::StandardNormal),
            };
            l[(i, j)] = row[j];
        }
        let g = dgp.propensity(&row);
        let ai = match exposure {
            ExposureLaw::Bernoulli => {
                let prob = Bernoulli::new(g)
                    .map_err(|_| Error::Parameter(format!("propensity {g} is not a probability")))?;
                f64::from(u8::from(prob.sample(&mut rng)))
            }
            ExposureLaw::Gaussian { sd } => g + sd * rng.sample::<f64, _>(rand_distr::StandardNormal),
        };
        a.push(ai);
        y.push(dgp.theta_true * ai + dgp.outcome(&row) + noise.sample(&mut rng));
    }
    Dataset::new(y, a, l)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consistency {
    Both,
    PsOnly,
    OrOnly,
}

impl Consistency {
    pub const ALL: [Consistency; 3] = [Consistency::Both, Consistency::PsOnly, Consistency::OrOnly];

    pub fn name(self) -> &'static str {
        match self {
            Consistency::Both => "both",
            Consistency::PsOnly => "ps_only",
            Consistency::OrOnly => "or_only",
        }
    }

    pub fn propensity_consistent(self) -> bool {
        self != Consistency::OrOnly
    }

    pub fn outcome_consistent(self) -> bool {
        self != Consistency::PsOnly
    }
}

impl fmt::Display for Consistency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which nuisances are estimated consistently, and with what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub which_consistent: Consistency,
    /// Learner for consistently estimated nuisances.
    #[serde(default = "LearnerSpec::default_stack")]
    pub consistent: LearnerSpec,
    /// Learner for inconsistently estimated nuisances; main effects only.
    #[serde(default = "LearnerSpec::lasso")]
    pub inconsistent: LearnerSpec,
    /// Replace consistent learners by the true regression functions.
    #[serde(default)]
    pub oracle: bool,
}

impl ScenarioSpec {
    pub fn new(which_consistent: Consistency) -> Self {
        Self {
            which_consistent,
            consistent: LearnerSpec::default_stack(),
            inconsistent: LearnerSpec::lasso(),
            oracle: false,
        }
    }

    pub fn with_oracle(mut self, oracle: bool) -> Self {
        self.oracle = oracle;
        self
    }

    pub fn with_learners(mut self, consistent: LearnerSpec, inconsistent: LearnerSpec) -> Self {
        self.consistent = consistent;
        self.inconsistent = inconsistent;
        self
    }

    pub fn nuisance_config(&self, dgp: &DgpSpec) -> NuisanceConfig {
        let bind = |consistent: bool, truth: KnownFn| {
            if !consistent {
                Nuisance::Learn(self.inconsistent.clone())
            } else if self.oracle {
                Nuisance::Known(truth)
            } else {
                Nuisance::Learn(self.consistent.clone())
            }
        };
        NuisanceConfig {
            propensity: bind(self.which_consistent.propensity_consistent(), dgp.propensity_fn()),
            outcome: bind(self.which_consistent.outcome_consistent(), dgp.outcome_fn()),
            strategy: OutcomeStrategy::Profile,
            nested_split: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dgp: DgpSpec,
    pub scenario: ScenarioSpec,
    pub kinds: Vec<StatisticKind>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    #[serde(default = "default_folds")]
    pub k_folds: usize,
    #[serde(default = "default_inner_fraction")]
    pub inner_fraction: f64,
    #[serde(default = "default_true")]
    pub nested_split: bool,
    #[serde(default)]
    pub strategy: OutcomeStrategy,
    #[serde(default)]
    pub kernel: KernelSpec,
    /// Nominal test level.
    #[serde(default = "default_level")]
    pub level: f64,
    pub seed: u64,
}

fn default_folds() -> usize {
    5
}

fn default_inner_fraction() -> f64 {
    0.5
}

fn default_true() -> bool {
    true
}

fn default_level() -> f64 {
    0.05
}

/// Largest tolerated share of failed replications.
pub const MAX_FAILURE_RATE: f64 = 0.05;

impl ExperimentConfig {
    pub fn new(dgp: DgpSpec, scenario: ScenarioSpec, n_list: Vec<usize>, reps: usize, seed: u64) -> Self {
        Self {
            dgp,
            scenario,
            kinds: StatisticKind::ALL.to_vec(),
            n_list,
            reps,
            k_folds: default_folds(),
            inner_fraction: default_inner_fraction(),
            nested_split: true,
            strategy: OutcomeStrategy::Profile,
            kernel: KernelSpec::default(),
            level: default_level(),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.kernel.validate()?;
        self.scenario.consistent.validate()?;
        self.scenario.inconsistent.validate()?;
        if self.reps == 0 {
            return Err(Error::Parameter("reps must be at least 1".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Parameter("no statistic kinds requested".into()));
        }
        if self.n_list.is_empty() {
            return Err(Error::Parameter("n_list is empty".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Parameter(format!("level must lie in (0, 1), got {}", self.level)));
        }
        for &n in &self.n_list {
            self.dgp.clone().with_n(n).validate()?;
            make_fold_plan(n, self.k_folds, self.inner_fraction, 0)?;
        }
        Ok(())
    }

    fn nuisance_config(&self) -> NuisanceConfig {
        let mut c = self.scenario.nuisance_config(&self.dgp);
        c.strategy = self.strategy;
        c.nested_split = self.nested_split;
        c
    }
}

/// Outcome of one replication, one entry per requested kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Replication {
    pub n: usize,
    pub rep: usize,
    pub results: Vec<std::result::Result<ScoreResult, String>>,
}

/// Seed of replication `rep` at sample size `n`.
pub fn replication_seed(seed: u64, n: usize, rep: usize) -> u64 {
    derive_seed(seed, &[n as u64, rep as u64])
}

/// Runs a single replication; every kind shares one set of nuisance fits.
pub fn replicate(cfg: &ExperimentConfig, n: usize, rep: usize) -> Result<Replication> {
    let s = replication_seed(cfg.seed, n, rep);
    let dgp = cfg.dgp.clone().with_n(n);
    let data = draw(&dgp, derive_seed(s, &[0]))?;
    let plan = make_fold_plan(n, cfg.k_folds, cfg.inner_fraction, derive_seed(s, &[1]))?;
    let nuisances = cfg.nuisance_config();
    let fail = |e: &Error| vec![Err(e.to_string()); cfg.kinds.len()];
    let results = match CrossFitter::new(&data, &plan, &nuisances, &cfg.kernel, derive_seed(s, &[2])) {
        Err(e) => fail(&e),
        Ok(fitter) => match fitter.nuisances(dgp.theta_true, cfg.kinds.contains(&StatisticKind::Drdml)) {
            Err(e) => fail(&e),
            Ok(folds) => cfg
                .kinds
                .iter()
                .map(|&k| crate::score::aggregate(&data, &folds, dgp.theta_true, k).map_err(|e| e.to_string()))
                .collect(),
        },
    };
    Ok(Replication { n, rep, results })
}

/// Replications `reps` at sample size `n`, in index order.
pub fn run_replications(cfg: &ExperimentConfig, n: usize, reps: std::ops::Range<usize>) -> Result<Vec<Replication>> {
    reps.into_par_iter().map(|r| replicate(cfg, n, r)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub kind: StatisticKind,
    pub n: usize,
    pub scenario: Consistency,
    /// Mean of the unscaled statistic `ū`.
    pub bias: f64,
    pub root_n_bias: f64,
    /// Rejection rate at the nominal level.
    pub size: f64,
    /// Monte Carlo variance of `√n·ū` over the mean of `σ̂²`.
    pub mc_var_ratio: f64,
    /// Successful replications entering the metrics.
    pub reps: usize,
    pub failures: usize,
    pub seed: u64,
}

/// Aggregates the `kind_index`-th results of `replications`.
pub fn summarize(
    replications: &[Replication],
    kind_index: usize,
    kind: StatisticKind,
    scenario: Consistency,
    level: f64,
    seed: u64,
) -> Result<MetricRow> {
    let n = replications.first().map_or(0, |r| r.n);
    let ok: Vec<&ScoreResult> = replications.iter().filter_map(|r| r.results[kind_index].as_ref().ok()).collect();
    let failures = replications.len() - ok.len();
    if ok.is_empty() || failures as f64 > MAX_FAILURE_RATE * replications.len() as f64 {
        let first = replications.iter().find_map(|r| r.results[kind_index].as_ref().err());
        return Err(Error::Experiment(format!(
            "{kind} at n={n}: {failures} of {} replications failed{}",
            replications.len(),
            first.map(|e| format!(" (first: {e})")).unwrap_or_default()
        )));
    }
    let root_n = (n as f64).sqrt();
    let u: Vec<f64> = ok.iter().map(|r| r.u_bar).collect();
    let scaled: Vec<f64> = u.iter().map(|v| root_n * v).collect();
    let bias = mean(&u);
    let mean_sigma2 = mean(&ok.iter().map(|r| r.sigma2_hat).collect::<Vec<_>>());
    Ok(MetricRow {
        kind,
        n,
        scenario,
        bias,
        root_n_bias: root_n * bias,
        size: ok.iter().filter(|r| r.rejects(level)).count() as f64 / ok.len() as f64,
        mc_var_ratio: sample_variance(&scaled) / mean_sigma2,
        reps: ok.len(),
        failures,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricTable {
    pub rows: Vec<MetricRow>,
}

/// One point of a plot-data series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub n: usize,
    pub kind: StatisticKind,
    pub metric: String,
    pub value: f64,
}

impl MetricTable {
    pub fn row(&self, kind: StatisticKind, n: usize, scenario: Consistency) -> Option<&MetricRow> {
        self.rows.iter().find(|r| r.kind == kind && r.n == n && r.scenario == scenario)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<()> {
        for row in &self.rows {
            let line = serde_json::to_string(row).map_err(|e| Error::Input(e.to_string()))?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Long-format series for the three plotted metrics of `scenario`.
    pub fn plot_points(&self, scenario: Consistency) -> Vec<PlotPoint> {
        let mut points = Vec::new();
        for row in self.rows.iter().filter(|r| r.scenario == scenario) {
            for (metric, value) in [("root_n_bias", row.root_n_bias), ("size", row.size), ("mc_var_ratio", row.mc_var_ratio)] {
                points.push(PlotPoint { n: row.n, kind: row.kind, metric: metric.into(), value });
            }
        }
        points
    }

    pub fn write_plot_csv<W: Write>(&self, scenario: Consistency, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in self.plot_points(scenario) {
            w.serialize(p)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn scenarios(&self) -> Vec<Consistency> {
        let mut s: Vec<Consistency> = self.rows.iter().map(|r| r.scenario).collect();
        s.sort();
        s.dedup();
        s
    }
}

/// Runs every `(n, kind)` cell of `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<MetricTable> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.n_list {
        let reps = run_replications(cfg, n, 0..cfg.reps)?;
        for (j, &kind) in cfg.kinds.iter().enumerate() {
            rows.push(summarize(&reps, j, kind, cfg.scenario.which_consistent, cfg.level, cfg.seed)?);
        }
    }
    Ok(MetricTable { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp1_draw_is_deterministic_and_binary() {
        let d = DgpSpec::exp1(200);
        let a = draw(&d, 3).unwrap();
        let b = draw(&d, 3).unwrap();
        assert_eq!(a, b);
        assert!(a.a().iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(a.l().column(1).iter().all(|&v| v == 0.0 || v == 1.0));
        assert!(a.l().column(0).iter().all(|&v| (-2.0..2.0).contains(&v)));
        assert_ne!(draw(&d, 4).unwrap(), a);
    }

    #[test]
    fn true_functions() {
        let d = DgpSpec::exp1(10);
        assert_eq!(d.outcome(&[1.0, 1.0]), 1.0);
        assert_eq!(d.propensity(&[0.0, 1.0]), 0.5);
        let e = DgpSpec::exp2(10);
        assert!((e.outcome(&[0.5, 0.25]) - 1.75).abs() < 1e-15);
    }

    #[test]
    fn custom_expression_round_trip() {
        let c = CustomDgp {
            covariates: vec![CovariateLaw::Normal { mean: 0.0, sd: 1.0 }],
            propensity: Expr::Expit(Box::new(Expr::Var(0))),
            outcome: Expr::Add(vec![Expr::Const(1.0), Expr::Sin(Box::new(Expr::Var(0)))]),
            exposure: ExposureLaw::Bernoulli,
            noise_sd: 1.0,
        };
        let d = DgpSpec { experiment: Experiment::Custom(c), theta_true: 0.5, n: 50 };
        let text = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<DgpSpec>(&text).unwrap(), d);
        assert!((d.outcome(&[0.0]) - 1.0).abs() < 1e-15);
        assert_eq!(draw(&d, 1).unwrap().n(), 50);
    }

    #[test]
    fn custom_out_of_range_variable_rejected() {
        let c = CustomDgp {
            covariates: vec![CovariateLaw::Uniform { low: 0.0, high: 1.0 }],
            propensity: Expr::Const(0.5),
            outcome: Expr::Var(1),
            exposure: ExposureLaw::Bernoulli,
            noise_sd: 1.0,
        };
        let d = DgpSpec { experiment: Experiment::Custom(c), theta_true: 0.0, n: 50 };
        assert!(matches!(d.validate(), Err(Error::Parameter(_))));
    }

    #[test]
    fn scenario_bindings() {
        let dgp = DgpSpec::exp1(100);
        for s in Consistency::ALL {
            let cfg = ScenarioSpec::new(s).nuisance_config(&dgp);
            let is_stack = |n: &Nuisance| matches!(n, Nuisance::Learn(l) if *l == LearnerSpec::default_stack());
            assert_eq!(is_stack(&cfg.propensity), s.propensity_consistent());
            assert_eq!(is_stack(&cfg.outcome), s.outcome_consistent());
        }
        let oracle = ScenarioSpec::new(Consistency::PsOnly).with_oracle(true).nuisance_config(&dgp);
        assert!(matches!(oracle.propensity, Nuisance::Known(_)));
        assert!(matches!(oracle.outcome, Nuisance::Learn(_)));
    }

    #[test]
    fn single_rep_size_is_zero_or_one() {
        let mut cfg = ExperimentConfig::new(
            DgpSpec::exp1(0),
            ScenarioSpec::new(Consistency::Both).with_oracle(true),
            vec![200],
            1,
            9,
        );
        cfg.kinds = vec![StatisticKind::Dml];
        let t = run_experiment(&cfg).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.rows[0].size == 0.0 || t.rows[0].size == 1.0);
        assert_eq!(t.rows[0].reps, 1);
    }
}
