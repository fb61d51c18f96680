//! Run configuration schema.
//!
//! ```toml
//! mode = "simulate"          # or "analyze"
//! seed = 42                  # required
//! out = "results"
//! kinds = ["ps", "or", "dml", "drdml"]
//! k_folds = 5
//!
//! [simulate]
//! n_list = [250, 1000]
//! reps = 200
//! scenarios = ["both", "ps_only", "or_only"]
//! [simulate.dgp]
//! experiment = "exp1"
//!
//! [analyze]
//! data = "data.csv"
//! y = "y"
//! a = "a"
//! theta0 = 0.0
//! invert = true
//! level = 0.95
//! ```

use std::path::PathBuf;

use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use drdml::simulate::{Consistency, DgpSpec};
use drdml::{CsvSchema, KernelSpec, LearnerSpec, OutcomeStrategy, SearchConfig, StatisticKind};

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Analyze,
    Simulate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    /// Statistics to compute; empty selects the mode's default.
    pub kinds: Vec<StatisticKind>,
    pub k_folds: usize,
    pub inner_fraction: f64,
    pub nested_split: bool,
    pub strategy: OutcomeStrategy,
    pub kernel: KernelSpec,
    pub verbosity: u8,
    pub analyze: Option<AnalyzeSection>,
    pub simulate: Option<SimulateSection>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            seed: None,
            out: None,
            kinds: Vec::new(),
            k_folds: 5,
            inner_fraction: 0.5,
            nested_split: true,
            strategy: OutcomeStrategy::Profile,
            kernel: KernelSpec::default(),
            verbosity: 0,
            analyze: None,
            simulate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeSection {
    pub data: Option<PathBuf>,
    pub y: String,
    pub a: String,
    /// Empty means every other column.
    pub covariates: Vec<String>,
    pub theta0: Option<f64>,
    pub invert: bool,
    /// Confidence level of the inverted set.
    pub level: f64,
    pub search: SearchConfig,
    pub propensity: LearnerSpec,
    pub outcome: LearnerSpec,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        Self {
            data: None,
            y: "y".into(),
            a: "a".into(),
            covariates: Vec::new(),
            theta0: None,
            invert: false,
            level: 0.95,
            search: SearchConfig::default(),
            propensity: LearnerSpec::default_stack(),
            outcome: LearnerSpec::default_stack(),
        }
    }
}

impl AnalyzeSection {
    pub fn schema(&self) -> CsvSchema {
        CsvSchema::new(self.y.clone(), self.a.clone(), self.covariates.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub dgp: DgpSpec,
    pub scenarios: Vec<Consistency>,
    pub n_list: Vec<usize>,
    pub reps: usize,
    /// Nominal test level.
    pub alpha: f64,
    /// Learner for consistently estimated nuisances.
    pub consistent: LearnerSpec,
    /// Learner for inconsistently estimated nuisances.
    pub inconsistent: LearnerSpec,
    /// Use the true regression functions for consistent nuisances.
    pub oracle: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            dgp: DgpSpec::exp1(1000),
            scenarios: Consistency::ALL.to_vec(),
            n_list: vec![250, 1000],
            reps: 200,
            alpha: 0.05,
            consistent: LearnerSpec::default_stack(),
            inconsistent: LearnerSpec::lasso(),
            oracle: false,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Validation(format!("invalid config: {}", e.message())))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| CliError::Validation(format!("cannot serialize config: {e}")))
    }

    pub fn output_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("drdml-out"))
    }

    pub fn kinds_or(&self, default: &[StatisticKind]) -> Vec<StatisticKind> {
        if self.kinds.is_empty() {
            default.to_vec()
        } else {
            self.kinds.clone()
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let invalid = |m: String| Err(CliError::Validation(m));
        let Some(mode) = self.mode else {
            return invalid("no mode given; use `analyze` or `simulate`".into());
        };
        if self.seed.is_none() {
            return invalid("a seed is required (config `seed` or --seed)".into());
        }
        if self.k_folds < 2 {
            return invalid(format!("k_folds must be at least 2, got {}", self.k_folds));
        }
        if !(self.inner_fraction > 0.0 && self.inner_fraction < 1.0) {
            return invalid(format!("inner_fraction must lie in (0, 1), got {}", self.inner_fraction));
        }
        self.kernel.validate()?;
        match mode {
            Mode::Analyze => {
                let Some(a) = &self.analyze else {
                    return invalid("analyze mode needs an [analyze] section".into());
                };
                if a.data.is_none() {
                    return invalid("analyze mode needs `data`".into());
                }
                if a.theta0.is_none() && !a.invert {
                    return invalid("give `theta0` and/or request inversion".into());
                }
                if !(a.level > 0.0 && a.level < 1.0) {
                    return invalid(format!("level must lie in (0, 1), got {}", a.level));
                }
                if a.theta0.is_some_and(|t| !t.is_finite()) {
                    return invalid("theta0 must be finite".into());
                }
                a.search.validate()?;
                a.propensity.validate()?;
                a.outcome.validate()?;
            }
            Mode::Simulate => {
                let s = self.simulate.clone().unwrap_or_default();
                if s.scenarios.is_empty() || s.n_list.is_empty() || s.reps == 0 {
                    return invalid("simulate needs scenarios, n_list and reps >= 1".into());
                }
                if !(s.alpha > 0.0 && s.alpha < 1.0) {
                    return invalid(format!("alpha must lie in (0, 1), got {}", s.alpha));
                }
                s.consistent.validate()?;
                s.inconsistent.validate()?;
                for &n in &s.n_list {
                    s.dgp.clone().with_n(n).validate()?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let cfg = RunConfig {
            mode: Some(Mode::Simulate),
            seed: Some(3),
            simulate: Some(SimulateSection::default()),
            analyze: Some(AnalyzeSection { data: Some("d.csv".into()), theta0: Some(1.5), ..Default::default() }),
            ..Default::default()
        };
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_kind_lists_alternatives() {
        let err = RunConfig::from_toml("mode = \"simulate\"\nseed = 1\nkinds = [\"foo\"]").unwrap_err().to_string();
        for k in ["ps", "or", "dml", "drdml"] {
            assert!(err.contains(k), "{err}");
        }
    }

    #[test]
    fn seed_is_mandatory() {
        let cfg = RunConfig { mode: Some(Mode::Simulate), ..Default::default() };
        assert!(cfg.validate().unwrap_err().to_string().contains("seed"));
    }

    #[test]
    fn learner_specs_parse_from_toml() {
        let text = r#"
mode = "simulate"
seed = 9
[simulate]
n_list = [100]
reps = 2
[simulate.dgp]
experiment = "exp2"
[simulate.consistent]
kind = "knn"
neighbours = [5, 10]
"#;
        let cfg = RunConfig::from_toml(text).unwrap();
        let s = cfg.simulate.unwrap();
        assert_eq!(s.consistent, LearnerSpec::knn(vec![5, 10]));
        assert_eq!(s.dgp, DgpSpec::exp2(1000));
    }
}
