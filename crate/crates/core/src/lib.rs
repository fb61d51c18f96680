//! Doubly robust score tests for the treatment coefficient of the partially
//! linear model `Y = θA + m(L) + ε`.
//!
//! The crate is organised bottom-up:
//!
//! - [`dataset`]: sample representation, CSV ingestion and cross-fitting fold plans.
//! - [`learners`]: regression learners for the nuisance functions `E(A|L)` and `E(Y-θA|L)`.
//! - [`kernel`]: univariate Nadaraya-Watson smoothing for the auxiliary corrections.
//! - [`score`]: the PS, OR, DML and DR-DML score statistics under cross-fitting.
//! - [`inference`]: closed-form estimators and confidence sets by test inversion.
//! - [`simulate`]: data-generating processes and the Monte Carlo driver.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod learners;
pub mod rng;
pub mod score;
pub mod simulate;
pub mod stats;

pub use dataset::{load_csv, make_fold_plan, CsvSchema, Dataset, FoldPlan, InnerSplit};
pub use error::{Error, Result};
pub use inference::{
    dml_point_estimate, invert_test, naive_estimate, ConfidenceSet, SearchConfig,
};
pub use kernel::{nw_fit, nw_predict, Bandwidth, KernelFit, KernelFunction, KernelSpec};
pub use learners::{fit, fit_stack, predict, FeatureTransform, FittedLearner, LearnerKind, LearnerSpec};
pub use score::{
    score_test, CrossFitter, FoldNuisances, KnownFn, Nuisance, NuisanceConfig, OutcomeStrategy, ScoreResult,
    StatisticKind,
};
pub use simulate::{draw, run_experiment, DgpSpec, ExperimentConfig, MetricTable, ScenarioSpec};
