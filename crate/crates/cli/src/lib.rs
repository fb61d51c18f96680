//! Command-line front end: `analyze` runs score tests (and optionally test
//! inversion) on a CSV data set, `simulate` runs Monte Carlo experiments.
//!
//! Runs are described by a TOML file; flags override file values. All
//! outputs are staged in temporary files and renamed into place only after
//! the whole run succeeded.

pub mod config;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use thiserror::Error;

use drdml::rng::derive_seed;
use drdml::simulate::{run_experiment, Consistency, ExperimentConfig, MetricTable, ScenarioSpec};
use drdml::{invert_test, load_csv, make_fold_plan, ConfidenceSet, CrossFitter, NuisanceConfig, ScoreResult};

pub use config::{AnalyzeSection, Mode, RunConfig, SimulateSection};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Core(#[from] drdml::Error),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numerical() => EXIT_NUMERICAL,
            _ => EXIT_VALIDATION,
        }
    }

    fn category(&self) -> &'static str {
        match self {
            CliError::Core(e) if e.is_numerical() => "numerical",
            CliError::Output(_) => "output",
            _ => "validation",
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "drdml", version, about = "Doubly robust score tests for the partially linear model")]
pub struct Cli {
    /// Mode to run; overrides `mode` in the config file.
    #[arg(value_enum)]
    pub command: Option<Mode>,
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of available cores.
    #[arg(long, env = "DRDML_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Hypothesized coefficient for `analyze`.
    #[arg(long, allow_hyphen_values = true)]
    pub theta0: Option<f64>,
    /// Build a confidence set by test inversion.
    #[arg(long)]
    pub invert: bool,
    /// Confidence level for `--invert`.
    #[arg(long)]
    pub level: Option<f64>,
    /// Number of cross-fitting folds.
    #[arg(long)]
    pub folds: Option<usize>,
    /// Progress messages on stderr (repeat for more).
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

/// Reads the config file (if any) and applies flag overrides.
pub fn resolve_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
            RunConfig::from_toml(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = cli.command.or(cli.mode) {
        cfg.mode = Some(m);
    }
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    if let Some(k) = cli.folds {
        cfg.k_folds = k;
    }
    if cli.verbose > 0 {
        cfg.verbosity = cli.verbose;
    }
    if cli.theta0.is_some() || cli.invert || cli.level.is_some() {
        let a = cfg.analyze.get_or_insert_with(AnalyzeSection::default);
        if cli.theta0.is_some() {
            a.theta0 = cli.theta0;
        }
        if cli.invert {
            a.invert = true;
        }
        if let Some(l) = cli.level {
            a.level = l;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Writes `bytes` to `dir/name` through a temporary file in `dir`.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> CliResult<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name)).map_err(|e| CliError::Output(e.error))?;
    Ok(())
}

/// Commits all staged outputs; nothing is written unless every file is ready.
fn commit(out: &Path, files: &[(String, Vec<u8>)]) -> CliResult<()> {
    fs::create_dir_all(out)?;
    for (name, bytes) in files {
        write_atomic(out, name, bytes)?;
    }
    Ok(())
}

/// The effective configuration, minus the output location.
fn recorded_config(cfg: &RunConfig) -> CliResult<Vec<u8>> {
    let recorded = RunConfig { out: None, ..cfg.clone() };
    Ok(recorded.to_toml()?.into_bytes())
}

fn jsonl<T: Serialize>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).expect("records serialize");
        out.push(b'\n');
    }
    out
}

#[derive(Debug, Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum AnalyzeRecord {
    Score(ScoreResult),
    ConfidenceSet(ConfidenceSet),
}

fn log(cfg: &RunConfig, msg: impl FnOnce() -> String) {
    if cfg.verbosity > 0 {
        eprintln!("{}", msg());
    }
}

/// Runs score tests and/or test inversion on a data file.
pub fn analyze(cfg: &RunConfig) -> CliResult<Vec<AnalyzeRecord>> {
    let a = cfg.analyze.as_ref().ok_or_else(|| CliError::Validation("missing [analyze] section".into()))?;
    let seed = cfg.seed.expect("validated");
    let data_path = a.data.as_ref().ok_or_else(|| CliError::Validation("analyze needs a data path".into()))?;
    if !data_path.is_file() {
        return Err(CliError::Validation(format!("data file {} not found", data_path.display())));
    }
    let data = load_csv(data_path, &a.schema())?;
    log(cfg, || format!("loaded {} rows with {} covariates", data.n(), data.p()));
    let plan = make_fold_plan(data.n(), cfg.k_folds, cfg.inner_fraction, derive_seed(seed, &[0]))?;
    let nuisances = NuisanceConfig::learned(a.propensity.clone(), a.outcome.clone())
        .with_strategy(cfg.strategy)
        .with_nested_split(cfg.nested_split);
    let fit_seed = derive_seed(seed, &[1]);
    let kinds = cfg.kinds_or(&[drdml::StatisticKind::Drdml]);

    let mut records = Vec::new();
    if let Some(theta0) = a.theta0 {
        let fitter = CrossFitter::new(&data, &plan, &nuisances, &cfg.kernel, fit_seed)?;
        for r in fitter.score_all(theta0, &kinds)? {
            log(cfg, || format!("{}: statistic {:.4}, p = {:.4}", r.statistic_kind, r.standardized, r.p_value));
            records.push(AnalyzeRecord::Score(r));
        }
    }
    if a.invert {
        for &kind in &kinds {
            let set = invert_test(&data, &plan, kind, a.level, &a.search, &nuisances, &cfg.kernel, fit_seed)?;
            log(cfg, || format!("{kind}: point {:.4}, interval [{:.4}, {:.4}]", set.point, set.lower, set.upper));
            records.push(AnalyzeRecord::ConfidenceSet(set));
        }
    }
    Ok(records)
}

/// Runs every configured scenario.
pub fn simulate(cfg: &RunConfig) -> CliResult<MetricTable> {
    let s = cfg.simulate.clone().unwrap_or_default();
    let seed = cfg.seed.expect("validated");
    let mut table = MetricTable::default();
    for &which in &s.scenarios {
        let scenario = ScenarioSpec {
            which_consistent: which,
            consistent: s.consistent.clone(),
            inconsistent: s.inconsistent.clone(),
            oracle: s.oracle,
        };
        let mut exp = ExperimentConfig::new(s.dgp.clone(), scenario, s.n_list.clone(), s.reps, seed);
        exp.kinds = cfg.kinds_or(&drdml::StatisticKind::ALL);
        exp.k_folds = cfg.k_folds;
        exp.inner_fraction = cfg.inner_fraction;
        exp.nested_split = cfg.nested_split;
        exp.strategy = cfg.strategy;
        exp.kernel = cfg.kernel.clone();
        exp.level = s.alpha;
        log(cfg, || format!("scenario {which}: n in {:?}, {} reps", s.n_list, s.reps));
        table.rows.extend(run_experiment(&exp)?.rows);
    }
    Ok(table)
}

pub fn cmd_analyze(cfg: &RunConfig) -> CliResult<()> {
    let records = analyze(cfg)?;
    commit(
        &cfg.output_dir(),
        &[("results.jsonl".into(), jsonl(&records)), ("config.toml".into(), recorded_config(cfg)?)],
    )
}

pub fn cmd_simulate(cfg: &RunConfig) -> CliResult<()> {
    let table = simulate(cfg)?;
    let mut csv = Vec::new();
    table.write_csv(&mut csv)?;
    let mut files = vec![
        ("metrics.csv".to_string(), csv),
        ("metrics.jsonl".to_string(), jsonl(&table.rows)),
        ("config.toml".to_string(), recorded_config(cfg)?),
    ];
    for scenario in table.scenarios() {
        let mut plot = Vec::new();
        table.write_plot_csv(scenario, &mut plot)?;
        files.push((figure_name(scenario), plot));
    }
    commit(&cfg.output_dir(), &files)
}

pub fn figure_name(scenario: Consistency) -> String {
    format!("figure_{}.csv", scenario.name())
}

fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = resolve_config(cli)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Validation(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cfg.mode.expect("validated") {
        Mode::Analyze => cmd_analyze(&cfg),
        Mode::Simulate => cmd_simulate(&cfg),
    })
}

/// Runs the CLI and returns the process exit code. Failures are reported
/// on stderr as a single JSON diagnostic record.
pub fn run(cli: &Cli) -> i32 {
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let code = e.exit_code();
            let record = serde_json::json!({ "error": e.category(), "message": e.to_string(), "exit_code": code });
            eprintln!("{record}");
            code
        }
    }
}
