use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use drdml::simulate::{draw, DgpSpec};
use drdml::{FeatureTransform, LearnerSpec, StatisticKind};
use drdml_cli::{analyze, AnalyzeRecord, AnalyzeSection, Mode, RunConfig};

fn drdml(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drdml")).args(args).env_remove("DRDML_THREADS").output().unwrap()
}

fn write_csv(path: &Path, n: usize, theta: f64, seed: u64) {
    let data = draw(&DgpSpec::exp1(n).with_theta(theta), seed).unwrap();
    let mut text = String::from("y,a,l1,l2\n");
    for i in 0..n {
        let row = data.row(i);
        text.push_str(&format!("{},{},{},{}\n", data.y()[i], data.a()[i], row[0], row[1]));
    }
    fs::write(path, text).unwrap();
}

const SIMULATE: &str = r#"
mode = "simulate"
seed = 17
[simulate]
n_list = [250]
reps = 10
scenarios = ["both"]
[simulate.dgp]
experiment = "exp1"
"#;

#[test]
fn simulate_writes_deterministic_tables() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SIMULATE).unwrap();
    let out1 = dir.path().join("one");
    let out2 = dir.path().join("two");
    let o = drdml(&["--config", cfg.to_str().unwrap(), "--out", out1.to_str().unwrap(), "--threads", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = drdml(&["--config", cfg.to_str().unwrap(), "--out", out2.to_str().unwrap(), "--threads", "3"]);
    assert!(o.status.success());

    let csv = fs::read_to_string(out1.join("metrics.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "kind,n,scenario,bias,root_n_bias,size,mc_var_ratio,reps,failures,seed");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    for row in &rows {
        let fields: Vec<&str> = row.split(',').collect();
        assert_eq!(fields[1], "250");
        assert_eq!(fields[2], "both");
        let used: usize = fields[7].parse().unwrap();
        let failed: usize = fields[8].parse().unwrap();
        assert_eq!(used + failed, 10);
    }
    for name in ["metrics.csv", "metrics.jsonl", "figure_both.csv", "config.toml"] {
        assert!(fs::read(out1.join(name)).unwrap() == fs::read(out2.join(name)).unwrap(), "{name} differs");
    }
    let figure = fs::read_to_string(out1.join("figure_both.csv")).unwrap();
    assert!(figure.starts_with("n,kind,metric,value\n"));
    assert_eq!(fs::read_to_string(out1.join("metrics.jsonl")).unwrap().lines().count(), 4);
}

#[test]
fn recorded_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, SIMULATE).unwrap();
    let first = dir.path().join("first");
    let again = dir.path().join("again");
    assert!(drdml(&["--config", cfg.to_str().unwrap(), "--out", first.to_str().unwrap()]).status.success());
    let recorded = first.join("config.toml");
    assert!(drdml(&["--config", recorded.to_str().unwrap(), "--out", again.to_str().unwrap()]).status.success());
    assert_eq!(fs::read(first.join("metrics.csv")).unwrap(), fs::read(again.join("metrics.csv")).unwrap());
}

#[test]
fn invalid_kind_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("kinds = [\"bogus\"]\n{SIMULATE}")).unwrap();
    let out = dir.path().join("out");
    let o = drdml(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    for k in ["ps", "or", "dml", "drdml"] {
        assert!(err.contains(&format!("`{k}`")), "{err}");
    }
    assert!(!out.exists());
}

#[test]
fn missing_data_file_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "mode = \"analyze\"\nseed = 1\n[analyze]\ndata = \"does-not-exist.csv\"\ntheta0 = 0.0\n").unwrap();
    let o = drdml(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    let diag: serde_json::Value = serde_json::from_slice(o.stderr.trim_ascii()).unwrap();
    assert_eq!(diag["exit_code"], 2);
}

#[test]
fn missing_seed_is_a_validation_error() {
    let o = drdml(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn analyze_with_inversion_reports_the_set() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    write_csv(&data, 300, 1.0, 4);
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!(
            "mode = \"analyze\"\nseed = 5\nstrategy = \"decompose\"\n[analyze]\ndata = {:?}\n\
             [analyze.propensity]\nkind = \"linear\"\n[analyze.outcome]\nkind = \"linear\"\nfeatures = [\"pairwise_interactions\"]\n",
            data.to_str().unwrap()
        ),
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = drdml(&["--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--theta0", "-0.5", "--invert", "--level", "0.9"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("results.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert_eq!(records[0]["record"], "score");
    assert_eq!(records[0]["theta0"], -0.5);
    let set = &records[1];
    assert_eq!(set["record"], "confidence_set");
    assert_eq!(set["level"], 0.9);
    for key in ["point", "lower", "upper"] {
        assert!(set[key].is_f64(), "{key}");
    }
    assert_eq!(set["grid"].as_array().unwrap().len(), 81);
    assert!(set["lower"].as_f64().unwrap() < 1.0 && 1.0 < set["upper"].as_f64().unwrap());
}

#[test]
fn analyze_at_the_truth_rarely_rejects() {
    let dir = tempfile::tempdir().unwrap();
    let mut accepted = 0;
    let runs = 30;
    for seed in 0..runs {
        let data = dir.path().join(format!("d{seed}.csv"));
        write_csv(&data, 1000, 0.7, 100 + seed);
        let cfg = RunConfig {
            mode: Some(Mode::Analyze),
            seed: Some(seed),
            kinds: vec![StatisticKind::Drdml],
            analyze: Some(AnalyzeSection {
                data: Some(data),
                theta0: Some(0.7),
                propensity: LearnerSpec::lasso().with_features(vec![FeatureTransform::PairwiseInteractions]),
                outcome: LearnerSpec::linear().with_features(vec![FeatureTransform::PairwiseInteractions]),
                ..Default::default()
            }),
            ..Default::default()
        };
        cfg.validate().unwrap();
        let records = analyze(&cfg).unwrap();
        let AnalyzeRecord::Score(r) = &records[0] else { panic!("expected a score record") };
        if r.p_value > 0.05 {
            accepted += 1;
        }
    }
    assert!(accepted as f64 >= 0.9 * runs as f64, "{accepted}/{runs}");
}
