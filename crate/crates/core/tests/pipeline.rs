use drdml::simulate::{draw, Consistency, DgpSpec, ExperimentConfig, ScenarioSpec};
use drdml::stats::normal_quantile;
use drdml::*;
use nalgebra::DMatrix;

fn linear_config() -> NuisanceConfig {
    NuisanceConfig::learned(LearnerSpec::linear(), LearnerSpec::linear())
}

#[test]
fn correction_equations_hold_on_every_fold() {
    let data = draw(&DgpSpec::exp1(400), 11).unwrap();
    let plan = make_fold_plan(400, 5, 0.5, 3).unwrap();
    let cfg = NuisanceConfig::learned(LearnerSpec::lasso(), LearnerSpec::linear());
    let kernel = KernelSpec::default();
    let fitter = CrossFitter::new(&data, &plan, &cfg, &kernel, 5).unwrap();
    let theta0 = 0.25;
    for f in fitter.nuisances(theta0, true).unwrap() {
        let (y, a) = (data.y(), data.a());
        let alpha_residual: f64 = f
            .indices
            .iter()
            .enumerate()
            .map(|(j, &i)| f.g_update[j] * (a[i] - f.g_hat[j] - f.alpha * f.g_update[j]))
            .sum();
        let beta_residual: f64 = f
            .indices
            .iter()
            .enumerate()
            .map(|(j, &i)| f.m_update[j] * (y[i] - theta0 * a[i] - f.m_hat[j] - f.beta * f.m_update[j]))
            .sum();
        assert!(alpha_residual.abs() <= 1e-10, "{alpha_residual}");
        assert!(beta_residual.abs() <= 1e-10, "{beta_residual}");
        assert!(f.bandwidths.is_some());
    }
}

#[test]
fn location_shift_leaves_statistic_unchanged() {
    let data = draw(&DgpSpec::exp1(300), 2).unwrap();
    let shifted_y: Vec<f64> = data.y().iter().map(|v| v + 7.5).collect();
    let shifted = Dataset::new(shifted_y, data.a().to_vec(), data.l().clone()).unwrap();
    let plan = make_fold_plan(300, 5, 0.5, 9).unwrap();
    let kernel = KernelSpec::default();
    for kind in [StatisticKind::Dml, StatisticKind::Drdml] {
        let a = score_test(&data, &plan, 0.4, kind, &linear_config(), &kernel, 1).unwrap();
        let b = score_test(&shifted, &plan, 0.4, kind, &linear_config(), &kernel, 1).unwrap();
        assert!((a.standardized - b.standardized).abs() < 1e-8, "{kind}: {} vs {}", a.standardized, b.standardized);
    }
}

#[test]
fn permutation_of_units_is_equivariant() {
    let data = draw(&DgpSpec::exp1(200), 4).unwrap();
    let plan = make_fold_plan(200, 4, 0.5, 8).unwrap();
    let order: Vec<usize> = (0..200).rev().collect();
    let permuted = data.reordered(&order).unwrap();
    let permuted_plan = plan.reindexed(&order).unwrap();
    let kernel = KernelSpec::fixed(KernelFunction::Epanechnikov, 0.3);
    let a = score_test(&data, &plan, 0.0, StatisticKind::Drdml, &linear_config(), &kernel, 1).unwrap();
    let b = score_test(&permuted, &permuted_plan, 0.0, StatisticKind::Drdml, &linear_config(), &kernel, 1).unwrap();
    assert!((a.standardized - b.standardized).abs() < 1e-8);
    assert!((a.sigma2_hat - b.sigma2_hat).abs() < 1e-10);
}

#[test]
fn invalid_learner_spec_is_rejected_up_front() {
    let l = DMatrix::from_fn(40, 1, |i, _| i as f64);
    let data = Dataset::new((0..40).map(|i| i as f64).collect(), vec![1.0; 40], l).unwrap();
    let plan = make_fold_plan(40, 2, 0.5, 0).unwrap();
    let bad = LearnerSpec::knn(vec![]);
    let cfg = NuisanceConfig::learned(bad, LearnerSpec::linear());
    let err = score_test(&data, &plan, 0.0, StatisticKind::Dml, &cfg, &KernelSpec::default(), 0).unwrap_err();
    assert!(matches!(err, Error::Parameter(_)), "{err}");
}

#[test]
fn oracle_nuisances_give_standard_normal_statistic() {
    let dgp = DgpSpec::exp1(500);
    let scenario = ScenarioSpec::new(Consistency::Both).with_oracle(true);
    let mut cfg = ExperimentConfig::new(dgp, scenario, vec![500], 1000, 2024);
    cfg.kinds = vec![StatisticKind::Dml, StatisticKind::Drdml];
    let table = run_experiment(&cfg).unwrap();
    for row in &table.rows {
        assert!((0.03..=0.07).contains(&row.size), "{:?}", row);
        assert!((0.85..=1.15).contains(&row.mc_var_ratio), "{:?}", row);
    }
}

#[test]
fn inversion_contracts() {
    let dgp = DgpSpec::exp1(300).with_theta(1.0);
    let data = draw(&dgp, 5).unwrap();
    let plan = make_fold_plan(300, 5, 0.5, 6).unwrap();
    let cfg = NuisanceConfig::learned(LearnerSpec::linear(), LearnerSpec::linear().with_features(vec![FeatureTransform::PairwiseInteractions]))
        .with_strategy(OutcomeStrategy::Decompose);
    let kernel = KernelSpec::default();
    let search = SearchConfig::default();
    let set = invert_test(&data, &plan, StatisticKind::Drdml, 0.95, &search, &cfg, &kernel, 3).unwrap();
    assert!(set.bracketing_ok);
    assert!(set.lower <= set.point && set.point <= set.upper);
    let z = normal_quantile(0.975);
    let fitter = CrossFitter::new(&data, &plan, &cfg, &kernel, 3).unwrap();
    let at = |t: f64| fitter.score(t, StatisticKind::Drdml).unwrap().standardized;
    assert!(at(set.point).abs() <= 0.01);
    assert!((at(set.lower) - z).abs() <= 0.01, "{}", at(set.lower));
    assert!((at(set.upper) + z).abs() <= 0.01, "{}", at(set.upper));
    if !set.multiple_regions {
        for &(t, v) in &set.grid {
            assert_eq!(set.lower < t && t < set.upper, v.abs() <= z, "duality fails at {t}");
        }
    }
    assert_eq!(set.grid.len(), 81);
    let again = invert_test(&data, &plan, StatisticKind::Drdml, 0.95, &search, &cfg, &kernel, 3).unwrap();
    assert_eq!(set, again);
}

#[test]
fn profile_and_decompose_agree_for_linear_learners() {
    let data = draw(&DgpSpec::exp1(250).with_theta(0.5), 1).unwrap();
    let plan = make_fold_plan(250, 5, 0.5, 1).unwrap();
    let kernel = KernelSpec::default();
    let profile = linear_config();
    let decompose = linear_config().with_strategy(OutcomeStrategy::Decompose);
    let a = score_test(&data, &plan, 0.7, StatisticKind::Dml, &profile, &kernel, 0).unwrap();
    let b = score_test(&data, &plan, 0.7, StatisticKind::Dml, &decompose, &kernel, 0).unwrap();
    assert!((a.standardized - b.standardized).abs() < 1e-8);
}

#[test]
fn exp1_laws() {
    let data = draw(&DgpSpec::exp1(100_000), 77).unwrap();
    let l2 = data.l().column(1);
    let p = l2.iter().sum::<f64>() / 1e5;
    assert!((0.49..=0.51).contains(&p), "{p}");
    let (mut s, mut c) = (0.0, 0.0);
    for i in 0..data.n() {
        if (data.l()[(i, 0)] * data.l()[(i, 1)]).abs() < 0.05 {
            s += data.y()[i];
            c += 1.0;
        }
    }
    assert!((s / c + 1.0).abs() < 0.05, "{}", s / c);
    let rate = data.a().iter().sum::<f64>() / 1e5;
    let dgp = DgpSpec::exp1(10);
    let expected = (0..data.n()).map(|i| dgp.propensity(&data.row(i))).sum::<f64>() / 1e5;
    assert!((rate - expected).abs() < 0.01);
}

#[test]
fn exp2_noise_has_unit_variance() {
    let dgp = DgpSpec::exp2(100_000);
    let data = draw(&dgp, 78).unwrap();
    let resid: Vec<f64> = (0..data.n()).map(|i| data.y()[i] - dgp.outcome(&data.row(i))).collect();
    let v = drdml::stats::sample_variance(&resid);
    assert!((0.97..=1.03).contains(&v), "{v}");
}

#[test]
fn experiments_are_reproducible() {
    let scenario = ScenarioSpec::new(Consistency::PsOnly)
        .with_learners(LearnerSpec::linear().with_features(vec![FeatureTransform::PairwiseInteractions]), LearnerSpec::lasso());
    let cfg = ExperimentConfig::new(DgpSpec::exp1(0), scenario, vec![200], 6, 31);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    let mut csv = Vec::new();
    a.write_csv(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert!(text.starts_with("kind,n,scenario,bias,root_n_bias,size,mc_var_ratio,reps,failures,seed\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn stack_favours_the_true_model() {
    use rand::Rng;
    let mut rng = drdml::rng::rng_from_seed(12);
    let n = 2000;
    let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0f64..1.0));
    let y: Vec<f64> = (0..n).map(|i| 1.0 + 2.0 * x[(i, 0)] - x[(i, 1)] + 0.3 * rng.gen_range(-1.0..1.0)).collect();
    let fitted = fit_stack(&[LearnerSpec::linear(), LearnerSpec::mean()], &x, &y, 5, 3).unwrap();
    let w = &fitted.stack_summary().unwrap().weights;
    assert!(w[0] >= 0.9, "{w:?}");
}
