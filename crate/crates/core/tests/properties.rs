use drdml::kernel::default_bandwidth_grid;
use drdml::score::{aggregate, psi_star, solve_alpha, solve_beta, NuisanceValues};
use drdml::stats::{normal_cdf, two_sided_p_value};
use drdml::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn finite(range: f64) -> impl Strategy<Value = f64> {
    -range..range
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fold_plan_partitions_units(n in 4usize..300, k in 2usize..8, frac in 0.1f64..0.9, seed in any::<u64>()) {
        prop_assume!(k <= n / 2);
        let plan = make_fold_plan(n, k, frac, seed).unwrap();
        let mut seen = vec![0u8; n];
        for f in plan.folds() {
            for &i in f {
                seen[i] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
        let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for j in 0..k {
            let split = plan.inner_split(j);
            let mut both: Vec<usize> = split.outer.iter().chain(&split.inner).copied().collect();
            both.sort_unstable();
            prop_assert_eq!(both, plan.complement(j));
            prop_assert!(!split.outer.is_empty() && !split.inner.is_empty());
        }
    }

    #[test]
    fn alpha_solves_its_equation(values in prop::collection::vec((finite(5.0), finite(1.0), finite(1.0)), 1..60)) {
        let g_update: Vec<f64> = values.iter().map(|v| v.0).collect();
        let a: Vec<f64> = values.iter().map(|v| v.1).collect();
        let g: Vec<f64> = values.iter().map(|v| v.2).collect();
        let c = solve_alpha(&g_update, &a, &g).unwrap();
        let residual: f64 = (0..a.len()).map(|i| g_update[i] * (a[i] - g[i] - c.value * g_update[i])).sum();
        if !c.degenerate {
            prop_assert!(residual.abs() <= 1e-10, "residual {residual}");
        } else {
            prop_assert_eq!(c.value, 0.0);
        }
    }

    #[test]
    fn beta_solves_its_equation(
        values in prop::collection::vec((finite(5.0), finite(3.0), finite(1.0), finite(2.0)), 1..60),
        theta in finite(3.0),
    ) {
        let m_update: Vec<f64> = values.iter().map(|v| v.0).collect();
        let y: Vec<f64> = values.iter().map(|v| v.1).collect();
        let a: Vec<f64> = values.iter().map(|v| v.2).collect();
        let m: Vec<f64> = values.iter().map(|v| v.3).collect();
        let c = solve_beta(&m_update, &y, &a, theta, &m).unwrap();
        let residual: f64 =
            (0..y.len()).map(|i| m_update[i] * (y[i] - theta * a[i] - m[i] - c.value * m_update[i])).sum();
        if !c.degenerate {
            prop_assert!(residual.abs() <= 1e-10, "residual {residual}");
        }
    }

    #[test]
    fn psi_star_reduces_exactly(y in finite(10.0), a in finite(2.0), g in finite(1.0), m in finite(3.0), theta in finite(3.0)) {
        let nuis = NuisanceValues { g_hat: g, m_hat: m, ..Default::default() };
        prop_assert_eq!(psi_star(y, a, &nuis, theta), (a - g) * (y - theta * a - m));
    }

    #[test]
    fn p_value_is_a_probability(z in -40.0f64..40.0) {
        let p = two_sided_p_value(z);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - 2.0 * (1.0 - normal_cdf(z.abs()))).abs() < 1e-12);
    }

    #[test]
    fn kernel_predictions_stay_in_response_hull(
        pairs in prop::collection::vec((finite(3.0), finite(10.0)), 5..80),
        queries in prop::collection::vec(finite(4.0), 1..20),
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let r: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let fit = nw_fit(&x, &r, &KernelSpec::default(), 1).unwrap();
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in nw_predict(&fit, &queries).unwrap().values {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn bandwidth_grid_scales_with_spread(x in prop::collection::vec(finite(5.0), 3..50), scale in 0.1f64..10.0) {
        let g1 = default_bandwidth_grid(&x);
        let scaled: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let g2 = default_bandwidth_grid(&scaled);
        for (a, b) in g1.iter().zip(&g2) {
            prop_assert!((a * scale - b).abs() <= 1e-9 * b.abs().max(1.0));
        }
    }

    #[test]
    fn naive_equals_dml_with_zero_outcome(rows in prop::collection::vec((finite(3.0), 0u8..2, 0.05f64..0.95), 4..40)) {
        let y: Vec<f64> = rows.iter().map(|r| r.0).collect();
        let a: Vec<f64> = rows.iter().map(|r| f64::from(r.1)).collect();
        let g: Vec<f64> = rows.iter().map(|r| r.2).collect();
        let n = y.len();
        let data = Dataset::new(y, a, DMatrix::from_element(n, 1, 0.0)).unwrap();
        let naive = naive_estimate(&data, &g);
        let dml = dml_point_estimate(&data, &g, &vec![0.0; n]);
        match (naive, dml) {
            (Ok(x), Ok(z)) => prop_assert_eq!(x.to_bits(), z.to_bits()),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one estimator failed"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn stack_cv_loss_beats_every_member(seed in any::<u64>()) {
        use rand::Rng;
        let mut rng = drdml::rng::rng_from_seed(seed);
        let n = 120;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.gen_range(-1.0f64..1.0));
        let y: Vec<f64> = (0..n).map(|i| (2.0 * x[(i, 0)]).sin() + x[(i, 1)] + rng.gen_range(-0.5..0.5)).collect();
        let members = vec![
            LearnerSpec::mean(),
            LearnerSpec::linear(),
            LearnerSpec::knn(vec![5, 15]),
            LearnerSpec::tree_ensemble(vec![20, 60]),
        ];
        let fitted = fit_stack(&members, &x, &y, 5, seed).unwrap();
        let s = fitted.stack_summary().unwrap();
        let best = s.member_cv_losses.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(s.stack_cv_loss <= best + 1e-8, "{} vs {}", s.stack_cv_loss, best);
        prop_assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(s.weights.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn drdml_without_corrections_is_dml(seed in any::<u64>()) {
        let data = drdml::simulate::draw(&drdml::simulate::DgpSpec::exp1(120), seed).unwrap();
        let plan = make_fold_plan(120, 4, 0.5, seed).unwrap();
        let cfg = NuisanceConfig::learned(LearnerSpec::linear(), LearnerSpec::linear());
        let kernel = KernelSpec::default();
        let fitter = CrossFitter::new(&data, &plan, &cfg, &kernel, seed).unwrap();
        let folds: Vec<FoldNuisances> =
            fitter.nuisances(0.3, true).unwrap().iter().map(FoldNuisances::without_corrections).collect();
        let dr = aggregate(&data, &folds, 0.3, StatisticKind::Drdml).unwrap();
        let dml = aggregate(&data, &folds, 0.3, StatisticKind::Dml).unwrap();
        prop_assert_eq!(dr.u_bar.to_bits(), dml.u_bar.to_bits());
        prop_assert_eq!(dr.sigma2_hat.to_bits(), dml.sigma2_hat.to_bits());
        prop_assert_eq!(dr.standardized.to_bits(), dml.standardized.to_bits());
        prop_assert_eq!(dr.p_value.to_bits(), dml.p_value.to_bits());
    }
}
