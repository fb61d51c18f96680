//! Cross-validated convex stacking of member learners.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{clamp_probabilities, fit as fit_member, fold_labels, is_binary, predict, select, split_by_label};
use super::{FittedLearner, LearnerSpec};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq)]
pub struct StackSummary {
    /// Names of the surviving members, aligned with `weights`.
    pub members: Vec<String>,
    /// Simplex weights.
    pub weights: Vec<f64>,
    /// Out-of-fold mean squared error of each surviving member.
    pub member_cv_losses: Vec<f64>,
    /// Out-of-fold mean squared error of the weighted combination.
    pub stack_cv_loss: f64,
    /// Members dropped because a fit failed, with the reason.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone)]
pub(crate) struct StackModel {
    fitted: Vec<FittedLearner>,
    pub summary: StackSummary,
}

impl StackModel {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.nrows()];
        for (m, &w) in self.fitted.iter().zip(&self.summary.weights) {
            if w == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(predict(m, x)?) {
                *o += w * p;
            }
        }
        Ok(out)
    }
}

/// Fits a stack of `members` on `(x, targets)`.
pub fn fit_stack(
    members: &[LearnerSpec],
    x: &DMatrix<f64>,
    targets: &[f64],
    cv_folds: usize,
    seed: u64,
) -> Result<FittedLearner> {
    let spec = LearnerSpec::stack(members.to_vec()).with_cv_folds(cv_folds);
    super::fit(&spec, x, targets, seed)
}

pub(crate) fn fit(
    members: &[LearnerSpec],
    x: &DMatrix<f64>,
    y: &[f64],
    cv_folds: usize,
    seed: u64,
) -> Result<StackModel> {
    let n = y.len();
    let binary = is_binary(y);
    let labels = fold_labels(n, cv_folds, derive_seed(seed, &[0]));
    let n_folds = labels.iter().max().map_or(1, |m| m + 1);

    // Level-one data: out-of-fold predictions per member.
    let mut level_one: Vec<Option<Vec<f64>>> = vec![Some(vec![0.0; n]); members.len()];
    let mut failures = Vec::new();
    for f in 0..n_folds {
        let (train, test) = split_by_label(&labels, f);
        if train.len() < 2 || test.is_empty() {
            continue;
        }
        let tx = x.select_rows(&train);
        let ty = select(y, &train);
        let vx = x.select_rows(&test);
        for (j, spec) in members.iter().enumerate() {
            let Some(column) = level_one[j].as_mut() else { continue };
            let result = fit_member(spec, &tx, &ty, derive_seed(seed, &[1, j as u64, f as u64]))
                .and_then(|m| predict(&m, &vx));
            match result {
                Ok(pred) => {
                    for (&i, p) in test.iter().zip(pred) {
                        column[i] = p;
                    }
                }
                Err(e) => {
                    failures.push(format!("{} (member {j}): {e}", spec.kind.name()));
                    level_one[j] = None;
                }
            }
        }
    }

    let mut fitted = Vec::new();
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for (j, spec) in members.iter().enumerate() {
        let Some(col) = level_one[j].take() else { continue };
        match fit_member(spec, x, y, derive_seed(seed, &[2, j as u64])) {
            Ok(m) => {
                fitted.push(m);
                names.push(spec.kind.name().to_owned());
                columns.push(col);
            }
            Err(e) => failures.push(format!("{} (member {j}): {e}", spec.kind.name())),
        }
    }
    if fitted.is_empty() {
        return Err(Error::StackFailed(failures));
    }

    let member_cv_losses: Vec<f64> = columns.iter().map(|c| mse(y, c)).collect();
    let weights = simplex_least_squares(&columns, y);
    let mut combined: Vec<f64> =
        (0..n).map(|i| columns.iter().zip(&weights).map(|(c, w)| w * c[i]).sum()).collect();
    if binary {
        clamp_probabilities(&mut combined);
    }
    let stack_cv_loss = mse(y, &combined);

    Ok(StackModel {
        fitted,
        summary: StackSummary { members: names, weights, member_cv_losses, stack_cv_loss, failures },
    })
}

fn mse(y: &[f64], pred: &[f64]) -> f64 {
    y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(v: &[f64]) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumulative += uk;
        let t = (cumulative - 1.0) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    v.iter().map(|x| (x - tau).max(0.0)).collect()
}

/// Minimizes `(1/n)‖y - Σ w_j c_j‖²` over the simplex by accelerated projected
/// gradient, started from the best single member. Steps that would raise the
/// objective restart the momentum, so the result never loses to a vertex.
pub(crate) fn simplex_least_squares(columns: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let m = columns.len();
    let n = y.len() as f64;
    let q = DMatrix::from_fn(m, m, |a, b| columns[a].iter().zip(&columns[b]).map(|(u, v)| u * v).sum::<f64>() / n);
    let c: Vec<f64> = columns.iter().map(|col| col.iter().zip(y).map(|(u, v)| u * v).sum::<f64>() / n).collect();
    let yy = y.iter().map(|v| v * v).sum::<f64>() / n;
    let objective = |w: &[f64]| {
        let mut quad = 0.0;
        for a in 0..m {
            for b in 0..m {
                quad += w[a] * q[(a, b)] * w[b];
            }
        }
        quad - 2.0 * w.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() + yy
    };
    let gradient = |w: &[f64]| -> Vec<f64> {
        (0..m).map(|a| 2.0 * ((0..m).map(|b| q[(a, b)] * w[b]).sum::<f64>() - c[a])).collect()
    };

    let start = (0..m)
        .map(|j| {
            let mut e = vec![0.0; m];
            e[j] = 1.0;
            (objective(&e), e)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, e)| e)
        .expect("at least one member");
    if m == 1 {
        return start;
    }
    let lipschitz = 2.0 * SymmetricEigen::new(q.clone()).eigenvalues.max().max(1e-300);
    let step = 1.0 / lipschitz;

    let mut x = start.clone();
    let mut fx = objective(&x);
    let mut z = x.clone();
    let mut t: f64 = 1.0;
    for _ in 0..20_000 {
        let g = gradient(&z);
        let next = project_simplex(&z.iter().zip(&g).map(|(zi, gi)| zi - step * gi).collect::<Vec<_>>());
        let f_next = objective(&next);
        if f_next > fx {
            // Restart from the current iterate with a plain projected step.
            t = 1.0;
            let g = gradient(&x);
            let plain = project_simplex(&x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect::<Vec<_>>());
            let f_plain = objective(&plain);
            if f_plain >= fx {
                break;
            }
            let moved = plain.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            x = plain;
            fx = f_plain;
            z = x.clone();
            if moved < 1e-14 {
                break;
            }
            continue;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let momentum = (t - 1.0) / t_next;
        let moved = next.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        z = next.iter().zip(&x).map(|(a, b)| a + momentum * (a - b)).collect();
        x = next;
        fx = f_next;
        t = t_next;
        if moved < 1e-14 {
            break;
        }
    }
    x
}
