//! L1-penalized least squares and logistic regression by coordinate descent.
//!
//! Columns are standardized to mean 0 and unit variance before fitting and the
//! intercept is unpenalized. The objectives are
//!
//! - gaussian: `(1/2n) Σ (y - b0 - zᵀb)² + λ‖b‖₁`
//! - logistic: `-(1/n) Σ [y η - log(1 + e^η)] + λ‖b‖₁`, `η = b0 + zᵀb`
//!
//! and coordinate sweeps stop once no coefficient moves by more than
//! [`TOLERANCE`].

use nalgebra::DMatrix;

use super::column_scaling;
use crate::stats::expit;

const TOLERANCE: f64 = 1e-8;
const MAX_SWEEPS: usize = 100_000;
const MAX_NEWTON: usize = 200;

#[derive(Debug, Clone)]
pub(crate) struct LassoModel {
    means: Vec<f64>,
    sds: Vec<f64>,
    /// Columns with zero spread; their coefficient is pinned to zero.
    active: Vec<bool>,
    intercept: f64,
    coef: Vec<f64>,
    lambda: f64,
    logistic: bool,
}

struct Standardized {
    /// Column-major standardized design.
    cols: Vec<Vec<f64>>,
    means: Vec<f64>,
    sds: Vec<f64>,
    active: Vec<bool>,
}

fn standardize(z: &DMatrix<f64>) -> Standardized {
    let (means, sds) = column_scaling(z);
    let n = z.nrows() as f64;
    let mut active = Vec::with_capacity(z.ncols());
    let cols = z
        .column_iter()
        .enumerate()
        .map(|(j, c)| {
            let m = c.sum() / n;
            let spread = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
            active.push(spread > 1e-12);
            c.iter().map(|v| (v - means[j]) / sds[j]).collect()
        })
        .collect();
    Standardized { cols, means, sds, active }
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Penalty values to search, in decreasing order.
pub(crate) fn penalty_grid(
    z: &DMatrix<f64>,
    y: &[f64],
    explicit: &[f64],
    path_len: usize,
    min_ratio: f64,
) -> Vec<f64> {
    if !explicit.is_empty() {
        let mut g = explicit.to_vec();
        g.sort_by(|a, b| b.total_cmp(a));
        return g;
    }
    let s = standardize(z);
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    // Same gradient for both losses at the intercept-only fit.
    let lambda_max = s
        .cols
        .iter()
        .zip(&s.active)
        .filter(|(_, &a)| a)
        .map(|(c, _)| (c.iter().zip(y).map(|(x, v)| x * (v - ybar)).sum::<f64>() / n).abs())
        .fold(0.0, f64::max);
    if lambda_max <= 0.0 || path_len == 1 {
        return vec![lambda_max.max(0.0)];
    }
    (0..path_len)
        .map(|i| lambda_max * min_ratio.powf(i as f64 / (path_len - 1) as f64))
        .collect()
}

/// Fits the lasso at every penalty in `lambdas` (decreasing), warm-starting
/// each fit from the previous solution.
pub(crate) fn fit_path(z: &DMatrix<f64>, y: &[f64], logistic: bool, lambdas: &[f64]) -> Vec<LassoModel> {
    let s = standardize(z);
    let p = s.cols.len();
    let n = y.len() as f64;
    let ybar = y.iter().sum::<f64>() / n;
    let mut b = vec![0.0; p];
    let mut b0 = if logistic {
        let q = ybar.clamp(1e-6, 1.0 - 1e-6);
        (q / (1.0 - q)).ln()
    } else {
        ybar
    };
    lambdas
        .iter()
        .map(|&lambda| {
            if logistic {
                logistic_cd(&s, y, lambda, &mut b0, &mut b);
            } else {
                gaussian_cd(&s, y, lambda, &mut b0, &mut b);
            }
            LassoModel {
                means: s.means.clone(),
                sds: s.sds.clone(),
                active: s.active.clone(),
                intercept: b0,
                coef: b.clone(),
                lambda,
                logistic,
            }
        })
        .collect()
}

fn gaussian_cd(s: &Standardized, y: &[f64], lambda: f64, b0: &mut f64, b: &mut [f64]) {
    let n = y.len() as f64;
    // Standardized columns have mean zero, so the intercept is the target mean.
    *b0 = y.iter().sum::<f64>() / n;
    let mut r: Vec<f64> = y.iter().map(|v| v - *b0).collect();
    for (j, c) in s.cols.iter().enumerate() {
        if b[j] != 0.0 {
            for (ri, x) in r.iter_mut().zip(c) {
                *ri -= x * b[j];
            }
        }
    }
    for _ in 0..MAX_SWEEPS {
        let mut max_delta: f64 = 0.0;
        for (j, c) in s.cols.iter().enumerate() {
            if !s.active[j] {
                b[j] = 0.0;
                continue;
            }
            let rho = c.iter().zip(&r).map(|(x, ri)| x * ri).sum::<f64>() / n + b[j];
            let new = soft_threshold(rho, lambda);
            let delta = new - b[j];
            if delta != 0.0 {
                for (ri, x) in r.iter_mut().zip(c) {
                    *ri -= x * delta;
                }
                b[j] = new;
            }
            max_delta = max_delta.max(delta.abs());
        }
        if max_delta < TOLERANCE {
            break;
        }
    }
}

fn logistic_objective(s: &Standardized, y: &[f64], lambda: f64, b0: f64, b: &[f64]) -> f64 {
    let n = y.len();
    let mut nll = 0.0;
    for i in 0..n {
        let eta = b0 + s.cols.iter().zip(b).map(|(c, bj)| c[i] * bj).sum::<f64>();
        // log(1 + e^η) computed stably.
        let softplus = if eta > 0.0 { eta + (-eta).exp().ln_1p() } else { eta.exp().ln_1p() };
        nll += softplus - y[i] * eta;
    }
    nll / n as f64 + lambda * b.iter().map(|v| v.abs()).sum::<f64>()
}

/// Proximal Newton: each outer step solves the penalized weighted least
/// squares approximation by coordinate descent, then backtracks until the
/// objective does not increase.
fn logistic_cd(s: &Standardized, y: &[f64], lambda: f64, b0: &mut f64, b: &mut [f64]) {
    let n = y.len();
    let nf = n as f64;
    let p = b.len();
    let mut eta = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut work = vec![0.0; n];
    let mut obj = logistic_objective(s, y, lambda, *b0, b);
    for _ in 0..MAX_NEWTON {
        for i in 0..n {
            eta[i] = *b0 + s.cols.iter().zip(b.iter()).map(|(c, bj)| c[i] * bj).sum::<f64>();
            let prob = expit(eta[i]);
            w[i] = (prob * (1.0 - prob)).max(1e-5);
            work[i] = eta[i] + (y[i] - prob) / w[i];
        }
        let wsum: f64 = w.iter().sum();
        let col_scale: Vec<f64> =
            s.cols.iter().map(|c| c.iter().zip(&w).map(|(x, wi)| wi * x * x).sum::<f64>() / nf).collect();

        let mut nb0 = *b0;
        let mut nb = b.to_vec();
        // Residual of the working response under the candidate coefficients.
        let mut r: Vec<f64> = (0..n).map(|i| work[i] - eta[i]).collect();
        for _ in 0..MAX_SWEEPS {
            let mut max_delta: f64 = 0.0;
            let shift = r.iter().zip(&w).map(|(ri, wi)| ri * wi).sum::<f64>() / wsum;
            if shift != 0.0 {
                nb0 += shift;
                r.iter_mut().for_each(|ri| *ri -= shift);
                max_delta = max_delta.max(shift.abs());
            }
            for j in 0..p {
                if !s.active[j] || col_scale[j] <= 0.0 {
                    nb[j] = 0.0;
                    continue;
                }
                let c = &s.cols[j];
                let rho = (0..n).map(|i| w[i] * c[i] * r[i]).sum::<f64>() / nf + col_scale[j] * nb[j];
                let new = soft_threshold(rho, lambda) / col_scale[j];
                let delta = new - nb[j];
                if delta != 0.0 {
                    for i in 0..n {
                        r[i] -= c[i] * delta;
                    }
                    nb[j] = new;
                }
                max_delta = max_delta.max(delta.abs());
            }
            if max_delta < TOLERANCE {
                break;
            }
        }

        let mut step = 1.0;
        let (mut cand0, mut cand) = (nb0, nb.clone());
        let mut cand_obj = logistic_objective(s, y, lambda, cand0, &cand);
        while cand_obj > obj + 1e-15 && step > 1e-10 {
            step *= 0.5;
            cand0 = *b0 + step * (nb0 - *b0);
            cand = b.iter().zip(&nb).map(|(o, v)| o + step * (v - o)).collect();
            cand_obj = logistic_objective(s, y, lambda, cand0, &cand);
        }
        if cand_obj > obj + 1e-15 {
            break;
        }
        let change = (cand0 - *b0)
            .abs()
            .max(cand.iter().zip(b.iter()).map(|(a, o)| (a - o).abs()).fold(0.0, f64::max));
        *b0 = cand0;
        b.copy_from_slice(&cand);
        obj = cand_obj;
        if change < TOLERANCE {
            break;
        }
    }
}

impl LassoModel {
    fn linear_predictor(&self, z: &DMatrix<f64>) -> Vec<f64> {
        (0..z.nrows())
            .map(|i| {
                self.intercept
                    + self
                        .coef
                        .iter()
                        .enumerate()
                        .map(|(j, b)| b * (z[(i, j)] - self.means[j]) / self.sds[j])
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn predict(&self, z: &DMatrix<f64>) -> Vec<f64> {
        let eta = self.linear_predictor(z);
        if self.logistic {
            eta.into_iter().map(expit).collect()
        } else {
            eta
        }
    }

    /// Intercept and slopes on the unstandardized design.
    pub fn original_scale(&self) -> (f64, Vec<f64>) {
        let coef: Vec<f64> = self.coef.iter().zip(&self.sds).map(|(b, s)| b / s).collect();
        let intercept = self.intercept - coef.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        (intercept, coef)
    }

    pub fn kkt_residual(&self, z: &DMatrix<f64>, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let fitted = self.predict(z);
        let resid: Vec<f64> = y.iter().zip(&fitted).map(|(v, f)| v - f).collect();
        let mut worst = (resid.iter().sum::<f64>() / n).abs();
        for j in 0..self.coef.len() {
            if !self.active[j] {
                continue;
            }
            let grad = -(0..z.nrows())
                .map(|i| (z[(i, j)] - self.means[j]) / self.sds[j] * resid[i])
                .sum::<f64>()
                / n;
            let v = if self.coef[j] != 0.0 {
                (grad + self.lambda * self.coef[j].signum()).abs()
            } else {
                (grad.abs() - self.lambda).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}
