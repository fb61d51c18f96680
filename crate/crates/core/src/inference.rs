//! Closed-form estimators and confidence sets by inverting a score test.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::score::{CrossFitter, NuisanceConfig, StatisticKind};
use crate::stats::normal_quantile;

/// Accuracy required of the statistic at a refined root or bound.
const STATISTIC_TOLERANCE: f64 = 0.01;
const MAX_BISECTIONS: usize = 200;

fn check_lengths(data: &Dataset, vectors: &[&[f64]]) -> Result<()> {
    for v in vectors {
        if v.len() != data.n() {
            return Err(Error::Shape { expected: data.n(), found: v.len() });
        }
    }
    Ok(())
}

fn ratio(numerator: f64, denominator: f64, n: usize) -> Result<f64> {
    if denominator.abs() < 1e-10 * n as f64 {
        return Err(Error::NonInvertible(denominator / n as f64));
    }
    Ok(numerator / denominator)
}

/// `Σ(aᵢ−ĝᵢ)(yᵢ−m̂ᵢ) / Σ(aᵢ−ĝᵢ)aᵢ`.
pub fn dml_point_estimate(data: &Dataset, ghat: &[f64], mhat: &[f64]) -> Result<f64> {
    check_lengths(data, &[ghat, mhat])?;
    let (y, a) = (data.y(), data.a());
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..data.n() {
        let ra = a[i] - ghat[i];
        num += ra * (y[i] - mhat[i]);
        den += ra * a[i];
    }
    ratio(num, den, data.n())
}

/// `Σ(aᵢ−ĝᵢ)yᵢ / Σ(aᵢ−ĝᵢ)aᵢ`.
pub fn naive_estimate(data: &Dataset, ghat: &[f64]) -> Result<f64> {
    check_lengths(data, &[ghat])?;
    let (y, a) = (data.y(), data.a());
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..data.n() {
        let ra = a[i] - ghat[i];
        num += ra * y[i];
        den += ra * a[i];
    }
    ratio(num, den, data.n())
}

/// Sandwich standard error of [`dml_point_estimate`] at `theta`.
pub fn dml_standard_error(data: &Dataset, ghat: &[f64], mhat: &[f64], theta: f64) -> Result<f64> {
    check_lengths(data, &[ghat, mhat])?;
    let (y, a) = (data.y(), data.a());
    let n = data.n() as f64;
    let mut meat = 0.0;
    let mut bread = 0.0;
    for i in 0..data.n() {
        let ra = a[i] - ghat[i];
        let psi = ra * (y[i] - mhat[i] - theta * ra);
        meat += psi * psi;
        bread += ra * a[i];
    }
    let bread = ratio(bread, n, data.n())?;
    Ok((meat / n).sqrt() / (bread.abs() * n.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Grid centre; the cross-fitted DML estimate when unset.
    pub center: Option<f64>,
    /// Grid half-width; ten standard errors of the DML estimate when unset.
    pub half_width: Option<f64>,
    pub grid_size: usize,
    /// Bisection tolerance in θ.
    pub tolerance: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self { center: None, half_width: None, grid_size: 81, tolerance: 1e-4 }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 3 {
            return Err(Error::Parameter(format!("grid_size must be at least 3, got {}", self.grid_size)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::Parameter(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if let Some(h) = self.half_width {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::Parameter(format!("half_width must be positive, got {h}")));
            }
        }
        if let Some(c) = self.center {
            if !c.is_finite() {
                return Err(Error::Parameter(format!("center must be finite, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceSet {
    pub kind: StatisticKind,
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    /// Evaluated `(θ, standardized statistic)` pairs, sorted by θ.
    pub grid: Vec<(f64, f64)>,
    /// False when a root or bound was not bracketed inside the grid.
    pub bracketing_ok: bool,
    /// The statistic crossed zero more than once or the non-rejection region
    /// is disconnected on the grid; `lower`/`upper` are then its hull.
    pub multiple_regions: bool,
}

impl ConfidenceSet {
    pub fn contains(&self, theta: f64) -> bool {
        self.lower <= theta && theta <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Bisects `f` on `[lo, hi]` where `f(lo)` and `f(hi)` differ in sign.
fn bisect(f: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64, mut f_lo: f64, tolerance: f64) -> f64 {
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..MAX_BISECTIONS {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if !fm.is_finite() {
            break;
        }
        if fm == 0.0 || (hi - lo < tolerance && fm.abs() <= STATISTIC_TOLERANCE) {
            break;
        }
        if (fm < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = fm;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 * (1.0 + mid.abs()) {
            break;
        }
    }
    mid
}

/// Confidence set for θ by inverting the `kind` test at level `1 − level`
/// coverage.
///
/// Every evaluation shares the fold plan and learner seeds, so the statistic
/// is a deterministic function of θ.
#[allow(clippy::too_many_arguments)]
pub fn invert_test(
    data: &Dataset,
    plan: &FoldPlan,
    kind: StatisticKind,
    level: f64,
    search: &SearchConfig,
    learners: &NuisanceConfig,
    kernel: &KernelSpec,
    seed: u64,
) -> Result<ConfidenceSet> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Parameter(format!("level must lie in (0, 1), got {level}")));
    }
    search.validate()?;
    let fitter = CrossFitter::new(data, plan, learners, kernel, seed)?;
    let z = normal_quantile(1.0 - (1.0 - level) / 2.0);

    let (center, half_width) = match (search.center, search.half_width) {
        (Some(c), Some(h)) => (c, h),
        (c, h) => {
            let ghat = fitter.propensity_predictions();
            let mhat = fitter.outcome_predictions(0.0)?;
            let estimate = dml_point_estimate(data, &ghat, &mhat)?;
            let center = c.unwrap_or(estimate);
            let half = match h {
                Some(h) => h,
                None => {
                    let se = dml_standard_error(data, &ghat, &mhat, estimate)?;
                    if !(se > 0.0 && se.is_finite()) {
                        return Err(Error::Inversion(format!("standard error of the initial estimate is {se}")));
                    }
                    10.0 * se
                }
            };
            (center, half)
        }
    };

    let statistic = |theta: f64| -> Result<f64> {
        match fitter.score(theta, kind) {
            Ok(r) => Ok(r.standardized),
            Err(e) if e.is_numerical() => Ok(f64::NAN),
            Err(e) => Err(e),
        }
    };
    let m = search.grid_size;
    let thetas: Vec<f64> =
        (0..m).map(|j| center - half_width + 2.0 * half_width * j as f64 / (m - 1) as f64).collect();
    let values = thetas.par_iter().map(|&t| statistic(t)).collect::<Result<Vec<f64>>>()?;
    let finite = values.iter().filter(|v| v.is_finite()).count();
    if 2 * finite <= m {
        return Err(Error::Inversion(format!("statistic non-finite at {} of {m} grid points", m - finite)));
    }
    let grid: Vec<(f64, f64)> = thetas.iter().copied().zip(values.iter().copied()).collect();
    let eval = |t: f64| statistic(t).unwrap_or(f64::NAN);

    // Sign changes of the statistic between consecutive finite grid points.
    let crossings: Vec<usize> = (0..m - 1)
        .filter(|&j| {
            let (a, b) = (values[j], values[j + 1]);
            a.is_finite() && b.is_finite() && (a == 0.0 || (a < 0.0) != (b < 0.0))
        })
        .collect();
    let mut bracketing_ok = true;
    let mut multiple_regions = crossings.len() > 1;
    let point = match crossings
        .iter()
        .min_by(|&&i, &&j| {
            let di = (0.5 * (thetas[i] + thetas[i + 1]) - center).abs();
            let dj = (0.5 * (thetas[j] + thetas[j + 1]) - center).abs();
            di.total_cmp(&dj)
        })
        .copied()
    {
        Some(j) if values[j] == 0.0 => thetas[j],
        Some(j) => bisect(&eval, thetas[j], thetas[j + 1], values[j], search.tolerance),
        None => {
            bracketing_ok = false;
            grid.iter()
                .filter(|(_, v)| v.is_finite())
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|&(t, _)| t)
                .expect("finite grid values exist")
        }
    };

    // Non-rejection region |T| ≤ z on the grid and its hull.
    let accepted: Vec<usize> = (0..m).filter(|&j| values[j].is_finite() && values[j].abs() <= z).collect();
    let (lower, upper) = match (accepted.first(), accepted.last()) {
        (Some(&first), Some(&last)) => {
            if last - first + 1 != accepted.len() {
                multiple_regions = true;
            }
            let excess = |t: f64| eval(t).abs() - z;
            let lower = if first == 0 || !values[first - 1].is_finite() {
                bracketing_ok = false;
                thetas[first]
            } else {
                bisect(&excess, thetas[first - 1], thetas[first], values[first - 1].abs() - z, search.tolerance)
            };
            let upper = if last == m - 1 || !values[last + 1].is_finite() {
                bracketing_ok = false;
                thetas[last]
            } else {
                bisect(&excess, thetas[last], thetas[last + 1], values[last].abs() - z, search.tolerance)
            };
            (lower.min(point), upper.max(point))
        }
        _ => {
            bracketing_ok = false;
            (point, point)
        }
    };

    Ok(ConfidenceSet { kind, point, lower, upper, level, grid, bracketing_ok, multiple_regions })
}
