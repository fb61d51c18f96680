//! Sample representation, CSV ingestion and cross-fitting fold plans.

use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed};

/// Observed sample: outcome `y`, exposure `a` and covariates `l` (one row per unit).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<f64>,
    l: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, a: Vec<f64>, l: DMatrix<f64>) -> Result<Self> {
        let n = y.len();
        if a.len() != n {
            return Err(Error::Shape { expected: n, found: a.len() });
        }
        if l.nrows() != n {
            return Err(Error::Shape { expected: n, found: l.nrows() });
        }
        if n < 2 {
            return Err(Error::Size(format!("need at least 2 observations, got {n}")));
        }
        if l.ncols() == 0 {
            return Err(Error::Size("need at least one covariate column".into()));
        }
        if !y.iter().chain(a.iter()).chain(l.iter()).all(|v| v.is_finite()) {
            return Err(Error::Input("dataset contains non-finite values".into()));
        }
        Ok(Self { y, a, l })
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.l.ncols()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn l(&self) -> &DMatrix<f64> {
        &self.l
    }

    /// Covariate row `i` as an owned vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        self.l.row(i).iter().copied().collect()
    }

    /// Covariate rows at `idx`, in the given order.
    pub fn covariates_at(&self, idx: &[usize]) -> DMatrix<f64> {
        self.l.select_rows(idx)
    }

    /// Reorders units so that new row `i` is old row `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n() {
            return Err(Error::Shape { expected: self.n(), found: order.len() });
        }
        Self::new(
            order.iter().map(|&i| self.y[i]).collect(),
            order.iter().map(|&i| self.a[i]).collect(),
            self.l.select_rows(order),
        )
    }
}

/// Binds CSV header names to the roles of the partially linear model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub y: String,
    pub a: String,
    /// Covariate columns; empty means every column other than `y` and `a`.
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl CsvSchema {
    pub fn new(y: impl Into<String>, a: impl Into<String>, covariates: Vec<String>) -> Self {
        Self { y: y.into(), a: a.into(), covariates }
    }
}

/// Reads a header-first, comma-separated file into a [`Dataset`], keeping file row order.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let position = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let y_col = position(&schema.y)?;
    let a_col = position(&schema.a)?;
    let cov_cols: Vec<usize> = if schema.covariates.is_empty() {
        (0..headers.len()).filter(|&c| c != y_col && c != a_col).collect()
    } else {
        schema.covariates.iter().map(|c| position(c)).collect::<Result<_>>()?
    };
    if cov_cols.is_empty() {
        return Err(Error::Schema("no covariate columns".into()));
    }

    let mut y = Vec::new();
    let mut a = Vec::new();
    let mut cov = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        let cell = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or("");
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse { row, column: headers[c].clone(), value: raw.to_owned() }),
            }
        };
        y.push(cell(y_col)?);
        a.push(cell(a_col)?);
        for &c in &cov_cols {
            cov.push(cell(c)?);
        }
    }
    let n = y.len();
    if n < 2 {
        return Err(Error::Size(format!("need at least 2 data rows, found {n}")));
    }
    let l = DMatrix::from_row_slice(n, cov_cols.len(), &cov);
    Dataset::new(y, a, l)
}

/// Partition of the fold complement: `outer` trains `ĝ`/`m̂`, `inner` trains the
/// kernel corrections.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InnerSplit {
    pub outer: Vec<usize>,
    pub inner: Vec<usize>,
}

/// Disjoint evaluation folds `I_k` with their complements and nested splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    n: usize,
    folds: Vec<Vec<usize>>,
    inner_splits: Vec<InnerSplit>,
    seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn fold(&self, k: usize) -> &[usize] {
        &self.folds[k]
    }

    pub fn inner_split(&self, k: usize) -> &InnerSplit {
        &self.inner_splits[k]
    }

    /// Sorted indices not in fold `k`.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        let split = &self.inner_splits[k];
        let mut c: Vec<usize> = split.outer.iter().chain(&split.inner).copied().collect();
        c.sort_unstable();
        c
    }

    /// Relabels indices for a dataset whose row `i` is old row `order[i]`.
    pub fn reindexed(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n {
            return Err(Error::Shape { expected: self.n, found: order.len() });
        }
        let mut new_of_old = vec![0; self.n];
        for (new, &old) in order.iter().enumerate() {
            new_of_old[old] = new;
        }
        let map = |v: &[usize]| v.iter().map(|&i| new_of_old[i]).collect::<Vec<_>>();
        Ok(Self {
            n: self.n,
            folds: self.folds.iter().map(|f| map(f)).collect(),
            inner_splits: self
                .inner_splits
                .iter()
                .map(|s| InnerSplit { outer: map(&s.outer), inner: map(&s.inner) })
                .collect(),
            seed: self.seed,
        })
    }
}

/// Builds a seeded `k`-fold plan over `0..n`.
///
/// Fold sizes are `⌊n/k⌋` or `⌈n/k⌉`, the first `n mod k` folds taking the
/// extra unit. Each complement is split at random into `outer` (share
/// `1 - inner_fraction`) and `inner` (share `inner_fraction`).
pub fn make_fold_plan(n: usize, k: usize, inner_fraction: f64, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::Parameter(format!("fold count must satisfy 2 <= k <= n, got k={k}, n={n}")));
    }
    if !(inner_fraction > 0.0 && inner_fraction < 1.0) {
        return Err(Error::Parameter(format!("inner_fraction must lie in (0,1), got {inner_fraction}")));
    }
    let min_complement = n - n.div_ceil(k);
    if inner_fraction * (n as f64 - n as f64 / k as f64) < 1.0 || min_complement < 2 {
        return Err(Error::Parameter(format!(
            "inner split would be empty: n={n}, k={k}, inner_fraction={inner_fraction}"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(derive_seed(seed, &[0])));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut fold = order[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }

    let mut in_fold = vec![0usize; n];
    for (f, fold) in folds.iter().enumerate() {
        for &i in fold {
            in_fold[i] = f;
        }
    }
    let inner_splits = (0..k)
        .map(|f| {
            let mut comp: Vec<usize> = (0..n).filter(|&i| in_fold[i] != f).collect();
            comp.shuffle(&mut rng_from_seed(derive_seed(seed, &[1, f as u64])));
            let m = comp.len();
            let n_inner = ((inner_fraction * m as f64).round() as usize).clamp(1, m - 1);
            let mut inner = comp[..n_inner].to_vec();
            let mut outer = comp[n_inner..].to_vec();
            inner.sort_unstable();
            outer.sort_unstable();
            InnerSplit { outer, inner }
        })
        .collect();

    Ok(FoldPlan { n, folds, inner_splits, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_three_rows() {
        let f = write_csv("y,a,l1\n1.0,0,0.5\n2.5,1,-1\n3,1,2e-1\n");
        let d = load_csv(f.path(), &CsvSchema::new("y", "a", vec![])).unwrap();
        assert_eq!((d.n(), d.p()), (3, 1));
        assert_eq!(d.y(), &[1.0, 2.5, 3.0]);
        assert_eq!(d.a(), &[0.0, 1.0, 1.0]);
        assert_eq!(d.l()[(2, 0)], 0.2);
    }

    #[test]
    fn column_order_is_free() {
        let f = write_csv("l2,a,l1,y\n1,0,5,9\n2,1,6,8\n");
        let schema = CsvSchema::new("y", "a", vec!["l1".into(), "l2".into()]);
        let d = load_csv(f.path(), &schema).unwrap();
        assert_eq!(d.y(), &[9.0, 8.0]);
        assert_eq!(d.row(1), vec![6.0, 2.0]);
    }

    #[test]
    fn missing_exposure_column_is_schema_error() {
        let f = write_csv("y,l1\n1,2\n3,4\n");
        let err = load_csv(f.path(), &CsvSchema::new("y", "a", vec![])).unwrap_err();
        assert!(matches!(err, Error::Schema(_)), "{err}");
    }

    #[test]
    fn nan_cell_cites_row() {
        let f = write_csv("y,a,l1\n1,0,1\n2,1,1\n3,0,1\n4,1,1\nNaN,0,1\n6,1,1\n");
        match load_csv(f.path(), &CsvSchema::new("y", "a", vec![])).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 5);
                assert_eq!(column, "y");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn non_numeric_and_empty_cells_rejected() {
        let f = write_csv("y,a,l1\n1,0,abc\n2,1,1\n");
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::new("y", "a", vec![])),
            Err(Error::Parse { row: 1, .. })
        ));
        let f = write_csv("y,a,l1\n1,0,1\n2,,1\n");
        assert!(matches!(
            load_csv(f.path(), &CsvSchema::new("y", "a", vec![])),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn single_row_is_size_error() {
        let f = write_csv("y,a,l1\n1,0,1\n");
        assert!(matches!(load_csv(f.path(), &CsvSchema::new("y", "a", vec![])), Err(Error::Size(_))));
    }

    #[test]
    fn dataset_rejects_non_finite() {
        let l = DMatrix::from_element(2, 1, 0.0);
        assert!(Dataset::new(vec![1.0, f64::INFINITY], vec![0.0, 1.0], l).is_err());
    }

    #[test]
    fn even_plan() {
        let plan = make_fold_plan(10, 5, 0.5, 7).unwrap();
        assert_eq!(plan.k(), 5);
        for k in 0..5 {
            assert_eq!(plan.fold(k).len(), 2);
            let s = plan.inner_split(k);
            assert_eq!((s.outer.len(), s.inner.len()), (4, 4));
        }
    }

    #[test]
    fn remainder_goes_to_leading_folds() {
        let plan = make_fold_plan(11, 5, 0.5, 7).unwrap();
        let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2, 2, 2]);
    }

    #[test]
    fn plan_is_deterministic() {
        assert_eq!(make_fold_plan(37, 4, 0.3, 99).unwrap(), make_fold_plan(37, 4, 0.3, 99).unwrap());
        assert_ne!(make_fold_plan(37, 4, 0.3, 99).unwrap(), make_fold_plan(37, 4, 0.3, 100).unwrap());
    }

    #[test]
    fn invalid_fold_counts() {
        assert!(matches!(make_fold_plan(10, 1, 0.5, 0), Err(Error::Parameter(_))));
        assert!(matches!(make_fold_plan(10, 11, 0.5, 0), Err(Error::Parameter(_))));
        assert!(matches!(make_fold_plan(10, 5, 1.0, 0), Err(Error::Parameter(_))));
        assert!(matches!(make_fold_plan(4, 4, 0.1, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn partition_is_exhaustive_for_small_n() {
        for n in 2..=1000usize {
            let k = 2 + n % 9;
            let frac = 0.5;
            let Ok(plan) = make_fold_plan(n, k.min(n), frac, n as u64) else {
                continue;
            };
            let mut seen = vec![false; n];
            for fold in plan.folds() {
                for &i in fold {
                    assert!(!seen[i], "index {i} in two folds (n={n})");
                    seen[i] = true;
                }
            }
            assert!(seen.iter().all(|&s| s), "n={n}");
            let sizes: Vec<usize> = plan.folds().iter().map(Vec::len).collect();
            assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for f in 0..plan.k() {
                let s = plan.inner_split(f);
                let mut c: Vec<usize> = s.outer.iter().chain(&s.inner).copied().collect();
                c.sort_unstable();
                let expected: Vec<usize> = (0..n).filter(|i| !plan.fold(f).contains(i)).collect();
                assert_eq!(c, expected);
                assert!(!s.outer.is_empty() && !s.inner.is_empty());
            }
        }
    }

    #[test]
    fn reindexing_tracks_rows() {
        let plan = make_fold_plan(6, 3, 0.5, 1).unwrap();
        let order = vec![5, 4, 3, 2, 1, 0];
        let moved = plan.reindexed(&order).unwrap();
        for k in 0..3 {
            let mut back: Vec<usize> = moved.fold(k).iter().map(|&i| order[i]).collect();
            back.sort_unstable();
            assert_eq!(back, plan.fold(k));
        }
    }
}
