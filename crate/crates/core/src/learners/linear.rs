use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub(crate) struct LinearModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

impl LinearModel {
    pub fn predict(&self, z: &DMatrix<f64>) -> Vec<f64> {
        (0..z.nrows())
            .map(|i| self.intercept + self.coef.iter().enumerate().map(|(j, b)| b * z[(i, j)]).sum::<f64>())
            .collect()
    }
}

/// Least squares with intercept via SVD. Rank-deficient designs get the
/// minimum-norm solution and a warning.
pub(crate) fn fit(z: &DMatrix<f64>, y: &[f64]) -> (LinearModel, Option<String>) {
    let n = z.nrows();
    let p = z.ncols();
    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    design.columns_mut(1, p).copy_from(z);
    let svd = design.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * (n.max(p + 1) as f64);
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    let beta = svd
        .solve(&DVector::from_column_slice(y), tol)
        .expect("SVD computed with both factors");
    let warning = (rank < p + 1).then(|| {
        format!("design is rank deficient (rank {rank} < {}); using the minimum-norm solution", p + 1)
    });
    (LinearModel { intercept: beta[0], coef: beta.iter().skip(1).copied().collect() }, warning)
}
