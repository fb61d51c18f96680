use nalgebra::DMatrix;

use super::{column_scaling, standardized_rows};

/// Multivariate Nadaraya-Watson regression with a Gaussian product kernel on
/// standardized covariates.
#[derive(Debug, Clone)]
pub(crate) struct SmootherModel {
    means: Vec<f64>,
    sds: Vec<f64>,
    rows: Vec<f64>,
    targets: Vec<f64>,
    bandwidth: f64,
}

impl SmootherModel {
    pub fn new(x: &DMatrix<f64>, y: &[f64], bandwidth: f64) -> Self {
        let (means, sds) = column_scaling(x);
        let rows = standardized_rows(x, &means, &sds);
        Self { means, sds, rows, targets: y.to_vec(), bandwidth }
    }

    pub fn predict(&self, z: &DMatrix<f64>) -> Vec<f64> {
        self.predict_path(z, &[self.bandwidth]).pop().expect("one bandwidth")
    }

    pub fn predict_path(&self, z: &DMatrix<f64>, bandwidths: &[f64]) -> Vec<Vec<f64>> {
        let p = self.means.len().max(1);
        let queries = standardized_rows(z, &self.means, &self.sds);
        let mut out = vec![Vec::with_capacity(z.nrows()); bandwidths.len()];
        let mut d2 = Vec::with_capacity(self.targets.len());
        for q in queries.chunks_exact(p).take(z.nrows()) {
            d2.clear();
            d2.extend(self.rows.chunks_exact(p).map(|r| q.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum::<f64>()));
            // Shift by the nearest distance so the largest weight is exactly 1.
            let dmin = d2.iter().copied().fold(f64::INFINITY, f64::min);
            for (g, &h) in bandwidths.iter().enumerate() {
                let scale = 0.5 / (h * h);
                let (mut num, mut den) = (0.0, 0.0);
                for (d, t) in d2.iter().zip(&self.targets) {
                    let w = (-(d - dmin) * scale).exp();
                    num += w * t;
                    den += w;
                }
                out[g].push(num / den);
            }
        }
        out
    }
}
