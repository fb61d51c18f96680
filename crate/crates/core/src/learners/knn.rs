use nalgebra::DMatrix;

use super::{column_scaling, standardized_rows};

#[derive(Debug, Clone)]
pub(crate) struct KnnModel {
    means: Vec<f64>,
    sds: Vec<f64>,
    rows: Vec<f64>,
    targets: Vec<f64>,
    k: usize,
}

impl KnnModel {
    pub fn new(x: &DMatrix<f64>, y: &[f64], k: usize) -> Self {
        let (means, sds) = column_scaling(x);
        let rows = standardized_rows(x, &means, &sds);
        Self { means, sds, rows, targets: y.to_vec(), k }
    }

    pub fn predict(&self, z: &DMatrix<f64>) -> Vec<f64> {
        self.predict_path(z, &[self.k]).pop().expect("one grid value")
    }

    /// Predictions for each neighbour count in `ks` (counts above the training
    /// size use every training row). Distance ties resolve by training order.
    pub fn predict_path(&self, z: &DMatrix<f64>, ks: &[usize]) -> Vec<Vec<f64>> {
        let p = self.means.len();
        let n = self.targets.len();
        let kmax = ks.iter().copied().max().unwrap_or(1).min(n);
        let queries = standardized_rows(z, &self.means, &self.sds);
        let mut out = vec![Vec::with_capacity(z.nrows()); ks.len()];
        let mut dist: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut prefix = vec![0.0; kmax + 1];
        for q in queries.chunks_exact(p.max(1)).take(z.nrows()) {
            dist.clear();
            for (i, r) in self.rows.chunks_exact(p.max(1)).enumerate() {
                let d: f64 = q.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum();
                dist.push((d, i));
            }
            let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            if kmax < n {
                dist.select_nth_unstable_by(kmax - 1, cmp);
            }
            dist[..kmax].sort_unstable_by(cmp);
            for (j, &(_, i)) in dist[..kmax].iter().enumerate() {
                prefix[j + 1] = prefix[j] + self.targets[i];
            }
            for (g, &k) in ks.iter().enumerate() {
                let k = k.min(n);
                out[g].push(prefix[k] / k as f64);
            }
        }
        out
    }
}
