//! Gradient boosting of shallow regression trees on binned covariates.
//!
//! Squared loss for continuous targets, logistic loss (Newton leaf values) for
//! binary targets. No subsampling, so fits are deterministic.

use nalgebra::DMatrix;

use crate::stats::expit;

const MAX_BINS: usize = 32;
const LEAF_L2: f64 = 1.0;

#[derive(Debug, Clone, Copy)]
pub(crate) struct BoostParams {
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    pub logistic: bool,
}

#[derive(Debug, Clone)]
enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf(f64),
}

#[derive(Debug, Clone)]
struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn eval(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
                Node::Leaf(v) => return v,
            }
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BoostedTrees {
    base: f64,
    trees: Vec<Tree>,
    logistic: bool,
}

impl BoostedTrees {
    pub fn predict(&self, z: &DMatrix<f64>) -> Vec<f64> {
        (0..z.nrows())
            .map(|i| {
                let row: Vec<f64> = z.row(i).iter().copied().collect();
                let f = self.base + self.trees.iter().map(|t| t.eval(&row)).sum::<f64>();
                if self.logistic {
                    expit(f)
                } else {
                    f
                }
            })
            .collect()
    }
}

/// Candidate thresholds per feature: midpoints between consecutive distinct
/// values, thinned to quantiles when there are too many.
fn thresholds(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    if v.len() < 2 {
        return Vec::new();
    }
    let cut_points: Vec<usize> = if v.len() <= MAX_BINS {
        (1..v.len()).collect()
    } else {
        let mut c: Vec<usize> = (1..MAX_BINS).map(|b| b * v.len() / MAX_BINS).collect();
        c.dedup();
        c
    };
    cut_points.into_iter().map(|c| 0.5 * (v[c - 1] + v[c])).collect()
}

struct Binned {
    /// Row-major bin index per (row, feature).
    bins: Vec<u8>,
    thresholds: Vec<Vec<f64>>,
    p: usize,
}

fn bin(z: &DMatrix<f64>) -> Binned {
    let p = z.ncols();
    let thresholds: Vec<Vec<f64>> = z.column_iter().map(|c| thresholds(c.as_slice())).collect();
    let mut bins = vec![0u8; z.nrows() * p];
    for i in 0..z.nrows() {
        for j in 0..p {
            let v = z[(i, j)];
            bins[i * p + j] = thresholds[j].partition_point(|&t| t < v) as u8;
        }
    }
    Binned { bins, thresholds, p }
}

fn grow_tree(binned: &Binned, grad: &[f64], hess: &[f64], rows: Vec<usize>, params: &BoostParams) -> (Tree, Vec<(Vec<usize>, f64)>) {
    let mut nodes = Vec::new();
    let mut leaves = Vec::new();
    grow(binned, grad, hess, rows, 0, params, &mut nodes, &mut leaves);
    (Tree { nodes }, leaves)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    binned: &Binned,
    grad: &[f64],
    hess: &[f64],
    rows: Vec<usize>,
    depth: usize,
    params: &BoostParams,
    nodes: &mut Vec<Node>,
    leaves: &mut Vec<(Vec<usize>, f64)>,
) -> usize {
    let id = nodes.len();
    nodes.push(Node::Leaf(0.0));
    let g: f64 = rows.iter().map(|&i| grad[i]).sum();
    let h: f64 = rows.iter().map(|&i| hess[i]).sum();
    let leaf_value = -g / (h + LEAF_L2) * params.learning_rate;

    let mut best: Option<(f64, usize, usize)> = None;
    if depth < params.depth && rows.len() >= 2 * params.min_leaf {
        let parent = g * g / (h + LEAF_L2);
        for j in 0..binned.p {
            let nb = binned.thresholds[j].len() + 1;
            if nb < 2 {
                continue;
            }
            let mut hg = vec![0.0; nb];
            let mut hh = vec![0.0; nb];
            let mut hc = vec![0usize; nb];
            for &i in &rows {
                let b = binned.bins[i * binned.p + j] as usize;
                hg[b] += grad[i];
                hh[b] += hess[i];
                hc[b] += 1;
            }
            let (mut gl, mut hl, mut cl) = (0.0, 0.0, 0usize);
            for b in 0..nb - 1 {
                gl += hg[b];
                hl += hh[b];
                cl += hc[b];
                let cr = rows.len() - cl;
                if cl < params.min_leaf || cr < params.min_leaf {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                let gain = gl * gl / (hl + LEAF_L2) + gr * gr / (hr + LEAF_L2) - parent;
                if gain > 1e-12 && best.is_none_or(|(bg, _, _)| gain > bg) {
                    best = Some((gain, j, b));
                }
            }
        }
    }

    match best {
        Some((_, feature, b)) => {
            let threshold = binned.thresholds[feature][b];
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
                rows.into_iter().partition(|&i| binned.bins[i * binned.p + feature] as usize <= b);
            let left = grow(binned, grad, hess, left_rows, depth + 1, params, nodes, leaves);
            let right = grow(binned, grad, hess, right_rows, depth + 1, params, nodes, leaves);
            nodes[id] = Node::Split { feature, threshold, left, right };
        }
        None => {
            nodes[id] = Node::Leaf(leaf_value);
            leaves.push((rows, leaf_value));
        }
    }
    id
}

/// Boosts up to `max(stages)` trees. Returns the model truncated at the last
/// stage and, when `test` is given, test predictions after each stage count.
pub(crate) fn fit_staged(
    z: &DMatrix<f64>,
    y: &[f64],
    params: &BoostParams,
    stages: &[usize],
    test: Option<&DMatrix<f64>>,
) -> (BoostedTrees, Vec<Vec<f64>>) {
    let n = y.len();
    let binned = bin(z);
    let ybar = y.iter().sum::<f64>() / n as f64;
    let base = if params.logistic {
        let q = ybar.clamp(1e-3, 1.0 - 1e-3);
        (q / (1.0 - q)).ln()
    } else {
        ybar
    };
    let max_stage = stages.iter().copied().max().unwrap_or(0);
    let test_rows: Vec<Vec<f64>> = test
        .map(|t| (0..t.nrows()).map(|i| t.row(i).iter().copied().collect()).collect())
        .unwrap_or_default();
    let mut test_f = vec![base; test_rows.len()];
    let mut staged = vec![Vec::new(); stages.len()];

    let mut f = vec![base; n];
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut trees = Vec::with_capacity(max_stage);
    let link = |v: f64| if params.logistic { expit(v) } else { v };
    for stage in 1..=max_stage {
        for i in 0..n {
            if params.logistic {
                let prob = expit(f[i]);
                grad[i] = prob - y[i];
                hess[i] = (prob * (1.0 - prob)).max(1e-6);
            } else {
                grad[i] = f[i] - y[i];
                hess[i] = 1.0;
            }
        }
        let (tree, leaves) = grow_tree(&binned, &grad, &hess, (0..n).collect(), params);
        for (rows, value) in leaves {
            for i in rows {
                f[i] += value;
            }
        }
        for (tf, row) in test_f.iter_mut().zip(&test_rows) {
            *tf += tree.eval(row);
        }
        trees.push(tree);
        for (s, &count) in stages.iter().enumerate() {
            if count == stage {
                staged[s] = test_f.iter().map(|&v| link(v)).collect();
            }
        }
    }
    (BoostedTrees { base, trees, logistic: params.logistic }, staged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_split_recovers_step() {
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v < 20.0 { 0.0 } else { 10.0 }).collect();
        let z = DMatrix::from_column_slice(40, 1, &x);
        let params = BoostParams { depth: 1, learning_rate: 1.0, min_leaf: 1, logistic: false };
        let (m, _) = fit_staged(&z, &y, &params, &[50], None);
        let p = m.predict(&z);
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() < 0.05, "{a} vs {b}");
        }
    }

    #[test]
    fn staged_predictions_match_truncated_models() {
        let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let y: Vec<f64> = x.iter().map(|v| v * v).collect();
        let z = DMatrix::from_column_slice(60, 1, &x);
        let params = BoostParams { depth: 2, learning_rate: 0.1, min_leaf: 3, logistic: false };
        let (_, staged) = fit_staged(&z, &y, &params, &[5, 20], Some(&z));
        let (m5, _) = fit_staged(&z, &y, &params, &[5], None);
        let direct = m5.predict(&z);
        for (a, b) in staged[0].iter().zip(&direct) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(staged[1].len(), 60);
    }
}
