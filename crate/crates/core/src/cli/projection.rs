use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::autodiff::Tensor;
use crate::error::{contract_err, Result};

/// Rows projected on the top two principal axes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Projection {
    pub points: Vec<[f64; 2]>,
    /// Fraction of total variance captured by each axis.
    pub explained_variance: [f64; 2],
}

/// PCA to two dimensions. Each axis is signed so that its largest-magnitude
/// loading is positive, which keeps the output deterministic.
pub fn pca_2d(x: &Tensor) -> Result<Projection> {
    if x.rank() != 2 || x.rows() < 2 {
        return Err(contract_err!("PCA needs at least two rows, got shape {:?}", x.shape()));
    }
    let (n, d) = (x.rows(), x.last_dim());
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64).collect();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for i in 0..n {
        let r = x.row(i);
        for a in 0..d {
            let da = r[a] - mean[a];
            for b in a..d {
                cov[(a, b)] += da * (r[b] - mean[b]);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov[(a, b)] / (n - 1) as f64;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut axes = Vec::new();
    let mut explained = [0.0; 2];
    for k in 0..2 {
        let mut axis = vec![0.0; d];
        if let Some(&col) = order.get(k) {
            axis = eig.eigenvectors.column(col).iter().copied().collect();
            let pivot = axis.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            if pivot < 0.0 {
                axis.iter_mut().for_each(|v| *v = -*v);
            }
            explained[k] = if total > 0.0 { eig.eigenvalues[col].max(0.0) / total } else { 0.0 };
        }
        axes.push(axis);
    }
    let points = (0..n)
        .map(|i| {
            let r = x.row(i);
            let p = |ax: &[f64]| r.iter().zip(&mean).zip(ax).map(|((v, m), a)| (v - m) * a).sum::<f64>();
            [p(&axes[0]), p(&axes[1])]
        })
        .collect();
    Ok(Projection { points, explained_variance: explained })
}
