use nalgebra::{DMatrix, SymmetricEigen};

use super::RawDataset;
use crate::error::{argument, Result};

/// Centering plus projection onto the leading principal directions.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaTransform {
    pub mean: Vec<f64>,
    /// `d × d_pc`, orthonormal columns.
    pub components: DMatrix<f64>,
    /// Variance along each column of `components`, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaTransform {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn output_dim(&self) -> usize {
        self.components.ncols()
    }
}

/// Fits the top `d_pc` eigenvectors of the sample covariance `(1/n) Σ (y−ȳ)(y−ȳ)ᵀ`.
///
/// Each direction is signed so that its largest-magnitude entry is positive.
pub fn pca_fit(data: &RawDataset, d_pc: usize) -> Result<PcaTransform> {
    let (n, d) = (data.n(), data.dim());
    if d_pc == 0 || d_pc > d {
        return Err(argument(format!("need 1 <= d_pc <= {d}, got {d_pc}")));
    }
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centred = DMatrix::from_fn(n, d, |i, j| data.row(i)[j] - mean[j]);
    let cov = (centred.transpose() * &centred) / n as f64;
    let eig = SymmetricEigen::try_new(cov, 1e-12, 0)
        .ok_or_else(|| argument("eigendecomposition did not converge"))?;
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = DMatrix::zeros(d, d_pc);
    let mut explained_variance = Vec::with_capacity(d_pc);
    for (c, &idx) in order.iter().take(d_pc).enumerate() {
        let mut v = eig.eigenvectors.column(idx).into_owned();
        let pivot = v.iter().copied().fold(0.0_f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
        if pivot < 0.0 {
            v.neg_mut();
        }
        components.set_column(c, &v);
        explained_variance.push(eig.eigenvalues[idx].max(0.0));
    }
    Ok(PcaTransform {
        mean,
        components,
        explained_variance,
    })
}

/// Projects `(y − mean)` onto the fitted directions.
pub fn pca_apply(t: &PcaTransform, data: &RawDataset) -> Result<RawDataset> {
    let d = t.input_dim();
    if data.dim() != d {
        return Err(argument(format!("transform expects {d} columns, data has {}", data.dim())));
    }
    let k = t.output_dim();
    let mut values = Vec::with_capacity(data.n() * k);
    let mut centred = vec![0.0; d];
    for i in 0..data.n() {
        for ((c, y), m) in centred.iter_mut().zip(data.row(i)).zip(&t.mean) {
            *c = y - m;
        }
        for col in t.components.column_iter() {
            values.push(col.iter().zip(&centred).map(|(a, b)| a * b).sum());
        }
    }
    let mut out = RawDataset::new(values, k, format!("{} | pca({d} -> {k})", data.provenance))?;
    out.labels = data.labels.clone();
    Ok(out)
}
