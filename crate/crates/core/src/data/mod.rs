//! Synthetic data, file formats and preprocessing.

mod generate;
mod io;
mod pca;

pub use generate::{gen_multivariate_mixture, gen_scalar_mixture, ScalarMixtureSpec};
pub use io::{load_dataset, save_dataset, FileFormat};
pub use pca::{pca_apply, pca_fit, PcaTransform};

use crate::dataset::Dataset;
use crate::error::{argument, Result};

/// An `n × d` table of finite reals with a note on where it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
    /// Generating component of each row, for diagnostics only.
    pub labels: Option<Vec<usize>>,
    pub provenance: String,
}

impl RawDataset {
    pub fn new(values: Vec<f64>, d: usize, provenance: impl Into<String>) -> Result<Self> {
        if d == 0 || values.is_empty() || !values.len().is_multiple_of(d) {
            return Err(argument(format!("{} values do not form rows of width {d}", values.len())));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(argument(format!("non-finite value at row {}, column {}", pos / d, pos % d)));
        }
        Ok(RawDataset {
            n: values.len() / d,
            d,
            values,
            labels: None,
            provenance: provenance.into(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().skip(j).step_by(self.d).copied()
    }

    pub fn to_dataset(&self) -> Result<Dataset> {
        Dataset::new(self.values.clone(), self.d)
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        Dataset::new(self.values, self.d)
    }
}

/// Drops every column whose entries are all equal. Returns the reduced data
/// and the indices of the kept columns.
pub fn remove_constant_features(data: &RawDataset) -> Result<(RawDataset, Vec<usize>)> {
    let kept: Vec<usize> = (0..data.d)
        .filter(|&j| {
            let first = data.values[j];
            data.column(j).any(|v| v != first)
        })
        .collect();
    if kept.is_empty() {
        return Err(argument("degenerate dataset: every column is constant"));
    }
    let mut values = Vec::with_capacity(data.n * kept.len());
    for i in 0..data.n {
        let row = data.row(i);
        values.extend(kept.iter().map(|&j| row[j]));
    }
    let out = RawDataset {
        n: data.n,
        d: kept.len(),
        values,
        labels: data.labels.clone(),
        provenance: format!("{} | drop-constant({} of {})", data.provenance, data.d - kept.len(), data.d),
    };
    Ok((out, kept))
}
