//! Immutable observation sets consumed by the models.

use std::sync::OnceLock;

use crate::error::{argument, Result};
use crate::stat::PairwiseSum;

/// `n` observations of dimension `p`, stored row-major.
///
/// The empirical mean and second moment `(1/n) Σ y_i y_iᵀ` are computed on
/// first use and cached; the observations themselves never change.
#[derive(Debug)]
pub struct Dataset {
    n: usize,
    p: usize,
    values: Vec<f64>,
    mean: OnceLock<Vec<f64>>,
    second_moment: OnceLock<Vec<f64>>,
}

impl Clone for Dataset {
    fn clone(&self) -> Self {
        Dataset {
            n: self.n,
            p: self.p,
            values: self.values.clone(),
            mean: self.mean.clone(),
            second_moment: self.second_moment.clone(),
        }
    }
}

impl Dataset {
    pub fn new(values: Vec<f64>, p: usize) -> Result<Self> {
        if p == 0 {
            return Err(argument("observation dimension must be positive"));
        }
        if values.is_empty() || !values.len().is_multiple_of(p) {
            return Err(argument(format!(
                "{} values cannot be split into rows of length {p}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(argument(format!(
                "non-finite observation at row {}, column {}",
                pos / p,
                pos % p
            )));
        }
        Ok(Dataset {
            n: values.len() / p,
            p,
            values,
            mean: OnceLock::new(),
            second_moment: OnceLock::new(),
        })
    }

    /// Scalar observations.
    pub fn from_scalars(values: Vec<f64>) -> Result<Self> {
        Dataset::new(values, 1)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let p = rows.first().map(Vec::len).unwrap_or(0);
        if rows.iter().any(|r| r.len() != p) {
            return Err(argument("rows have unequal lengths"));
        }
        Dataset::new(rows.concat(), p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.p..(i + 1) * self.p]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Empirical mean `(1/n) Σ y_i`.
    pub fn mean(&self) -> &[f64] {
        self.mean.get_or_init(|| {
            let mut acc = PairwiseSum::new(self.p);
            for i in 0..self.n {
                acc.add(self.row(i));
            }
            let inv = self.n as f64;
            acc.finish().into_iter().map(|v| v / inv).collect()
        })
    }

    /// Empirical second moment `(1/n) Σ y_i y_iᵀ`, `p × p` row-major.
    pub fn second_moment(&self) -> &[f64] {
        self.second_moment.get_or_init(|| {
            let p = self.p;
            let mut acc = PairwiseSum::new(p * p);
            let mut outer = vec![0.0; p * p];
            for i in 0..self.n {
                let y = self.row(i);
                for a in 0..p {
                    for b in 0..p {
                        outer[a * p + b] = y[a] * y[b];
                    }
                }
                acc.add(&outer);
            }
            let inv = self.n as f64;
            acc.finish().into_iter().map(|v| v / inv).collect()
        })
    }
}
