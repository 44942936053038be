//! Points of the expectation space and deterministic accumulation.

use std::ops::{Deref, DerefMut};

/// A point of the expectation (sufficient-statistic) space.
#[derive(Clone, Debug, PartialEq)]
pub struct StatVector(Vec<f64>);

impl StatVector {
    pub fn zeros(q: usize) -> Self {
        StatVector(vec![0.0; q])
    }

    pub fn from_vec(values: Vec<f64>) -> Self {
        StatVector(values)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Index of the first NaN/Inf entry, if any.
    pub fn first_non_finite(&self) -> Option<usize> {
        self.0.iter().position(|v| !v.is_finite())
    }

    /// `self - other`.
    pub fn sub(&self, other: &StatVector) -> StatVector {
        debug_assert_eq!(self.len(), other.len());
        StatVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    /// `self += a * x`.
    pub fn axpy(&mut self, a: f64, x: &StatVector) {
        debug_assert_eq!(self.len(), x.len());
        for (s, v) in self.0.iter_mut().zip(&x.0) {
            *s += a * v;
        }
    }

    /// Damped move towards `target`: `self + gamma * (target - self)`.
    pub fn relax_towards(&self, gamma: f64, target: &StatVector) -> StatVector {
        StatVector(
            self.0
                .iter()
                .zip(&target.0)
                .map(|(s, t)| s + gamma * (t - s))
                .collect(),
        )
    }

    pub fn max_abs_diff(&self, other: &StatVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Deref for StatVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for StatVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

impl From<Vec<f64>> for StatVector {
    fn from(v: Vec<f64>) -> Self {
        StatVector(v)
    }
}

const BLOCK: usize = 32;

/// Blocked pairwise summation of equal-length vectors.
///
/// Terms are summed sequentially inside blocks of 32, and block sums are
/// merged as a balanced binary tree. The result depends only on the order
/// of the terms, never on timing or thread layout.
pub(crate) struct PairwiseSum {
    dim: usize,
    block: Vec<f64>,
    in_block: usize,
    stack: Vec<(u32, Vec<f64>)>,
    pool: Vec<Vec<f64>>,
}

impl PairwiseSum {
    pub fn new(dim: usize) -> Self {
        PairwiseSum {
            dim,
            block: vec![0.0; dim],
            in_block: 0,
            stack: Vec::new(),
            pool: Vec::new(),
        }
    }

    pub fn add(&mut self, term: &[f64]) {
        debug_assert_eq!(term.len(), self.dim);
        for (b, t) in self.block.iter_mut().zip(term) {
            *b += t;
        }
        self.in_block += 1;
        if self.in_block == BLOCK {
            self.flush_block();
        }
    }

    fn fresh(&mut self) -> Vec<f64> {
        match self.pool.pop() {
            Some(mut v) => {
                v.iter_mut().for_each(|x| *x = 0.0);
                v
            }
            None => vec![0.0; self.dim],
        }
    }

    fn flush_block(&mut self) {
        let fresh = self.fresh();
        let full = std::mem::replace(&mut self.block, fresh);
        self.in_block = 0;
        let mut level = 0u32;
        let mut acc = full;
        while let Some((top_level, _)) = self.stack.last() {
            if *top_level != level {
                break;
            }
            let (_, mut left) = self.stack.pop().expect("non-empty stack");
            for (l, r) in left.iter_mut().zip(&acc) {
                *l += r;
            }
            self.pool.push(acc);
            acc = left;
            level += 1;
        }
        self.stack.push((level, acc));
    }

    pub fn finish(mut self) -> Vec<f64> {
        if self.in_block > 0 {
            self.flush_block();
        }
        let mut acc: Option<Vec<f64>> = None;
        while let Some((_, mut below)) = self.stack.pop() {
            if let Some(upper) = acc.take() {
                for (b, u) in below.iter_mut().zip(&upper) {
                    *b += u;
                }
            }
            acc = Some(below);
        }
        acc.unwrap_or_else(|| vec![0.0; self.dim])
    }
}

/// Compensated (Neumaier) sum of scalars in iteration order.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
