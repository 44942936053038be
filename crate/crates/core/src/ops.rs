//! Expectation-space operations: minibatch and full-data statistics, the
//! mean field `h`, the Lyapunov objective `W`, and finite-difference checks
//! of the gradient identity `∇W(s) = −B(s) h(s)`.

use nalgebra::DMatrix;

use crate::dataset::Dataset;
use crate::error::{argument, Error, Result};
use crate::model::{check_shape, Model};
use crate::stat::{PairwiseSum, StatVector};

/// Default central-difference step.
pub const FD_STEP: f64 = 1e-5;

fn average_over<M: Model>(
    model: &M,
    data: &Dataset,
    theta: &M::Param,
    indices: impl Iterator<Item = usize>,
    count: usize,
) -> StatVector {
    let q = model.stat_dim();
    let mut scratch = vec![0.0; q];
    let mut acc = PairwiseSum::new(q);
    for i in indices {
        model.sbar_i_into(data, i, theta, &mut scratch);
        acc.add(&scratch);
    }
    let denom = count as f64;
    StatVector::from_vec(acc.finish().into_iter().map(|v| v / denom).collect())
}

/// `(1/|B|) Σ_{i∈B} s̄_i(θ)`, duplicates counted with multiplicity.
pub fn minibatch_stats<M: Model>(
    model: &M,
    data: &Dataset,
    indices: &[usize],
    theta: &M::Param,
) -> Result<StatVector> {
    if indices.is_empty() {
        return Err(argument("minibatch is empty"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.n()) {
        return Err(argument(format!("index {bad} out of range for n = {}", data.n())));
    }
    Ok(average_over(model, data, theta, indices.iter().copied(), indices.len()))
}

/// `s̄(θ) = (1/n) Σ_i s̄_i(θ)`, accumulated in ascending index order.
pub fn full_stats<M: Model>(model: &M, data: &Dataset, theta: &M::Param) -> StatVector {
    average_over(model, data, theta, 0..data.n(), data.n())
}

/// `h(s) = s̄(T(s)) − s`.
pub fn mean_field<M: Model>(model: &M, data: &Dataset, s: &StatVector) -> Result<StatVector> {
    check_shape(model, s)?;
    let theta = model.m_step(data, s)?;
    Ok(full_stats(model, data, &theta).sub(s))
}

/// `W(s) = F(T(s))`.
pub fn objective<M: Model>(model: &M, data: &Dataset, s: &StatVector) -> Result<f64> {
    check_shape(model, s)?;
    let theta = model.m_step(data, s)?;
    Ok(model.penalized_nll(data, &theta))
}

fn perturbed(s: &StatVector, j: usize, delta: f64) -> StatVector {
    let mut out = s.clone();
    out[j] += delta;
    out
}

/// Central-difference gradient of `W` at `s`.
pub fn fd_gradient_objective<M: Model>(
    model: &M,
    data: &Dataset,
    s: &StatVector,
    step: f64,
) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(argument("finite-difference step must be positive"));
    }
    check_shape(model, s)?;
    (0..s.len())
        .map(|j| {
            let up = objective(model, data, &perturbed(s, j, step))?;
            let down = objective(model, data, &perturbed(s, j, -step))?;
            Ok((up - down) / (2.0 * step))
        })
        .collect()
}

/// Finite-difference Jacobian of `φ∘T`.
#[derive(Clone, Debug)]
pub struct PhiJacobian {
    /// Raw central-difference Jacobian, `raw[(i, j)] = ∂(φ∘T)_j / ∂s_i`.
    pub raw: DMatrix<f64>,
    /// `(J + Jᵀ)/2`, the estimate of `B(s)`.
    pub symmetric: DMatrix<f64>,
    /// `‖J − Jᵀ‖_F / ‖J‖_F`.
    pub asymmetry: f64,
}

impl PhiJacobian {
    pub fn min_eigenvalue(&self) -> f64 {
        self.symmetric
            .clone()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    /// `B · v` with the symmetrised Jacobian.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let x = nalgebra::DVector::from_column_slice(v);
        (&self.symmetric * x).iter().copied().collect()
    }
}

pub fn fd_jacobian_phi_t<M: Model>(
    model: &M,
    data: &Dataset,
    s: &StatVector,
    step: f64,
) -> Result<PhiJacobian> {
    if !(step > 0.0) {
        return Err(argument("finite-difference step must be positive"));
    }
    check_shape(model, s)?;
    let q = s.len();
    let centre = model.phi(&model.m_step(data, s)?)?;
    if centre.len() != q {
        return Err(Error::Unsupported(format!(
            "natural parameter has {} entries, statistic has {q}",
            centre.len()
        )));
    }
    let mut raw = DMatrix::zeros(q, q);
    for i in 0..q {
        let up = model.phi(&model.m_step(data, &perturbed(s, i, step))?)?;
        let down = model.phi(&model.m_step(data, &perturbed(s, i, -step))?)?;
        for j in 0..q {
            raw[(i, j)] = (up[j] - down[j]) / (2.0 * step);
        }
    }
    let transposed = raw.transpose();
    let norm = raw.norm();
    let asymmetry = if norm > 0.0 { (&raw - &transposed).norm() / norm } else { 0.0 };
    let symmetric = (&raw + &transposed) * 0.5;
    Ok(PhiJacobian { raw, symmetric, asymmetry })
}

/// Oracle-call tallies: per-sample conditional expectations and M-steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OracleCounts {
    pub ce: u64,
    pub m_steps: u64,
}

impl std::ops::Add for OracleCounts {
    type Output = OracleCounts;
    fn add(self, rhs: OracleCounts) -> OracleCounts {
        OracleCounts {
            ce: self.ce + rhs.ce,
            m_steps: self.m_steps + rhs.m_steps,
        }
    }
}

/// A model bound to a dataset, tallying every oracle call it makes.
///
/// Algorithms do all their model evaluations through an `Oracle`, so the
/// `K_CE` / `K_Opt` accounting is uniform across them.
pub struct Oracle<'a, M: Model> {
    model: &'a M,
    data: &'a Dataset,
    counts: OracleCounts,
}

impl<'a, M: Model> Oracle<'a, M> {
    pub fn new(model: &'a M, data: &'a Dataset) -> Self {
        Oracle {
            model,
            data,
            counts: OracleCounts::default(),
        }
    }

    pub fn model(&self) -> &'a M {
        self.model
    }

    pub fn data(&self) -> &'a Dataset {
        self.data
    }

    pub fn n(&self) -> usize {
        self.data.n()
    }

    pub fn counts(&self) -> OracleCounts {
        self.counts
    }

    pub fn m_step(&mut self, s: &StatVector) -> Result<M::Param> {
        check_shape(self.model, s)?;
        self.counts.m_steps += 1;
        self.model.m_step(self.data, s)
    }

    pub fn batch_stats(&mut self, theta: &M::Param, indices: &[usize]) -> StatVector {
        debug_assert!(!indices.is_empty());
        self.counts.ce += indices.len() as u64;
        average_over(self.model, self.data, theta, indices.iter().copied(), indices.len())
    }

    pub fn full_stats(&mut self, theta: &M::Param) -> StatVector {
        self.counts.ce += self.data.n() as u64;
        full_stats(self.model, self.data, theta)
    }

    pub fn sbar_i_into(&mut self, i: usize, theta: &M::Param, out: &mut [f64]) {
        self.counts.ce += 1;
        self.model.sbar_i_into(self.data, i, theta, out);
    }

    /// `h(s)`; costs one M-step and `n` conditional expectations.
    pub fn mean_field(&mut self, s: &StatVector) -> Result<StatVector> {
        let theta = self.m_step(s)?;
        Ok(self.full_stats(&theta).sub(s))
    }

    /// `W(s)`; costs one M-step.
    pub fn objective(&mut self, s: &StatVector) -> Result<f64> {
        let theta = self.m_step(s)?;
        Ok(self.model.penalized_nll(self.data, &theta))
    }
}
