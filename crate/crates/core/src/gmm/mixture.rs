//! Gaussian mixture with free weights, free means and a pooled covariance.
//!
//! Statistic layout (`q = g + g·p`): entries `0..g` hold the component
//! masses, followed by `g` stacked `p`-vectors of posterior-weighted
//! observation sums, all normalised by `n`.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use super::param::{cholesky_lower, GmmParameter};
use super::EMPTY_COMPONENT_FLOOR;
use crate::dataset::Dataset;
use crate::error::{argument, DomainViolation, Error, Result};
use crate::model::Model;
use crate::stat::{compensated_sum, StatVector};

#[derive(Clone, Debug)]
pub struct GaussianMixture {
    g: usize,
    p: usize,
    include_constant: bool,
}

impl GaussianMixture {
    pub fn new(components: usize, dim: usize) -> Result<Self> {
        if components == 0 || dim == 0 {
            return Err(argument("components and dimension must be positive"));
        }
        Ok(GaussianMixture {
            g: components,
            p: dim,
            include_constant: true,
        })
    }

    /// Drop the `(p/2) ln 2π` constant from reported likelihoods.
    pub fn without_constant(mut self) -> Self {
        self.include_constant = false;
        self
    }

    pub fn components(&self) -> usize {
        self.g
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    fn check_data(&self, data: &Dataset) {
        assert_eq!(data.dim(), self.p, "dataset dimension does not match the model");
    }

    fn check_masses(&self, s: &[f64]) -> std::result::Result<(), DomainViolation> {
        let (g, p) = (self.g, self.p);
        if s.len() != g + g * p {
            return Err(DomainViolation::DimensionMismatch {
                expected: g + g * p,
                found: s.len(),
            });
        }
        if let Some(index) = s.iter().position(|v| !v.is_finite()) {
            return Err(DomainViolation::NonFinite { index });
        }
        for (l, &mass) in s[..g].iter().enumerate() {
            if !(mass > EMPTY_COMPONENT_FLOOR) {
                return Err(DomainViolation::EmptyComponent { component: l, mass });
            }
        }
        Ok(())
    }

    /// Weights, means and the implied covariance `M₂ − Σ_ℓ s_ℓ μ_ℓ μ_ℓᵀ`.
    fn solve_m_step(&self, data: &Dataset, s: &[f64]) -> std::result::Result<(Vec<f64>, Vec<f64>, Vec<f64>), DomainViolation> {
        self.check_masses(s)?;
        let (g, p) = (self.g, self.p);
        let masses = &s[..g];
        let total: f64 = masses.iter().sum();
        let weights: Vec<f64> = masses.iter().map(|m| m / total).collect();
        let mut means = vec![0.0; g * p];
        for l in 0..g {
            for j in 0..p {
                means[l * p + j] = s[g + l * p + j] / masses[l];
            }
        }
        let mut cov = data.second_moment().to_vec();
        for l in 0..g {
            let mu = &means[l * p..(l + 1) * p];
            for a in 0..p {
                for c in 0..p {
                    cov[a * p + c] -= masses[l] * mu[a] * mu[c];
                }
            }
        }
        Ok((weights, means, cov))
    }

    /// `ψ(θ) = (p/2) ln 2π + ½ tr(Γ M₂) − ½ ln det Γ`.
    pub fn psi(&self, data: &Dataset, theta: &GmmParameter) -> f64 {
        let p = self.p;
        let gamma = theta.precision();
        let m2 = DMatrix::from_row_slice(p, p, data.second_moment());
        let trace = (&gamma * m2).trace();
        0.5 * p as f64 * (2.0 * PI).ln() + 0.5 * trace - 0.5 * theta.log_det_precision()
    }

    fn log_joint(&self, theta: &GmmParameter, y: &[f64], whitened: &mut [f64], out: &mut [f64]) {
        theta.whiten(y, whitened);
        for (l, lp) in out.iter_mut().enumerate() {
            let m = theta.whitened_mean(l);
            let quad: f64 = whitened.iter().zip(m).map(|(w, mu)| (w - mu) * (w - mu)).sum();
            *lp = theta.log_weights()[l] - 0.5 * quad;
        }
    }
}

/// Posterior `p(z | y; θ)` computed in the log domain.
pub fn gmm_posterior(theta: &GmmParameter, y: &[f64]) -> Vec<f64> {
    let g = theta.components();
    let mut whitened = vec![0.0; theta.dim()];
    let mut lp = vec![0.0; g];
    GaussianMixture {
        g,
        p: theta.dim(),
        include_constant: true,
    }
    .log_joint(theta, y, &mut whitened, &mut lp);
    normalize_log(&mut lp);
    lp
}

/// In-place `x ← softmax(x)`; returns `log Σ exp x`.
pub(crate) fn normalize_log(x: &mut [f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v /= total;
    }
    max + total.ln()
}

impl Model for GaussianMixture {
    type Param = GmmParameter;

    fn stat_dim(&self) -> usize {
        self.g + self.g * self.p
    }

    fn sbar_i_into(&self, data: &Dataset, i: usize, theta: &GmmParameter, out: &mut [f64]) {
        let (g, p) = (self.g, self.p);
        let y = data.row(i);
        let mut whitened = [0.0f64; 64];
        let mut heap;
        let whitened: &mut [f64] = if p <= 64 {
            &mut whitened[..p]
        } else {
            heap = vec![0.0; p];
            &mut heap
        };
        let (post, sums) = out.split_at_mut(g);
        self.log_joint(theta, y, whitened, post);
        normalize_log(post);
        for l in 0..g {
            let r = post[l];
            for (dst, yj) in sums[l * p..(l + 1) * p].iter_mut().zip(y) {
                *dst = r * yj;
            }
        }
    }

    fn m_step(&self, data: &Dataset, s: &StatVector) -> Result<GmmParameter> {
        self.check_data(data);
        let (weights, means, cov) = self.solve_m_step(data, s)?;
        let chol = cholesky_lower(&cov, self.p).ok_or(Error::Domain(DomainViolation::DegenerateCovariance))?;
        GmmParameter::from_cholesky(weights, means, chol)
    }

    fn penalized_nll(&self, data: &Dataset, theta: &GmmParameter) -> f64 {
        self.check_data(data);
        let g = self.g;
        let mut whitened = vec![0.0; self.p];
        let mut lp = vec![0.0; g];
        let per_sample = (0..data.n()).map(|i| {
            self.log_joint(theta, data.row(i), &mut whitened, &mut lp);
            let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            max + lp.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        });
        let mean_log = compensated_sum(per_sample) / data.n() as f64;
        let mut nll = -mean_log - 0.5 * theta.log_det_precision();
        if self.include_constant {
            nll += 0.5 * self.p as f64 * (2.0 * PI).ln();
        }
        nll
    }

    fn domain_check(&self, data: &Dataset, s: &StatVector) -> std::result::Result<(), DomainViolation> {
        let (_, _, cov) = self.solve_m_step(data, s)?;
        cholesky_lower(&cov, self.p)
            .map(|_| ())
            .ok_or(DomainViolation::DegenerateCovariance)
    }

    fn phi(&self, theta: &GmmParameter) -> Result<Vec<f64>> {
        let (g, p) = (self.g, self.p);
        let mut out = vec![0.0; g + g * p];
        for l in 0..g {
            let w = theta.weights()[l];
            if !(w > 0.0) {
                return Err(Error::Domain(DomainViolation::Other(format!(
                    "log of zero weight for component {l}"
                ))));
            }
            let m = theta.whitened_mean(l);
            out[l] = w.ln() - 0.5 * m.iter().map(|v| v * v).sum::<f64>();
            out[g + l * p..g + (l + 1) * p].copy_from_slice(&theta.precision_times(theta.mean(l)));
        }
        Ok(out)
    }
}
