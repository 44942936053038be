//! Scalar two-component mixture with known weights and variance; only the
//! two means are estimated.
//!
//! Statistic layout: `(mass_1, mass_2, Σ r_1 y, Σ r_2 y) / n`.

use std::f64::consts::PI;

use super::EMPTY_COMPONENT_FLOOR;
use crate::dataset::Dataset;
use crate::error::{argument, DomainViolation, Result};
use crate::model::Model;
use crate::stat::{compensated_sum, StatVector};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarTwoParam {
    pub means: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct ScalarTwoGmm {
    weights: [f64; 2],
    variance: f64,
    log_prior_ratio: f64,
    include_constant: bool,
}

impl Default for ScalarTwoGmm {
    /// Weights (0.2, 0.8), unit variance.
    fn default() -> Self {
        ScalarTwoGmm::new([0.2, 0.8], 1.0).expect("valid constants")
    }
}

impl ScalarTwoGmm {
    pub fn new(weights: [f64; 2], variance: f64) -> Result<Self> {
        if weights.iter().any(|w| !(*w > 0.0)) || ((weights[0] + weights[1]) - 1.0).abs() > 1e-12 {
            return Err(argument("weights must be positive and sum to 1"));
        }
        if !(variance > 0.0) || !variance.is_finite() {
            return Err(argument("variance must be positive"));
        }
        Ok(ScalarTwoGmm {
            weights,
            variance,
            log_prior_ratio: (weights[0] / weights[1]).ln(),
            include_constant: true,
        })
    }

    pub fn without_constant(mut self) -> Self {
        self.include_constant = false;
        self
    }

    pub fn weights(&self) -> [f64; 2] {
        self.weights
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    /// `(p(1|y), p(2|y))` under `θ`.
    #[inline]
    pub fn posterior(&self, theta: &ScalarTwoParam, y: f64) -> [f64; 2] {
        let [m1, m2] = theta.means;
        let logit = self.log_prior_ratio - ((y - m1) * (y - m1) - (y - m2) * (y - m2)) / (2.0 * self.variance);
        [sigmoid(logit), sigmoid(-logit)]
    }

    /// `θ` mapped to a statistic: the full-data statistic `s̄(θ)`.
    pub fn initial_statistic(&self, data: &Dataset, theta: &ScalarTwoParam) -> StatVector {
        crate::ops::full_stats(self, data, theta)
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Model for ScalarTwoGmm {
    type Param = ScalarTwoParam;

    fn stat_dim(&self) -> usize {
        4
    }

    #[inline]
    fn sbar_i_into(&self, data: &Dataset, i: usize, theta: &ScalarTwoParam, out: &mut [f64]) {
        let y = data.row(i)[0];
        let [r1, r2] = self.posterior(theta, y);
        out[0] = r1;
        out[1] = r2;
        out[2] = r1 * y;
        out[3] = r2 * y;
    }

    fn m_step(&self, data: &Dataset, s: &StatVector) -> Result<ScalarTwoParam> {
        self.domain_check(data, s)?;
        Ok(ScalarTwoParam {
            means: [s[2] / s[0], s[3] / s[1]],
        })
    }

    fn penalized_nll(&self, data: &Dataset, theta: &ScalarTwoParam) -> f64 {
        let [m1, m2] = theta.means;
        let [w1, w2] = self.weights;
        let two_var = 2.0 * self.variance;
        let logs = (0..data.n()).map(|i| {
            let y = data.row(i)[0];
            let a = w1.ln() - (y - m1) * (y - m1) / two_var;
            let b = w2.ln() - (y - m2) * (y - m2) / two_var;
            let max = a.max(b);
            max + ((a - max).exp() + (b - max).exp()).ln()
        });
        let mut nll = -compensated_sum(logs) / data.n() as f64 + 0.5 * self.variance.ln();
        if self.include_constant {
            nll += 0.5 * (2.0 * PI).ln();
        }
        nll
    }

    fn domain_check(&self, data: &Dataset, s: &StatVector) -> std::result::Result<(), DomainViolation> {
        if data.dim() != 1 {
            return Err(DomainViolation::Other("scalar model needs one-dimensional data".into()));
        }
        if s.len() != 4 {
            return Err(DomainViolation::DimensionMismatch { expected: 4, found: s.len() });
        }
        if let Some(index) = s.first_non_finite() {
            return Err(DomainViolation::NonFinite { index });
        }
        for l in 0..2 {
            if !(s[l] > EMPTY_COMPONENT_FLOOR) {
                return Err(DomainViolation::EmptyComponent { component: l, mass: s[l] });
            }
        }
        Ok(())
    }

    fn phi(&self, theta: &ScalarTwoParam) -> Result<Vec<f64>> {
        let v = self.variance;
        let [m1, m2] = theta.means;
        Ok(vec![
            self.weights[0].ln() - m1 * m1 / (2.0 * v),
            self.weights[1].ln() - m2 * m2 / (2.0 * v),
            m1 / v,
            m2 / v,
        ])
    }
}
