//! The curved-exponential-family model contract.

use crate::dataset::Dataset;
use crate::error::{DomainViolation, Error, Result};
use crate::stat::StatVector;

/// A latent-variable model whose complete-data likelihood is a curved
/// exponential family.
///
/// Implementations supply the per-sample conditional expectation of the
/// sufficient statistic, the M-step map `T`, and the objective `F`. All
/// methods must be pure: the same inputs give bitwise-identical outputs.
pub trait Model: Sync {
    /// Model parameter θ.
    type Param: Clone + std::fmt::Debug + Send + Sync;

    /// Dimension `q` of the sufficient statistic.
    fn stat_dim(&self) -> usize;

    /// Writes `s̄_i(θ)`, the conditional expectation of the sufficient
    /// statistic of observation `i`, into `out` (length `q`).
    fn sbar_i_into(&self, data: &Dataset, i: usize, theta: &Self::Param, out: &mut [f64]);

    fn sbar_i(&self, data: &Dataset, i: usize, theta: &Self::Param) -> StatVector {
        let mut out = vec![0.0; self.stat_dim()];
        self.sbar_i_into(data, i, theta, &mut out);
        StatVector::from_vec(out)
    }

    /// The M-step map `T(s)`. Fails with a domain error when `s` is outside
    /// the set on which the minimiser exists.
    fn m_step(&self, data: &Dataset, s: &StatVector) -> Result<Self::Param>;

    /// Penalised negative normalised log-likelihood `F(θ)`.
    fn penalized_nll(&self, data: &Dataset, theta: &Self::Param) -> f64;

    /// Whether `T(s)` is defined.
    fn domain_check(&self, data: &Dataset, s: &StatVector) -> std::result::Result<(), DomainViolation>;

    /// Natural parameter `φ(θ)`, for models that expose it.
    fn phi(&self, _theta: &Self::Param) -> Result<Vec<f64>> {
        Err(Error::Unsupported("model does not expose its natural parameter".into()))
    }
}

/// Shared precondition for every operation taking a statistic.
pub(crate) fn check_shape<M: Model>(model: &M, s: &StatVector) -> std::result::Result<(), DomainViolation> {
    if s.len() != model.stat_dim() {
        return Err(DomainViolation::DimensionMismatch {
            expected: model.stat_dim(),
            found: s.len(),
        });
    }
    if let Some(index) = s.first_non_finite() {
        return Err(DomainViolation::NonFinite { index });
    }
    Ok(())
}
