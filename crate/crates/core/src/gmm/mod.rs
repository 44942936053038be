//! Gaussian mixture models in curved-exponential-family form.

mod init;
mod mixture;
mod param;
mod scalar;

pub use init::{initial_statistic, seed_statistic, InitStrategy};
pub use mixture::{gmm_posterior, GaussianMixture};
pub use param::GmmParameter;
pub use scalar::{ScalarTwoGmm, ScalarTwoParam};

/// Component masses at or below this value make `T(s)` undefined.
pub const EMPTY_COMPONENT_FLOOR: f64 = 1e-12;
