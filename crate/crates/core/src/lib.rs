//! Variance-reduced incremental EM in the expectation space.
//!
//! Algorithms iterate on the sufficient-statistic vector `Ŝ` rather than on
//! the parameter. A [`Model`] provides the per-sample conditional expectation
//! `s̄_i(θ)`, the M-step map `T(s)` and the objective `F(θ)`; everything in
//! [`algorithms`] is written against that contract. [`gmm`] provides two
//! Gaussian mixture models and [`data`] the generators, file formats and
//! preprocessing used by the experiment harness.

pub mod algorithms;
pub mod data;
pub mod dataset;
pub mod error;
pub mod gmm;
pub mod model;
pub mod ops;
pub mod sampler;
pub mod stat;

pub use dataset::Dataset;
pub use error::{DomainViolation, Error, Result};
pub use model::Model;
pub use ops::{Oracle, OracleCounts};
pub use sampler::{MinibatchSampler, SamplingMode};
pub use stat::StatVector;
