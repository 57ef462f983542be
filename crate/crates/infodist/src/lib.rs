//! Toolkit for information divergences on the probability simplex.
//!
//! Three closed-form divergences (Jensen-Shannon, Hellinger, symmetrized
//! chi^2) together with the machinery that makes them usable at scale:
//!
//! - [`dist`]: simplex points and exact closed-form divergences;
//! - [`kernel`]: the spectral decomposition `D = scale * \int h kappa`
//!   shared by JS and chi^2, with CDF/quantile machinery;
//! - [`embed`]: deterministic additive-error embeddings into finite
//!   `l2^2`, plus the exact Hellinger square-root map;
//! - [`sample`]: randomized embeddings by sampling frequencies from the
//!   kernel density, with unbiasedness and variance guarantees;
//! - [`stream`]: aggregate-stream replay and mergeable random-sign linear
//!   sketches estimating divergences in small space;
//! - [`dimred`]: structure-preserving dimensionality reduction onto a
//!   lower-dimensional simplex via Euclidean random projection.

pub mod dimred;
pub mod dist;
pub mod embed;
pub mod error;
pub mod io;
pub mod kernel;
pub mod quad;
pub mod sample;
pub mod seed;
pub mod stream;

#[cfg(test)]
pub(crate) mod testutil;

pub use dist::{divergence, scalar_divergence, Distribution, DivergenceKind};
pub use error::{Error, Result};
