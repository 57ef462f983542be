//! Shared helpers for unit tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dist::Distribution;

/// Uniform (Dirichlet(1,..,1)) random point on the simplex.
pub(crate) fn random_point(rng: &mut ChaCha8Rng, d: usize) -> Distribution {
    let raw: Vec<f64> = (0..d).map(|_| -(rng.random::<f64>().max(1e-300)).ln()).collect();
    Distribution::validate(&raw, true).unwrap()
}
