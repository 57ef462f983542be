//! Randomized embeddings by sampling frequencies from the kernel density.
//!
//! Drawing `s` frequencies i.i.d. from `kappa` and emitting
//! `sqrt(scale/s) * sqrt(v) * (cos, sin)(w_j ln v)` per coordinate makes the
//! squared distance between two embedded points the sample mean of
//! `scale * h`, an unbiased estimate of the divergence with relative
//! variance bounded by the kernel's fourth moment. Entries carry `1/sqrt(s)`
//! so that squared distances are sample means; persisted artifacts record
//! the seed and generator id, and only embeddings built from the same
//! frequency sample are comparable.

use serde::{Deserialize, Serialize};

use crate::dist::{DivergenceKind, Distribution};
use crate::embed::MAX_EMBED_LEN;
use crate::error::{Error, Result};
use crate::kernel::{h, spectral_scale, KernelSpec};
use crate::seed::{open_unit, rng_from, sha256_hex, RNG_ID};

/// Frequencies drawn from the kernel density, reproducible from the seed.
#[derive(Debug, Clone)]
pub struct FrequencySample {
    kind: DivergenceKind,
    seed: u64,
    omegas: Vec<f64>,
    digest: String,
}

impl FrequencySample {
    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn omegas(&self) -> &[f64] {
        &self.omegas
    }

    /// Identity of the sample; embeddings are comparable iff this matches.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

fn sample_digest(kind: DivergenceKind, s: usize, seed: u64) -> String {
    sha256_hex(format!("freq;kind={kind};s={s};seed={seed};rng={RNG_ID}").as_bytes())
}

/// Draws `s` frequencies by inverse-transform sampling of the kernel CDF.
pub fn draw_frequencies(kind: DivergenceKind, s: usize, seed: u64) -> Result<FrequencySample> {
    if s == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let spec = KernelSpec::get(kind)?;
    let mut rng = rng_from(seed);
    let omegas = (0..s).map(|_| spec.quantile(open_unit(&mut rng))).collect();
    Ok(FrequencySample { kind, seed, omegas, digest: sample_digest(kind, s, seed) })
}

/// A sampled embedding bound to the frequency sample that produced it.
#[derive(Debug, Clone)]
pub struct RandEmbedding {
    pub(crate) header: RandHeader,
    vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandHeader {
    pub kind: DivergenceKind,
    pub d: usize,
    pub s: usize,
    pub seed: u64,
    pub rng_id: String,
    pub sample_digest: String,
}

impl RandEmbedding {
    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn header(&self) -> &RandHeader {
        &self.header
    }

    pub fn from_parts(header: RandHeader, vector: Vec<f64>) -> RandEmbedding {
        RandEmbedding { header, vector }
    }
}

/// Embeds a point against a frequency sample. Layout is coordinate-major:
/// coordinate `i` owns `2s` entries, cosines before sines.
pub fn rand_embed_point(sample: &FrequencySample, p: &Distribution) -> RandEmbedding {
    let s = sample.len();
    let scale = spectral_scale(sample.kind).expect("sample kinds always carry a kernel");
    let factor = (scale / s as f64).sqrt();
    let mut vector = vec![0.0; 2 * s * p.d()];
    for (i, &v) in p.values().iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let sqrt_v = v.sqrt() * factor;
        let ln_v = v.ln();
        let block = &mut vector[i * 2 * s..(i + 1) * 2 * s];
        for (j, &w) in sample.omegas.iter().enumerate() {
            let (sin_t, cos_t) = (w * ln_v).sin_cos();
            block[j] = sqrt_v * cos_t;
            block[s + j] = sqrt_v * sin_t;
        }
    }
    RandEmbedding {
        header: RandHeader {
            kind: sample.kind,
            d: p.d(),
            s,
            seed: sample.seed,
            rng_id: RNG_ID.to_string(),
            sample_digest: sample.digest.clone(),
        },
        vector,
    }
}

/// Squared distance between two sampled embeddings; errors unless both were
/// built from the same frequency sample.
pub fn rand_distance(a: &RandEmbedding, b: &RandEmbedding) -> Result<f64> {
    if a.header != b.header {
        return Err(Error::Incompatible(
            "sampled embeddings built from different frequency samples".into(),
        ));
    }
    crate::embed::l22_distance(&a.vector, &b.vector)
}

/// Monte Carlo mean and (unbiased) variance of the single-draw divergence
/// estimator `scale * h(x, y, Omega)` under the kernel density.
pub fn moment_check(
    kind: DivergenceKind,
    x: f64,
    y: f64,
    s: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if s < 2 {
        return Err(Error::Config("moment check needs at least 2 samples".into()));
    }
    let sample = draw_frequencies(kind, s, seed)?;
    let scale = spectral_scale(kind)?;
    let values: Vec<f64> = sample.omegas.iter().map(|&w| scale * h(x, y, w)).collect();
    let mean = values.iter().sum::<f64>() / s as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (s as f64 - 1.0);
    Ok((mean, var))
}

/// Sample count guaranteeing, by Chebyshev plus a union bound over all `n`
/// points' pairs and `d` coordinates, a per-coordinate `(1 +/- eps)`
/// estimate except with probability `1/d`: `ceil(36 n^2 d^2 / eps^2)` for
/// JS and `ceil(23 n^2 d^2 / eps^2)` for chi^2.
pub fn required_samples(kind: DivergenceKind, n: usize, d: usize, eps: f64) -> Result<u64> {
    if n == 0 || d == 0 {
        return Err(Error::Config("n and d must be at least 1".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("eps must lie in (0, 1), got {eps}")));
    }
    let c = match kind {
        DivergenceKind::Js => 36.0,
        DivergenceKind::ChiSquared => 23.0,
        DivergenceKind::Hellinger => return Err(Error::UnsupportedKernel(kind)),
    };
    let raw = c * (n as f64).powi(2) * (d as f64).powi(2) / (eps * eps);
    if !raw.is_finite() || raw >= 9.0e18 {
        return Err(Error::Config(format!(
            "sample count ceil({c} n^2 d^2 / eps^2) overflows for n={n}, d={d}, eps={eps}"
        )));
    }
    // tiny slack so float roundoff cannot bump an exact integer boundary
    let s = (raw - 1e-9).ceil().max(1.0) as u64;
    let len = 2.0 * s as f64 * d as f64;
    if len > MAX_EMBED_LEN as f64 {
        return Err(Error::Config(format!(
            "embedding length 2 s d = 2*{s}*{d} exceeds {MAX_EMBED_LEN}; \
             s = ceil({c} n^2 d^2 / eps^2)"
        )));
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::scalar_divergence;
    use crate::testutil::random_point;
    use approx::assert_abs_diff_eq;

    #[test]
    fn same_seed_reproduces_sample() {
        let a = draw_frequencies(DivergenceKind::Js, 1000, 99).unwrap();
        let b = draw_frequencies(DivergenceKind::Js, 1000, 99).unwrap();
        assert_eq!(a.omegas(), b.omegas());
        assert_eq!(a.digest(), b.digest());
        let c = draw_frequencies(DivergenceKind::Js, 1000, 100).unwrap();
        assert_ne!(a.digest(), c.digest());
    }

    #[test]
    fn empirical_distribution_matches_kernel() {
        let s = 100_000;
        let chi = draw_frequencies(DivergenceKind::ChiSquared, s, 5).unwrap();
        let below = chi.omegas().iter().filter(|&&w| w <= 0.0).count() as f64 / s as f64;
        assert!((below - 0.5).abs() <= 0.01, "empirical cdf at 0: {below}");

        let js = draw_frequencies(DivergenceKind::Js, s, 6).unwrap();
        let t = (4.0 / 0.01f64).ln();
        let tail = js.omegas().iter().filter(|&&w| w.abs() > t).count() as f64 / s as f64;
        assert!(tail <= 0.012, "tail fraction {tail}");

        for sample in [&chi, &js] {
            let mean = sample.omegas().iter().sum::<f64>() / s as f64;
            assert!(mean.abs() <= 5.0 / (s as f64).sqrt());
        }
    }

    #[test]
    fn identical_points_embed_identically() {
        let sample = draw_frequencies(DivergenceKind::Js, 64, 3).unwrap();
        let p = Distribution::validate(&[0.4, 0.6], false).unwrap();
        let a = rand_embed_point(&sample, &p);
        let b = rand_embed_point(&sample, &p);
        assert_eq!(rand_distance(&a, &b).unwrap(), 0.0);
        assert_eq!(a.vector().len(), 2 * 64 * 2);
    }

    #[test]
    fn zero_coordinate_gives_zero_block() {
        let sample = draw_frequencies(DivergenceKind::ChiSquared, 32, 3).unwrap();
        let p = Distribution::validate(&[1.0, 0.0], false).unwrap();
        let e = rand_embed_point(&sample, &p);
        assert!(e.vector()[64..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn different_samples_are_incompatible() {
        let s1 = draw_frequencies(DivergenceKind::Js, 16, 1).unwrap();
        let s2 = draw_frequencies(DivergenceKind::Js, 16, 2).unwrap();
        let p = Distribution::uniform(2);
        let a = rand_embed_point(&s1, &p);
        let b = rand_embed_point(&s2, &p);
        assert!(matches!(rand_distance(&a, &b), Err(Error::Incompatible(_))));
    }

    #[test]
    fn single_coordinate_distance_estimates_divergence() {
        let s = 100_000;
        let sample = draw_frequencies(DivergenceKind::Js, s, 42).unwrap();
        let (x, y) = (0.9, 0.1);
        let scale = spectral_scale(DivergenceKind::Js).unwrap();
        let mean: f64 =
            sample.omegas().iter().map(|&w| scale * h(x, y, w)).sum::<f64>() / s as f64;
        let f = scalar_divergence(DivergenceKind::Js, x, y);
        assert!((mean - f).abs() <= 3.0 * 6.0 * f / (s as f64).sqrt(), "mean {mean} vs {f}");
    }

    #[test]
    fn full_point_distance_concentrates() {
        let s = 100_000;
        let sample = draw_frequencies(DivergenceKind::Js, s, 7).unwrap();
        let p = Distribution::validate(&[1.0, 0.0], false).unwrap();
        let q = Distribution::validate(&[0.0, 1.0], false).unwrap();
        let d = rand_distance(&rand_embed_point(&sample, &p), &rand_embed_point(&sample, &q))
            .unwrap();
        let exact = 2.0 * std::f64::consts::LN_2;
        assert!((d - exact).abs() <= 0.05 * exact, "distance {d}");
    }

    #[test]
    fn moment_check_examples() {
        let (mean, var) = moment_check(DivergenceKind::Js, 0.37, 0.37, 100, 1).unwrap();
        assert_eq!((mean, var), (0.0, 0.0));

        let s = 200_000;
        let (mean, var) = moment_check(DivergenceKind::Js, 0.9, 0.1, s, 2).unwrap();
        let f = scalar_divergence(DivergenceKind::Js, 0.9, 0.1);
        assert!((mean - f).abs() / f <= 0.02, "mean {mean} vs {f}");
        assert!(var <= 36.0 * f * f);

        let (mean, var) = moment_check(DivergenceKind::ChiSquared, 0.7, 0.2, s, 3).unwrap();
        let f = scalar_divergence(DivergenceKind::ChiSquared, 0.7, 0.2);
        assert!((mean - f).abs() / f <= 0.02);
        assert!(var <= 23.0 * f * f);
    }

    #[test]
    fn unbiasedness_over_many_seeds() {
        // average of single-draw estimates converges to the closed form
        let mut rng = crate::seed::rng_from(23);
        let p = random_point(&mut rng, 3);
        let q = random_point(&mut rng, 3);
        let scale = spectral_scale(DivergenceKind::ChiSquared).unwrap();
        let sample = draw_frequencies(DivergenceKind::ChiSquared, 400_000, 11).unwrap();
        let mut acc = 0.0;
        for (&x, &y) in p.values().iter().zip(q.values()) {
            acc += sample.omegas().iter().map(|&w| scale * h(x, y, w)).sum::<f64>();
        }
        let est = acc / sample.len() as f64;
        let exact = crate::dist::divergence(DivergenceKind::ChiSquared, &p, &q).unwrap();
        assert!((est - exact).abs() / exact <= 0.01, "est {est} vs {exact}");
    }

    #[test]
    fn required_samples_formulas() {
        assert_eq!(required_samples(DivergenceKind::Js, 2, 2, 0.5).unwrap(), 2304);
        // eps as close to 1 as f64 allows: the limit value of the formula
        let eps = 1.0 - f64::EPSILON / 2.0;
        assert_eq!(required_samples(DivergenceKind::ChiSquared, 1, 1, eps).unwrap(), 23);
        assert!(matches!(
            required_samples(DivergenceKind::Js, 1000, 1000, 0.1),
            Err(Error::Config(_))
        ));
        assert!(required_samples(DivergenceKind::Hellinger, 1, 1, 0.5).is_err());
        assert!(required_samples(DivergenceKind::Js, 1, 1, 1.0).is_err());
    }

    // With s = required_samples, the per-coordinate relative error exceeds
    // eps with frequency at most (nd)^-2 plus sampling slack.
    #[test]
    fn chebyshev_failure_rate() {
        let (n, d, eps) = (2usize, 2usize, 0.5);
        let s = required_samples(DivergenceKind::Js, n, d, eps).unwrap() as usize;
        let scale = spectral_scale(DivergenceKind::Js).unwrap();
        let mut rng = crate::seed::rng_from(31);
        let p = random_point(&mut rng, d);
        let q = random_point(&mut rng, d);
        let mut exceed = 0usize;
        let mut total = 0usize;
        for seed in 0..100u64 {
            let sample = draw_frequencies(DivergenceKind::Js, s, 1000 + seed).unwrap();
            for (&x, &y) in p.values().iter().zip(q.values()) {
                let f = scalar_divergence(DivergenceKind::Js, x, y);
                if f <= 0.0 {
                    continue;
                }
                let mean: f64 =
                    sample.omegas().iter().map(|&w| scale * h(x, y, w)).sum::<f64>() / s as f64;
                total += 1;
                if (mean - f).abs() > eps * f {
                    exceed += 1;
                }
            }
        }
        let rate = exceed as f64 / total as f64;
        let bound = 1.0 / ((n * d) as f64).powi(2);
        assert!(rate <= bound + 0.05, "failure rate {rate} vs bound {bound}");
    }

    #[test]
    fn scaled_estimator_matches_spectral_scale() {
        // the embedding's squared distance is exactly the sample mean of
        // scale * h summed over coordinates
        let sample = draw_frequencies(DivergenceKind::Js, 257, 17).unwrap();
        let mut rng = crate::seed::rng_from(19);
        let p = random_point(&mut rng, 3);
        let q = random_point(&mut rng, 3);
        let d = rand_distance(&rand_embed_point(&sample, &p), &rand_embed_point(&sample, &q))
            .unwrap();
        let scale = spectral_scale(DivergenceKind::Js).unwrap();
        let mut acc = 0.0;
        for (&x, &y) in p.values().iter().zip(q.values()) {
            acc += sample.omegas().iter().map(|&w| scale * h(x, y, w)).sum::<f64>();
        }
        assert_abs_diff_eq!(d, acc / sample.len() as f64, epsilon = 1e-12);
    }
}
