//! Structure-preserving dimensionality reduction onto a smaller simplex.
//!
//! Pipeline: (1) embed the points into `l2^2` (exact square-root map for
//! Hellinger; deterministic or sampled spectral embedding for JS / chi^2),
//! (2) random-project to `k` dimensions, (3) remap isometrically onto the
//! zero-sum hyperplane `L` in `R^{k+1}`, (4) scale into a small ball around
//! the centroid of the simplex `Delta_{k+1}`. Near the centroid every
//! well-behaved divergence is `f''(1)(k+1)/2` times squared Euclidean
//! distance, so the recorded calibration converts divergences measured
//! between reduced points back to the originals.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as RandDistribution, StandardNormal};

use crate::dist::{divergence, second_derivative_at_one, Distribution, DivergenceKind};
use crate::embed::{embed_point, hellinger_embed, l22_distance, GridSpec};
use crate::error::{Error, Result};
use crate::sample::{draw_frequencies, rand_embed_point};
use crate::seed::{child_seed, mix_seed, rng_from};

/// Above this many matrix cells the projection regenerates rows from the
/// seed on the fly instead of materializing `k x D` doubles.
pub const JL_DENSE_LIMIT: usize = 4_000_000;

/// Seeded Gaussian random projection `R^D -> R^k` with entries
/// `N(0, 1) / sqrt(k)`, regenerable from `(seed, k, D)`.
pub struct JLProjection {
    k: usize,
    src_dim: usize,
    seed: u64,
    dense: Option<Vec<f64>>,
}

impl JLProjection {
    pub fn new(k: usize, src_dim: usize, seed: u64) -> JLProjection {
        let mut proj = JLProjection { k, src_dim, seed, dense: None };
        if k.saturating_mul(src_dim) <= JL_DENSE_LIMIT {
            let mut dense = Vec::with_capacity(k * src_dim);
            for r in 0..k {
                proj.write_row(r, &mut dense);
            }
            proj.dense = Some(dense);
        }
        proj
    }

    #[cfg(test)]
    fn new_streaming(k: usize, src_dim: usize, seed: u64) -> JLProjection {
        JLProjection { k, src_dim, seed, dense: None }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn src_dim(&self) -> usize {
        self.src_dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    // Row r of the scaled matrix, appended to `out`.
    fn write_row(&self, r: usize, out: &mut Vec<f64>) {
        let inv = 1.0 / (self.k as f64).sqrt();
        let mut rng = rng_from(mix_seed(self.seed, r as u64));
        out.extend((0..self.src_dim).map(|_| {
            let g: f64 = StandardNormal.sample(&mut rng);
            g * inv
        }));
    }

    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.project_batch(&[x])?.pop().unwrap())
    }

    /// Projects many points in one pass over the matrix rows.
    pub fn project_batch(&self, points: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        for p in points {
            if p.len() != self.src_dim {
                return Err(Error::Dimension { expected: self.src_dim, got: p.len() });
            }
        }
        let mut out = vec![vec![0.0; self.k]; points.len()];
        match &self.dense {
            Some(dense) => {
                for r in 0..self.k {
                    let row = &dense[r * self.src_dim..(r + 1) * self.src_dim];
                    for (pi, p) in points.iter().enumerate() {
                        out[pi][r] = dot(row, p);
                    }
                }
            }
            None => {
                let mut row = Vec::with_capacity(self.src_dim);
                for r in 0..self.k {
                    row.clear();
                    self.write_row(r, &mut row);
                    for (pi, p) in points.iter().enumerate() {
                        out[pi][r] = dot(&row, p);
                    }
                }
            }
        }
        Ok(out)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Applies the projection to one vector.
pub fn jl_project(proj: &JLProjection, x: &[f64]) -> Result<Vec<f64>> {
    proj.project(x)
}

/// Isometric embedding of `R^k` into the zero-sum hyperplane
/// `L = { x in R^{k+1} : sum x = 0 }`, by mapping the standard basis onto a
/// fixed orthonormal (Helmert) basis of `L`. Evaluated in O(k) via suffix
/// sums.
pub fn remap_to_zero_sum_plane(y: &[f64]) -> Vec<f64> {
    let k = y.len();
    // suffix[i] = sum_{j >= i, 1-indexed} y_j / sqrt(j (j+1))
    let mut suffix = vec![0.0; k + 2];
    for j in (1..=k).rev() {
        let a = 1.0 / ((j as f64) * (j as f64 + 1.0)).sqrt();
        suffix[j] = suffix[j + 1] + y[j - 1] * a;
    }
    let mut out = vec![0.0; k + 1];
    for (i, slot) in out.iter_mut().enumerate() {
        let diag = if i >= 1 {
            let a = 1.0 / ((i as f64) * (i as f64 + 1.0)).sqrt();
            -(i as f64) * y[i - 1] * a
        } else {
            0.0
        };
        *slot = diag + suffix[i + 1];
    }
    out
}

/// Scales points lying on `L` to fit inside the ball of radius
/// `c0 * eps / (k+1)` and translates them to the centroid of
/// `Delta_{k+1}`. Returns the simplex points and the applied factor `beta`.
pub fn scale_into_ball(
    points: &[Vec<f64>],
    k: usize,
    eps: f64,
    c0: f64,
) -> Result<(Vec<Distribution>, f64)> {
    if c0 <= 0.0 {
        return Err(Error::Config("c0 must be positive".into()));
    }
    scale_into_ball_radius(points, k, c0 * eps / (k as f64 + 1.0))
}

/// Same, with the ball radius given directly.
pub fn scale_into_ball_radius(
    points: &[Vec<f64>],
    k: usize,
    radius: f64,
) -> Result<(Vec<Distribution>, f64)> {
    let kp1 = k as f64 + 1.0;
    if radius <= 0.0 || radius >= 1.0 / kp1 {
        return Err(Error::Config(format!(
            "ball radius {radius} must lie in (0, 1/(k+1)) = (0, {}) to stay inside the simplex",
            1.0 / kp1
        )));
    }
    let mut rho_max = 0.0f64;
    for p in points {
        if p.len() != k + 1 {
            return Err(Error::Dimension { expected: k + 1, got: p.len() });
        }
        rho_max = rho_max.max(dot(p, p).sqrt());
    }
    let beta = if rho_max > radius { radius / rho_max } else { 1.0 };
    let centroid = 1.0 / kp1;
    let reduced = points
        .iter()
        .map(|p| {
            Distribution::from_simplex_unchecked(p.iter().map(|&v| centroid + beta * v).collect())
        })
        .collect();
    Ok((reduced, beta))
}

/// Curvature constant `C(k) = f''(1) (k+1) / 2`: the limit of
/// `D_f(p, q) / ||p - q||^2` as both points approach the centroid of
/// `Delta_{k+1}`.
pub fn local_constant(kind: DivergenceKind, k: usize) -> f64 {
    second_derivative_at_one(kind) * (k as f64 + 1.0) / 2.0
}

/// Draws a point of `Delta_{k+1}` uniformly oriented inside the centroid
/// ball of the given radius.
pub fn sample_ball_point(rng: &mut ChaCha8Rng, k: usize, radius: f64) -> Distribution {
    let kp1 = k + 1;
    loop {
        let mut z: Vec<f64> = (0..kp1).map(|_| StandardNormal.sample(rng)).collect();
        let mean = z.iter().sum::<f64>() / kp1 as f64;
        for v in &mut z {
            *v -= mean;
        }
        let norm = dot(&z, &z).sqrt();
        if norm < 1e-12 {
            continue;
        }
        // radius biased toward the boundary like the uniform ball measure
        let u: f64 = crate::seed::open_unit(rng);
        let rho = radius * u.powf(1.0 / (k.max(1) as f64));
        let centroid = 1.0 / kp1 as f64;
        return Distribution::from_simplex_unchecked(
            z.iter().map(|&v| centroid + rho * v / norm).collect(),
        );
    }
}

/// Searches (by halving from `c0_init * eps / (k+1)`) for the largest ball
/// radius on which the divergence stays within `eps/4` of the Euclidean
/// surrogate `C(k) ||p - q||^2`, certified on 1000 sampled pairs.
pub fn calibrate_radius(
    kind: DivergenceKind,
    k: usize,
    eps: f64,
    c0_init: f64,
    seed: u64,
) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("eps must lie in (0, 1), got {eps}")));
    }
    if c0_init <= 0.0 {
        return Err(Error::Config("c0 must be positive".into()));
    }
    let kp1 = k as f64 + 1.0;
    let c = local_constant(kind, k);
    let mut radius = c0_init * eps / kp1;
    let mut rng = rng_from(seed);
    for _ in 0..60 {
        if radius < 1.0 / kp1 && ball_ratio_holds(kind, k, radius, c, eps / 4.0, &mut rng)? {
            return Ok(radius);
        }
        radius *= 0.5;
    }
    Err(Error::Convergence(format!(
        "no radius found after 60 halvings from {} for {kind} at k = {k}",
        c0_init * eps / kp1
    )))
}

fn ball_ratio_holds(
    kind: DivergenceKind,
    k: usize,
    radius: f64,
    c: f64,
    tol: f64,
    rng: &mut ChaCha8Rng,
) -> Result<bool> {
    for _ in 0..1000 {
        let p = sample_ball_point(rng, k, radius);
        let q = sample_ball_point(rng, k, radius);
        let d2 = l22_distance(p.values(), q.values())?;
        if d2 == 0.0 {
            continue;
        }
        let df = divergence(kind, &p, &q)?;
        if (df / (c * d2) - 1.0).abs() > tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// How step 1 of [`reduce`] embeds the input into `l2^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step1Mode {
    /// Pick per kind: exact map for Hellinger, deterministic grid otherwise.
    Auto,
    /// Exact square-root map (Hellinger only).
    HellingerExact,
    /// Deterministic grid embedding with additive budget
    /// `eps/4 * min_pairwise_divergence`, which yields the multiplicative
    /// error the composition needs.
    DetAdditive,
    /// Sampled embedding with this many frequency draws; per-pair
    /// multiplicative error `~ sqrt(Var)/sqrt(s)`. The practical choice
    /// whenever the deterministic grid would be too wide to project.
    RandSamples(usize),
}

#[derive(Debug, Clone)]
pub struct ReduceOptions {
    pub mode: Step1Mode,
    /// Constant in `k = ceil(c_jl ln n / (eps/4)^2)`.
    pub c_jl: f64,
    /// Initial ball-size constant handed to [`calibrate_radius`].
    pub c0: f64,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { mode: Step1Mode::Auto, c_jl: 16.0, c0: 0.1 }
    }
}

/// Result of the reduction: points on `Delta_{k+1}` plus the calibration
/// relating reduced divergences back to the originals:
/// `D_f(p_i, p_j) ~= D_f(reduced_i, reduced_j) / divergence_scale`.
#[derive(Debug, Clone)]
pub struct ReducedPointSet {
    pub kind: DivergenceKind,
    pub eps: f64,
    pub seed: u64,
    pub points: Vec<Distribution>,
    pub k: usize,
    /// beta applied in the final scaling step.
    pub geometric_scale: f64,
    /// C(k) from [`local_constant`].
    pub local_constant: f64,
    pub ball_radius: f64,
    /// Effective c0 after calibration (`ball_radius = c0 eps / (k+1)`).
    pub c0: f64,
    /// `local_constant * geometric_scale^2`.
    pub divergence_scale: f64,
}

/// Runs the full reduction. All randomness (projection, calibration,
/// frequency sampling) derives from `seed` by labeled child seeds.
pub fn reduce(
    kind: DivergenceKind,
    points: &[Distribution],
    eps: f64,
    seed: u64,
    opts: &ReduceOptions,
) -> Result<ReducedPointSet> {
    if points.len() < 2 {
        return Err(Error::Config("reduction needs at least 2 points".into()));
    }
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::Config(format!("eps must lie in (0, 1), got {eps}")));
    }
    let d = points[0].d();
    for p in points {
        if p.d() != d {
            return Err(Error::Dimension { expected: d, got: p.d() });
        }
    }

    let mode = match (opts.mode, kind) {
        (Step1Mode::Auto, DivergenceKind::Hellinger) => Step1Mode::HellingerExact,
        (Step1Mode::Auto, _) => Step1Mode::DetAdditive,
        (m, _) => m,
    };

    // step 1: embed into l2^2
    let embedded: Vec<Vec<f64>> = match mode {
        Step1Mode::HellingerExact => {
            if kind != DivergenceKind::Hellinger {
                return Err(Error::Config(format!(
                    "exact square-root embedding applies to hellinger, not {kind}"
                )));
            }
            points.iter().map(hellinger_embed).collect()
        }
        Step1Mode::DetAdditive => {
            let budget = eps / 4.0 * min_positive_divergence(kind, points)?.unwrap_or(1.0);
            let grid = GridSpec::build(kind, d, budget.min(0.9))?;
            points
                .iter()
                .map(|p| embed_point(&grid, p).map(|e| e.vector().to_vec()))
                .collect::<Result<_>>()?
        }
        Step1Mode::RandSamples(s) => {
            let sample = draw_frequencies(kind, s, child_seed(seed, "freq"))?;
            points.iter().map(|p| rand_embed_point(&sample, p).vector().to_vec()).collect()
        }
        Step1Mode::Auto => unreachable!(),
    };

    // step 2: project to k dimensions
    let n = points.len() as f64;
    let eps_q = eps / 4.0;
    let k = ((opts.c_jl * n.ln() / (eps_q * eps_q)).ceil() as usize).max(1);
    let proj = JLProjection::new(k, embedded[0].len(), child_seed(seed, "jl"));
    let refs: Vec<&[f64]> = embedded.iter().map(|v| v.as_slice()).collect();
    let projected = proj.project_batch(&refs)?;

    // step 3: isometric remap onto the zero-sum hyperplane
    let on_plane: Vec<Vec<f64>> =
        projected.iter().map(|y| remap_to_zero_sum_plane(y)).collect();

    // step 4: calibrated ball around the simplex centroid
    let radius = calibrate_radius(kind, k, eps, opts.c0, child_seed(seed, "calibrate"))?;
    let (reduced, beta) = scale_into_ball_radius(&on_plane, k, radius)?;

    let c = local_constant(kind, k);
    Ok(ReducedPointSet {
        kind,
        eps,
        seed,
        points: reduced,
        k,
        geometric_scale: beta,
        local_constant: c,
        ball_radius: radius,
        c0: radius * (k as f64 + 1.0) / eps,
        divergence_scale: c * beta * beta,
    })
}

fn min_positive_divergence(
    kind: DivergenceKind,
    points: &[Distribution],
) -> Result<Option<f64>> {
    let mut min_div: Option<f64> = None;
    for (i, p) in points.iter().enumerate() {
        for q in &points[i + 1..] {
            let dv = divergence(kind, p, q)?;
            if dv > 1e-300 {
                min_div = Some(min_div.map_or(dv, |m: f64| m.min(dv)));
            }
        }
    }
    Ok(min_div)
}

/// One row of the distortion audit: original divergence, divergence between
/// the reduced points, and their calibrated ratio.
#[derive(Debug, Clone)]
pub struct AuditRow {
    pub i: usize,
    pub j: usize,
    pub original: f64,
    pub reduced: f64,
    /// `reduced / (divergence_scale * original)`; NaN when the original
    /// divergence is zero.
    pub ratio: f64,
}

pub fn pairwise_audit(
    originals: &[Distribution],
    result: &ReducedPointSet,
) -> Result<Vec<AuditRow>> {
    if originals.len() != result.points.len() {
        return Err(Error::Dimension { expected: originals.len(), got: result.points.len() });
    }
    let mut rows = Vec::new();
    for i in 0..originals.len() {
        for j in i + 1..originals.len() {
            let original = divergence(result.kind, &originals[i], &originals[j])?;
            let reduced = divergence(result.kind, &result.points[i], &result.points[j])?;
            let ratio = reduced / (result.divergence_scale * original);
            rows.push(AuditRow { i, j, original, reduced, ratio });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_point;
    use approx::assert_abs_diff_eq;

    #[test]
    fn projection_of_zero_is_zero() {
        let proj = JLProjection::new(16, 8, 5);
        let y = proj.project(&vec![0.0; 8]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
        assert!(proj.project(&vec![0.0; 9]).is_err());
    }

    #[test]
    fn dense_and_streaming_paths_agree() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let dense = JLProjection::new(24, 40, 9);
        let streaming = JLProjection::new_streaming(24, 40, 9);
        let a = dense.project(&x).unwrap();
        let b = streaming.project(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn norm_preserved_in_expectation() {
        let x: Vec<f64> = (0..32).map(|i| ((i * 7 + 3) % 13) as f64 / 13.0).collect();
        let norm2: f64 = x.iter().map(|v| v * v).sum();
        let k = 64;
        let mut acc = 0.0;
        let trials = 300;
        for seed in 0..trials {
            let proj = JLProjection::new(k, x.len(), seed);
            let y = proj.project(&x).unwrap();
            acc += y.iter().map(|v| v * v).sum::<f64>();
        }
        let mean = acc / trials as f64;
        assert!((mean / norm2 - 1.0).abs() <= 0.05, "mean ratio {}", mean / norm2);
    }

    #[test]
    fn median_distance_ratio_concentrates() {
        let mut rng = rng_from(15);
        let x = random_point(&mut rng, 32);
        let y = random_point(&mut rng, 32);
        let diff: Vec<f64> =
            x.values().iter().zip(y.values()).map(|(a, b)| a - b).collect();
        let norm2: f64 = diff.iter().map(|v| v * v).sum();
        let mut ratios: Vec<f64> = (0..50)
            .map(|seed| {
                let proj = JLProjection::new(64, 32, 900 + seed);
                let g = proj.project(&diff).unwrap();
                g.iter().map(|v| v * v).sum::<f64>() / norm2
            })
            .collect();
        ratios.sort_by(|a, b| a.total_cmp(b));
        let median = 0.5 * (ratios[24] + ratios[25]);
        assert!((0.9..=1.1).contains(&median), "median ratio {median}");
    }

    #[test]
    fn pairwise_ratios_within_jl_bound_for_most_seeds() {
        let eps = 0.5;
        let n = 32usize;
        let k = (16.0 * (n as f64).ln() / (eps * eps)).ceil() as usize; // 222
        let mut rng = rng_from(77);
        let points: Vec<Distribution> = (0..n).map(|_| random_point(&mut rng, 48)).collect();
        let vecs: Vec<&[f64]> = points.iter().map(|p| p.values()).collect();
        let bound = 3.0 * eps / 4.0;
        let mut good_seeds = 0;
        let trials = 20;
        for seed in 0..trials {
            let proj = JLProjection::new(k, 48, 3000 + seed);
            let projected = proj.project_batch(&vecs).unwrap();
            let mut ok = true;
            'outer: for i in 0..n {
                for j in i + 1..n {
                    let orig = l22_distance(vecs[i], vecs[j]).unwrap();
                    let red = l22_distance(&projected[i], &projected[j]).unwrap();
                    if (red / orig - 1.0).abs() > bound {
                        ok = false;
                        break 'outer;
                    }
                }
            }
            if ok {
                good_seeds += 1;
            }
        }
        assert!(good_seeds * 10 >= trials * 9, "only {good_seeds}/{trials} seeds within bound");
    }

    #[test]
    fn remap_is_isometric_and_zero_sum() {
        assert_eq!(remap_to_zero_sum_plane(&[]), vec![0.0]);
        let z = remap_to_zero_sum_plane(&[0.0; 5]);
        assert!(z.iter().all(|&v| v == 0.0));

        let mut rng = rng_from(31);
        use rand::Rng;
        for _ in 0..100 {
            let k = rng.random_range(1..40);
            let y: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y2: Vec<f64> = (0..k).map(|_| rng.random_range(-2.0..2.0)).collect();
            let (a, b) = (remap_to_zero_sum_plane(&y), remap_to_zero_sum_plane(&y2));
            assert_eq!(a.len(), k + 1);
            assert!(a.iter().sum::<f64>().abs() <= 1e-12);
            let da = l22_distance(&a, &b).unwrap();
            let dy = l22_distance(&y, &y2).unwrap();
            assert_abs_diff_eq!(da, dy, epsilon = 1e-12);
        }
    }

    #[test]
    fn remap_basis_is_orthonormal() {
        let k = 12;
        let cols: Vec<Vec<f64>> = (0..k)
            .map(|i| {
                let mut e = vec![0.0; k];
                e[i] = 1.0;
                remap_to_zero_sum_plane(&e)
            })
            .collect();
        for i in 0..k {
            for j in 0..k {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot(&cols[i], &cols[j]), expect, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn ball_scaling_examples() {
        // single point at the origin maps to the centroid with beta = 1
        let (pts, beta) = scale_into_ball(&[vec![0.0; 5]], 4, 0.2, 0.1).unwrap();
        assert_eq!(beta, 1.0);
        for &v in pts[0].values() {
            assert_abs_diff_eq!(v, 0.2, epsilon = 1e-15);
        }

        // antipodal points at norm rho > r land exactly 2r apart
        let k = 3;
        let dir = remap_to_zero_sum_plane(&[2.0, 0.0, 0.0]);
        let anti: Vec<f64> = dir.iter().map(|v| -v).collect();
        let radius = 0.01;
        let (pts, beta) =
            scale_into_ball_radius(&[dir.clone(), anti], k, radius).unwrap();
        assert_abs_diff_eq!(beta, radius / 2.0, epsilon = 1e-15);
        let d = l22_distance(pts[0].values(), pts[1].values()).unwrap().sqrt();
        assert_abs_diff_eq!(d, 2.0 * radius, epsilon = 1e-12);

        // outputs are strictly positive and sum to one
        for p in &pts {
            assert!((p.values().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            for &v in p.values() {
                assert!(v >= 1.0 / (k as f64 + 1.0) - radius - 1e-12);
            }
        }
    }

    #[test]
    fn ball_must_stay_inside_simplex() {
        // c0 * eps >= 1 pushes the radius past the centroid's distance
        assert!(matches!(
            scale_into_ball(&[vec![0.0; 5]], 4, 0.25, 5.0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn local_constant_matches_near_centroid_ratio() {
        let k = 9;
        let radius = 1e-4;
        let mut rng = rng_from(41);
        for kind in DivergenceKind::ALL {
            let c = local_constant(kind, k);
            let expected = match kind {
                DivergenceKind::Hellinger => (k as f64 + 1.0) / 4.0,
                DivergenceKind::Js => (k as f64 + 1.0) / 4.0,
                DivergenceKind::ChiSquared => (k as f64 + 1.0) / 2.0,
            };
            assert_eq!(c, expected);
            for _ in 0..50 {
                let p = sample_ball_point(&mut rng, k, radius);
                let q = sample_ball_point(&mut rng, k, radius);
                let d2 = l22_distance(p.values(), q.values()).unwrap();
                if d2 == 0.0 {
                    continue;
                }
                let ratio = divergence(kind, &p, &q).unwrap() / d2;
                assert!((ratio / c - 1.0).abs() <= 0.01, "{kind}: ratio {ratio} vs C {c}");
            }
        }
    }

    #[test]
    fn calibrated_radius_verifies_on_fresh_pairs() {
        let (kind, k, eps) = (DivergenceKind::Hellinger, 9, 0.2);
        let r = calibrate_radius(kind, k, eps, 0.1, 51).unwrap();
        assert!(r < 1.0 / (k as f64 + 1.0));
        let c = local_constant(kind, k);
        let mut rng = rng_from(52); // different seed than the calibration
        for _ in 0..500 {
            let p = sample_ball_point(&mut rng, k, r);
            let q = sample_ball_point(&mut rng, k, r);
            let d2 = l22_distance(p.values(), q.values()).unwrap();
            if d2 == 0.0 {
                continue;
            }
            let ratio = divergence(kind, &p, &q).unwrap() / (c * d2);
            assert!((ratio - 1.0).abs() <= eps / 4.0);
        }
    }

    #[test]
    fn calibrated_radius_shrinks_with_eps() {
        let k = 9;
        let mut last = f64::INFINITY;
        for eps in [0.4, 0.2, 0.1] {
            let r = calibrate_radius(DivergenceKind::ChiSquared, k, eps, 0.1, 53).unwrap();
            assert!(r <= last, "radius should not grow as eps shrinks");
            last = r;
        }
    }

    #[test]
    fn identical_points_reduce_identically() {
        let p = Distribution::uniform(8);
        let result =
            reduce(DivergenceKind::Hellinger, &[p.clone(), p], 0.3, 7, &ReduceOptions::default())
                .unwrap();
        assert_eq!(result.points[0], result.points[1]);
        assert_eq!(
            divergence(DivergenceKind::Hellinger, &result.points[0], &result.points[1]).unwrap(),
            0.0
        );
    }

    #[test]
    fn reduce_validates_inputs() {
        let p = Distribution::uniform(4);
        let opts = ReduceOptions::default();
        assert!(reduce(DivergenceKind::Hellinger, &[p.clone()], 0.3, 1, &opts).is_err());
        let q = Distribution::uniform(5);
        assert!(matches!(
            reduce(DivergenceKind::Hellinger, &[p.clone(), q], 0.3, 1, &opts),
            Err(Error::Dimension { .. })
        ));
        assert!(matches!(
            reduce(
                DivergenceKind::Js,
                &[p.clone(), Distribution::uniform(4)],
                0.3,
                1,
                &ReduceOptions { mode: Step1Mode::HellingerExact, ..ReduceOptions::default() }
            ),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn hellinger_reduction_preserves_divergences() {
        let mut rng = rng_from(61);
        let points: Vec<Distribution> = (0..8).map(|_| random_point(&mut rng, 16)).collect();
        let eps = 0.3;
        let mut good = 0;
        for seed in 0..5 {
            let result =
                reduce(DivergenceKind::Hellinger, &points, eps, 100 + seed, &ReduceOptions::default())
                    .unwrap();
            // structural invariants hold for every seed
            let kp1 = result.k as f64 + 1.0;
            for p in &result.points {
                assert!((p.values().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
                let dist2: f64 =
                    p.values().iter().map(|&v| (v - 1.0 / kp1) * (v - 1.0 / kp1)).sum();
                assert!(dist2.sqrt() <= result.ball_radius * (1.0 + 1e-9));
            }
            let audit = pairwise_audit(&points, &result).unwrap();
            if audit.iter().all(|row| (row.ratio - 1.0).abs() <= eps) {
                good += 1;
            }
        }
        assert!(good >= 3, "only {good}/5 seeds within distortion bound");
    }

    #[test]
    fn sampled_mode_roundtrips_js() {
        let mut rng = rng_from(62);
        let points: Vec<Distribution> = (0..4).map(|_| random_point(&mut rng, 4)).collect();
        let eps = 0.4;
        let opts = ReduceOptions { mode: Step1Mode::RandSamples(3000), ..ReduceOptions::default() };
        let result = reduce(DivergenceKind::Js, &points, eps, 9, &opts).unwrap();
        let audit = pairwise_audit(&points, &result).unwrap();
        for row in &audit {
            assert!(
                (row.ratio - 1.0).abs() <= 1.5 * eps,
                "pair ({}, {}) ratio {}",
                row.i,
                row.j,
                row.ratio
            );
        }
    }
}
