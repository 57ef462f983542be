//! Adaptive Simpson quadrature with Richardson extrapolation.

#[derive(Debug, Clone, Copy)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub max_depth: u32,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { abs_tol: 1e-10, max_depth: 60 }
    }
}

impl QuadratureConfig {
    pub fn with_tol(abs_tol: f64) -> Self {
        assert!(abs_tol > 0.0, "abs_tol must be positive");
        QuadratureConfig { abs_tol, ..Default::default() }
    }
}

/// Integrates `f` over `[a, b]`. The integrand is assumed smooth; the
/// recursion stops when the Richardson error estimate drops below the
/// budget for the subinterval or the depth cap is hit.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, cfg: &QuadratureConfig) -> f64 {
    if a == b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0;
    recurse(f, a, b, fa, fm, fb, whole, cfg.abs_tol, cfg.max_depth)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) * (fa + 4.0 * flm + fm) / 6.0;
    let right = (b - m) * (fm + 4.0 * frm + fb) / 6.0;
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}
