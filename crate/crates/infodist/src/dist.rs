//! Points on the probability simplex and the three closed-form divergences.
//!
//! All divergences here are symmetric and use natural logarithms. The zero
//! conventions follow the usual limits: `0·ln(0/0) = 0`, and a coordinate
//! pair `(a, 0)` contributes `a·ln 2` to JS, `a` to Hellinger and chi^2.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the coordinate sum of a simplex point. Chosen to
/// survive accumulation over ~1e6 coordinates in double precision.
pub const SIMPLEX_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceKind {
    Js,
    Hellinger,
    ChiSquared,
}

impl DivergenceKind {
    pub const ALL: [DivergenceKind; 3] =
        [DivergenceKind::Js, DivergenceKind::Hellinger, DivergenceKind::ChiSquared];

    pub fn name(self) -> &'static str {
        match self {
            DivergenceKind::Js => "js",
            DivergenceKind::Hellinger => "hellinger",
            DivergenceKind::ChiSquared => "chi2",
        }
    }
}

impl std::fmt::Display for DivergenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for DivergenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "js" | "jensen-shannon" => Ok(DivergenceKind::Js),
            "hellinger" | "he" => Ok(DivergenceKind::Hellinger),
            "chi2" | "chi-squared" | "chisquared" => Ok(DivergenceKind::ChiSquared),
            other => Err(Error::Parse(format!("unknown divergence kind {other:?}"))),
        }
    }
}

/// A point on the simplex: nonnegative coordinates summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct Distribution {
    values: Vec<f64>,
}

impl Distribution {
    /// Validates a raw vector. With `normalize` the vector is divided by its
    /// sum first; otherwise the sum must already be 1 within
    /// [`SIMPLEX_SUM_TOL`].
    pub fn validate(values: &[f64], normalize: bool) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Validation("empty coordinate vector".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Validation(format!("coordinate {i} is not finite: {v}")));
            }
            if v < 0.0 {
                return Err(Error::Validation(format!("coordinate {i} is negative: {v}")));
            }
        }
        let sum: f64 = values.iter().sum();
        if normalize {
            if sum <= 0.0 {
                return Err(Error::Validation("zero total mass cannot be normalized".into()));
            }
            Ok(Distribution { values: values.iter().map(|v| v / sum).collect() })
        } else {
            if (sum - 1.0).abs() > SIMPLEX_SUM_TOL {
                return Err(Error::Validation(format!(
                    "coordinates sum to {sum}, not 1 (tolerance {SIMPLEX_SUM_TOL}); \
                     pass normalize to rescale"
                )));
            }
            Ok(Distribution { values: values.to_vec() })
        }
    }

    /// Wraps coordinates already known to lie on the simplex (e.g. produced
    /// by an exact affine map). Checked in debug builds only.
    pub(crate) fn from_simplex_unchecked(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        debug_assert!(values.iter().all(|&v| v >= 0.0));
        debug_assert!((values.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_SUM_TOL);
        Distribution { values }
    }

    pub fn uniform(d: usize) -> Self {
        assert!(d >= 1);
        Distribution { values: vec![1.0 / d as f64; d] }
    }

    pub fn d(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// One-coordinate divergence. `(x, y)` are a matched coordinate pair of two
/// simplex points; summing over coordinates gives the full divergence.
pub fn scalar_divergence(kind: DivergenceKind, x: f64, y: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
    match kind {
        DivergenceKind::Js => js_term(x, y) + js_term(y, x),
        DivergenceKind::Hellinger => {
            let t = x.sqrt() - y.sqrt();
            t * t
        }
        DivergenceKind::ChiSquared => {
            if x + y == 0.0 {
                0.0
            } else {
                let t = x - y;
                t * t / (x + y)
            }
        }
    }
}

// a·ln(2a/(a+b)) with the a = 0 limit.
fn js_term(a: f64, b: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * (2.0 * a / (a + b)).ln()
    }
}

/// Full divergence between two points of equal support size.
pub fn divergence(kind: DivergenceKind, p: &Distribution, q: &Distribution) -> Result<f64> {
    if p.d() != q.d() {
        return Err(Error::Dimension { expected: p.d(), got: q.d() });
    }
    Ok(p.values()
        .iter()
        .zip(q.values())
        .map(|(&x, &y)| scalar_divergence(kind, x, y))
        .sum())
}

/// f''(1) of the convex generator; the curvature constant used by the
/// near-centroid calibration.
pub fn second_derivative_at_one(kind: DivergenceKind) -> f64 {
    match kind {
        DivergenceKind::Js => 0.5,
        DivergenceKind::Hellinger => 0.5,
        DivergenceKind::ChiSquared => 1.0,
    }
}

/// A divergence presented through its convex generator `f`, together with
/// the limits needed to evaluate `sum_i p_i f(q_i/p_i)` on boundary points.
pub struct FDivergenceSpec {
    kind: DivergenceKind,
    f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
    f_second_at_one: f64,
    /// lim_{u -> 0} f(u)
    f_at_zero: f64,
    /// lim_{u -> inf} f(u)/u
    f_slope_at_inf: f64,
}

impl FDivergenceSpec {
    pub fn new(
        kind: DivergenceKind,
        f: Box<dyn Fn(f64) -> f64 + Send + Sync>,
        f_second_at_one: f64,
        f_at_zero: f64,
        f_slope_at_inf: f64,
    ) -> Result<Self> {
        let spec = FDivergenceSpec { kind, f, f_second_at_one, f_at_zero, f_slope_at_inf };
        spec.check_well_behaved()?;
        Ok(spec)
    }

    pub fn for_kind(kind: DivergenceKind) -> Self {
        let (f, second, at_zero, slope): (Box<dyn Fn(f64) -> f64 + Send + Sync>, f64, f64, f64) =
            match kind {
                DivergenceKind::Js => (
                    Box::new(|t: f64| {
                        let a = if t == 0.0 { 0.0 } else { t * (2.0 * t / (1.0 + t)).ln() };
                        a + (2.0 / (1.0 + t)).ln()
                    }),
                    0.5,
                    std::f64::consts::LN_2,
                    std::f64::consts::LN_2,
                ),
                DivergenceKind::Hellinger => (
                    Box::new(|t: f64| {
                        let s = t.sqrt() - 1.0;
                        s * s
                    }),
                    0.5,
                    1.0,
                    1.0,
                ),
                DivergenceKind::ChiSquared => (
                    Box::new(|t: f64| {
                        let s = t - 1.0;
                        s * s / (t + 1.0)
                    }),
                    1.0,
                    1.0,
                    1.0,
                ),
            };
        FDivergenceSpec::new(kind, f, second, at_zero, slope)
            .expect("built-in generators are well behaved")
    }

    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    pub fn generator(&self, t: f64) -> f64 {
        (self.f)(t)
    }

    pub fn f_second_at_one(&self) -> f64 {
        self.f_second_at_one
    }

    /// f(1) = 0, f'(1) = 0 (central difference), f''(1) > 0.
    pub fn check_well_behaved(&self) -> Result<()> {
        let at_one = self.generator(1.0);
        if at_one.abs() > 1e-12 {
            return Err(Error::Validation(format!("f(1) = {at_one}, expected 0")));
        }
        let h = 1e-5;
        let d1 = (self.generator(1.0 + h) - self.generator(1.0 - h)) / (2.0 * h);
        if d1.abs() > 1e-8 {
            return Err(Error::Validation(format!("f'(1) = {d1}, expected 0")));
        }
        if self.f_second_at_one <= 0.0 {
            return Err(Error::Validation(format!(
                "f''(1) = {}, expected > 0",
                self.f_second_at_one
            )));
        }
        Ok(())
    }

    /// Evaluates the divergence through the generator. Used as an algebraic
    /// cross-check of the closed forms.
    pub fn divergence_via_generator(&self, p: &Distribution, q: &Distribution) -> Result<f64> {
        if p.d() != q.d() {
            return Err(Error::Dimension { expected: p.d(), got: q.d() });
        }
        let mut total = 0.0;
        for (&pi, &qi) in p.values().iter().zip(q.values()) {
            total += if pi == 0.0 && qi == 0.0 {
                0.0
            } else if pi == 0.0 {
                qi * self.f_slope_at_inf
            } else if qi == 0.0 {
                pi * self.f_at_zero
            } else {
                pi * self.generator(qi / pi)
            };
        }
        Ok(total)
    }
}
