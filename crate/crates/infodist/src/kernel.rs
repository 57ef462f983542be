//! Spectral decompositions of JS and chi^2.
//!
//! Both divergences factor through a frequency integral
//! `D(x, y) = scale * \int h(x, y, w) kappa(w) dw`, where `kappa` is an even
//! probability density over frequencies and `h` is the squared modulus of a
//! phase difference. For chi^2 the density is `sech(pi w)` and the identity
//! is exact with `scale = 1`. For JS the density is
//! `2 sech(pi w) / (ln 4 (1 + 4 w^2))`; the integral reproduces the base-2
//! form of JS, so `scale = ln 2` converts to the natural-log values used by
//! [`crate::dist`]. Hellinger needs no spectral form (its exact map is the
//! coordinate-wise square root) and is rejected here.

use std::sync::OnceLock;

use crate::dist::DivergenceKind;
use crate::error::{Error, Result};
use crate::quad::{adaptive_simpson, QuadratureConfig};

/// Frequencies beyond this contribute less than ~1e-55 of kernel mass.
pub const SPECTRAL_CUTOFF: f64 = 40.0;

/// Conversion factor between the raw spectral integral and the natural-log
/// divergence values.
pub fn spectral_scale(kind: DivergenceKind) -> Result<f64> {
    match kind {
        DivergenceKind::Js => Ok(std::f64::consts::LN_2),
        DivergenceKind::ChiSquared => Ok(1.0),
        DivergenceKind::Hellinger => Err(Error::UnsupportedKernel(kind)),
    }
}

/// Squared modulus of the phase difference:
/// `h = || sqrt(x) e^{iw ln x} - sqrt(y) e^{iw ln y} ||^2`.
///
/// Expanding gives the equivalent stable form
/// `x + y - 2 sqrt(xy) cos(w (ln x - ln y))`; a zero argument contributes
/// the zero vector, so `h = x + y` in that case.
pub fn h(x: f64, y: f64, omega: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&x) && (0.0..=1.0).contains(&y));
    if x == 0.0 || y == 0.0 {
        return x + y;
    }
    let phase = omega * (x.ln() - y.ln());
    (x + y - 2.0 * (x * y).sqrt() * phase.cos()).max(0.0)
}

fn sech(t: f64) -> f64 {
    // cosh overflows near |t| ~ 710; 1/inf underflows cleanly to 0
    1.0 / t.cosh()
}

fn density(kind: DivergenceKind, omega: f64) -> f64 {
    match kind {
        DivergenceKind::Js => {
            let s = sech(std::f64::consts::PI * omega);
            2.0 * s / (std::f64::consts::LN_2 * 2.0 * (1.0 + 4.0 * omega * omega))
        }
        DivergenceKind::ChiSquared => sech(std::f64::consts::PI * omega),
        DivergenceKind::Hellinger => f64::NAN,
    }
}

/// Frequency density `kappa(w)`.
pub fn kappa(kind: DivergenceKind, omega: f64) -> Result<f64> {
    KernelSpec::get(kind).map(|k| k.density(omega))
}

/// `P(Omega <= w)` under `kappa`.
pub fn kernel_cdf(kind: DivergenceKind, omega: f64) -> Result<f64> {
    KernelSpec::get(kind).map(|k| k.cdf(omega))
}

/// Inverse CDF for `u` in (0, 1).
pub fn kernel_quantile(kind: DivergenceKind, u: f64) -> Result<f64> {
    KernelSpec::get(kind).map(|k| k.quantile(u))
}

/// Kernel mass of `[a, b]`, clamped at zero.
pub fn interval_mass(kind: DivergenceKind, a: f64, b: f64) -> Result<f64> {
    KernelSpec::get(kind).map(|k| k.interval_mass(a, b))
}

/// Quadrature of `scale * h * kappa` over the real line. Serves as the
/// independent oracle for the closed-form divergences; shares no code with
/// them.
pub fn spectral_divergence(
    kind: DivergenceKind,
    x: f64,
    y: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let spec = KernelSpec::get(kind)?;
    let scale = spectral_scale(kind)?;
    let f = |w: f64| h(x, y, w) * spec.density(w);
    // split at the density peak
    let left = adaptive_simpson(&f, -SPECTRAL_CUTOFF, 0.0, quad);
    let right = adaptive_simpson(&f, 0.0, SPECTRAL_CUTOFF, quad);
    Ok(scale * (left + right))
}

/// One spectral kernel: density, CDF, quantile, interval masses. The JS CDF
/// has no closed form and is tabulated once at construction; chi^2 uses
/// closed forms throughout. Immutable after construction and safe to share.
pub struct KernelSpec {
    kind: DivergenceKind,
    tail_constant: f64,
    table: Option<CdfTable>,
}

impl KernelSpec {
    /// Shared instance per kind; the JS table is built on first use.
    pub fn get(kind: DivergenceKind) -> Result<&'static KernelSpec> {
        static JS: OnceLock<KernelSpec> = OnceLock::new();
        static CHI: OnceLock<KernelSpec> = OnceLock::new();
        match kind {
            DivergenceKind::Js => Ok(JS.get_or_init(|| KernelSpec {
                kind,
                tail_constant: 4.0,
                table: Some(CdfTable::build(kind)),
            })),
            DivergenceKind::ChiSquared => {
                Ok(CHI.get_or_init(|| KernelSpec { kind, tail_constant: 3.0, table: None }))
            }
            DivergenceKind::Hellinger => Err(Error::UnsupportedKernel(kind)),
        }
    }

    pub fn kind(&self) -> DivergenceKind {
        self.kind
    }

    /// C with `\int_t^inf kappa <= C e^{-t}`.
    pub fn tail_constant(&self) -> f64 {
        self.tail_constant
    }

    pub fn density(&self, omega: f64) -> f64 {
        density(self.kind, omega)
    }

    pub fn cdf(&self, omega: f64) -> f64 {
        match self.kind {
            DivergenceKind::ChiSquared => {
                0.5 + (std::f64::consts::PI * omega).sinh().atan() / std::f64::consts::PI
            }
            DivergenceKind::Js => {
                let table = self.table.as_ref().expect("JS kernel carries a table");
                // evenness: F(-w) = 1 - F(w), table spans [0, cutoff]
                if omega >= 0.0 {
                    table.eval(omega)
                } else {
                    1.0 - table.eval(-omega)
                }
            }
            DivergenceKind::Hellinger => unreachable!(),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        debug_assert!(u > 0.0 && u < 1.0, "quantile argument must lie in (0,1)");
        match self.kind {
            DivergenceKind::ChiSquared => {
                (std::f64::consts::PI * (u - 0.5)).tan().asinh() / std::f64::consts::PI
            }
            DivergenceKind::Js => {
                let table = self.table.as_ref().expect("JS kernel carries a table");
                if u >= 0.5 {
                    table.invert(u)
                } else {
                    -table.invert(1.0 - u)
                }
            }
            DivergenceKind::Hellinger => unreachable!(),
        }
    }

    pub fn interval_mass(&self, a: f64, b: f64) -> f64 {
        debug_assert!(a <= b);
        (self.cdf(b) - self.cdf(a)).max(0.0)
    }
}

/// Tabulated CDF of an even density on `[0, cutoff]`, with cubic Hermite
/// interpolation using the exact density as derivative data.
struct CdfTable {
    dx: f64,
    /// F at nodes 0, dx, 2dx, ... (F(0) = 1/2 by evenness)
    nodes: Vec<f64>,
    /// density at the same nodes
    dens: Vec<f64>,
}

const CDF_CELLS: usize = 16_000;

impl CdfTable {
    fn build(kind: DivergenceKind) -> CdfTable {
        let dx = SPECTRAL_CUTOFF / CDF_CELLS as f64;
        let cell_cfg = QuadratureConfig { abs_tol: 3e-16, max_depth: 24 };
        let mut nodes = Vec::with_capacity(CDF_CELLS + 1);
        let mut dens = Vec::with_capacity(CDF_CELLS + 1);
        let f = |w: f64| density(kind, w);
        let mut acc = 0.5;
        nodes.push(acc);
        dens.push(f(0.0));
        for i in 0..CDF_CELLS {
            let a = i as f64 * dx;
            let b = (i + 1) as f64 * dx;
            acc += adaptive_simpson(&f, a, b, &cell_cfg);
            nodes.push(acc);
            dens.push(f(b));
        }
        CdfTable { dx, nodes, dens }
    }

    fn eval(&self, w: f64) -> f64 {
        debug_assert!(w >= 0.0);
        if w >= SPECTRAL_CUTOFF {
            return *self.nodes.last().unwrap();
        }
        let cell = ((w / self.dx) as usize).min(self.nodes.len() - 2);
        let t = (w - cell as f64 * self.dx) / self.dx;
        self.hermite(cell, t)
    }

    fn hermite(&self, cell: usize, t: f64) -> f64 {
        let (f0, f1) = (self.nodes[cell], self.nodes[cell + 1]);
        let (k0, k1) = (self.dens[cell], self.dens[cell + 1]);
        let df = f1 - f0;
        let c2 = 3.0 * df - self.dx * (2.0 * k0 + k1);
        let c3 = -2.0 * df + self.dx * (k0 + k1);
        f0 + t * (self.dx * k0 + t * (c2 + t * c3))
    }

    fn hermite_deriv(&self, cell: usize, t: f64) -> f64 {
        let (f0, f1) = (self.nodes[cell], self.nodes[cell + 1]);
        let (k0, k1) = (self.dens[cell], self.dens[cell + 1]);
        let df = f1 - f0;
        let c2 = 3.0 * df - self.dx * (2.0 * k0 + k1);
        let c3 = -2.0 * df + self.dx * (k0 + k1);
        (self.dx * k0 + t * (2.0 * c2 + t * 3.0 * c3)) / self.dx
    }

    /// Inverse for `u >= 1/2`: locate the cell, then Newton with the exact
    /// density as derivative, falling back to bisection steps.
    fn invert(&self, u: f64) -> f64 {
        let last = *self.nodes.last().unwrap();
        if u >= last {
            return SPECTRAL_CUTOFF;
        }
        let idx = self.nodes.partition_point(|&f| f < u);
        let cell = idx.saturating_sub(1).min(self.nodes.len() - 2);
        let (f0, f1) = (self.nodes[cell], self.nodes[cell + 1]);
        let mut t = if f1 > f0 { ((u - f0) / (f1 - f0)).clamp(0.0, 1.0) } else { 0.5 };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..40 {
            let fv = self.hermite(cell, t) - u;
            if fv > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let d = self.hermite_deriv(cell, t) * self.dx;
            let next = if d > 0.0 { t - fv / d } else { f64::NAN };
            t = if next.is_finite() && next > lo && next < hi { next } else { 0.5 * (lo + hi) };
            if hi - lo < 1e-15 {
                break;
            }
        }
        (cell as f64 + t) * self.dx
    }
}
