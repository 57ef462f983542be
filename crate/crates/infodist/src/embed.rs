//! Deterministic embeddings into finite-dimensional `l2^2`.
//!
//! JS and chi^2 embed by truncating the spectral integral to a symmetric
//! frequency window and quantizing it on a uniform grid: each coordinate
//! value `v` becomes a block of `sqrt(v) cos(w_j ln v)` / `sqrt(v) sin(w_j
//! ln v)` entries weighted by the square root of the kernel mass of each
//! grid cell. Squared Euclidean distance between two embedded points then
//! reproduces the divergence up to a chosen additive error. Hellinger
//! embeds exactly by the coordinate-wise square root.
//!
//! Blocks are laid out coordinate-major (coordinate `i` owns the
//! contiguous range `[i*4J, (i+1)*4J)`, cosines before sines) so that a
//! streaming consumer can emit one complete block per arriving coordinate.

use serde::{Deserialize, Serialize};

use crate::dist::{DivergenceKind, Distribution};
use crate::error::{Error, Result};
use crate::kernel::{spectral_scale, KernelSpec};
use crate::seed::sha256_hex;

/// Hard cap on total embedding length (`4*J*d` doubles); configurations
/// beyond this fail with the offending formula spelled out.
pub const MAX_EMBED_LEN: usize = 100_000_000;

/// Identifying parameters of a deterministic grid; enough to rebuild the
/// full [`GridSpec`] and to check artifact compatibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridHeader {
    pub kind: DivergenceKind,
    pub d: usize,
    pub eps: f64,
    pub j: usize,
    pub step: f64,
}

impl GridHeader {
    pub fn digest(&self) -> String {
        sha256_hex(
            format!(
                "det-grid;kind={};d={};eps={};j={};step={}",
                self.kind, self.d, self.eps, self.j, self.step
            )
            .as_bytes(),
        )
    }
}

/// Frequency grid for one `(kind, d, eps)` configuration: `2J` cells of
/// width `eps/(32 d)` spanning the truncation window, with the square
/// roots of the (scaled) cell masses precomputed.
pub struct GridSpec {
    header: GridHeader,
    digest: String,
    roots: Vec<f64>,
}

impl GridSpec {
    /// Builds the grid for a target total additive error `eps` on `Delta_d`.
    ///
    /// `J = ceil((32 d / eps) ln(8 d / eps))` for JS and
    /// `J = ceil((32 d / eps) ln(6 d / eps))` for chi^2, which places the
    /// window edge `J * step` past the truncation radius after splitting
    /// the error budget evenly across coordinates.
    pub fn build(kind: DivergenceKind, d: usize, eps: f64) -> Result<GridSpec> {
        if d == 0 {
            return Err(Error::Config("d must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&eps) || eps <= 0.0 {
            return Err(Error::Config(format!("eps must lie in (0, 1), got {eps}")));
        }
        let spec = KernelSpec::get(kind)?;
        let scale = spectral_scale(kind)?;
        let df = d as f64;
        let log_arg = match kind {
            DivergenceKind::Js => 8.0 * df / eps,
            DivergenceKind::ChiSquared => 6.0 * df / eps,
            DivergenceKind::Hellinger => unreachable!(),
        };
        let j_real = (32.0 * df / eps) * log_arg.ln();
        let j = j_real.ceil() as usize;
        let total = 4usize
            .checked_mul(j)
            .and_then(|v| v.checked_mul(d))
            .ok_or_else(|| Error::Config("embedding length overflows".into()))?;
        if total > MAX_EMBED_LEN {
            return Err(Error::Config(format!(
                "embedding length 4*J*d = 4*{j}*{d} = {total} exceeds {MAX_EMBED_LEN}; \
                 J = ceil((32d/eps) ln({log_arg:.3})) grows as (d^2/eps) log(d/eps)"
            )));
        }
        let step = eps / (32.0 * df);
        let header = GridHeader { kind, d, eps, j, step };
        let digest = header.digest();

        // cell masses by CDF differencing across the 2J+1 grid nodes
        let mut roots = Vec::with_capacity(2 * j);
        let mut prev = spec.cdf(-(j as f64) * step);
        for idx in 1..=2 * j {
            let node = (idx as f64 - j as f64) * step;
            let cur = spec.cdf(node);
            roots.push((scale * (cur - prev).max(0.0)).sqrt());
            prev = cur;
        }
        Ok(GridSpec { header, digest, roots })
    }

    pub fn kind(&self) -> DivergenceKind {
        self.header.kind
    }

    pub fn d(&self) -> usize {
        self.header.d
    }

    pub fn eps(&self) -> f64 {
        self.header.eps
    }

    /// Half-width `J`: cells are indexed `j = -J..J-1`.
    pub fn half_width(&self) -> usize {
        self.header.j
    }

    pub fn step(&self) -> f64 {
        self.header.step
    }

    pub fn omega(&self, j: i64) -> f64 {
        j as f64 * self.header.step
    }

    /// Entries per coordinate block: `2J` cosines + `2J` sines.
    pub fn block_len(&self) -> usize {
        4 * self.header.j
    }

    pub fn total_len(&self) -> usize {
        self.block_len() * self.header.d
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    /// `sqrt(scale * mass)` of cell `idx` (cell `idx` starts at
    /// `omega(idx - J)`).
    pub fn root(&self, idx: usize) -> f64 {
        self.roots[idx]
    }
}

/// An embedded point together with the grid identity that produced it.
#[derive(Debug, Clone)]
pub struct DetEmbedding {
    header: GridHeader,
    digest: String,
    vector: Vec<f64>,
}

impl DetEmbedding {
    pub fn vector(&self) -> &[f64] {
        &self.vector
    }

    pub fn header(&self) -> &GridHeader {
        &self.header
    }

    pub fn grid_digest(&self) -> &str {
        &self.digest
    }

    pub fn from_parts(header: GridHeader, vector: Vec<f64>) -> DetEmbedding {
        let digest = header.digest();
        DetEmbedding { header, digest, vector }
    }
}

/// Embeds one coordinate value into its `4J` block. A zero value yields the
/// all-zero block (the limit convention for `sqrt(v) e^{iw ln v}`).
pub fn embed_coordinate(grid: &GridSpec, value: f64) -> Vec<f64> {
    debug_assert!((0.0..=1.0).contains(&value));
    let two_j = 2 * grid.half_width();
    let mut block = vec![0.0; 2 * two_j];
    if value == 0.0 {
        return block;
    }
    let sqrt_v = value.sqrt();
    let delta = grid.step() * value.ln();
    let (sin_d, cos_d) = delta.sin_cos();
    let (mut sin_t, mut cos_t) = (0.0, 1.0);
    for idx in 0..two_j {
        // incremental rotation, re-anchored periodically to cap drift
        if idx % 4096 == 0 {
            let theta = (idx as f64 - grid.half_width() as f64) * delta;
            let sc = theta.sin_cos();
            sin_t = sc.0;
            cos_t = sc.1;
        }
        let r = grid.root(idx);
        block[idx] = sqrt_v * cos_t * r;
        block[two_j + idx] = sqrt_v * sin_t * r;
        let c = cos_t * cos_d - sin_t * sin_d;
        sin_t = sin_t * cos_d + cos_t * sin_d;
        cos_t = c;
    }
    block
}

/// Embeds a full point as the concatenation of its coordinate blocks.
pub fn embed_point(grid: &GridSpec, p: &Distribution) -> Result<DetEmbedding> {
    if p.d() != grid.d() {
        return Err(Error::Dimension { expected: grid.d(), got: p.d() });
    }
    let mut vector = Vec::with_capacity(grid.total_len());
    for &v in p.values() {
        vector.extend_from_slice(&embed_coordinate(grid, v));
    }
    Ok(DetEmbedding { header: grid.header().clone(), digest: grid.digest().to_string(), vector })
}

/// The exact Hellinger map: coordinate-wise square root.
/// `||he(p) - he(q)||^2 == He(p, q)` identically.
pub fn hellinger_embed(p: &Distribution) -> Vec<f64> {
    p.values().iter().map(|v| v.sqrt()).collect()
}

/// Squared Euclidean distance.
pub fn l22_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension { expected: a.len(), got: b.len() });
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// Distance between two embeddings after checking they came from the same
/// grid.
pub fn det_distance(a: &DetEmbedding, b: &DetEmbedding) -> Result<f64> {
    if a.digest != b.digest {
        return Err(Error::Incompatible(format!(
            "grid digests differ: {} vs {}",
            a.digest, b.digest
        )));
    }
    l22_distance(&a.vector, &b.vector)
}
