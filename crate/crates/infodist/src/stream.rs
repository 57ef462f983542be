//! Aggregate-stream replay and random-sign linear sketches.
//!
//! In the aggregate model each stream item carries one whole coordinate of
//! one point, in arbitrary order. Because the deterministic embedding is
//! coordinate-separable, an item expands to one `4J` block which is folded
//! into a small bucketed sign sketch: entry `e` at global embedding index
//! `g` adds `sign_r(g) * e` to bucket `bucket_r(g)` in each of `R`
//! independent rows. Squared Euclidean distance (and hence the divergence,
//! up to the embedding's additive error) is estimated from counter
//! differences as the median over rows of the per-row sum of squares.
//!
//! Sign and bucket derive from one degree-3 polynomial over the Mersenne
//! prime `2^61 - 1` per row (4-wise independent family): the low bit gives
//! the sign, the remaining bits the bucket. Along a block the polynomial is
//! advanced by cumulative finite differences, so each entry costs three
//! modular additions instead of a full evaluation.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dist::DivergenceKind;
use crate::embed::{embed_coordinate, GridSpec};
use crate::error::{Error, Result};
use crate::seed::{child_seed, rng_from, RNG_ID};

/// One aggregate-model stream element: coordinate `coord_index` of point
/// `point_id` delivered in its entirety.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateItem {
    pub point_id: String,
    #[serde(rename = "i")]
    pub coord_index: usize,
    #[serde(rename = "v")]
    pub value: f64,
}

/// Sketch configuration. Width grows as `c_a / eps_l2^2`, row count as
/// `c_b ln(1/delta)`; neither depends on `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SketchParams {
    pub kind: DivergenceKind,
    pub d: usize,
    pub eps_embed: f64,
    pub eps_l2: f64,
    pub delta: f64,
    pub seed: u64,
    pub c_a: f64,
    pub c_b: f64,
}

impl SketchParams {
    pub fn new(
        kind: DivergenceKind,
        d: usize,
        eps_embed: f64,
        eps_l2: f64,
        delta: f64,
        seed: u64,
    ) -> SketchParams {
        SketchParams { kind, d, eps_embed, eps_l2, delta, seed, c_a: 6.0, c_b: 8.0 }
    }

    /// Buckets per row.
    pub fn width(&self) -> usize {
        (self.c_a / (self.eps_l2 * self.eps_l2)).ceil() as usize
    }

    /// Independent rows medianed at estimation time.
    pub fn reps(&self) -> usize {
        (self.c_b * (1.0 / self.delta).ln()).ceil().max(1.0) as usize
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in
            [("eps_embed", self.eps_embed), ("eps_l2", self.eps_l2), ("delta", self.delta)]
        {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.c_a <= 0.0 || self.c_b <= 0.0 {
            return Err(Error::Config("sketch constants must be positive".into()));
        }
        Ok(())
    }
}

/// Shared per-run state: the embedding grid and the row hash functions.
/// Every sketch spawned from one builder is counter-comparable.
pub struct SketchBuilder {
    params: SketchParams,
    grid: Arc<GridSpec>,
    coeffs: Arc<Vec<[u64; 4]>>,
}

impl SketchBuilder {
    pub fn new(params: SketchParams) -> Result<SketchBuilder> {
        params.validate()?;
        let grid = Arc::new(GridSpec::build(params.kind, params.d, params.eps_embed)?);
        Ok(SketchBuilder::with_grid(params, grid))
    }

    /// Reuses an existing grid (it must match the params).
    pub fn with_grid(params: SketchParams, grid: Arc<GridSpec>) -> SketchBuilder {
        assert_eq!(grid.kind(), params.kind);
        assert_eq!(grid.d(), params.d);
        let coeffs = Arc::new(derive_coeffs(params.seed, params.reps()));
        SketchBuilder { params, grid, coeffs }
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn sketch(&self) -> LinearSketch {
        let m = self.params.width();
        let r = self.params.reps();
        LinearSketch {
            params: self.params.clone(),
            grid: Arc::clone(&self.grid),
            coeffs: Arc::clone(&self.coeffs),
            counters: vec![0.0; m * r],
            seen: vec![0u64; self.params.d.div_ceil(64)],
            seen_count: 0,
        }
    }
}

fn derive_coeffs(seed: u64, reps: usize) -> Vec<[u64; 4]> {
    use rand::RngCore;
    let mut rng = rng_from(child_seed(seed, "sketch-hash"));
    let mut out = Vec::with_capacity(reps);
    for _ in 0..reps {
        let mut c = [0u64; 4];
        for slot in &mut c {
            *slot = loop {
                let x = rng.next_u64() >> 3;
                if x < m61::P {
                    break x;
                }
            };
        }
        out.push(c);
    }
    out
}

/// Random-sign linear sketch of one point's embedding. Updates are linear in
/// the embedded vector, so sketches of disjoint coordinate subsets merge by
/// counter addition and distances come from counter differences.
pub struct LinearSketch {
    params: SketchParams,
    grid: Arc<GridSpec>,
    coeffs: Arc<Vec<[u64; 4]>>,
    counters: Vec<f64>,
    seen: Vec<u64>,
    seen_count: usize,
}

impl LinearSketch {
    /// Folds one aggregate item into the counters. Each `(point, coord)`
    /// may arrive once; repeats are rejected rather than overwritten.
    pub fn process_item(&mut self, item: &AggregateItem) -> Result<()> {
        if item.coord_index >= self.params.d {
            return Err(Error::Validation(format!(
                "coordinate index {} out of range for d = {}",
                item.coord_index, self.params.d
            )));
        }
        if !item.value.is_finite() || !(0.0..=1.0).contains(&item.value) {
            return Err(Error::Validation(format!(
                "coordinate value {} outside [0, 1]",
                item.value
            )));
        }
        if self.seen_bit(item.coord_index) {
            return Err(Error::DuplicateCoordinate {
                point: item.point_id.clone(),
                coord: item.coord_index,
            });
        }
        self.set_seen_bit(item.coord_index);
        if item.value == 0.0 {
            return Ok(()); // zero block: no counter changes
        }
        let block = embed_coordinate(&self.grid, item.value);
        self.scatter(item.coord_index * self.grid.block_len(), &block);
        Ok(())
    }

    /// Folds a full-point embedding vector in one shot. Byte-for-byte the
    /// same counter updates as processing every coordinate in order; used
    /// as the linearity oracle and by bulk pipelines.
    pub fn absorb_vector(&mut self, vector: &[f64]) -> Result<()> {
        if vector.len() != self.grid.total_len() {
            return Err(Error::Dimension { expected: self.grid.total_len(), got: vector.len() });
        }
        if self.seen_count != 0 {
            return Err(Error::Validation(
                "absorb_vector requires a fresh sketch (coordinates already seen)".into(),
            ));
        }
        for c in 0..self.params.d {
            self.set_seen_bit(c);
        }
        let bl = self.grid.block_len();
        for c in 0..self.params.d {
            self.scatter(c * bl, &vector[c * bl..(c + 1) * bl]);
        }
        Ok(())
    }

    fn scatter(&mut self, g0: usize, entries: &[f64]) {
        let m = self.params.width() as u64;
        let width = m as usize;
        for (r, coeff) in self.coeffs.iter().enumerate() {
            let row = &mut self.counters[r * width..(r + 1) * width];
            let mut fd = FdPoly::new(coeff, g0 as u64);
            for &e in entries {
                let v = fd.next_value();
                if e != 0.0 {
                    let sign = 1.0 - 2.0 * ((v & 1) as f64);
                    let bucket = (((v >> 1) as u128 * m as u128) >> 60) as usize;
                    row[bucket] += sign * e;
                }
            }
        }
    }

    /// Adds a sketch of a disjoint coordinate subset of the same point.
    pub fn merge(&mut self, other: &LinearSketch) -> Result<()> {
        self.check_compatible(other)?;
        for (w_self, w_other) in self.seen.iter().zip(&other.seen) {
            if w_self & w_other != 0 {
                let coord = (w_self & w_other).trailing_zeros() as usize;
                return Err(Error::DuplicateCoordinate { point: String::new(), coord });
            }
        }
        for (a, b) in self.counters.iter_mut().zip(&other.counters) {
            *a += b;
        }
        for (a, b) in self.seen.iter_mut().zip(&other.seen) {
            *a |= b;
        }
        self.seen_count += other.seen_count;
        Ok(())
    }

    fn check_compatible(&self, other: &LinearSketch) -> Result<()> {
        if self.params != other.params || self.grid.digest() != other.grid.digest() {
            return Err(Error::SketchMismatch(
                "sketches differ in parameters, seed, or grid binding".into(),
            ));
        }
        Ok(())
    }

    /// All `d` coordinates arrived; divergence estimates are meaningful.
    pub fn is_complete(&self) -> bool {
        self.seen_count == self.params.d
    }

    pub fn seen_count(&self) -> usize {
        self.seen_count
    }

    /// Counter cells held by this sketch; independent of `d`.
    pub fn counter_count(&self) -> usize {
        self.counters.len()
    }

    pub fn counters(&self) -> &[f64] {
        &self.counters
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn grid_digest(&self) -> &str {
        self.grid.digest()
    }

    pub fn rng_id(&self) -> &'static str {
        RNG_ID
    }

    /// Seen-set as hex words, little-endian word order (serialization aid).
    pub fn seen_hex(&self) -> String {
        self.seen.iter().map(|w| format!("{w:016x}")).collect()
    }

    /// Rebuilds a sketch from persisted parts; the grid and hash functions
    /// are re-derived from the parameters.
    pub fn from_parts(
        params: SketchParams,
        grid: Arc<GridSpec>,
        counters: Vec<f64>,
        seen_hex: &str,
    ) -> Result<LinearSketch> {
        params.validate()?;
        let expect = params.width() * params.reps();
        if counters.len() != expect {
            return Err(Error::Parse(format!(
                "counter array has {} cells, expected {expect}",
                counters.len()
            )));
        }
        let words = params.d.div_ceil(64);
        if seen_hex.len() != 16 * words {
            return Err(Error::Parse("seen-set hex has wrong length".into()));
        }
        let seen = (0..words)
            .map(|i| {
                u64::from_str_radix(&seen_hex[16 * i..16 * (i + 1)], 16)
                    .map_err(|e| Error::Parse(format!("seen-set hex: {e}")))
            })
            .collect::<Result<Vec<u64>>>()?;
        let seen_count = seen.iter().map(|w| w.count_ones() as usize).sum();
        let coeffs = Arc::new(derive_coeffs(params.seed, params.reps()));
        Ok(LinearSketch { params, grid, coeffs, counters, seen, seen_count })
    }

    fn seen_bit(&self, idx: usize) -> bool {
        self.seen[idx / 64] >> (idx % 64) & 1 == 1
    }

    fn set_seen_bit(&mut self, idx: usize) {
        self.seen[idx / 64] |= 1 << (idx % 64);
        self.seen_count += 1;
    }
}

/// Estimates the divergence between the two sketched points: median over
/// rows of the per-row sum of squared counter differences. Multiplicative
/// `(1 +/- eps_l2)` around the embedded distance, which itself sits within
/// `+/- eps_embed` of the true divergence.
pub fn estimate_divergence(a: &LinearSketch, b: &LinearSketch) -> Result<f64> {
    a.check_compatible(b)?;
    let m = a.params.width();
    let r = a.params.reps();
    let mut per_row: Vec<f64> = (0..r)
        .map(|row| {
            let (ra, rb) = (&a.counters[row * m..(row + 1) * m], &b.counters[row * m..(row + 1) * m]);
            ra.iter().zip(rb).map(|(x, y)| (x - y) * (x - y)).sum()
        })
        .collect();
    per_row.sort_by(|x, y| x.total_cmp(y));
    let est = if r % 2 == 1 {
        per_row[r / 2]
    } else {
        0.5 * (per_row[r / 2 - 1] + per_row[r / 2])
    };
    Ok(est)
}

/// Replays an aggregate stream into one sketch per point id. Memory stays
/// proportional to the number of points times the counter count, plus the
/// single shared grid.
pub fn replay_stream<I>(items: I, builder: &SketchBuilder) -> Result<BTreeMap<String, LinearSketch>>
where
    I: IntoIterator<Item = AggregateItem>,
{
    let mut sketches = BTreeMap::new();
    for item in items {
        let sketch =
            sketches.entry(item.point_id.clone()).or_insert_with(|| builder.sketch());
        sketch.process_item(&item)?;
    }
    Ok(sketches)
}

/// Arithmetic over the Mersenne prime `2^61 - 1` and cumulative
/// finite-difference evaluation of degree-3 polynomials at consecutive
/// arguments.
mod m61 {
    pub const P: u64 = (1 << 61) - 1;

    #[inline]
    pub fn addmod(a: u64, b: u64) -> u64 {
        let mut r = a + b;
        if r >= P {
            r -= P;
        }
        r
    }

    #[inline]
    pub fn submod(a: u64, b: u64) -> u64 {
        if a >= b {
            a - b
        } else {
            a + P - b
        }
    }

    #[inline]
    pub fn mulmod(a: u64, b: u64) -> u64 {
        let t = (a as u128) * (b as u128);
        let mut r = ((t & P as u128) as u64) + ((t >> 61) as u64);
        r = (r & P) + (r >> 61);
        if r >= P {
            r -= P;
        }
        r
    }

    pub fn poly_eval(c: &[u64; 4], x: u64) -> u64 {
        debug_assert!(x < P);
        let mut acc = c[3];
        for &ci in &[c[2], c[1], c[0]] {
            acc = addmod(mulmod(acc, x), ci);
        }
        acc
    }
}

/// Streams `poly(g0), poly(g0 + 1), ...` with three modular additions per
/// step (third differences of a cubic are constant).
struct FdPoly {
    value: u64,
    d1: u64,
    d2: u64,
    d3: u64,
}

impl FdPoly {
    fn new(coeffs: &[u64; 4], g0: u64) -> FdPoly {
        use m61::{poly_eval, submod};
        let v: Vec<u64> = (0..4).map(|i| poly_eval(coeffs, g0 + i)).collect();
        let (a1, b1, c1) = (submod(v[1], v[0]), submod(v[2], v[1]), submod(v[3], v[2]));
        let (a2, b2) = (submod(b1, a1), submod(c1, b1));
        FdPoly { value: v[0], d1: a1, d2: a2, d3: submod(b2, a2) }
    }

    #[inline]
    fn next_value(&mut self) -> u64 {
        use m61::addmod;
        let out = self.value;
        self.value = addmod(self.value, self.d1);
        self.d1 = addmod(self.d1, self.d2);
        self.d2 = addmod(self.d2, self.d3);
        out
    }
}
