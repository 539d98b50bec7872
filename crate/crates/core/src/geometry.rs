//! Points in the unit RGB cube, palettes, pixel distributions, and the
//! metric/projection/nearest-entry primitives everything else builds on.
//!
//! Palette indices are 0-based throughout the crate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A color with each channel normalized to `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorPoint([f64; 3]);

impl ColorPoint {
    pub const BLACK: ColorPoint = ColorPoint([0.0; 3]);

    pub fn new(c0: f64, c1: f64, c2: f64) -> Result<Self> {
        Self::from_array([c0, c1, c2])
    }

    pub fn from_array(c: [f64; 3]) -> Result<Self> {
        if c.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)) {
            Ok(ColorPoint(c))
        } else {
            Err(Error::invalid(format!(
                "color {c:?} is outside the unit cube"
            )))
        }
    }

    #[inline]
    pub fn coords(&self) -> [f64; 3] {
        self.0
    }

    #[inline]
    pub(crate) fn squared_distance(&self, other: &ColorPoint) -> f64 {
        let [a0, a1, a2] = self.0;
        let [b0, b1, b2] = other.0;
        let (d0, d1, d2) = (a0 - b0, a1 - b1, a2 - b2);
        d0 * d0 + d1 * d1 + d2 * d2
    }

    /// Bit pattern of the coordinates, usable as a hash key for exact equality.
    pub(crate) fn bits(&self) -> [u64; 3] {
        self.0.map(f64::to_bits)
    }

    /// Round onto the 8-bit grid and back.
    pub fn snapped(&self) -> ColorPoint {
        normalize(denormalize(*self))
    }
}

/// An 8-bit RGB pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RawPixel {
    pub r: u8,
    pub g: u8,
    pub b: u8,
}

impl RawPixel {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        RawPixel { r, g, b }
    }

    /// Lowercase `#rrggbb`.
    pub fn hex(&self) -> String {
        format!("#{:02x}{:02x}{:02x}", self.r, self.g, self.b)
    }

    pub fn from_hex(s: &str) -> Result<Self> {
        let digits = s.strip_prefix('#').unwrap_or(s);
        if digits.len() != 6 || !digits.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(Error::invalid(format!("`{s}` is not a #rrggbb color")));
        }
        let channel = |i: usize| u8::from_str_radix(&digits[i..i + 2], 16).unwrap();
        Ok(RawPixel::new(channel(0), channel(2), channel(4)))
    }
}

/// Euclidean distance between two colors.
#[inline]
pub fn distance(a: ColorPoint, b: ColorPoint) -> f64 {
    a.squared_distance(&b).sqrt()
}

/// Map each 8-bit channel to `[0, 1]` by dividing by 255.
#[inline]
pub fn normalize(raw: RawPixel) -> ColorPoint {
    ColorPoint([raw.r, raw.g, raw.b].map(|c| f64::from(c) / 255.0))
}

/// Inverse of [`normalize`]: scale by 255, round half up, clamp.
#[inline]
pub fn denormalize(p: ColorPoint) -> RawPixel {
    let [r, g, b] =
        p.0.map(|c| (c * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8);
    RawPixel { r, g, b }
}

/// Clamp each coordinate into `[0, 1]`.
pub fn project_unit_cube(p: [f64; 3]) -> Result<ColorPoint> {
    if p.iter().any(|c| !c.is_finite()) {
        return Err(Error::invalid(format!(
            "cannot project non-finite point {p:?}"
        )));
    }
    Ok(ColorPoint(p.map(|c| c.clamp(0.0, 1.0))))
}

/// Index of the palette entry closest to `x`; ties go to the lowest index.
pub fn nearest_index(x: ColorPoint, palette: &Palette) -> Result<usize> {
    if palette.is_empty() {
        return Err(Error::invalid("palette is empty"));
    }
    Ok(nearest(&x, palette.colors()).0)
}

/// Lowest-index nearest entry and its squared distance. `colors` must be nonempty.
#[inline]
pub(crate) fn nearest(x: &ColorPoint, colors: &[ColorPoint]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d2 = x.squared_distance(&colors[0]);
    for (k, c) in colors.iter().enumerate().skip(1) {
        let d2 = x.squared_distance(c);
        if d2 < best_d2 {
            best = k;
            best_d2 = d2;
        }
    }
    (best, best_d2)
}

/// The ordered palette `y_1 .. y_K`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    colors: Vec<ColorPoint>,
}

impl Palette {
    pub fn new(colors: Vec<ColorPoint>) -> Result<Self> {
        if colors.is_empty() {
            return Err(Error::invalid("palette must contain at least one color"));
        }
        Ok(Palette { colors })
    }

    pub fn from_raw(raw: &[RawPixel]) -> Result<Self> {
        Self::new(raw.iter().copied().map(normalize).collect())
    }

    pub(crate) fn from_vec_unchecked(colors: Vec<ColorPoint>) -> Self {
        Palette { colors }
    }

    pub fn colors(&self) -> &[ColorPoint] {
        &self.colors
    }

    pub(crate) fn colors_mut(&mut self) -> &mut [ColorPoint] {
        &mut self.colors
    }

    pub fn len(&self) -> usize {
        self.colors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.colors.is_empty()
    }

    /// Copy of the palette with `extra` appended.
    pub fn with_entry(&self, extra: ColorPoint) -> Palette {
        let mut colors = self.colors.clone();
        colors.push(extra);
        Palette { colors }
    }

    /// The palette as it will actually be stored: every entry rounded to 8 bits.
    pub fn snapped(&self) -> Palette {
        Palette {
            colors: self.colors.iter().map(ColorPoint::snapped).collect(),
        }
    }

    pub fn to_raw(&self) -> Vec<RawPixel> {
        self.colors.iter().copied().map(denormalize).collect()
    }

    pub fn hex(&self) -> Vec<String> {
        self.to_raw().iter().map(RawPixel::hex).collect()
    }
}

/// The pixel distribution: points `ξ_i` with sampling weights `p_i`.
#[derive(Clone, Debug)]
pub struct PixelCloud {
    points: Vec<ColorPoint>,
    weights: Vec<f64>,
    uniform: bool,
    // running sum of weights, only for non-uniform clouds
    cumulative: Option<Vec<f64>>,
}

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl PixelCloud {
    pub fn new(points: Vec<ColorPoint>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("pixel cloud is empty"));
        }
        if points.len() != weights.len() {
            return Err(Error::invalid(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::invalid(format!("weight {w} is not positive")));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::invalid(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let uniform = weights.iter().all(|w| *w == weights[0]);
        let cumulative = (!uniform).then(|| {
            weights
                .iter()
                .scan(0.0, |acc, w| {
                    *acc += w;
                    Some(*acc)
                })
                .collect()
        });
        Ok(PixelCloud {
            points,
            weights,
            uniform,
            cumulative,
        })
    }

    /// Every point gets weight `1/I`.
    pub fn uniform(points: Vec<ColorPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("pixel cloud is empty"));
        }
        let w = 1.0 / points.len() as f64;
        let weights = vec![w; points.len()];
        Ok(PixelCloud {
            points,
            weights,
            uniform: true,
            cumulative: None,
        })
    }

    pub fn points(&self) -> &[ColorPoint] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    /// Draw a point index with probability `p_i`.
    #[inline]
    pub fn sample_index(&self, rng: &mut RngStream) -> usize {
        match &self.cumulative {
            None => rng.index(self.points.len()),
            Some(cum) => {
                let target = rng.unit() * cum[cum.len() - 1];
                cum.partition_point(|c| *c <= target).min(cum.len() - 1)
            }
        }
    }

    /// Number of exactly distinct points.
    pub fn distinct_count(&self) -> usize {
        let mut keys: Vec<[u64; 3]> = self.points.iter().map(ColorPoint::bits).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.len()
    }
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0_f64;
    let mut carry = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry += (sum - t) + v;
        } else {
            carry += (v - t) + sum;
        }
        sum = t;
    }
    sum + carry
}

const REDUCE_CHUNK: usize = 8192;

/// Sum of `term(i)` for `i in 0..n`, evaluated in parallel over fixed-size
/// chunks whose partial sums are combined in index order. The result does not
/// depend on the number of threads.
pub(crate) fn par_sum(n: usize, term: impl Fn(usize) -> f64 + Sync) -> f64 {
    if n <= REDUCE_CHUNK {
        return compensated_sum((0..n).map(term));
    }
    let chunks: Vec<f64> = (0..n.div_ceil(REDUCE_CHUNK))
        .into_par_iter()
        .map(|c| {
            let start = c * REDUCE_CHUNK;
            let end = (start + REDUCE_CHUNK).min(n);
            compensated_sum((start..end).map(&term))
        })
        .collect();
    compensated_sum(chunks)
}
