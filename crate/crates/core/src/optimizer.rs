//! The transport objective and its single-sample projected SGD minimizer.
//!
//! Each iteration draws one pixel `ξ`, finds its nearest palette entry `y_k`,
//! and moves only that entry:
//!
//! ```text
//! y_k <- clamp01(y_k - rho * r * |ξ - y_k|^(r-2) * (y_k - ξ))
//! ```
//!
//! which is a stochastic subgradient step on
//! `F(y) = Σ_i p_i min_k |ξ_i - y_k|^r`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{nearest, par_sum, project_unit_cube, ColorPoint, Palette, PixelCloud};
use crate::rng::RngStream;
use crate::seeding::{seed_palette, SeedingStrategy};

pub const DEFAULT_RHO: f64 = 0.001;
pub const DEFAULT_R: f64 = 3.0;
pub const DEFAULT_SEED: u64 = 42;
/// Default budget is this many passes' worth of samples ...
pub const DEFAULT_PASSES: usize = 50;
/// ... capped at this many iterations.
pub const MAX_DEFAULT_ITERS: usize = 5_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    /// Palette size.
    pub k: usize,
    /// Learning rate.
    pub rho: f64,
    /// Norm degree of the transport cost.
    pub r: f64,
    /// Iteration budget; `None` resolves to [`default_budget`] of the cloud size.
    pub max_iters: Option<usize>,
    pub seed: u64,
    pub seeding: SeedingStrategy,
    /// Record the objective every this many iterations (and at 0). `0` records
    /// only the final iteration.
    pub trace_every: usize,
}

impl QuantizerConfig {
    pub fn new(k: usize) -> Self {
        QuantizerConfig {
            k,
            rho: DEFAULT_RHO,
            r: DEFAULT_R,
            max_iters: None,
            seed: DEFAULT_SEED,
            seeding: SeedingStrategy::DSquared,
            trace_every: 0,
        }
    }

    pub fn with_rho(mut self, rho: f64) -> Self {
        self.rho = rho;
        self
    }

    pub fn with_r(mut self, r: f64) -> Self {
        self.r = r;
        self
    }

    pub fn with_max_iters(mut self, iters: usize) -> Self {
        self.max_iters = Some(iters);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_seeding(mut self, seeding: SeedingStrategy) -> Self {
        self.seeding = seeding;
        self
    }

    pub fn with_trace_every(mut self, every: usize) -> Self {
        self.trace_every = every;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("palette size must be at least 1"));
        }
        if !(self.rho.is_finite() && self.rho > 0.0) {
            return Err(Error::invalid(format!(
                "learning rate {} must be positive",
                self.rho
            )));
        }
        if !(self.r.is_finite() && self.r >= 2.0) {
            return Err(Error::invalid(format!(
                "norm degree {} must be at least 2",
                self.r
            )));
        }
        if self.max_iters == Some(0) {
            return Err(Error::invalid("iteration budget must be at least 1"));
        }
        Ok(())
    }

    /// The iteration budget that will be used for a cloud of `cloud_len` points.
    pub fn resolved_iters(&self, cloud_len: usize) -> usize {
        self.max_iters.unwrap_or_else(|| default_budget(cloud_len))
    }
}

/// `DEFAULT_PASSES` samples per pixel, capped at `MAX_DEFAULT_ITERS`.
pub fn default_budget(cloud_len: usize) -> usize {
    cloud_len
        .saturating_mul(DEFAULT_PASSES)
        .clamp(1, MAX_DEFAULT_ITERS)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
}

#[derive(Clone, Debug)]
pub struct SqRun {
    pub initial_palette: Palette,
    pub palette: Palette,
    pub trace: Vec<TracePoint>,
    pub iterations: usize,
}

#[inline]
fn dist_pow(d2: f64, r: f64) -> f64 {
    if r == 2.0 {
        d2
    } else if r == 3.0 {
        d2 * d2.sqrt()
    } else {
        d2.sqrt().powf(r)
    }
}

/// `Σ_i p_i min_k d(ξ_i, y_k)^r`.
pub fn objective(cloud: &PixelCloud, palette: &Palette, r: f64) -> f64 {
    debug_assert!(!palette.is_empty());
    let points = cloud.points();
    let weights = cloud.weights();
    let colors = palette.colors();
    par_sum(points.len(), |i| {
        weights[i] * dist_pow(nearest(&points[i], colors).1, r)
    })
}

/// Like [`objective`] but every point counts once, regardless of its weight.
pub(crate) fn unweighted_objective(cloud: &PixelCloud, palette: &Palette, r: f64) -> f64 {
    let points = cloud.points();
    let colors = palette.colors();
    par_sum(points.len(), |i| dist_pow(nearest(&points[i], colors).1, r))
}

#[inline]
fn gradient_at(xi: &ColorPoint, y: &ColorPoint, d2: f64, r: f64) -> [f64; 3] {
    if d2 == 0.0 {
        return [0.0; 3];
    }
    let scale = if r == 2.0 {
        2.0
    } else if r == 3.0 {
        3.0 * d2.sqrt()
    } else {
        r * d2.sqrt().powf(r - 2.0)
    };
    let (x, y) = (xi.coords(), y.coords());
    [
        scale * (y[0] - x[0]),
        scale * (y[1] - x[1]),
        scale * (y[2] - x[2]),
    ]
}

/// Index of the entry nearest to `xi` and the gradient of `d(xi, y_k)^r`
/// with respect to that entry. The gradient is zero when `xi` sits on it.
pub fn sample_gradient(xi: ColorPoint, palette: &Palette, r: f64) -> Result<(usize, [f64; 3])> {
    if palette.is_empty() {
        return Err(Error::invalid("palette is empty"));
    }
    let (k, d2) = nearest(&xi, palette.colors());
    Ok((k, gradient_at(&xi, &palette.colors()[k], d2, r)))
}

/// Move only the entry nearest to `xi`, then project it back into the cube.
#[inline]
fn step_in_place(colors: &mut [ColorPoint], xi: &ColorPoint, rho: f64, r: f64) {
    let (k, d2) = nearest(xi, colors);
    if d2 == 0.0 {
        return;
    }
    let g = gradient_at(xi, &colors[k], d2, r);
    let y = colors[k].coords();
    let moved = [y[0] - rho * g[0], y[1] - rho * g[1], y[2] - rho * g[2]];
    // finite because every input is in the cube and rho is finite
    colors[k] = project_unit_cube(moved).expect("finite step");
}

/// One stochastic quantization step on a copy of `palette`.
pub fn sq_step(palette: &Palette, xi: ColorPoint, rho: f64, r: f64) -> Result<Palette> {
    if palette.is_empty() {
        return Err(Error::invalid("palette is empty"));
    }
    if !(rho.is_finite() && rho > 0.0) || !(r.is_finite() && r >= 2.0) {
        return Err(Error::invalid(format!(
            "invalid step parameters rho={rho}, r={r}"
        )));
    }
    let mut next = palette.clone();
    step_in_place(next.colors_mut(), &xi, rho, r);
    Ok(next)
}

/// Seed a palette and run the configured number of SQ iterations.
pub fn run_sq(cloud: &PixelCloud, config: &QuantizerConfig, rng: &mut RngStream) -> Result<SqRun> {
    run_sq_observed(cloud, config, rng, |_| {})
}

/// [`run_sq`] that also hands each trace point to `observe` as it is recorded.
pub fn run_sq_observed(
    cloud: &PixelCloud,
    config: &QuantizerConfig,
    rng: &mut RngStream,
    observe: impl FnMut(&TracePoint),
) -> Result<SqRun> {
    config.validate()?;
    let initial_palette = seed_palette(cloud, config.k, config.seeding, rng)?;
    run_sq_from(cloud, initial_palette, config, rng, observe)
}

/// Run the SQ iterations from a given initial palette; `config.seeding` and
/// `config.k` are ignored.
pub fn run_sq_from(
    cloud: &PixelCloud,
    initial_palette: Palette,
    config: &QuantizerConfig,
    rng: &mut RngStream,
    mut observe: impl FnMut(&TracePoint),
) -> Result<SqRun> {
    config.validate()?;
    let max_iters = config.resolved_iters(cloud.len());
    let mut palette = initial_palette.clone();
    let mut trace = Vec::new();
    let mut record = |t: usize, palette: &Palette| {
        let tp = TracePoint {
            iteration: t,
            objective: objective(cloud, palette, config.r),
        };
        observe(&tp);
        trace.push(tp);
    };

    if config.trace_every > 0 {
        record(0, &palette);
    }
    let points = cloud.points();
    for t in 1..=max_iters {
        let xi = &points[cloud.sample_index(rng)];
        step_in_place(palette.colors_mut(), xi, config.rho, config.r);
        if t == max_iters || (config.trace_every > 0 && t % config.trace_every == 0) {
            record(t, &palette);
        }
    }

    Ok(SqRun {
        initial_palette,
        palette,
        trace,
        iterations: max_iters,
    })
}
