//! End-to-end runs over a decoded image: quantize, remap, encode, measure.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baseline::lloyd_from;
use crate::error::Result;
use crate::geometry::Palette;
use crate::image::{
    build_cloud, count_distinct_colors, indexed_png_size, map_to_palette, mse, transport_value,
    CompressionMetrics, IndexedImage, RawImage,
};
use crate::optimizer::{objective, run_sq_from, QuantizerConfig, TracePoint};
use crate::report::{Hyperparameters, QuantizationReport};
use crate::rng::RngStream;
use crate::seeding::seed_palette;

#[derive(Clone, Debug)]
pub struct CompressOptions {
    pub config: QuantizerConfig,
    /// Lower the palette size to the image's distinct-color count instead of
    /// failing seeding.
    pub clamp_colors: bool,
}

impl CompressOptions {
    pub fn new(config: QuantizerConfig) -> Self {
        CompressOptions {
            config,
            clamp_colors: true,
        }
    }
}

/// Where the image came from, for the report.
#[derive(Clone, Debug, Default)]
pub struct Source {
    pub path: String,
    pub bytes: u64,
}

pub struct CompressOutcome {
    pub indexed: IndexedImage,
    /// The stored (8-bit) palette.
    pub palette: Palette,
    pub metrics: CompressionMetrics,
    pub report: QuantizationReport,
}

fn effective_colors(requested: usize, distinct: usize, clamp: bool) -> usize {
    if clamp {
        requested.min(distinct).max(1)
    } else {
        requested
    }
}

/// Quantize `img`, remap it to the resulting palette, and measure the result.
///
/// The optimized palette is rounded to 8 bits before remapping, so every
/// reported metric describes exactly what ends up in the output file.
pub fn compress(
    img: &RawImage,
    source: &Source,
    options: &CompressOptions,
    rng: &mut RngStream,
    observe: impl FnMut(&TracePoint),
) -> Result<CompressOutcome> {
    let started = Instant::now();
    options.config.validate()?;
    let distinct = count_distinct_colors(img);
    let mut config = options.config.clone();
    config.k = effective_colors(config.k, distinct, options.clamp_colors);

    let cloud = build_cloud(img);
    let initial = seed_palette(&cloud, config.k, config.seeding, rng)?;
    let run = run_sq_from(&cloud, initial, &config, rng, observe)?;
    let palette = run.palette.snapped();
    let indexed = map_to_palette(img, &palette)?;
    let distortion = mse(img, &indexed.reconstruct())?;
    let compressed_bytes = indexed_png_size(&indexed)?;
    let metrics = CompressionMetrics {
        mse: distortion,
        transport_value: transport_value(&cloud, &palette, config.r),
        original_bytes: source.bytes,
        compressed_bytes,
        distinct_colors_before: distinct,
        palette_size_after: palette.len(),
    };
    let report = QuantizationReport {
        input_path: source.path.clone(),
        width: img.width(),
        height: img.height(),
        distinct_colors_before: distinct,
        requested_colors: options.config.k,
        k: config.k,
        hyperparameters: Hyperparameters::from_config(&config, run.iterations),
        palette_hex: palette.hex(),
        final_objective: objective(&cloud, &palette, config.r),
        transport_value: metrics.transport_value,
        mse: metrics.mse,
        original_bytes: metrics.original_bytes,
        compressed_bytes,
        wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
        trace: run.trace,
    };
    Ok(CompressOutcome {
        indexed,
        palette,
        metrics,
        report,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub palette_hex: Vec<String>,
    pub mse: f64,
    /// Weighted transport objective at the configured `r`.
    pub objective: f64,
    pub iterations: usize,
    pub wall_time_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub input_path: String,
    pub width: usize,
    pub height: usize,
    pub distinct_colors_before: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub hyperparameters: Hyperparameters,
    pub lloyd_max_iters: usize,
    pub lloyd_tol: f64,
    pub sq: MethodSummary,
    pub lloyd: MethodSummary,
    /// Lloyd wall time divided by SQ wall time.
    pub speed_ratio: f64,
}

/// Run SQ and Lloyd's k-means from the same initial palette.
pub fn compare_with_lloyd(
    img: &RawImage,
    source: &Source,
    options: &CompressOptions,
    lloyd_max_iters: usize,
    lloyd_tol: f64,
    rng: &mut RngStream,
) -> Result<BaselineReport> {
    options.config.validate()?;
    let distinct = count_distinct_colors(img);
    let mut config = options.config.clone();
    config.k = effective_colors(config.k, distinct, options.clamp_colors);
    let cloud = build_cloud(img);
    let initial = seed_palette(&cloud, config.k, config.seeding, rng)?;

    let summarize =
        |palette: Palette, iterations: usize, started: Instant| -> Result<MethodSummary> {
            let palette = palette.snapped();
            let mapped = map_to_palette(img, &palette)?.reconstruct();
            Ok(MethodSummary {
                palette_hex: palette.hex(),
                mse: mse(img, &mapped)?,
                objective: objective(&cloud, &palette, config.r),
                iterations,
                wall_time_ms: started.elapsed().as_secs_f64() * 1e3,
            })
        };

    let started = Instant::now();
    let run = run_sq_from(&cloud, initial.clone(), &config, rng, |_| {})?;
    let sq = summarize(run.palette, run.iterations, started)?;

    let started = Instant::now();
    let lloyd_run = lloyd_from(&cloud, initial, lloyd_max_iters, lloyd_tol)?;
    let lloyd = summarize(lloyd_run.palette, lloyd_run.iterations_used, started)?;

    Ok(BaselineReport {
        input_path: source.path.clone(),
        width: img.width(),
        height: img.height(),
        distinct_colors_before: distinct,
        k: config.k,
        hyperparameters: Hyperparameters::from_config(&config, run.iterations),
        lloyd_max_iters,
        lloyd_tol,
        speed_ratio: if sq.wall_time_ms > 0.0 {
            lloyd.wall_time_ms / sq.wall_time_ms
        } else {
            f64::INFINITY
        },
        sq,
        lloyd,
    })
}
