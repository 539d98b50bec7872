//! Color palette optimization by stochastic quantization.
//!
//! Pixels are treated as samples of a discrete distribution in the unit RGB
//! cube. A K-color palette is fitted by single-sample projected stochastic
//! gradient descent on the expected r-th power distance from a pixel to its
//! nearest palette entry, starting from a D² (k-means++ style) seeding. The
//! image is then remapped to the palette and written as an indexed PNG.
//!
//! ```
//! use sqpalette::{PixelCloud, ColorPoint, QuantizerConfig, RngStream, run_sq};
//!
//! let cloud = PixelCloud::uniform(vec![
//!     ColorPoint::new(0.1, 0.1, 0.1).unwrap(),
//!     ColorPoint::new(0.9, 0.9, 0.9).unwrap(),
//! ]).unwrap();
//! let config = QuantizerConfig::new(2).with_max_iters(1_000);
//! let run = run_sq(&cloud, &config, &mut RngStream::new(config.seed)).unwrap();
//! assert_eq!(run.palette.len(), 2);
//! ```

pub mod baseline;
pub mod error;
pub mod geometry;
pub mod image;
pub mod optimizer;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod seeding;

pub use baseline::{brute_force_palette, lloyd_from, lloyd_kmeans, BaselineResult};
pub use error::{Error, Result};
pub use geometry::{
    denormalize, distance, nearest_index, normalize, project_unit_cube, ColorPoint, Palette,
    PixelCloud, RawPixel,
};
pub use image::{
    build_cloud, count_distinct_colors, decode_indexed_png, encode_indexed_png, indexed_png_size,
    load_image, map_to_palette, mse, rgb_png_size, transport_value, write_indexed_png,
    CompressionMetrics, IndexedImage, RawImage,
};
pub use optimizer::{
    default_budget, objective, run_sq, run_sq_from, run_sq_observed, sample_gradient, sq_step,
    QuantizerConfig, SqRun, TracePoint,
};
pub use pipeline::{
    compare_with_lloyd, compress, BaselineReport, CompressOptions, CompressOutcome, MethodSummary,
    Source,
};
pub use report::{
    BenchmarkCell, BenchmarkTable, Hyperparameters, Inversion, QuantizationReport,
    TableHyperparameters,
};
pub use rng::RngStream;
pub use seeding::{
    draw_weighted, seed_dsquared, seed_palette, seed_uniform, seeding_weights, SeedingStrategy,
};
