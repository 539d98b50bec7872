//! Command implementations behind the `sqpalette` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use sqpalette::pipeline::{compare_with_lloyd, compress, CompressOptions, Source};
use sqpalette::{
    encode_indexed_png, load_image, BenchmarkCell, BenchmarkTable, QuantizerConfig, RawImage,
    RngStream, SeedingStrategy, TableHyperparameters,
};

/// Palette sizes swept by `benchmark` unless `--colors` is given.
pub const DEFAULT_SWEEP: [usize; 5] = [4, 8, 12, 24, 36];
pub const MAX_COLORS: usize = 256;

pub mod exit {
    pub const SUCCESS: u8 = 0;
    pub const USAGE: u8 = 2;
    pub const IO: u8 = 3;
    pub const DEGENERATE: u8 = 4;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] sqpalette::Error),
    #[error("{path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Core(sqpalette::Error::InvalidInput(_)) => exit::USAGE,
            CliError::Core(sqpalette::Error::Io { .. }) | CliError::Write { .. } => exit::IO,
            CliError::Core(sqpalette::Error::DegenerateSeeding(_)) => exit::DEGENERATE,
        }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(
    name = "sqpalette",
    version,
    about = "Palette compression by stochastic quantization"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantize one image and write it as an indexed PNG.
    Compress(CompressArgs),
    /// Sweep palette sizes over a set of images and tabulate MSE.
    Benchmark(BenchmarkArgs),
    /// Compare stochastic quantization with Lloyd's k-means on one image.
    Baseline(BaselineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SeedingArg {
    Uniform,
    Dsq,
}

impl From<SeedingArg> for SeedingStrategy {
    fn from(s: SeedingArg) -> Self {
        match s {
            SeedingArg::Uniform => SeedingStrategy::Uniform,
            SeedingArg::Dsq => SeedingStrategy::DSquared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableFormat {
    Csv,
    Md,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct Hyper {
    /// Learning rate.
    #[arg(long, default_value_t = 0.001)]
    pub rho: f64,
    /// Norm degree of the transport cost.
    #[arg(long = "r", default_value_t = 3.0)]
    pub r: f64,
    /// Iteration budget [default: 50 samples per pixel, at most 5,000,000].
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SeedingArg::Dsq)]
    pub seeding: SeedingArg,
    /// Number of objective evaluations recorded in the trace (besides the start).
    #[arg(long, default_value_t = 10)]
    pub trace_points: usize,
    /// Fail with a degenerate-input error instead of lowering the palette size
    /// when the image has fewer distinct colors than requested.
    #[arg(long)]
    pub strict: bool,
}

impl Hyper {
    fn options(&self, colors: usize, pixels: usize) -> Result<CompressOptions> {
        check_colors(colors)?;
        let mut config = QuantizerConfig::new(colors)
            .with_rho(self.rho)
            .with_r(self.r)
            .with_seed(self.seed)
            .with_seeding(self.seeding.into());
        config.max_iters = self.iters;
        let iters = config.resolved_iters(pixels);
        config.trace_every = if self.trace_points == 0 {
            0
        } else {
            iters.div_ceil(self.trace_points).max(1)
        };
        config.validate()?;
        Ok(CompressOptions {
            config,
            clamp_colors: !self.strict,
        })
    }
}

fn check_colors(colors: usize) -> Result<()> {
    if !(1..=MAX_COLORS).contains(&colors) {
        return Err(CliError::Usage(format!(
            "--colors must be between 1 and {MAX_COLORS}, got {colors}"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct CompressArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Palette size.
    #[arg(long, default_value_t = 4)]
    pub colors: usize,
    #[command(flatten)]
    pub hyper: Hyper,
    /// Indexed PNG output path.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON report path.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BenchmarkArgs {
    #[arg(long, alias = "input", num_args = 1.., required = true)]
    pub inputs: Vec<PathBuf>,
    /// Comma-separated palette sizes.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_SWEEP)]
    pub colors: Vec<usize>,
    #[command(flatten)]
    pub hyper: Hyper,
    #[arg(long, value_enum, default_value_t = TableFormat::Csv)]
    pub format: TableFormat,
    /// Table output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for per-cell JSON reports.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub colors: usize,
    #[command(flatten)]
    pub hyper: Hyper,
    #[arg(long, default_value_t = 300)]
    pub lloyd_iters: usize,
    /// Lloyd stops once no center moves this far.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// JSON report path; stdout when absent.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

/// Parse arguments, run, and map the outcome onto the exit-code contract.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                exit::USAGE
            } else {
                exit::SUCCESS
            });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compress(args) => cmd_compress(&args),
        Command::Benchmark(args) => cmd_benchmark(&args).map(|_| ()),
        Command::Baseline(args) => cmd_baseline(&args),
    }
}

fn source_for(path: &Path) -> Source {
    Source {
        path: path.display().to_string(),
        bytes: fs::metadata(path).map(|m| m.len()).unwrap_or(0),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|source| CliError::Write {
        path: path.to_path_buf(),
        source,
    })
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    s
}

pub fn cmd_compress(args: &CompressArgs) -> Result<()> {
    check_colors(args.colors)?;
    let img = load_image(&args.input)?;
    let options = args
        .hyper
        .options(args.colors, img.width() * img.height())?;
    let source = source_for(&args.input);
    let mut rng = RngStream::new(options.config.seed);
    let outcome = compress(&img, &source, &options, &mut rng, |tp| {
        info!("iteration {} objective {:.6e}", tp.iteration, tp.objective)
    })?;
    let written = encode_indexed_png(&outcome.indexed, &args.out)?;
    debug_assert_eq!(written, outcome.report.compressed_bytes);
    info!(
        "{} -> {} ({} colors, mse {:.6}, {} -> {} bytes)",
        args.input.display(),
        args.out.display(),
        outcome.report.k,
        outcome.report.mse,
        outcome.report.original_bytes,
        written
    );
    if let Some(report) = &args.report {
        write_file(report, to_json(&outcome.report))?;
    }
    Ok(())
}

/// ChaCha stream id for one (image, palette size) cell of a sweep.
pub fn cell_stream(image_index: usize, colors: usize) -> u64 {
    ((image_index as u64 + 1) << 32) | colors as u64
}

fn report_name(index: usize, path: &Path, colors: usize) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    format!("{index:02}_{stem}_k{colors}.json")
}

pub fn cmd_benchmark(args: &BenchmarkArgs) -> Result<BenchmarkTable> {
    if args.inputs.is_empty() {
        return Err(CliError::Usage("benchmark needs at least one input".into()));
    }
    if args.colors.is_empty() {
        return Err(CliError::Usage(
            "benchmark needs at least one palette size".into(),
        ));
    }
    for &k in &args.colors {
        check_colors(k)?;
    }
    if args.jobs == Some(0) {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    // validate shared hyperparameters once, up front
    args.hyper.options(args.colors[0], 1)?;
    if let Some(dir) = &args.report {
        fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.clone(),
            source,
        })?;
    }

    let pool = {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(jobs) = args.jobs {
            builder = builder.num_threads(jobs);
        }
        builder
            .build()
            .map_err(|e| CliError::Usage(format!("cannot start worker pool: {e}")))?
    };

    let (cells, first_error) = pool.install(|| {
        let images: Vec<Result<RawImage, CliError>> = args
            .inputs
            .par_iter()
            .map(|p| load_image(p).map_err(CliError::from))
            .collect();
        let jobs: Vec<(usize, usize)> = (0..args.colors.len())
            .flat_map(|row| (0..args.inputs.len()).map(move |col| (row, col)))
            .collect();
        let outcomes: Vec<Result<f64, CliError>> = jobs
            .par_iter()
            .map(|&(row, col)| {
                let img = images[col]
                    .as_ref()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                run_cell(args, img, col, args.colors[row])
            })
            .collect();

        let mut first_error: Option<CliError> = None;
        let mut cells = vec![Vec::with_capacity(args.inputs.len()); args.colors.len()];
        for (&(row, col), outcome) in jobs.iter().zip(outcomes) {
            let cell = match outcome {
                Ok(v) => BenchmarkCell::Mse(v),
                Err(e) => {
                    let code_source = match &images[col] {
                        Err(load) => clone_kind(load),
                        Ok(_) => clone_kind(&e),
                    };
                    let text = e.to_string();
                    first_error.get_or_insert(code_source);
                    BenchmarkCell::Error(text)
                }
            };
            debug_assert_eq!(cells[row].len(), col);
            cells[row].push(cell);
        }
        (cells, first_error)
    });

    let table = BenchmarkTable::new(
        args.colors.clone(),
        args.inputs
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        cells,
        TableHyperparameters {
            rho: args.hyper.rho,
            r: args.hyper.r,
            seed: args.hyper.seed,
            iters: args.hyper.iters,
            seeding: args.hyper.seeding.into(),
        },
    )?;
    for inv in table.inversions() {
        log::warn!(
            "{}: MSE rose by {:.1}% from K={} to K={}",
            inv.image,
            inv.relative_increase * 100.0,
            inv.from_colors,
            inv.to_colors
        );
    }

    let rendered = match args.format {
        TableFormat::Csv => table.to_csv()?,
        TableFormat::Md => table.to_markdown(),
        TableFormat::Json => to_json(&table),
    };
    match &args.out {
        Some(path) => write_file(path, rendered)?,
        None => print!("{rendered}"),
    }

    let all_failed = table
        .cells
        .iter()
        .flatten()
        .all(|c| matches!(c, BenchmarkCell::Error(_)));
    match first_error {
        Some(e) if all_failed => Err(e),
        _ => Ok(table),
    }
}

// `CliError` wraps non-Clone io errors; keep the kind (and so the exit code)
// plus the message.
fn clone_kind(e: &CliError) -> CliError {
    match e {
        CliError::Usage(m) => CliError::Usage(m.clone()),
        CliError::Core(sqpalette::Error::InvalidInput(m)) => {
            CliError::Core(sqpalette::Error::InvalidInput(m.clone()))
        }
        CliError::Core(sqpalette::Error::DegenerateSeeding(m)) => {
            CliError::Core(sqpalette::Error::DegenerateSeeding(m.clone()))
        }
        CliError::Core(sqpalette::Error::Io { path, reason }) => {
            CliError::Core(sqpalette::Error::Io {
                path: path.clone(),
                reason: reason.clone(),
            })
        }
        CliError::Write { path, source } => CliError::Write {
            path: path.clone(),
            source: std::io::Error::new(source.kind(), source.to_string()),
        },
    }
}

fn run_cell(args: &BenchmarkArgs, img: &RawImage, col: usize, colors: usize) -> Result<f64> {
    let path = &args.inputs[col];
    let options = args.hyper.options(colors, img.width() * img.height())?;
    let mut rng = RngStream::with_stream(options.config.seed, cell_stream(col, colors));
    let outcome = compress(img, &source_for(path), &options, &mut rng, |_| {})?;
    info!(
        "{} K={colors}: mse {:.6}",
        path.display(),
        outcome.report.mse
    );
    if let Some(dir) = &args.report {
        write_file(
            &dir.join(report_name(col, path, colors)),
            to_json(&outcome.report),
        )?;
    }
    Ok(outcome.report.mse)
}

pub fn cmd_baseline(args: &BaselineArgs) -> Result<()> {
    check_colors(args.colors)?;
    if args.tol.is_nan() || args.tol < 0.0 {
        return Err(CliError::Usage(format!(
            "--tol must be nonnegative, got {}",
            args.tol
        )));
    }
    let img = load_image(&args.input)?;
    let options = args
        .hyper
        .options(args.colors, img.width() * img.height())?;
    let mut rng = RngStream::new(options.config.seed);
    let report = compare_with_lloyd(
        &img,
        &source_for(&args.input),
        &options,
        args.lloyd_iters,
        args.tol,
        &mut rng,
    )?;
    info!(
        "SQ mse {:.6} in {:.1} ms; Lloyd mse {:.6} in {:.1} ms",
        report.sq.mse, report.sq.wall_time_ms, report.lloyd.mse, report.lloyd.wall_time_ms
    );
    let json = to_json(&report);
    match &args.report {
        Some(path) => write_file(path, json)?,
        None => print!("{json}"),
    }
    Ok(())
}
