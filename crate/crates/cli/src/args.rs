use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use retint::ingest::FillPolicy;
use retint::intervals::BoundaryPolicy;
use retint::series::{GapPolicy, NormMode};

#[derive(Debug, Parser)]
#[command(
    name = "retint",
    version,
    about = "Volatility return interval analysis"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Resample a tick file to minute bars (bars.csv).
    Ingest(IngestArgs),
    /// Write a seeded synthetic series (series.csv).
    Synth(SynthArgs),
    /// Extract return intervals from bars or a series, one file per threshold.
    Intervals(IntervalsArgs),
    /// Log-binned, scaled interval density (pdf.csv).
    Pdf(PdfArgs),
    /// Stretched-exponential fit of a density file (fit.json).
    Fit(FitArgs),
    /// Densities conditioned on the preceding interval (conditional_pdf.csv).
    ConditionalPdf(ConditionalPdfArgs),
    /// Mean conditional interval with shuffled baseline (conditional_mean.csv).
    ConditionalMean(ConditionalMeanArgs),
    /// Cluster sizes of runs above and below the median (clusters.csv).
    Clusters(ClustersArgs),
    /// Persistence probabilities and power-law fits.
    Persistence(PersistenceArgs),
    /// Every stage for each input and threshold, with a JSON report.
    Pipeline(Box<PipelineArgs>),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormArg {
    Std,
    IntradayStd,
}

impl From<NormArg> for NormMode {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Std => NormMode::Std,
            NormArg::IntradayStd => NormMode::IntradayStd,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GapArg {
    DropOvernight,
    KeepOvernight,
}

impl From<GapArg> for GapPolicy {
    fn from(g: GapArg) -> Self {
        match g {
            GapArg::DropOvernight => GapPolicy::DropOvernight,
            GapArg::KeepOvernight => GapPolicy::KeepOvernight,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BoundaryArg {
    WithinSeries,
    PerSession,
}

impl From<BoundaryArg> for BoundaryPolicy {
    fn from(b: BoundaryArg) -> Self {
        match b {
            BoundaryArg::WithinSeries => BoundaryPolicy::WithinSeries,
            BoundaryArg::PerSession => BoundaryPolicy::PerSession,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FillArg {
    CarryForward,
    Drop,
}

impl From<FillArg> for FillPolicy {
    fn from(f: FillArg) -> Self {
        match f {
            FillArg::CarryForward => FillPolicy::CarryForward,
            FillArg::Drop => FillPolicy::Drop,
        }
    }
}

/// Parses `A:B` into a range.
pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or("expected A:B")?;
    let a: f64 = a
        .trim()
        .parse()
        .map_err(|_| format!("bad lower bound {a:?}"))?;
    let b: f64 = b
        .trim()
        .parse()
        .map_err(|_| format!("bad upper bound {b:?}"))?;
    if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
        return Err(format!("lower bound {a} must be below upper bound {b}"));
    }
    Ok((a, b))
}

#[derive(Debug, Args)]
pub struct OutArg {
    /// Output directory.
    #[arg(long, env = "RETINT_OUT", default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Tick CSV with timestamp and price columns.
    #[arg(long)]
    pub input: PathBuf,
    /// Session calendar file; defaults to 09:30-11:30 and 13:00-15:00.
    #[arg(long)]
    pub calendar: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "carry-forward")]
    pub fill: FillArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Generator such as `iid_exceedance:p=0.1` or `long_memory_volatility:hurst=0.8`.
    #[arg(long)]
    pub generator: String,
    #[arg(long)]
    pub length: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct IntervalsArgs {
    /// bars.csv from `ingest` or series.csv from `synth`.
    #[arg(long)]
    pub input: PathBuf,
    /// Threshold in units of the return standard deviation (repeatable).
    #[arg(long = "q", required = true)]
    pub q: Vec<f64>,
    #[arg(long, value_enum, default_value = "std")]
    pub norm: NormArg,
    #[arg(long, value_enum, default_value = "drop-overnight")]
    pub gap: GapArg,
    #[arg(long, value_enum, default_value = "within-series")]
    pub boundary: BoundaryArg,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct PdfArgs {
    /// intervals.csv
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins_per_decade: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// pdf.csv
    #[arg(long)]
    pub input: PathBuf,
    /// Fit range in scaled units.
    #[arg(long, value_parser = parse_range, default_value = "0.01:20")]
    pub fit_range: (f64, f64),
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ConditionalPdfArgs {
    /// intervals.csv
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub bins_per_decade: usize,
    /// Number of conditioning classes; 2 splits at the median.
    #[arg(long, default_value_t = 2)]
    pub subsets: usize,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ConditionalMeanArgs {
    /// intervals.csv
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub k_bins: usize,
    #[arg(long, default_value_t = 20)]
    pub shuffles: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct ClustersArgs {
    /// intervals.csv
    #[arg(long)]
    pub input: PathBuf,
    #[command(flatten)]
    pub out: OutArg,
}

#[derive(Debug, Args)]
pub struct PersistenceArgs {
    /// intervals.csv
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub t_max: usize,
    /// Power-law fit range in steps.
    #[arg(long, value_parser = parse_range, default_value = "4:100")]
    pub fit_range: (f64, f64),
    #[command(flatten)]
    pub out: OutArg,
}

/// Options left unset keep the value from `--config`, or the default.
#[derive(Debug, Args)]
pub struct PipelineArgs {
    /// Run config, or a report.json whose config is re-run.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tick CSV files (repeatable).
    #[arg(long)]
    pub input: Vec<PathBuf>,
    /// Generator such as `iid_exceedance:p=0.1`; needs --length.
    #[arg(long, conflicts_with = "input")]
    pub generator: Option<String>,
    #[arg(long, requires = "generator")]
    pub length: Option<usize>,
    /// Generator seed; defaults to --seed.
    #[arg(long, requires = "generator")]
    pub generator_seed: Option<u64>,
    #[arg(long)]
    pub calendar: Option<PathBuf>,
    #[arg(long = "q")]
    pub q: Vec<f64>,
    #[arg(long, value_enum)]
    pub norm: Option<NormArg>,
    #[arg(long, value_enum)]
    pub gap: Option<GapArg>,
    #[arg(long, value_enum)]
    pub boundary: Option<BoundaryArg>,
    #[arg(long, value_enum)]
    pub fill: Option<FillArg>,
    #[arg(long)]
    pub bins_per_decade: Option<usize>,
    #[arg(long, value_parser = parse_range)]
    pub fit_range: Option<(f64, f64)>,
    #[arg(long)]
    pub k_bins: Option<usize>,
    #[arg(long)]
    pub shuffles: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long, value_parser = parse_range)]
    pub persistence_fit_range: Option<(f64, f64)>,
    /// Output directory.
    #[arg(long, env = "RETINT_OUT")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    pub workers: Option<usize>,
}
