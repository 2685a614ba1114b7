//! Volatility return interval analysis.
//!
//! The pipeline goes from minute bars to a normalized volatility series
//! ([`series`]), extracts the waiting times between threshold exceedances
//! ([`intervals`]), and studies them through log-binned densities and
//! stretched-exponential fits ([`distributions`]), conditional statistics and
//! cluster sizes ([`memory`]) and persistence probabilities ([`persistence`]).
//! [`synth`] provides seeded series with known answers for all of the above.

pub mod distributions;
pub mod error;
pub mod export;
pub mod ingest;
pub mod intervals;
pub mod memory;
pub mod persistence;
pub mod pipeline;
pub mod series;
pub mod stats;
pub mod synth;

pub use distributions::{
    collapse_quality, fit_stretched_exponential, log_binned_pdf, log_binned_pdf_values,
    scale_distribution, BinnedDistribution, StretchedExpFit,
};
pub use error::{Error, ErrorClass, Result};
pub use intervals::{
    extract_intervals, mean_interval_curve, BoundaryPolicy, IntervalSeries, Threshold,
};
pub use memory::{
    cluster_size_distribution, conditional_pdf, mean_conditional_interval, ClusterSizeDistribution,
    ClusterSizes, ConditionSplit, ConditionalMeanRow, ConditionalPdf, Sign, SplitMode,
};
pub use persistence::{fit_power_law, persistence_curve, PersistenceCurve, PowerLawFit};
pub use pipeline::{run_pipeline, RunConfig, RunReport, RunStatus, StageError};
pub use series::{
    log_returns, normalize_volatility, GapPolicy, MinuteBarSeries, NormMode, ReturnSeries,
    VolatilitySeries,
};
pub use synth::{generate, GeneratorKind, GeneratorSpec};
