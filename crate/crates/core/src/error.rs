use std::path::PathBuf;

use thiserror::Error;

/// Broad error classes, used by the command line front-end to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("invalid price {price} at position {index}")]
    InvalidPrice { index: usize, price: f64 },
    #[error("degenerate series: {0}")]
    DegenerateSeries(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("unreadable file {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt input: {bad} of {total} rows malformed (tolerance {tolerance})")]
    CorruptInput {
        bad: usize,
        total: usize,
        tolerance: f64,
    },
    #[error("empty after calendar filter: {discarded} ticks outside sessions")]
    EmptyAfterCalendarFilter { discarded: usize },
    #[error("invalid calendar: {0}")]
    InvalidCalendar(String),
    #[error("no intervals")]
    NoIntervals,
    #[error("double scaling: distribution is already scaled")]
    DoubleScaling,
    #[error("no overlap: no common bin is occupied by every distribution")]
    NoOverlap,
    #[error("underdetermined fit: {found} usable points, need at least {needed}")]
    UnderdeterminedFit { found: usize, needed: usize },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("degenerate: no median split (all intervals equal)")]
    NoMedianSplit,
    #[error("t_max too large: t_max {t_max} with series length {len}")]
    TMaxTooLarge { t_max: usize, len: usize },
    #[error("bad generator spec: {0}")]
    BadGeneratorSpec(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short, stable category label for machine-readable reports.
    pub fn category(&self) -> &'static str {
        match self {
            Error::InsufficientData(_) => "insufficient data",
            Error::InvalidPrice { .. } => "invalid price",
            Error::DegenerateSeries(_) => "degenerate series",
            Error::InvalidSeries(_) => "invalid series",
            Error::UnreadableFile { .. } => "unreadable file",
            Error::CorruptInput { .. } => "corrupt input",
            Error::EmptyAfterCalendarFilter { .. } => "empty after calendar filter",
            Error::InvalidCalendar(_) => "invalid calendar",
            Error::NoIntervals => "no intervals",
            Error::DoubleScaling => "double scaling",
            Error::NoOverlap => "no overlap",
            Error::UnderdeterminedFit { .. } => "underdetermined fit",
            Error::DegenerateFit(_) => "degenerate fit",
            Error::NoMedianSplit => "degenerate: no median split",
            Error::TMaxTooLarge { .. } => "t_max too large",
            Error::BadGeneratorSpec(_) => "bad generator spec",
            Error::InvalidArgument(_) => "invalid argument",
            Error::Csv(_) => "csv",
            Error::Io(_) => "io",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidCalendar(_) | Error::BadGeneratorSpec(_) | Error::InvalidArgument(_) => {
                ErrorClass::Config
            }
            Error::UnderdeterminedFit { .. }
            | Error::DegenerateFit(_)
            | Error::NoOverlap
            | Error::DoubleScaling => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
