//! End-to-end runs: ingest or generate, normalize, then every statistic for
//! each `(stock, q)` pair, with one artifact per statistic and a JSON report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    collapse_quality, fit_stretched_exponential, log_binned_pdf, scale_distribution,
    BinnedDistribution, StretchedExpFit, DEFAULT_BINS_PER_DECADE, DEFAULT_FIT_RANGE,
};
use crate::error::{Error, ErrorClass, Result};
use crate::export::{self, artifact_path, write_atomic};
use crate::ingest::{parse_ticks, resample_to_minutes, FillPolicy, SessionCalendar, TickFormat};
use crate::intervals::{extract_intervals, mean_interval_curve, BoundaryPolicy, Threshold};
use crate::memory::{
    cluster_size_distribution, conditional_pdf, mean_conditional_interval, Sign, SplitMode,
    DEFAULT_K_BINS, DEFAULT_SHUFFLES,
};
use crate::persistence::{self, fit_power_law, persistence_curve, PowerLawFit};
use crate::series::{
    log_returns, normalize_volatility, GapPolicy, NormMode, Normalization, ReturnSeries,
    VolatilitySeries,
};
use crate::synth::{generate, GeneratorSpec};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Tick CSV files, one stock each.
    pub inputs: Vec<PathBuf>,
    /// Synthetic series used instead of `inputs`.
    pub generator: Option<GeneratorSpec>,
    pub calendar: Option<PathBuf>,
    pub tick_format: TickFormat,
    pub fill: FillPolicy,
    pub norm: NormMode,
    pub gap: GapPolicy,
    pub boundary: BoundaryPolicy,
    pub thresholds: Vec<f64>,
    pub bins_per_decade: usize,
    pub fit_range: (f64, f64),
    pub k_bins: usize,
    pub shuffles: usize,
    pub seed: Option<u64>,
    pub persistence_t_max: usize,
    pub persistence_fit_range: (f64, f64),
    pub out: PathBuf,
    /// Worker threads for the per-(stock, q) analyses; 0 uses every core.
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            generator: None,
            calendar: None,
            tick_format: TickFormat::default(),
            fill: FillPolicy::default(),
            norm: NormMode::default(),
            gap: GapPolicy::default(),
            boundary: BoundaryPolicy::default(),
            thresholds: Vec::new(),
            bins_per_decade: DEFAULT_BINS_PER_DECADE,
            fit_range: DEFAULT_FIT_RANGE,
            k_bins: DEFAULT_K_BINS,
            shuffles: DEFAULT_SHUFFLES,
            seed: None,
            persistence_t_max: persistence::DEFAULT_T_MAX,
            persistence_fit_range: persistence::DEFAULT_FIT_RANGE,
            out: PathBuf::from("retint-out"),
            workers: 0,
        }
    }
}

fn valid_range((a, b): (f64, f64)) -> bool {
    a.is_finite() && b.is_finite() && a >= 0.0 && b > a
}

impl RunConfig {
    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        match (self.inputs.is_empty(), &self.generator) {
            (true, None) => return bad("either input files or a generator is required"),
            (false, Some(_)) => return bad("input files and a generator are mutually exclusive"),
            (true, Some(g)) => g.validate()?,
            (false, None) => {}
        }
        if self.thresholds.is_empty() {
            return bad("at least one threshold is required");
        }
        for &q in &self.thresholds {
            Threshold::new(q)?;
        }
        if self.bins_per_decade == 0 {
            return bad("bins_per_decade must be at least 1");
        }
        if self.k_bins < 2 {
            return bad("k_bins must be at least 2");
        }
        if !valid_range(self.fit_range) {
            return bad("fit_range must satisfy 0 <= a < b");
        }
        if !valid_range(self.persistence_fit_range) || self.persistence_fit_range.0 <= 0.0 {
            return bad("persistence_fit_range must satisfy 0 < a < b");
        }
        if self.persistence_t_max == 0 {
            return bad("persistence_t_max must be at least 1");
        }
        if self.shuffles > 0 && self.seed.is_none() {
            return bad("a seed is required when shuffles are enabled");
        }
        Ok(())
    }

    /// Reads a config from JSON, accepting either a bare config or a run
    /// report whose `config` field is echoed back.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config is not valid JSON: {e}")))?;
        let value = match value.get("config") {
            Some(c) => c.clone(),
            None => value,
        };
        serde_json::from_value(value)
            .map_err(|e| Error::InvalidArgument(format!("bad config: {e}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageError {
    pub stage: String,
    pub category: String,
    pub message: String,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stock: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
}

pub fn exit_code(class: ErrorClass) -> i32 {
    match class {
        ErrorClass::Config => 1,
        ErrorClass::Data => 2,
        ErrorClass::Numeric => 3,
    }
}

impl StageError {
    fn new(stage: &str, err: &Error) -> Self {
        Self {
            stage: stage.into(),
            category: err.category().into(),
            message: err.to_string(),
            exit_code: exit_code(err.class()),
            stock: None,
            q: None,
        }
    }
}

/// Tags errors with the stage that produced them.
trait AtStage<T> {
    fn at(self, stage: &str) -> std::result::Result<T, StageError>;
}

impl<T> AtStage<T> for Result<T> {
    fn at(self, stage: &str) -> std::result::Result<T, StageError> {
        self.map_err(|e| StageError::new(stage, &e))
    }
}

type Staged<T> = std::result::Result<T, StageError>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RowCounts {
    pub tick_rows: usize,
    pub bad_rows: usize,
    pub ticks_outside_sessions: usize,
    pub bars: usize,
    pub returns: usize,
    pub omitted_returns: usize,
    pub volatility: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub q: f64,
    pub n_exceedances: usize,
    pub n_intervals: usize,
    pub mean_tau: f64,
    pub median_tau: f64,
    pub pdf_fit: StretchedExpFit,
    pub persistence_t_max: usize,
    pub persistence_fits: Vec<PowerLawFit>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockReport {
    pub name: String,
    pub source: String,
    pub rows: RowCounts,
    pub normalization: Option<Normalization>,
    pub collapse_quality: Option<f64>,
    pub thresholds: Vec<ThresholdReport>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: RunConfig,
    pub status: RunStatus,
    pub error: Option<StageError>,
    pub stocks: Vec<StockReport>,
    /// Written artifacts relative to the output directory, sorted.
    pub artifacts: Vec<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, |e| e.exit_code)
    }
}

struct Stock {
    name: String,
    source: String,
    vol: VolatilitySeries,
    rows: RowCounts,
    warnings: Vec<String>,
}

struct Writer<'a> {
    out: &'a Path,
}

impl Writer<'_> {
    fn put(&self, path: PathBuf, text: Result<String>) -> Staged<String> {
        let text = text.at("export")?;
        write_atomic(&path, text.as_bytes()).at("export")?;
        Ok(path
            .strip_prefix(self.out)
            .unwrap_or(&path)
            .to_string_lossy()
            .replace('\\', "/"))
    }
}

/// Output directory name per input file; repeated stems get their 1-based position appended.
pub fn stock_names(inputs: &[PathBuf]) -> Vec<String> {
    let stems: Vec<String> = inputs
        .iter()
        .map(|p| {
            p.file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "input".into())
        })
        .collect();
    stems
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if stems.iter().filter(|t| *t == s).count() > 1 {
                format!("{s}-{}", i + 1)
            } else {
                s.clone()
            }
        })
        .collect()
}

fn load_ticks(
    cfg: &RunConfig,
    cal: &SessionCalendar,
    path: &Path,
    name: String,
    w: &Writer,
) -> Staged<(Stock, String)> {
    let parsed = parse_ticks(path, &cfg.tick_format).at("ingest")?;
    let resampled = resample_to_minutes(&parsed.records, cal, cfg.fill).at("ingest")?;
    let bars = resampled.bars;
    let mut csv = Vec::new();
    crate::ingest::write_bars_csv(&bars, &mut csv).at("ingest")?;
    let artifact = w.put(
        artifact_path(w.out, &name, None, "bars.csv"),
        Ok(String::from_utf8(csv).expect("csv output is utf-8")),
    )?;
    let returns = log_returns(&bars, cfg.gap).at("normalize")?;
    let vol = normalize_volatility(&returns, cfg.norm).at("normalize")?;
    let mut warnings = Vec::new();
    if parsed.bad_rows > 0 {
        warnings.push(format!(
            "{} malformed row(s) skipped, first at line(s) {:?}",
            parsed.bad_rows, parsed.bad_row_lines
        ));
    }
    let rows = RowCounts {
        tick_rows: parsed.total_rows,
        bad_rows: parsed.bad_rows,
        ticks_outside_sessions: resampled.discarded,
        bars: bars.len(),
        returns: returns.len(),
        omitted_returns: returns.omitted(),
        volatility: vol.len(),
    };
    let stock = Stock {
        name,
        source: path.display().to_string(),
        vol,
        rows,
        warnings,
    };
    Ok((stock, artifact))
}

fn load_generated(cfg: &RunConfig, spec: &GeneratorSpec, w: &Writer) -> Staged<(Stock, String)> {
    let name = spec.kind.name().to_string();
    let values = generate(spec).at("ingest")?;
    let artifact = w.put(
        artifact_path(w.out, &name, None, "series.csv"),
        export::series_csv(spec, &values),
    )?;
    let n = values.len();
    let (vol, returns) = if spec.kind.is_signed() {
        let r = ReturnSeries::from_values(values).at("normalize")?;
        (normalize_volatility(&r, cfg.norm).at("normalize")?, n)
    } else {
        (VolatilitySeries::from_values(values).at("normalize")?, 0)
    };
    let rows = RowCounts {
        returns,
        volatility: vol.len(),
        ..RowCounts::default()
    };
    let stock = Stock {
        name,
        source: spec.to_string(),
        vol,
        rows,
        warnings: Vec::new(),
    };
    Ok((stock, artifact))
}

struct Analysis {
    report: ThresholdReport,
    scaled: BinnedDistribution,
    artifacts: Vec<String>,
}

fn analyze(cfg: &RunConfig, stock: &Stock, q: f64, w: &Writer) -> Staged<Analysis> {
    let path = |name: &str| artifact_path(w.out, &stock.name, Some(q), name);
    let mut artifacts = Vec::new();
    let mut warnings = Vec::new();

    let taus = extract_intervals(&stock.vol, Threshold::new(q).at("intervals")?, cfg.boundary)
        .at("intervals")?;
    warnings.extend(taus.warning().map(str::to_string));
    artifacts.push(w.put(path("intervals.csv"), export::intervals_csv(&taus))?);
    let mean = taus.mean_tau().ok_or(Error::NoIntervals).at("intervals")?;

    let raw = log_binned_pdf(&taus, cfg.bins_per_decade).at("pdf")?;
    let scaled = scale_distribution(&raw, mean).at("pdf")?;
    artifacts.push(w.put(path("pdf.csv"), export::distribution_csv(&scaled))?);

    let pdf_fit = fit_stretched_exponential(&scaled, cfg.fit_range).at("fit")?;
    artifacts.push(w.put(path("fit.json"), export::json_string(&pdf_fit))?);

    let cpdf =
        conditional_pdf(&taus, SplitMode::Halves, cfg.bins_per_decade).at("conditional_pdf")?;
    warnings.extend(cpdf.warnings.iter().cloned());
    artifacts.push(w.put(
        path("conditional_pdf.csv"),
        export::conditional_pdf_csv(&cpdf),
    )?);

    let rows = mean_conditional_interval(&taus, cfg.k_bins, cfg.shuffles, cfg.seed.unwrap_or(0))
        .at("conditional_mean")?;
    artifacts.push(w.put(
        path("conditional_mean.csv"),
        export::conditional_mean_csv(&rows),
    )?);

    let clusters = cluster_size_distribution(&taus).at("clusters")?;
    artifacts.push(w.put(path("clusters.csv"), export::clusters_csv(&clusters))?);

    let series = taus.as_f64();
    let t_max = cfg
        .persistence_t_max
        .min(series.len().saturating_sub(1))
        .max(1);
    if t_max < cfg.persistence_t_max {
        warnings.push(format!(
            "persistence t_max reduced from {} to {t_max} for {} intervals",
            cfg.persistence_t_max,
            series.len()
        ));
    }
    let curve = persistence_curve(&series, t_max).at("persistence")?;
    artifacts.push(w.put(path("persistence.csv"), export::persistence_csv(&curve))?);
    let persistence_fits = [Sign::Plus, Sign::Minus]
        .into_iter()
        .map(|s| fit_power_law(&curve, s, cfg.persistence_fit_range))
        .collect::<Result<Vec<_>>>()
        .at("persistence")?;
    artifacts.push(w.put(
        path("persistence_fit.json"),
        export::json_string(&persistence_fits),
    )?);

    Ok(Analysis {
        report: ThresholdReport {
            q,
            n_exceedances: taus.n_exceedances(),
            n_intervals: taus.len(),
            mean_tau: mean,
            median_tau: clusters.median,
            pdf_fit,
            persistence_t_max: t_max,
            persistence_fits,
            warnings,
        },
        scaled,
        artifacts,
    })
}

struct Outcome {
    stocks: Vec<StockReport>,
    artifacts: Vec<String>,
    error: Option<StageError>,
}

fn execute(cfg: &RunConfig, timings: &mut BTreeMap<String, f64>) -> Outcome {
    let mut outcome = Outcome {
        stocks: Vec::new(),
        artifacts: Vec::new(),
        error: None,
    };
    let fail = |mut o: Outcome, e: StageError| {
        o.error = Some(e);
        o
    };
    if let Err(e) = cfg.validate() {
        return fail(outcome, StageError::new("config", &e));
    }
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let err = Error::InvalidArgument(format!("worker pool: {e}"));
            return fail(outcome, StageError::new("config", &err));
        }
    };
    let w = Writer { out: &cfg.out };

    let t = Instant::now();
    let loaded: Vec<Staged<(Stock, String)>> = match &cfg.generator {
        Some(spec) => vec![load_generated(cfg, spec, &w)],
        None => {
            let cal = match &cfg.calendar {
                Some(p) => match SessionCalendar::from_file(p) {
                    Ok(c) => c,
                    Err(e) => return fail(outcome, StageError::new("ingest", &e)),
                },
                None => SessionCalendar::default(),
            };
            let names = stock_names(&cfg.inputs);
            pool.install(|| {
                cfg.inputs
                    .par_iter()
                    .zip(names)
                    .map(|(p, n)| {
                        load_ticks(cfg, &cal, p, n.clone(), &w).map_err(|mut e| {
                            e.stock = Some(n);
                            e
                        })
                    })
                    .collect()
            })
        }
    };
    timings.insert("ingest".into(), t.elapsed().as_secs_f64());
    let mut stocks = Vec::new();
    for r in loaded {
        match r {
            Ok((s, a)) => {
                outcome.artifacts.push(a);
                stocks.push(s);
            }
            Err(e) => return fail(outcome, e),
        }
    }

    let t = Instant::now();
    let tasks: Vec<(usize, f64)> = (0..stocks.len())
        .flat_map(|s| cfg.thresholds.iter().map(move |&q| (s, q)))
        .collect();
    let results: Vec<Staged<Analysis>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(s, q)| {
                analyze(cfg, &stocks[s], q, &w).map_err(|mut e| {
                    e.stock = Some(stocks[s].name.clone());
                    e.q = Some(q);
                    e
                })
            })
            .collect()
    });
    timings.insert("analysis".into(), t.elapsed().as_secs_f64());

    let t = Instant::now();
    let mut results = results.into_iter();
    for stock in stocks {
        let mut analyses = Vec::new();
        for _ in &cfg.thresholds {
            match results.next().expect("one result per task") {
                Ok(a) => analyses.push(a),
                Err(e) => return fail(outcome, e),
            }
        }
        let qs: Vec<Threshold> = cfg
            .thresholds
            .iter()
            .map(|&q| Threshold::new(q).expect("validated"))
            .collect();
        let curve = match mean_interval_curve(&stock.vol, &qs, cfg.boundary) {
            Ok(c) => c,
            Err(e) => return fail(outcome, StageError::new("intervals", &e)),
        };
        match w.put(
            artifact_path(w.out, &stock.name, None, "mean_interval.csv"),
            export::mean_interval_csv(&curve),
        ) {
            Ok(a) => outcome.artifacts.push(a),
            Err(e) => return fail(outcome, e),
        }
        let collapse = if analyses.len() >= 2 {
            let dists: Vec<BinnedDistribution> =
                analyses.iter().map(|a| a.scaled.clone()).collect();
            match collapse_quality(&dists) {
                Ok(c) => Some(c),
                Err(e) => {
                    let mut err = StageError::new("collapse", &e);
                    err.stock = Some(stock.name.clone());
                    return fail(outcome, err);
                }
            }
        } else {
            None
        };
        let mut thresholds = Vec::new();
        for a in analyses {
            outcome.artifacts.extend(a.artifacts);
            thresholds.push(a.report);
        }
        outcome.stocks.push(StockReport {
            name: stock.name,
            source: stock.source,
            rows: stock.rows,
            normalization: stock.vol.normalization().cloned(),
            collapse_quality: collapse,
            thresholds,
            warnings: stock.warnings,
        });
    }
    timings.insert("summary".into(), t.elapsed().as_secs_f64());
    outcome
}

/// Runs the whole analysis and writes `report.json` into the output
/// directory. Failures are described in the returned report rather than
/// returned as errors; the report file itself is best effort.
pub fn run_pipeline(config: &RunConfig) -> RunReport {
    let start = Instant::now();
    let mut timings = BTreeMap::new();
    let mut outcome = execute(config, &mut timings);
    outcome.artifacts.sort();
    timings.insert("total".into(), start.elapsed().as_secs_f64());
    let report = RunReport {
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        status: if outcome.error.is_some() {
            RunStatus::Failed
        } else {
            RunStatus::Ok
        },
        error: outcome.error,
        stocks: outcome.stocks,
        artifacts: outcome.artifacts,
        timings,
    };
    if let Ok(text) = export::json_string(&report) {
        let _ = write_atomic(&config.out.join(REPORT_FILE), text.as_bytes());
    }
    report
}
