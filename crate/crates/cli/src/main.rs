mod args;

use std::io::BufReader;
use std::path::Path;
use std::process::ExitCode;

use clap::Parser;
use retint::distributions::{fit_stretched_exponential, log_binned_pdf, scale_distribution};
use retint::export::{self, fmt_f64, write_atomic, SeriesKind};
use retint::ingest::{
    parse_ticks, read_bars_csv, resample_to_minutes, write_bars_csv, SessionCalendar, TickFormat,
};
use retint::intervals::{extract_intervals, Threshold};
use retint::memory::{
    cluster_size_distribution, conditional_pdf, mean_conditional_interval, Sign, SplitMode,
};
use retint::persistence::{fit_power_law, persistence_curve};
use retint::pipeline::{exit_code, run_pipeline, RunConfig, RunStatus, REPORT_FILE};
use retint::series::{log_returns, normalize_volatility, ReturnSeries, VolatilitySeries};
use retint::synth::{generate, GeneratorKind, GeneratorSpec};
use retint::{Error, Result};

use args::*;

/// A failed command: the stage it failed in and why.
struct Failure {
    stage: &'static str,
    error: Error,
}

trait At<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, Failure>;
}

impl<T> At<T> for Result<T> {
    fn at(self, stage: &'static str) -> std::result::Result<T, Failure> {
        self.map_err(|error| Failure { stage, error })
    }
}

type Outcome = std::result::Result<(), Failure>;

fn put(out: &Path, name: &str, text: Result<String>) -> Outcome {
    let path = out.join(name);
    write_atomic(&path, text.at("export")?.as_bytes()).at("export")?;
    println!("wrote {}", path.display());
    Ok(())
}

fn ingest(a: IngestArgs) -> Outcome {
    let cal = match &a.calendar {
        Some(p) => SessionCalendar::from_file(p).at("ingest")?,
        None => SessionCalendar::default(),
    };
    let ticks = parse_ticks(&a.input, &TickFormat::default()).at("ingest")?;
    let r = resample_to_minutes(&ticks.records, &cal, a.fill.into()).at("ingest")?;
    let mut buf = Vec::new();
    write_bars_csv(&r.bars, &mut buf).at("ingest")?;
    eprintln!(
        "{} rows, {} malformed, {} outside sessions, {} bars",
        ticks.total_rows,
        ticks.bad_rows,
        r.discarded,
        r.bars.len()
    );
    put(
        &a.out.out,
        "bars.csv",
        Ok(String::from_utf8(buf).expect("utf-8")),
    )
}

fn synth(a: SynthArgs) -> Outcome {
    let kind: GeneratorKind = a.generator.parse().at("config")?;
    let spec = GeneratorSpec::new(kind, a.length, a.seed);
    let values = generate(&spec).at("synth")?;
    put(&a.out.out, "series.csv", export::series_csv(&spec, &values))
}

/// Volatility from bars (if the file has a timestamp column) or from a
/// single-column series file.
fn load_volatility(a: &IntervalsArgs) -> std::result::Result<VolatilitySeries, Failure> {
    let text = export::read_text(&a.input).at("ingest")?;
    let header = text.lines().find(|l| !l.starts_with('#')).unwrap_or("");
    if header.split(',').any(|c| c.trim() == "timestamp") {
        let bars = read_bars_csv(BufReader::new(text.as_bytes())).at("ingest")?;
        let returns = log_returns(&bars, a.gap.into()).at("normalize")?;
        return normalize_volatility(&returns, a.norm.into()).at("normalize");
    }
    match export::parse_series_csv(&text).at("ingest")? {
        (SeriesKind::Returns, v) => {
            let r = ReturnSeries::from_values(v).at("normalize")?;
            normalize_volatility(&r, a.norm.into()).at("normalize")
        }
        (SeriesKind::Volatility, v) => VolatilitySeries::from_values(v).at("normalize"),
    }
}

fn intervals(a: IntervalsArgs) -> Outcome {
    let vol = load_volatility(&a)?;
    for &q in &a.q {
        let taus = extract_intervals(&vol, Threshold::new(q).at("config")?, a.boundary.into())
            .at("intervals")?;
        if let Some(w) = taus.warning() {
            eprintln!("warning: q={q}: {w}");
        }
        let name = format!("q{}/intervals.csv", fmt_f64(q));
        put(&a.out.out, &name, export::intervals_csv(&taus))?;
        match taus.mean_tau() {
            Some(m) => println!(
                "q={} intervals={} mean_tau={}",
                fmt_f64(q),
                taus.len(),
                fmt_f64(m)
            ),
            None => println!("q={} intervals=0", fmt_f64(q)),
        }
    }
    Ok(())
}

fn pdf(a: PdfArgs) -> Outcome {
    let taus = export::read_intervals_csv(&a.input).at("ingest")?;
    let raw = log_binned_pdf(&taus, a.bins_per_decade).at("pdf")?;
    let mean = taus.mean_tau().ok_or(Error::NoIntervals).at("pdf")?;
    let scaled = scale_distribution(&raw, mean).at("pdf")?;
    put(&a.out.out, "pdf.csv", export::distribution_csv(&scaled))
}

fn fit(a: FitArgs) -> Outcome {
    let dist = export::read_distribution_csv(&a.input).at("ingest")?;
    let f = fit_stretched_exponential(&dist, a.fit_range).at("fit")?;
    println!(
        "gamma={} alpha={} c={} residual={} n_bins={}",
        fmt_f64(f.gamma),
        fmt_f64(f.alpha),
        fmt_f64(f.c),
        fmt_f64(f.residual),
        f.n_bins
    );
    put(&a.out.out, "fit.json", export::json_string(&f))
}

fn conditional_pdf_cmd(a: ConditionalPdfArgs) -> Outcome {
    let taus = export::read_intervals_csv(&a.input).at("ingest")?;
    let mode = match a.subsets {
        2 => SplitMode::Halves,
        k => SplitMode::QuantileBins(k),
    };
    let pdf = conditional_pdf(&taus, mode, a.bins_per_decade).at("conditional_pdf")?;
    for w in &pdf.warnings {
        eprintln!("warning: {w}");
    }
    put(
        &a.out.out,
        "conditional_pdf.csv",
        export::conditional_pdf_csv(&pdf),
    )
}

fn conditional_mean(a: ConditionalMeanArgs) -> Outcome {
    let taus = export::read_intervals_csv(&a.input).at("ingest")?;
    let rows =
        mean_conditional_interval(&taus, a.k_bins, a.shuffles, a.seed).at("conditional_mean")?;
    put(
        &a.out.out,
        "conditional_mean.csv",
        export::conditional_mean_csv(&rows),
    )
}

fn clusters(a: ClustersArgs) -> Outcome {
    let taus = export::read_intervals_csv(&a.input).at("ingest")?;
    let c = cluster_size_distribution(&taus).at("clusters")?;
    println!(
        "median={} plus_clusters={} minus_clusters={} max_plus={} max_minus={}",
        fmt_f64(c.median),
        c.plus.total_clusters(),
        c.minus.total_clusters(),
        c.plus.max_n(),
        c.minus.max_n()
    );
    put(&a.out.out, "clusters.csv", export::clusters_csv(&c))
}

fn persistence(a: PersistenceArgs) -> Outcome {
    let taus = export::read_intervals_csv(&a.input).at("ingest")?;
    let curve = persistence_curve(&taus.as_f64(), a.t_max).at("persistence")?;
    put(
        &a.out.out,
        "persistence.csv",
        export::persistence_csv(&curve),
    )?;
    let fits = [Sign::Plus, Sign::Minus]
        .into_iter()
        .map(|s| fit_power_law(&curve, s, a.fit_range))
        .collect::<Result<Vec<_>>>()
        .at("persistence")?;
    for f in &fits {
        println!(
            "beta_{}={} r_squared={}",
            f.sign.as_str(),
            fmt_f64(f.beta),
            fmt_f64(f.r_squared)
        );
    }
    put(
        &a.out.out,
        "persistence_fit.json",
        export::json_string(&fits),
    )
}

fn pipeline_config(a: PipelineArgs) -> Result<RunConfig> {
    let mut cfg = match &a.config {
        Some(p) => RunConfig::from_json(&export::read_text(p)?)?,
        None => RunConfig::default(),
    };
    if !a.input.is_empty() {
        cfg.inputs = a.input;
        cfg.generator = None;
    }
    if let Some(g) = a.generator {
        let kind: GeneratorKind = g.parse()?;
        let length = a
            .length
            .or(cfg.generator.map(|s| s.length))
            .ok_or_else(|| Error::InvalidArgument("--generator needs --length".into()))?;
        let seed = a.generator_seed.or(a.seed).or(cfg.seed).unwrap_or(0);
        cfg.generator = Some(GeneratorSpec::new(kind, length, seed));
        cfg.inputs.clear();
    }
    if !a.q.is_empty() {
        cfg.thresholds = a.q;
    }
    macro_rules! set {
        ($($field:ident = $value:expr),* $(,)?) => {
            $(if let Some(v) = $value { cfg.$field = v.into(); })*
        };
    }
    set!(
        norm = a.norm,
        gap = a.gap,
        boundary = a.boundary,
        fill = a.fill,
        bins_per_decade = a.bins_per_decade,
        fit_range = a.fit_range,
        k_bins = a.k_bins,
        shuffles = a.shuffles,
        persistence_t_max = a.t_max,
        persistence_fit_range = a.persistence_fit_range,
        out = a.out,
        workers = a.workers,
    );
    if a.calendar.is_some() {
        cfg.calendar = a.calendar;
    }
    if a.seed.is_some() {
        cfg.seed = a.seed;
    }
    Ok(cfg)
}

fn pipeline(a: PipelineArgs) -> ExitCode {
    let cfg = match pipeline_config(a) {
        Ok(c) => c,
        Err(e) => {
            return fail(&Failure {
                stage: "config",
                error: e,
            })
        }
    };
    let report = run_pipeline(&cfg);
    let report_path = cfg.out.join(REPORT_FILE);
    match (&report.status, &report.error) {
        (RunStatus::Ok, _) => {
            for s in &report.stocks {
                for t in &s.thresholds {
                    println!(
                        "{} q={} intervals={} mean_tau={} gamma={} alpha={}",
                        s.name,
                        fmt_f64(t.q),
                        t.n_intervals,
                        fmt_f64(t.mean_tau),
                        fmt_f64(t.pdf_fit.gamma),
                        fmt_f64(t.pdf_fit.alpha)
                    );
                }
            }
            println!("report: {}", report_path.display());
        }
        (_, Some(e)) => {
            let place = match (&e.stock, e.q) {
                (Some(s), Some(q)) => format!(" ({s}, q={})", fmt_f64(q)),
                (Some(s), None) => format!(" ({s})"),
                _ => String::new(),
            };
            eprintln!(
                "error in stage {}{place}: {} ({})",
                e.stage, e.message, e.category
            );
            eprintln!("report: {}", report_path.display());
        }
        (RunStatus::Failed, None) => unreachable!("failed runs carry an error"),
    }
    ExitCode::from(report.exit_code() as u8)
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!(
        "error in stage {}: {} ({})",
        f.stage,
        f.error,
        f.error.category()
    );
    ExitCode::from(exit_code(f.error.class()) as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::Synth(a) => synth(a),
        Command::Intervals(a) => intervals(a),
        Command::Pdf(a) => pdf(a),
        Command::Fit(a) => fit(a),
        Command::ConditionalPdf(a) => conditional_pdf_cmd(a),
        Command::ConditionalMean(a) => conditional_mean(a),
        Command::Clusters(a) => clusters(a),
        Command::Persistence(a) => persistence(a),
        Command::Pipeline(a) => return pipeline(*a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => fail(&f),
    }
}
