//! CSV and JSON artifacts.
//!
//! Every writer returns the file contents so callers decide where they go;
//! [`write_atomic`] puts them in place without exposing partial files. Lines
//! starting with `#` carry metadata and are skipped by the readers.

use std::fs;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;

use crate::distributions::{unscale_distribution, BinnedDistribution};
use crate::error::{Error, Result};
use crate::intervals::{IntervalSeries, Threshold};
use crate::memory::{ClusterSizes, ConditionalMeanRow, ConditionalPdf};
use crate::persistence::PersistenceCurve;
use crate::synth::GeneratorSpec;

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.16e}", x);
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..17).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let (mantissa, e) = sci.split_at(sci.find('e').unwrap());
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}{e}")
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn csv_string(comments: &[String], header: &[&str], rows: Vec<Vec<String>>) -> Result<String> {
    let mut buf = Vec::new();
    for c in comments {
        writeln!(buf, "# {c}")?;
    }
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
    }
    Ok(String::from_utf8(buf).expect("csv output is utf-8"))
}

/// Pretty JSON with a trailing newline.
pub fn json_string<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidArgument(format!("json encoding: {e}")))?;
    s.push('\n');
    Ok(s)
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

/// Writes `contents` to a temporary file next to `path` and renames it over
/// `path`, creating parent directories as needed.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp = dir.join(format!(
        ".{}.{}.{}.tmp",
        name.to_string_lossy(),
        std::process::id(),
        TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    let result = fs::write(&tmp, contents).and_then(|_| fs::rename(&tmp, path));
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })
}

/// `key=value` pairs from the leading `#` lines of a file.
fn read_meta(text: &str) -> Vec<(String, String)> {
    text.lines()
        .map_while(|l| l.strip_prefix('#'))
        .flat_map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter_map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
        })
        .collect()
}

fn meta_f64(meta: &[(String, String)], key: &str) -> Option<f64> {
    meta.iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.parse().ok())
}

fn read_table(text: &str) -> Result<(Vec<String>, Vec<csv::StringRecord>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = rdr.headers()?.iter().map(str::to_string).collect();
    let rows = rdr.records().collect::<std::result::Result<_, _>>()?;
    Ok((header, rows))
}

fn column(header: &[String], name: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::InvalidSeries(format!("missing column {name:?}")))
}

fn field<T: std::str::FromStr>(row: &csv::StringRecord, col: usize, line: usize) -> Result<T> {
    row.get(col).and_then(|s| s.parse().ok()).ok_or_else(|| {
        Error::InvalidSeries(format!("malformed value in row {line}, column {}", col + 1))
    })
}

/// Reads a whole file, mapping open failures to an unreadable-file error.
pub fn read_text(path: &Path) -> Result<String> {
    let mut text = String::new();
    open(path)?.read_to_string(&mut text)?;
    Ok(text)
}

/// Generator output: one value per row under a `return` or `volatility`
/// header, preceded by the full spec.
pub fn series_csv(spec: &GeneratorSpec, values: &[f64]) -> Result<String> {
    let col = if spec.kind.is_signed() {
        "return"
    } else {
        "volatility"
    };
    csv_string(
        &[format!(
            "generator={} length={} seed={}",
            spec.kind, spec.length, spec.seed
        )],
        &[col],
        values.iter().map(|v| vec![fmt_f64(*v)]).collect(),
    )
}

/// Kind of a single-column series file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Returns,
    Volatility,
}

pub fn read_series_csv(path: &Path) -> Result<(SeriesKind, Vec<f64>)> {
    parse_series_csv(&read_text(path)?)
}

pub fn parse_series_csv(text: &str) -> Result<(SeriesKind, Vec<f64>)> {
    let (header, rows) = read_table(text)?;
    let (kind, col) = match column(&header, "return") {
        Ok(c) => (SeriesKind::Returns, c),
        Err(_) => (SeriesKind::Volatility, column(&header, "volatility")?),
    };
    let values = rows
        .iter()
        .enumerate()
        .map(|(i, r)| field(r, col, i + 1))
        .collect::<Result<_>>()?;
    Ok((kind, values))
}

pub fn intervals_csv(taus: &IntervalSeries) -> Result<String> {
    csv_string(
        &[format!(
            "q={} n_exceedances={}",
            fmt_f64(taus.q()),
            taus.n_exceedances()
        )],
        &["tau"],
        taus.taus().iter().map(|t| vec![t.to_string()]).collect(),
    )
}

pub fn read_intervals_csv(path: &Path) -> Result<IntervalSeries> {
    parse_intervals_csv(&read_text(path)?)
}

pub fn parse_intervals_csv(text: &str) -> Result<IntervalSeries> {
    let q = meta_f64(&read_meta(text), "q").unwrap_or(1.0);
    let (header, rows) = read_table(text)?;
    let col = column(&header, "tau")?;
    let taus = rows
        .iter()
        .enumerate()
        .map(|(i, r)| field(r, col, i + 1))
        .collect::<Result<_>>()?;
    IntervalSeries::from_taus(taus, q)
}

/// Binned density with both raw and scaled axes. Scaled columns stay empty
/// for an unscaled distribution.
pub fn distribution_csv(dist: &BinnedDistribution) -> Result<String> {
    let raw = match dist.scale() {
        Some(_) => unscale_distribution(dist)?,
        None => dist.clone(),
    };
    let comments = dist
        .scale()
        .map(|s| vec![format!("scale={}", fmt_f64(s))])
        .unwrap_or_default();
    let rows = (0..dist.len())
        .map(|i| {
            let scaled = dist.scale().is_some();
            vec![
                fmt_f64(raw.edges()[i]),
                fmt_f64(raw.edges()[i + 1]),
                fmt_f64(dist.counts()[i]),
                fmt_f64(raw.densities()[i]),
                if scaled {
                    fmt_f64(dist.centers()[i])
                } else {
                    String::new()
                },
                if scaled {
                    fmt_f64(dist.densities()[i])
                } else {
                    String::new()
                },
            ]
        })
        .collect();
    csv_string(
        &comments,
        &[
            "bin_left",
            "bin_right",
            "count",
            "density",
            "scaled_x",
            "scaled_density",
        ],
        rows,
    )
}

pub fn read_distribution_csv(path: &Path) -> Result<BinnedDistribution> {
    parse_distribution_csv(&read_text(path)?)
}

/// Rebuilds the scaled distribution written by [`distribution_csv`]; centers,
/// counts and densities are exact.
pub fn parse_distribution_csv(text: &str) -> Result<BinnedDistribution> {
    let scale = meta_f64(&read_meta(text), "scale");
    let (header, rows) = read_table(text)?;
    let cols: Vec<usize> = [
        "bin_left",
        "bin_right",
        "count",
        "density",
        "scaled_x",
        "scaled_density",
    ]
    .iter()
    .map(|c| column(&header, c))
    .collect::<Result<_>>()?;
    let mut edges = Vec::with_capacity(rows.len() + 1);
    let (mut centers, mut counts, mut densities) = (Vec::new(), Vec::new(), Vec::new());
    for (i, r) in rows.iter().enumerate() {
        let line = i + 1;
        let (left, right): (f64, f64) = (field(r, cols[0], line)?, field(r, cols[1], line)?);
        let s = scale.unwrap_or(1.0);
        if i == 0 {
            edges.push(left / s);
        }
        edges.push(right / s);
        counts.push(field(r, cols[2], line)?);
        match scale {
            Some(_) => {
                centers.push(field(r, cols[4], line)?);
                densities.push(field(r, cols[5], line)?);
            }
            None => {
                centers.push(0.5 * (left + right));
                densities.push(field(r, cols[3], line)?);
            }
        }
    }
    BinnedDistribution::from_parts(edges, centers, counts, densities, scale)
}

pub fn conditional_pdf_csv(pdf: &ConditionalPdf) -> Result<String> {
    let mut rows = Vec::new();
    for (label, d) in &pdf.subsets {
        for i in 0..d.len() {
            rows.push(vec![
                label.clone(),
                fmt_f64(d.centers()[i]),
                fmt_f64(d.densities()[i]),
                fmt_f64(d.counts()[i]),
            ]);
        }
    }
    csv_string(
        &[],
        &["subset", "scaled_x", "scaled_density", "count"],
        rows,
    )
}

pub fn conditional_mean_csv(rows: &[ConditionalMeanRow]) -> Result<String> {
    csv_string(
        &[],
        &[
            "bin_center_scaled",
            "mean_scaled",
            "shuffle_mean",
            "shuffle_std",
            "n",
        ],
        rows.iter()
            .map(|r| {
                vec![
                    fmt_f64(r.bin_center_scaled),
                    fmt_opt(r.mean_scaled),
                    fmt_opt(r.shuffle_mean),
                    fmt_opt(r.shuffle_std),
                    r.n.to_string(),
                ]
            })
            .collect(),
    )
}

pub fn clusters_csv(c: &ClusterSizes) -> Result<String> {
    let mut rows = Vec::new();
    for d in [&c.plus, &c.minus] {
        for (n, cum, count) in d.table() {
            rows.push(vec![
                d.sign.as_str().to_string(),
                n.to_string(),
                fmt_f64(cum),
                count.to_string(),
            ]);
        }
    }
    csv_string(
        &[format!("median={} ties=minus", fmt_f64(c.median))],
        &["sign", "n", "cumulative", "cluster_count"],
        rows,
    )
}

pub fn persistence_csv(curve: &PersistenceCurve) -> Result<String> {
    csv_string(
        &[],
        &["t", "p_plus", "p_minus", "n_starts"],
        (0..curve.len())
            .map(|i| {
                vec![
                    curve.t_values[i].to_string(),
                    fmt_f64(curve.p_plus[i]),
                    fmt_f64(curve.p_minus[i]),
                    curve.n_starts[i].to_string(),
                ]
            })
            .collect(),
    )
}

pub fn read_persistence_csv(path: &Path) -> Result<PersistenceCurve> {
    let text = read_text(path)?;
    let (header, rows) = read_table(&text)?;
    let cols: Vec<usize> = ["t", "p_plus", "p_minus", "n_starts"]
        .iter()
        .map(|c| column(&header, c))
        .collect::<Result<_>>()?;
    let mut t = Vec::new();
    let (mut p, mut m, mut n) = (Vec::new(), Vec::new(), Vec::new());
    for (i, r) in rows.iter().enumerate() {
        t.push(field(r, cols[0], i + 1)?);
        p.push(field(r, cols[1], i + 1)?);
        m.push(field(r, cols[2], i + 1)?);
        n.push(field(r, cols[3], i + 1)?);
    }
    PersistenceCurve::from_parts(t, p, m, n)
}

/// Mean interval per threshold; `mean_tau` is empty when fewer than two
/// exceedances occur.
pub fn mean_interval_csv(curve: &[(Threshold, Option<f64>)]) -> Result<String> {
    csv_string(
        &[],
        &["q", "mean_tau"],
        curve
            .iter()
            .map(|(q, m)| vec![fmt_f64(q.value()), fmt_opt(*m)])
            .collect(),
    )
}

/// Path of the artifact `name` for one stock and threshold.
pub fn artifact_path(out: &Path, stock: &str, q: Option<f64>, name: &str) -> PathBuf {
    let mut p = out.join(stock);
    if let Some(q) = q {
        p.push(format!("q{}", fmt_f64(q)));
    }
    p.join(name)
}
