//! Tick parsing, the exchange session calendar and 1-minute resampling.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::MinuteBarSeries;

/// Daily trading sessions, as `[start, end)` minute ranges in exchange-local time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionCalendar {
    sessions: Vec<(NaiveTime, NaiveTime)>,
    /// Windows whose ticks are always discarded (call auction, cool period).
    excluded: Vec<(NaiveTime, NaiveTime)>,
}

fn hm(h: u32, m: u32) -> NaiveTime {
    NaiveTime::from_hms_opt(h, m, 0).expect("valid time literal")
}

impl Default for SessionCalendar {
    /// Continuous auction on the Shanghai and Shenzhen exchanges.
    fn default() -> Self {
        Self {
            sessions: vec![(hm(9, 30), hm(11, 30)), (hm(13, 0), hm(15, 0))],
            excluded: vec![(hm(9, 15), hm(9, 30))],
        }
    }
}

impl SessionCalendar {
    pub fn new(
        sessions: Vec<(NaiveTime, NaiveTime)>,
        excluded: Vec<(NaiveTime, NaiveTime)>,
    ) -> Result<Self> {
        if sessions.is_empty() {
            return Err(Error::InvalidCalendar("no sessions declared".into()));
        }
        for &(s, e) in sessions.iter().chain(&excluded) {
            if s >= e {
                return Err(Error::InvalidCalendar(format!(
                    "window {}-{} has no positive duration",
                    s.format("%H:%M"),
                    e.format("%H:%M")
                )));
            }
            if s.second() != 0 || e.second() != 0 || s.nanosecond() != 0 || e.nanosecond() != 0 {
                return Err(Error::InvalidCalendar(
                    "windows must fall on whole minutes".into(),
                ));
            }
        }
        if sessions.windows(2).any(|w| w[1].0 < w[0].1) {
            return Err(Error::InvalidCalendar(
                "sessions overlap or are out of order".into(),
            ));
        }
        Ok(Self { sessions, excluded })
    }

    /// Parses a calendar file.
    ///
    /// Each non-empty line is `HH:MM-HH:MM` (a session), `session HH:MM-HH:MM`
    /// or `exclude HH:MM-HH:MM`; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut sessions = Vec::new();
        let mut excluded = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (target, range) = match line.split_once(char::is_whitespace) {
                Some(("session", r)) => (&mut sessions, r.trim()),
                Some(("exclude", r)) => (&mut excluded, r.trim()),
                Some((word, _)) => {
                    return Err(Error::InvalidCalendar(format!(
                        "line {}: unknown keyword {word:?}",
                        lineno + 1
                    )))
                }
                None => (&mut sessions, line),
            };
            let (a, b) = range.split_once(['-', '\u{2013}']).ok_or_else(|| {
                Error::InvalidCalendar(format!("line {}: expected HH:MM-HH:MM", lineno + 1))
            })?;
            let parse = |t: &str| {
                NaiveTime::parse_from_str(t.trim(), "%H:%M").map_err(|_| {
                    Error::InvalidCalendar(format!("line {}: bad time {t:?}", lineno + 1))
                })
            };
            target.push((parse(a)?, parse(b)?));
        }
        Self::new(sessions, excluded)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn sessions(&self) -> &[(NaiveTime, NaiveTime)] {
        &self.sessions
    }

    pub fn excluded(&self) -> &[(NaiveTime, NaiveTime)] {
        &self.excluded
    }

    /// Index of the session containing `t`, if it is tradable.
    pub fn session_of(&self, t: NaiveTime) -> Option<usize> {
        if self.excluded.iter().any(|&(s, e)| t >= s && t < e) {
            return None;
        }
        self.sessions.iter().position(|&(s, e)| t >= s && t < e)
    }

    /// Number of tradable minutes in one day.
    pub fn minutes_per_day(&self) -> usize {
        self.day_minutes().count()
    }

    /// Tradable minute labels of a day in chronological order, with session index.
    fn day_minutes(&self) -> impl Iterator<Item = (usize, NaiveTime)> + '_ {
        self.sessions
            .iter()
            .enumerate()
            .flat_map(move |(k, &(s, e))| {
                let n = (e - s).num_minutes();
                (0..n)
                    .map(move |i| s + Duration::minutes(i))
                    .filter(move |&t| self.session_of(t) == Some(k))
                    .map(move |t| (k, t))
            })
    }

    /// Checks that every bar timestamp lies inside a session.
    pub fn validate_bars(&self, bars: &MinuteBarSeries) -> Result<()> {
        match bars
            .timestamps()
            .iter()
            .position(|ts| self.session_of(ts.time()).is_none())
        {
            Some(i) => Err(Error::InvalidSeries(format!(
                "bar {i} at {} is outside every session",
                bars.timestamps()[i]
            ))),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TickRecord {
    pub timestamp: NaiveDateTime,
    pub price: f64,
    pub volume: Option<f64>,
}

/// Column layout of a tick CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickFormat {
    pub delimiter: u8,
    pub has_header: bool,
    pub timestamp_col: usize,
    pub price_col: usize,
    pub volume_col: Option<usize>,
    /// Largest tolerated fraction of malformed rows.
    pub bad_row_tolerance: f64,
    /// Offset applied to epoch-second timestamps to obtain exchange-local time.
    pub utc_offset_minutes: i32,
}

impl Default for TickFormat {
    fn default() -> Self {
        Self {
            delimiter: b',',
            has_header: true,
            timestamp_col: 0,
            price_col: 1,
            volume_col: None,
            bad_row_tolerance: 0.01,
            utc_offset_minutes: 8 * 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedTicks {
    pub records: Vec<TickRecord>,
    pub total_rows: usize,
    pub bad_rows: usize,
    /// 1-based line numbers of the first malformed rows (at most 20).
    pub bad_row_lines: Vec<u64>,
}

/// Parses ISO-8601 local date-times (`T` or space separated, optional
/// fractional seconds) or epoch seconds.
pub fn parse_timestamp(s: &str, utc_offset_minutes: i32) -> Option<NaiveDateTime> {
    let s = s.trim();
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(t);
        }
    }
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Some(t.naive_local());
    }
    let secs: f64 = s.parse().ok()?;
    if !secs.is_finite() {
        return None;
    }
    let whole = secs.floor();
    let nanos = ((secs - whole) * 1e9).round() as u32;
    let utc = DateTime::from_timestamp(whole as i64, nanos.min(999_999_999))?.naive_utc();
    Some(utc + Duration::minutes(utc_offset_minutes as i64))
}

fn parse_row(rec: &csv::StringRecord, format: &TickFormat) -> Option<TickRecord> {
    let timestamp = parse_timestamp(rec.get(format.timestamp_col)?, format.utc_offset_minutes)?;
    let price: f64 = rec.get(format.price_col)?.trim().parse().ok()?;
    if !(price.is_finite() && price > 0.0) {
        return None;
    }
    let volume = match format.volume_col {
        Some(c) => {
            let v: f64 = rec.get(c)?.trim().parse().ok()?;
            if !(v.is_finite() && v >= 0.0) {
                return None;
            }
            Some(v)
        }
        None => None,
    };
    Some(TickRecord {
        timestamp,
        price,
        volume,
    })
}

pub fn parse_ticks_from_reader<R: Read>(reader: R, format: &TickFormat) -> Result<ParsedTicks> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(format.delimiter)
        .has_headers(format.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut records = Vec::new();
    let mut total_rows = 0;
    let mut bad_rows = 0;
    let mut bad_row_lines = Vec::new();
    for row in rdr.records() {
        total_rows += 1;
        let parsed = match &row {
            Ok(rec) => parse_row(rec, format),
            Err(e) if e.is_io_error() => return Err(row.unwrap_err().into()),
            Err(_) => None,
        };
        match parsed {
            Some(t) => records.push(t),
            None => {
                bad_rows += 1;
                if bad_row_lines.len() < 20 {
                    let line = match &row {
                        Ok(rec) => rec.position().map(|p| p.line()),
                        Err(e) => e.position().map(|p| p.line()),
                    };
                    bad_row_lines.push(line.unwrap_or(0));
                }
            }
        }
    }
    if total_rows > 0 && bad_rows as f64 > format.bad_row_tolerance * total_rows as f64 {
        return Err(Error::CorruptInput {
            bad: bad_rows,
            total: total_rows,
            tolerance: format.bad_row_tolerance,
        });
    }
    records.sort_by_key(|t| t.timestamp);
    Ok(ParsedTicks {
        records,
        total_rows,
        bad_rows,
        bad_row_lines,
    })
}

/// Reads a tick CSV, returning records in timestamp order (stable for ties).
pub fn parse_ticks(path: &Path, format: &TickFormat) -> Result<ParsedTicks> {
    let file = File::open(path).map_err(|source| Error::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    parse_ticks_from_reader(BufReader::new(file), format)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FillPolicy {
    /// Minutes without trades repeat the previous price (zero return).
    #[default]
    CarryForward,
    /// Minutes without trades produce no bar.
    Drop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub bars: MinuteBarSeries,
    /// Ticks that fell outside every session.
    pub discarded: usize,
}

/// Builds one bar per tradable minute.
///
/// A bar is labelled by its minute start and priced with the last trade before
/// the label plus 60 s. Per day, bars run from the first to the last minute that
/// contains a trade; with [`FillPolicy::CarryForward`] the empty minutes in
/// between (including those after the lunch break) repeat the previous price.
/// `ticks` must be sorted by timestamp.
pub fn resample_to_minutes(
    ticks: &[TickRecord],
    cal: &SessionCalendar,
    fill: FillPolicy,
) -> Result<Resampled> {
    if ticks.windows(2).any(|w| w[1].timestamp < w[0].timestamp) {
        return Err(Error::InvalidArgument(
            "ticks must be sorted by timestamp".into(),
        ));
    }
    let mut discarded = 0;
    // (minute label, session index, price of last trade in that minute)
    let mut per_minute: Vec<(NaiveDateTime, usize, f64)> = Vec::new();
    for t in ticks {
        let Some(k) = cal.session_of(t.timestamp.time()) else {
            discarded += 1;
            continue;
        };
        let label = t
            .timestamp
            .with_second(0)
            .and_then(|x| x.with_nanosecond(0))
            .expect("zero seconds always valid");
        match per_minute.last_mut() {
            Some(last) if last.0 == label => last.2 = t.price,
            _ => per_minute.push((label, k, t.price)),
        }
    }
    if per_minute.is_empty() {
        return Err(Error::EmptyAfterCalendarFilter { discarded });
    }

    let mut timestamps = Vec::new();
    let mut prices = Vec::new();
    let mut session_ids = Vec::new();
    let mut next_id = 0u32;
    let mut current: Option<(NaiveDate, usize)> = None;
    let mut push = |ts: NaiveDateTime, k: usize, price: f64| {
        let key = (ts.date(), k);
        if current != Some(key) {
            if current.is_some() {
                next_id += 1;
            }
            current = Some(key);
        }
        timestamps.push(ts);
        prices.push(price);
        session_ids.push(next_id);
    };

    match fill {
        FillPolicy::Drop => {
            for &(ts, k, p) in &per_minute {
                push(ts, k, p);
            }
        }
        FillPolicy::CarryForward => {
            let mut i = 0;
            while i < per_minute.len() {
                let day = per_minute[i].0.date();
                let mut j = i;
                while j < per_minute.len() && per_minute[j].0.date() == day {
                    j += 1;
                }
                let (first, last) = (per_minute[i].0.time(), per_minute[j - 1].0.time());
                let mut cursor = i;
                let mut price = per_minute[i].2;
                for (k, t) in cal.day_minutes().filter(|&(_, t)| t >= first && t <= last) {
                    let ts = day.and_time(t);
                    if cursor < j && per_minute[cursor].0 == ts {
                        price = per_minute[cursor].2;
                        cursor += 1;
                    }
                    push(ts, k, price);
                }
                i = j;
            }
        }
    }
    Ok(Resampled {
        bars: MinuteBarSeries::new(timestamps, prices, session_ids)?,
        discarded,
    })
}

/// Turns bars back into one tick per bar, stamped at the bar label.
pub fn bars_as_ticks(bars: &MinuteBarSeries) -> Vec<TickRecord> {
    bars.timestamps()
        .iter()
        .zip(bars.prices())
        .map(|(&timestamp, &price)| TickRecord {
            timestamp,
            price,
            volume: None,
        })
        .collect()
}

const BAR_TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// Writes bars as CSV with columns `timestamp,price,session_id`.
pub fn write_bars_csv<W: Write>(bars: &MinuteBarSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["timestamp", "price", "session_id"])?;
    for ((ts, p), id) in bars
        .timestamps()
        .iter()
        .zip(bars.prices())
        .zip(bars.session_ids())
    {
        w.write_record([
            ts.format(BAR_TIME_FORMAT).to_string(),
            crate::export::fmt_f64(*p),
            id.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bars_csv<R: BufRead>(input: R) -> Result<MinuteBarSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(input);
    let mut ts = Vec::new();
    let mut prices = Vec::new();
    let mut ids = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = || Error::InvalidSeries(format!("malformed bar row {}", i + 1));
        let t = row
            .get(0)
            .and_then(|s| NaiveDateTime::parse_from_str(s, BAR_TIME_FORMAT).ok())
            .ok_or_else(bad)?;
        let p: f64 = row.get(1).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let id: u32 = row.get(2).and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        ts.push(t);
        prices.push(p);
        ids.push(id);
    }
    MinuteBarSeries::new(ts, prices, ids)
}
