//! Price, return and normalized volatility series.
//!
//! A [`MinuteBarSeries`] holds one price per in-session minute. Log returns are
//! taken between consecutive bars and, by default, pairs that straddle a
//! session boundary (lunch break or overnight) are dropped. The volatility
//! series is the absolute return expressed in units of the return standard
//! deviation, which is the unit the thresholds `q` are quoted in.

use chrono::{NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct MinuteBarSeries {
    timestamps: Vec<NaiveDateTime>,
    prices: Vec<f64>,
    session_ids: Vec<u32>,
}

impl MinuteBarSeries {
    /// Builds a bar series, checking ordering, price positivity and session ids.
    ///
    /// Session membership against a calendar is checked by
    /// [`crate::ingest::SessionCalendar::validate_bars`].
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        prices: Vec<f64>,
        session_ids: Vec<u32>,
    ) -> Result<Self> {
        if timestamps.len() != prices.len() || prices.len() != session_ids.len() {
            return Err(Error::InvalidSeries(format!(
                "column lengths differ: {} timestamps, {} prices, {} session ids",
                timestamps.len(),
                prices.len(),
                session_ids.len()
            )));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "timestamps not strictly increasing at position {}",
                i + 1
            )));
        }
        if let Some(i) = session_ids.windows(2).position(|w| w[1] < w[0]) {
            return Err(Error::InvalidSeries(format!(
                "session ids decrease at position {}",
                i + 1
            )));
        }
        if let Some((index, &price)) = prices
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && **p > 0.0))
        {
            return Err(Error::InvalidPrice { index, price });
        }
        Ok(Self {
            timestamps,
            prices,
            session_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.prices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prices.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn prices(&self) -> &[f64] {
        &self.prices
    }

    pub fn session_ids(&self) -> &[u32] {
        &self.session_ids
    }

    /// Same bars with every price multiplied by `factor`.
    pub fn scaled_prices(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.timestamps.clone(),
            self.prices.iter().map(|p| p * factor).collect(),
            self.session_ids.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapPolicy {
    /// Omit returns whose two bars belong to different sessions.
    #[default]
    DropOvernight,
    /// Keep every consecutive pair, including lunch and overnight gaps.
    KeepOvernight,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    values: Vec<f64>,
    /// Minute of day (0..1440) of the later bar of each pair, when known.
    minute_of_day: Option<Vec<u16>>,
    session_ids: Vec<u32>,
    omitted: usize,
}

impl ReturnSeries {
    /// Wraps raw return values that carry no calendar information.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!(
                "non-finite return at position {i}"
            )));
        }
        let n = values.len();
        Ok(Self {
            values,
            minute_of_day: None,
            session_ids: vec![0; n],
            omitted: 0,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn minute_of_day(&self) -> Option<&[u16]> {
        self.minute_of_day.as_deref()
    }

    pub fn session_ids(&self) -> &[u32] {
        &self.session_ids
    }

    /// Number of bar pairs skipped by the gap policy.
    pub fn omitted(&self) -> usize {
        self.omitted
    }
}

/// `Z(t) = ln y(t) - ln y(t-1)` over consecutive bars.
pub fn log_returns(bars: &MinuteBarSeries, gap_policy: GapPolicy) -> Result<ReturnSeries> {
    if bars.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} bar(s), need at least 2",
            bars.len()
        )));
    }
    let n = bars.len();
    let mut values = Vec::with_capacity(n - 1);
    let mut minute_of_day = Vec::with_capacity(n - 1);
    let mut session_ids = Vec::with_capacity(n - 1);
    let mut omitted = 0;
    for i in 1..n {
        let (p0, p1) = (bars.prices[i - 1], bars.prices[i]);
        if p0 <= 0.0 {
            return Err(Error::InvalidPrice {
                index: i - 1,
                price: p0,
            });
        }
        if p1 <= 0.0 {
            return Err(Error::InvalidPrice {
                index: i,
                price: p1,
            });
        }
        if gap_policy == GapPolicy::DropOvernight && bars.session_ids[i] != bars.session_ids[i - 1]
        {
            omitted += 1;
            continue;
        }
        // The ratio form loses less precision than a difference of logs.
        values.push((p1 / p0).ln());
        let ts = bars.timestamps[i];
        minute_of_day.push((ts.hour() * 60 + ts.minute()) as u16);
        session_ids.push(bars.session_ids[i]);
    }
    Ok(ReturnSeries {
        values,
        minute_of_day: Some(minute_of_day),
        session_ids,
        omitted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    /// Divide by the population standard deviation of the returns.
    #[default]
    Std,
    /// Remove the mean absolute return per minute of day first, then as `Std`.
    IntradayStd,
}

/// Constants used to normalize a volatility series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub mode: NormMode,
    /// Standard deviation the (deseasonalized) returns were divided by.
    pub scale: f64,
    /// `(minute_of_day, mean |Z|)` pairs for intraday mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intraday: Option<Vec<(u16, f64)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VolatilitySeries {
    values: Vec<f64>,
    session_ids: Vec<u32>,
    normalization: Option<Normalization>,
}

impl VolatilitySeries {
    /// Uses `values` as an already normalized volatility series in a single session.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        Self::with_sessions(values, vec![0; n])
    }

    pub fn with_sessions(values: Vec<f64>, session_ids: Vec<u32>) -> Result<Self> {
        if values.len() != session_ids.len() {
            return Err(Error::InvalidSeries(
                "values and session ids differ in length".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidSeries(format!(
                "volatility at position {i} is negative or not finite"
            )));
        }
        Ok(Self {
            values,
            session_ids,
            normalization: None,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn session_ids(&self) -> &[u32] {
        &self.session_ids
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn normalization(&self) -> Option<&Normalization> {
        self.normalization.as_ref()
    }
}

/// Turns returns into `|Z| / sigma`, optionally removing the intraday pattern first.
///
/// `sigma` is the population standard deviation of the signed (deseasonalized)
/// returns, so the signed normalized returns have unit standard deviation.
pub fn normalize_volatility(returns: &ReturnSeries, mode: NormMode) -> Result<VolatilitySeries> {
    if returns.is_empty() {
        return Err(Error::InsufficientData("empty return series".into()));
    }
    let (signed, intraday) = match mode {
        NormMode::Std => (returns.values.clone(), None),
        NormMode::IntradayStd => {
            let minutes = returns.minute_of_day.as_ref().ok_or_else(|| {
                Error::InvalidArgument("intraday_std needs minute-of-day stamps".into())
            })?;
            let mut sum = vec![0.0f64; 1440];
            let mut cnt = vec![0usize; 1440];
            for (z, &m) in returns.values.iter().zip(minutes) {
                sum[m as usize] += z.abs();
                cnt[m as usize] += 1;
            }
            let factor: Vec<f64> = sum
                .iter()
                .zip(&cnt)
                .map(|(s, &c)| if c > 0 && *s > 0.0 { s / c as f64 } else { 1.0 })
                .collect();
            let signed = returns
                .values
                .iter()
                .zip(minutes)
                .map(|(z, &m)| z / factor[m as usize])
                .collect();
            let pattern = (0..1440u16)
                .filter(|&m| cnt[m as usize] > 0)
                .map(|m| (m, sum[m as usize] / cnt[m as usize] as f64))
                .collect();
            (signed, Some(pattern))
        }
    };
    let sigma = stats::pop_std(&signed);
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::DegenerateSeries(
            "returns have zero standard deviation".into(),
        ));
    }
    Ok(VolatilitySeries {
        values: signed.iter().map(|z| z.abs() / sigma).collect(),
        session_ids: returns.session_ids.clone(),
        normalization: Some(Normalization {
            mode,
            scale: sigma,
            intraday,
        }),
    })
}
