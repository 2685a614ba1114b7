//! Return intervals between threshold exceedances of a volatility series.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::VolatilitySeries;

/// Exceedance threshold in the normalization units of the volatility series.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(q: f64) -> Result<Self> {
        if q.is_finite() && q >= 0.0 {
            Ok(Self(q))
        } else {
            Err(Error::InvalidArgument(format!(
                "threshold must be finite and non-negative, got {q}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for Threshold {
    type Error = Error;

    fn try_from(q: f64) -> Result<Self> {
        Self::new(q)
    }
}

impl From<Threshold> for f64 {
    fn from(t: Threshold) -> f64 {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryPolicy {
    /// Intervals run over the concatenated series, across session gaps.
    #[default]
    WithinSeries,
    /// Counting restarts in every session; cross-session intervals are dropped.
    PerSession,
}

/// Intervals `tau` (in sampling steps) between consecutive exceedances.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSeries {
    taus: Vec<u64>,
    q: f64,
    n_exceedances: usize,
    sum: u64,
    warning: Option<String>,
}

impl IntervalSeries {
    /// Wraps an existing interval sequence, e.g. one read back from disk.
    pub fn from_taus(taus: Vec<u64>, q: f64) -> Result<Self> {
        if taus.contains(&0) {
            return Err(Error::InvalidSeries("intervals must be at least 1".into()));
        }
        let sum = taus.iter().sum();
        let n_exceedances = if taus.is_empty() { 0 } else { taus.len() + 1 };
        let warning = taus
            .is_empty()
            .then(|| "fewer than 2 exceedances".to_string());
        Ok(Self {
            taus,
            q,
            n_exceedances,
            sum,
            warning,
        })
    }

    pub fn taus(&self) -> &[u64] {
        &self.taus
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn len(&self) -> usize {
        self.taus.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taus.is_empty()
    }

    pub fn n_exceedances(&self) -> usize {
        self.n_exceedances
    }

    pub fn sum(&self) -> u64 {
        self.sum
    }

    /// `sum / count`, or `None` without intervals.
    pub fn mean_tau(&self) -> Option<f64> {
        (!self.taus.is_empty()).then(|| self.sum as f64 / self.taus.len() as f64)
    }

    /// Set when fewer than two exceedances were found.
    pub fn warning(&self) -> Option<&str> {
        self.warning.as_deref()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.taus.iter().map(|&t| t as f64).collect()
    }
}

/// Exceedance means `vol[i] >= q`; `tau_k = i_{k+1} - i_k`.
pub fn extract_intervals(
    vol: &VolatilitySeries,
    q: Threshold,
    boundary: BoundaryPolicy,
) -> Result<IntervalSeries> {
    if vol.is_empty() {
        return Err(Error::InsufficientData("empty volatility series".into()));
    }
    let values = vol.values();
    let sessions = vol.session_ids();
    let mut taus = Vec::new();
    let mut n_exceedances = 0;
    let mut prev: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v < q.0 {
            continue;
        }
        n_exceedances += 1;
        if let Some(p) = prev {
            if boundary == BoundaryPolicy::WithinSeries || sessions[p] == sessions[i] {
                taus.push((i - p) as u64);
            }
        }
        prev = Some(i);
    }
    let sum = taus.iter().sum();
    let warning = (n_exceedances < 2)
        .then(|| format!("{n_exceedances} exceedance(s) at q={}: no intervals", q.0));
    Ok(IntervalSeries {
        taus,
        q: q.0,
        n_exceedances,
        sum,
        warning,
    })
}

/// Mean interval for each threshold, in the order given.
pub fn mean_interval_curve(
    vol: &VolatilitySeries,
    qs: &[Threshold],
    boundary: BoundaryPolicy,
) -> Result<Vec<(Threshold, Option<f64>)>> {
    if qs.is_empty() {
        return Err(Error::InvalidArgument("no thresholds given".into()));
    }
    qs.iter()
        .map(|&q| Ok((q, extract_intervals(vol, q, boundary)?.mean_tau())))
        .collect()
}
