//! Persistence probabilities of a real-valued series.
//!
//! `P+(t)` is the fraction of starting points `t'` after which the series
//! stays strictly above its starting value for at least `t` steps; `P-(t)`
//! likewise strictly below. Every `t` uses the same starting population
//! `t' = 0 ..= n - 1 - t_max`, so both curves are non-increasing in `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::Sign;
use crate::stats;

pub const DEFAULT_T_MAX: usize = 1000;
pub const DEFAULT_FIT_RANGE: (f64, f64) = (4.0, 100.0);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersistenceCurve {
    pub t_values: Vec<usize>,
    pub p_plus: Vec<f64>,
    pub p_minus: Vec<f64>,
    pub n_starts: Vec<usize>,
}

impl PersistenceCurve {
    /// Builds a curve from tabulated values, e.g. a reference curve.
    pub fn from_parts(
        t_values: Vec<usize>,
        p_plus: Vec<f64>,
        p_minus: Vec<f64>,
        n_starts: Vec<usize>,
    ) -> Result<Self> {
        let n = t_values.len();
        if p_plus.len() != n || p_minus.len() != n || n_starts.len() != n {
            return Err(Error::InvalidArgument(
                "persistence columns differ in length".into(),
            ));
        }
        Ok(Self {
            t_values,
            p_plus,
            p_minus,
            n_starts,
        })
    }

    pub fn get(&self, sign: Sign) -> &[f64] {
        match sign {
            Sign::Plus => &self.p_plus,
            Sign::Minus => &self.p_minus,
        }
    }

    pub fn len(&self) -> usize {
        self.t_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t_values.is_empty()
    }
}

/// For every index, the distance to the next later index whose value breaks
/// the run (`<=` start for `above`, `>=` start otherwise), or `None`.
fn next_breaker(s: &[f64], above: bool) -> Vec<Option<usize>> {
    let mut out = vec![None; s.len()];
    let mut stack: Vec<usize> = Vec::new();
    for i in (0..s.len()).rev() {
        while let Some(&top) = stack.last() {
            let survives = if above { s[top] > s[i] } else { s[top] < s[i] };
            if survives {
                stack.pop();
            } else {
                break;
            }
        }
        out[i] = stack.last().map(|&j| j - i);
        stack.push(i);
    }
    out
}

pub fn persistence_curve(series: &[f64], t_max: usize) -> Result<PersistenceCurve> {
    if t_max == 0 {
        return Err(Error::InvalidArgument("t_max must be at least 1".into()));
    }
    if series.len() <= t_max {
        return Err(Error::TMaxTooLarge {
            t_max,
            len: series.len(),
        });
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite value at index {i}"
        )));
    }
    let starts = series.len() - t_max;
    let tally = |above: bool| {
        // hist[r] = starts whose run length, capped at t_max, equals r.
        let mut hist = vec![0usize; t_max + 1];
        for (i, b) in next_breaker(series, above)
            .into_iter()
            .take(starts)
            .enumerate()
        {
            let run = match b {
                Some(d) => d - 1,
                None => series.len() - 1 - i,
            };
            hist[run.min(t_max)] += 1;
        }
        let mut at_least = vec![0.0; t_max];
        let mut acc = 0;
        for t in (1..=t_max).rev() {
            acc += hist[t];
            at_least[t - 1] = acc as f64 / starts as f64;
        }
        at_least
    };
    Ok(PersistenceCurve {
        t_values: (1..=t_max).collect(),
        p_plus: tally(true),
        p_minus: tally(false),
        n_starts: vec![starts; t_max],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub sign: Sign,
    pub beta: f64,
    pub r_squared: f64,
    pub fit_range: (f64, f64),
}

/// Least-squares fit of `ln P = c - beta ln t` over `t` in `fit_range` with
/// `P > 0`.
pub fn fit_power_law(
    curve: &PersistenceCurve,
    sign: Sign,
    fit_range: (f64, f64),
) -> Result<PowerLawFit> {
    let (lo, hi) = fit_range;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!("bad fit range {lo}:{hi}")));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = curve
        .t_values
        .iter()
        .zip(curve.get(sign))
        .filter(|(&t, &p)| (t as f64) >= lo && (t as f64) <= hi && p > 0.0)
        .map(|(&t, &p)| ((t as f64).ln(), p.ln()))
        .unzip();
    if x.len() < 5 {
        return Err(Error::UnderdeterminedFit {
            found: x.len(),
            needed: 5,
        });
    }
    let lin = stats::linear_regression(&x, &y)
        .ok_or_else(|| Error::DegenerateFit("constant abscissa".into()))?;
    Ok(PowerLawFit {
        sign,
        beta: -lin.slope,
        r_squared: lin.r_squared,
        fit_range,
    })
}
