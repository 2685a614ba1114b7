//! Log-binned interval densities, the scaling collapse and the stretched
//! exponential fit `f(x) = c * exp(-alpha * x^gamma)`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::intervals::IntervalSeries;
use crate::stats::linear_regression;

/// Default logarithmic resolution.
pub const DEFAULT_BINS_PER_DECADE: usize = 10;
/// Bins with fewer counts are ignored by the fit and the collapse metric.
pub const MIN_BIN_COUNT: f64 = 10.0;
/// Default fit window in scaled units.
pub const DEFAULT_FIT_RANGE: (f64, f64) = (0.01, 20.0);
/// Search interval for the stretching exponent.
pub const GAMMA_SEARCH: (f64, f64) = (0.05, 2.0);

/// Histogram-based density estimate on logarithmic bins.
///
/// `edges` and `centers` are on the current axis: raw values, or `value / mean`
/// once the distribution has been scaled, in which case densities are multiplied
/// by the same mean so that the total probability stays one.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedDistribution {
    edges: Vec<f64>,
    centers: Vec<f64>,
    counts: Vec<f64>,
    densities: Vec<f64>,
    discrete: bool,
    scale: Option<f64>,
}

impl BinnedDistribution {
    /// Assembles a distribution from precomputed parts.
    pub fn from_parts(
        edges: Vec<f64>,
        centers: Vec<f64>,
        counts: Vec<f64>,
        densities: Vec<f64>,
        scale: Option<f64>,
    ) -> Result<Self> {
        let n = centers.len();
        if edges.len() != n + 1 || counts.len() != n || densities.len() != n || n == 0 {
            return Err(Error::InvalidArgument(
                "inconsistent bin layout: need n+1 edges and n centers, counts, densities".into(),
            ));
        }
        if edges[0] <= 0.0
            || edges
                .windows(2)
                .any(|w| w[1].partial_cmp(&w[0]) != Some(Ordering::Greater))
        {
            return Err(Error::InvalidArgument(
                "edges must be positive and strictly increasing".into(),
            ));
        }
        if densities
            .iter()
            .chain(&counts)
            .any(|d| !(d.is_finite() && *d >= 0.0))
        {
            return Err(Error::InvalidArgument(
                "densities and counts must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            edges,
            centers,
            counts,
            densities,
            discrete: false,
            scale,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn widths(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| w[1] - w[0])
    }

    pub fn is_scaled(&self) -> bool {
        self.scale.is_some()
    }

    /// Mean the axis was divided by, if scaled.
    pub fn scale(&self) -> Option<f64> {
        self.scale
    }

    /// Whether the bins were built on integer data with integer edges.
    pub fn is_discrete(&self) -> bool {
        self.discrete
    }

    pub fn total_count(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// `sum(density * width)`; one for any histogram built here.
    pub fn total_probability(&self) -> f64 {
        self.densities
            .iter()
            .zip(self.widths())
            .map(|(d, w)| d * w)
            .sum()
    }
}

/// Integer bin edges `round(10^(k/b))`, deduplicated, covering `1..=max`.
pub fn integer_log_edges(max: u64, bins_per_decade: usize) -> Vec<f64> {
    let mut edges: Vec<u64> = vec![1];
    let mut k = 1;
    while *edges.last().unwrap() <= max {
        let e = 10f64.powf(k as f64 / bins_per_decade as f64).round() as u64;
        if e > *edges.last().unwrap() {
            edges.push(e);
        }
        k += 1;
    }
    edges.into_iter().map(|e| e as f64).collect()
}

/// Log-binned density of an interval sequence.
///
/// Intervals are integers, so bin edges `10^(k/b)` are rounded to integers and
/// duplicates merged; each bin `[a, b)` then holds exactly `b - a` admissible
/// values and its density is the mean probability mass per interval value. The
/// bin center is the mean of the integers it contains.
pub fn log_binned_pdf(taus: &IntervalSeries, bins_per_decade: usize) -> Result<BinnedDistribution> {
    if taus.is_empty() {
        return Err(Error::NoIntervals);
    }
    if bins_per_decade == 0 {
        return Err(Error::InvalidArgument(
            "bins_per_decade must be at least 1".into(),
        ));
    }
    let max = *taus.taus().iter().max().unwrap();
    log_binned_pdf_on(taus.taus(), &integer_log_edges(max, bins_per_decade))
}

/// Log-binned density of integer intervals on caller-supplied integer edges,
/// which must cover every value.
pub fn log_binned_pdf_on(taus: &[u64], edges: &[f64]) -> Result<BinnedDistribution> {
    if taus.is_empty() {
        return Err(Error::NoIntervals);
    }
    let mut counts = vec![0.0; edges.len() - 1];
    for &t in taus {
        let x = t as f64;
        if x < edges[0] || x >= edges[edges.len() - 1] {
            return Err(Error::InvalidArgument(format!(
                "interval {t} outside bin edges"
            )));
        }
        let i = edges.partition_point(|&e| e <= x) - 1;
        counts[i] += 1.0;
    }
    let total = taus.len() as f64;
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(c, w)| c / (total * (w[1] - w[0])))
        .collect();
    let centers = edges
        .windows(2)
        .map(|w| 0.5 * (w[0] + w[1] - 1.0))
        .collect();
    Ok(BinnedDistribution {
        edges: edges.to_vec(),
        centers,
        counts,
        densities,
        discrete: true,
        scale: None,
    })
}

/// Log-binned density of positive real samples with edges `10^(k/b)` and
/// geometric bin centers.
pub fn log_binned_pdf_values(values: &[f64], bins_per_decade: usize) -> Result<BinnedDistribution> {
    if values.is_empty() {
        return Err(Error::NoIntervals);
    }
    if bins_per_decade == 0 {
        return Err(Error::InvalidArgument(
            "bins_per_decade must be at least 1".into(),
        ));
    }
    if values.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidArgument(
            "values must be positive and finite".into(),
        ));
    }
    let b = bins_per_decade as f64;
    let (min, max) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let edge = |k: i64| 10f64.powf(k as f64 / b);
    let mut k0 = (min.log10() * b).floor() as i64;
    while edge(k0) > min {
        k0 -= 1;
    }
    let mut k1 = (max.log10() * b).floor() as i64 + 1;
    while edge(k1) <= max {
        k1 += 1;
    }
    let edges: Vec<f64> = (k0..=k1).map(edge).collect();
    let mut counts = vec![0.0; edges.len() - 1];
    for &v in values {
        let i = edges.partition_point(|&e| e <= v) - 1;
        counts[i] += 1.0;
    }
    let total = values.len() as f64;
    let densities = counts
        .iter()
        .zip(edges.windows(2))
        .map(|(c, w)| c / (total * (w[1] - w[0])))
        .collect();
    let centers = edges.windows(2).map(|w| (w[0] * w[1]).sqrt()).collect();
    Ok(BinnedDistribution {
        edges,
        centers,
        counts,
        densities,
        discrete: false,
        scale: None,
    })
}

/// Rescales `P(tau)` to `mean * P(tau)` against `tau / mean`.
pub fn scale_distribution(dist: &BinnedDistribution, mean_tau: f64) -> Result<BinnedDistribution> {
    if dist.is_scaled() {
        return Err(Error::DoubleScaling);
    }
    if !(mean_tau.is_finite() && mean_tau > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "mean interval must be positive, got {mean_tau}"
        )));
    }
    Ok(BinnedDistribution {
        edges: dist.edges.iter().map(|e| e / mean_tau).collect(),
        centers: dist.centers.iter().map(|c| c / mean_tau).collect(),
        counts: dist.counts.clone(),
        densities: dist.densities.iter().map(|d| d * mean_tau).collect(),
        discrete: dist.discrete,
        scale: Some(mean_tau),
    })
}

/// Inverse of [`scale_distribution`].
pub fn unscale_distribution(dist: &BinnedDistribution) -> Result<BinnedDistribution> {
    let mean_tau = dist
        .scale
        .ok_or_else(|| Error::InvalidArgument("distribution is not scaled".into()))?;
    Ok(BinnedDistribution {
        edges: dist.edges.iter().map(|e| e * mean_tau).collect(),
        centers: dist.centers.iter().map(|c| c * mean_tau).collect(),
        counts: dist.counts.clone(),
        densities: dist.densities.iter().map(|d| d / mean_tau).collect(),
        discrete: dist.discrete,
        scale: None,
    })
}

/// Redistributes probability mass and counts onto `grid`, assuming each
/// source bin is uniform over its width.
fn rebin(dist: &BinnedDistribution, grid: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = grid.len() - 1;
    let mut mass = vec![0.0; n];
    let mut counts = vec![0.0; n];
    for (i, w) in dist.edges.windows(2).enumerate() {
        let (l, r) = (w[0], w[1]);
        let width = r - l;
        let start = grid.partition_point(|&g| g <= l).saturating_sub(1);
        for g in start..n {
            if grid[g] >= r {
                break;
            }
            let overlap = r.min(grid[g + 1]) - l.max(grid[g]);
            if overlap > 0.0 {
                mass[g] += dist.densities[i] * overlap;
                counts[g] += dist.counts[i] * overlap / width;
            }
        }
    }
    let dens = mass
        .iter()
        .zip(grid.windows(2))
        .map(|(m, w)| m / (w[1] - w[0]))
        .collect();
    (dens, counts)
}

/// Largest spread `max ln f - min ln f` across curves, over the bins of a common
/// logarithmic grid that lie inside every curve's binned range and where every
/// curve has at least [`MIN_BIN_COUNT`] counts.
pub fn collapse_quality(dists: &[BinnedDistribution]) -> Result<f64> {
    collapse_quality_with(dists, DEFAULT_BINS_PER_DECADE)
}

pub fn collapse_quality_with(dists: &[BinnedDistribution], bins_per_decade: usize) -> Result<f64> {
    if dists.len() < 2 {
        return Err(Error::InvalidArgument(
            "collapse needs at least two distributions".into(),
        ));
    }
    if dists.iter().any(|d| !d.is_scaled()) {
        return Err(Error::InvalidArgument(
            "collapse compares scaled distributions".into(),
        ));
    }
    let lo = dists
        .iter()
        .map(|d| d.edges[0])
        .fold(f64::INFINITY, f64::min);
    let hi = dists
        .iter()
        .map(|d| *d.edges.last().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let b = bins_per_decade as f64;
    let k0 = (lo.log10() * b).floor() as i64;
    let k1 = (hi.log10() * b).ceil() as i64;
    let grid: Vec<f64> = (k0..=k1).map(|k| 10f64.powf(k as f64 / b)).collect();
    let rebinned: Vec<(Vec<f64>, Vec<f64>)> = dists.iter().map(|d| rebin(d, &grid)).collect();
    let mut worst: Option<f64> = None;
    for g in 0..grid.len() - 1 {
        let inside = dists
            .iter()
            .all(|d| grid[g] >= d.edges[0] && grid[g + 1] <= *d.edges.last().unwrap());
        if !inside
            || rebinned
                .iter()
                .any(|(d, c)| c[g] < MIN_BIN_COUNT || d[g] <= 0.0)
        {
            continue;
        }
        let logs = rebinned.iter().map(|(d, _)| d[g].ln());
        let (mn, mx) = logs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
        worst = Some(worst.map_or(mx - mn, |w: f64| w.max(mx - mn)));
    }
    worst.ok_or(Error::NoOverlap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StretchedExpFit {
    pub gamma: f64,
    pub alpha: f64,
    /// Prefactor `c` of `c * exp(-alpha x^gamma)`.
    pub c: f64,
    /// Root-mean-square residual in `ln(density)`.
    pub residual: f64,
    pub fit_range: (f64, f64),
    pub n_bins: usize,
}

impl StretchedExpFit {
    pub fn eval(&self, x: f64) -> f64 {
        self.c * (-self.alpha * x.powf(self.gamma)).exp()
    }

    /// Sum of squared log residuals.
    pub fn sse(&self) -> f64 {
        self.residual * self.residual * self.n_bins as f64
    }
}

struct LinearSubfit {
    ln_c: f64,
    alpha: f64,
    sse: f64,
}

fn subfit(x: &[f64], y: &[f64], gamma: f64) -> Option<LinearSubfit> {
    let u: Vec<f64> = x.iter().map(|v| v.powf(gamma)).collect();
    let f = linear_regression(&u, y)?;
    Some(LinearSubfit {
        ln_c: f.intercept,
        alpha: -f.slope,
        sse: f.sse,
    })
}

/// Least squares fit of `ln f = ln c - alpha x^gamma` over occupied bins whose
/// center lies in `fit_range`.
///
/// For fixed `gamma` the problem is linear in `(ln c, alpha)`; `gamma` itself is
/// located by a grid scan over [`GAMMA_SEARCH`] followed by golden-section
/// refinement around the best grid point.
pub fn fit_stretched_exponential(
    dist: &BinnedDistribution,
    fit_range: (f64, f64),
) -> Result<StretchedExpFit> {
    let (x_min, x_max) = fit_range;
    if x_min.partial_cmp(&x_max) != Some(Ordering::Less) || x_min < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "fit range must satisfy 0 <= x_min < x_max, got {x_min}:{x_max}"
        )));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = dist
        .centers
        .iter()
        .zip(&dist.densities)
        .zip(&dist.counts)
        .filter(|((c, d), n)| **c >= x_min && **c <= x_max && **d > 0.0 && **n >= MIN_BIN_COUNT)
        .map(|((c, d), _)| (*c, d.ln()))
        .unzip();
    if x.len() < 5 {
        return Err(Error::UnderdeterminedFit {
            found: x.len(),
            needed: 5,
        });
    }
    let sse = |g: f64| subfit(&x, &y, g).map_or(f64::INFINITY, |s| s.sse);

    const GRID: usize = 96;
    let (g_lo, g_hi) = GAMMA_SEARCH;
    let step = (g_hi - g_lo) / GRID as f64;
    let grid: Vec<f64> = (0..=GRID).map(|i| g_lo + step * i as f64).collect();
    let best = (0..=GRID)
        .min_by(|&a, &b| sse(grid[a]).total_cmp(&sse(grid[b])))
        .unwrap();
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID)];

    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (sse(c), sse(d));
    while b - a > 1e-12 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sse(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sse(d);
        }
    }
    let mut gamma = 0.5 * (a + b);
    if sse(grid[best]) < sse(gamma) {
        gamma = grid[best];
    }
    let fit = subfit(&x, &y, gamma)
        .ok_or_else(|| Error::DegenerateFit("bin centers do not vary".into()))?;
    if fit.alpha.partial_cmp(&0.0) != Some(Ordering::Greater) {
        return Err(Error::DegenerateFit(format!(
            "density does not decay (alpha = {})",
            fit.alpha
        )));
    }
    Ok(StretchedExpFit {
        gamma,
        alpha: fit.alpha,
        c: fit.ln_c.exp(),
        residual: (fit.sse / x.len() as f64).sqrt(),
        fit_range,
        n_bins: x.len(),
    })
}
