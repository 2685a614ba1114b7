//! Clustering diagnostics of an interval sequence: conditional densities,
//! mean conditional interval against a shuffled baseline, and cluster sizes
//! of runs above or below the median.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{
    integer_log_edges, log_binned_pdf_on, scale_distribution, BinnedDistribution,
};
use crate::error::{Error, Result};
use crate::intervals::IntervalSeries;
use crate::stats;
use crate::synth::{shuffle, stream_rng};

pub const DEFAULT_K_BINS: usize = 8;
pub const DEFAULT_SHUFFLES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// Lower and upper half of the sorted conditioning intervals.
    Halves,
    /// `k` rank-based bins of (almost) equal population.
    QuantileBins(usize),
}

impl SplitMode {
    pub fn bins(self) -> usize {
        match self {
            SplitMode::Halves => 2,
            SplitMode::QuantileBins(k) => k,
        }
    }

    fn label(self, bin: usize) -> String {
        match self {
            SplitMode::Halves if bin == 0 => "lower".into(),
            SplitMode::Halves => "upper".into(),
            SplitMode::QuantileBins(_) => format!("bin{bin}"),
        }
    }
}

/// Assignment of every interval to a size class by its rank.
///
/// Intervals are sorted by value, ties keeping their sequence order, and the
/// interval of rank `r` out of `n` goes to bin `floor(r * k / n)`, so bin
/// populations differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConditionSplit {
    mode: SplitMode,
    assignment: Vec<usize>,
}

impl ConditionSplit {
    pub fn new(taus: &[u64], mode: SplitMode) -> Result<Self> {
        let k = mode.bins();
        if k < 2 {
            return Err(Error::InvalidArgument("need at least two bins".into()));
        }
        let n = taus.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&i| taus[i]);
        let mut assignment = vec![0; n];
        for (rank, &i) in order.iter().enumerate() {
            assignment[i] = rank * k / n;
        }
        Ok(Self { mode, assignment })
    }

    pub fn mode(&self) -> SplitMode {
        self.mode
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn bins(&self) -> usize {
        self.mode.bins()
    }

    pub fn populations(&self) -> Vec<usize> {
        let mut pop = vec![0; self.bins()];
        for &b in &self.assignment {
            pop[b] += 1;
        }
        pop
    }
}

/// Successor intervals grouped by the size class of their predecessor.
fn successors_by_bin(taus: &[u64], split: &ConditionSplit) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new(); split.bins()];
    for (i, pair) in taus.windows(2).enumerate() {
        out[split.assignment[i]].push(pair[1]);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPdf {
    /// `(label, scaled density)` per non-empty subset, in bin order.
    pub subsets: Vec<(String, BinnedDistribution)>,
    pub warnings: Vec<String>,
}

impl ConditionalPdf {
    pub fn get(&self, label: &str) -> Option<&BinnedDistribution> {
        self.subsets
            .iter()
            .find(|(l, _)| l == label)
            .map(|(_, d)| d)
    }
}

/// Density of the interval that immediately follows an interval from each
/// subset, on common bins and scaled by the global mean interval.
pub fn conditional_pdf(
    taus: &IntervalSeries,
    mode: SplitMode,
    bins_per_decade: usize,
) -> Result<ConditionalPdf> {
    if taus.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} interval(s), need at least 2",
            taus.len()
        )));
    }
    let split = ConditionSplit::new(taus.taus(), mode)?;
    let mean = taus.mean_tau().expect("non-empty");
    let max = *taus.taus().iter().max().expect("non-empty");
    let edges = integer_log_edges(max, bins_per_decade.max(1));
    let mut subsets = Vec::new();
    let mut warnings = Vec::new();
    for (bin, succ) in successors_by_bin(taus.taus(), &split)
        .into_iter()
        .enumerate()
    {
        let label = mode.label(bin);
        if succ.is_empty() {
            warnings.push(format!("subset {label} conditions no successor"));
            continue;
        }
        let dist = log_binned_pdf_on(&succ, &edges)?;
        subsets.push((label, scale_distribution(&dist, mean)?));
    }
    Ok(ConditionalPdf { subsets, warnings })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalMeanRow {
    /// Mean conditioning interval of the bin over the global mean.
    pub bin_center_scaled: f64,
    /// Mean successor over the global mean; `None` if the bin has no successor.
    pub mean_scaled: Option<f64>,
    pub shuffle_mean: Option<f64>,
    pub shuffle_std: Option<f64>,
    /// Number of successors in the bin.
    pub n: usize,
}

fn conditional_means(taus: &[u64], k: usize, mean: f64) -> Result<Vec<(Option<f64>, usize)>> {
    let split = ConditionSplit::new(taus, SplitMode::QuantileBins(k))?;
    Ok(successors_by_bin(taus, &split)
        .into_iter()
        .map(|s| {
            let n = s.len();
            let m = (n > 0).then(|| s.iter().sum::<u64>() as f64 / n as f64 / mean);
            (m, n)
        })
        .collect())
}

/// `<tau | tau0> / mean` per quantile bin of the conditioning interval, with the
/// same statistic over `n_shuffles` seeded random permutations as a baseline.
/// With `n_shuffles == 0` the baseline columns are `None`.
///
/// Shuffle `i` draws from stream `i + 1` of `seed`, so the baseline does not
/// depend on how the shuffles are scheduled.
pub fn mean_conditional_interval(
    taus: &IntervalSeries,
    k_bins: usize,
    n_shuffles: usize,
    seed: u64,
) -> Result<Vec<ConditionalMeanRow>> {
    if k_bins < 2 {
        return Err(Error::InvalidArgument("k_bins must be at least 2".into()));
    }
    if taus.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} interval(s), need at least 2",
            taus.len()
        )));
    }
    let values = taus.taus();
    let mean = taus.mean_tau().expect("non-empty");
    let observed = conditional_means(values, k_bins, mean)?;

    let split = ConditionSplit::new(values, SplitMode::QuantileBins(k_bins))?;
    let mut center_sum = vec![0.0; k_bins];
    for (&t, &b) in values.iter().zip(split.assignment()) {
        center_sum[b] += t as f64;
    }
    let pops = split.populations();

    let shuffled: Vec<Vec<(Option<f64>, usize)>> = (0..n_shuffles)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64 + 1);
            let mut perm = values.to_vec();
            shuffle(&mut perm, &mut rng);
            conditional_means(&perm, k_bins, mean)
        })
        .collect::<Result<_>>()?;

    Ok((0..k_bins)
        .map(|b| {
            let base: Vec<f64> = shuffled.iter().filter_map(|s| s[b].0).collect();
            let (shuffle_mean, shuffle_std) = if base.is_empty() {
                (None, None)
            } else {
                (Some(stats::mean(&base)), Some(stats::sample_std(&base)))
            };
            ConditionalMeanRow {
                bin_center_scaled: if pops[b] > 0 {
                    center_sum[b] / pops[b] as f64 / mean
                } else {
                    f64::NAN
                },
                mean_scaled: observed[b].0,
                shuffle_mean,
                shuffle_std,
                n: observed[b].1,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn as_str(self) -> &'static str {
        match self {
            Sign::Plus => "plus",
            Sign::Minus => "minus",
        }
    }
}

/// Distribution of maximal run lengths of one sign.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSizeDistribution {
    pub sign: Sign,
    /// `by_size[n - 1]` = number of clusters of exactly size `n`.
    by_size: Vec<usize>,
    total: usize,
}

impl ClusterSizeDistribution {
    fn from_runs(sign: Sign, runs: &[usize]) -> Self {
        let max = runs.iter().copied().max().unwrap_or(0);
        let mut by_size = vec![0; max];
        for &r in runs {
            by_size[r - 1] += 1;
        }
        Self {
            sign,
            by_size,
            total: runs.len(),
        }
    }

    pub fn max_n(&self) -> usize {
        self.by_size.len()
    }

    pub fn total_clusters(&self) -> usize {
        self.total
    }

    /// Clusters of exactly size `n`.
    pub fn count(&self, n: usize) -> usize {
        if n == 0 {
            return 0;
        }
        self.by_size.get(n - 1).copied().unwrap_or(0)
    }

    /// Fraction of clusters with size at least `n`.
    pub fn cumulative(&self, n: usize) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let n = n.max(1);
        let at_least: usize = self.by_size.iter().skip(n - 1).sum();
        at_least as f64 / self.total as f64
    }

    /// `(n, cumulative(n), count(n))` for `n = 1..=max_n`.
    pub fn table(&self) -> Vec<(usize, f64, usize)> {
        let mut remaining = self.total;
        (1..=self.max_n())
            .map(|n| {
                let c = remaining as f64 / self.total as f64;
                let here = self.by_size[n - 1];
                remaining -= here;
                (n, c, here)
            })
            .collect()
    }

    /// Sum of cluster sizes, i.e. the number of intervals with this sign.
    pub fn members(&self) -> usize {
        self.by_size
            .iter()
            .enumerate()
            .map(|(i, c)| (i + 1) * c)
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterSizes {
    pub median: f64,
    pub plus: ClusterSizeDistribution,
    pub minus: ClusterSizeDistribution,
}

/// Labels intervals `+` above the median and `-` otherwise (ties with the
/// median count as `-`), then measures maximal runs of equal labels.
pub fn cluster_size_distribution(taus: &IntervalSeries) -> Result<ClusterSizes> {
    let t = taus.taus();
    if t.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} interval(s), need at least 2",
            t.len()
        )));
    }
    if t.iter().all(|&x| x == t[0]) {
        return Err(Error::NoMedianSplit);
    }
    let mut sorted: Vec<f64> = t.iter().map(|&x| x as f64).collect();
    sorted.sort_by(f64::total_cmp);
    let median = stats::quantile_sorted(&sorted, 0.5);
    let labels: Vec<bool> = t.iter().map(|&x| x as f64 > median).collect();
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    let mut run = 1;
    for i in 1..=labels.len() {
        if i < labels.len() && labels[i] == labels[i - 1] {
            run += 1;
            continue;
        }
        if labels[i - 1] {
            plus.push(run);
        } else {
            minus.push(run);
        }
        run = 1;
    }
    Ok(ClusterSizes {
        median,
        plus: ClusterSizeDistribution::from_runs(Sign::Plus, &plus),
        minus: ClusterSizeDistribution::from_runs(Sign::Minus, &minus),
    })
}
