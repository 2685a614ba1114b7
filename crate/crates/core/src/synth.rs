//! Seeded synthetic series with known statistics.
//!
//! Every stream comes from PCG-XSL-RR 128/64 (`rand_pcg::Pcg64`): multiplier
//! `0x2360ED051FC65DA44385DF649FCCF645`, output = rotate-right of the xor-folded
//! 128-bit state. A 64-bit user seed is expanded into the 128-bit state with two
//! SplitMix64 draws (increment `0x9E3779B97F4A7C15`, mixers `0xBF58476D1CE4E5B9`
//! and `0x94D049BB133111EB`); the low word is xored with the first SplitMix64
//! output of the stream index, and the PCG stream selector is the stream index
//! itself. Stream `i` of seed `s` therefore does not depend on the order in
//! which streams are created.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::error::{Error, Result};

/// One SplitMix64 step: advances `state` and returns the mixed output.
pub fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for stream `stream` of `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> Pcg64 {
    let mut sm = seed;
    let mut st = stream;
    let hi = splitmix64(&mut sm) as u128;
    let lo = (splitmix64(&mut sm) ^ splitmix64(&mut st)) as u128;
    Pcg64::new((hi << 64) | lo, stream as u128)
}

/// Uniform draw strictly inside (0, 1) with 53 bits of resolution.
pub fn open01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Uniform integer in `0..bound` by rejection, free of modulo bias.
pub fn bounded<R: Rng + ?Sized>(rng: &mut R, bound: u64) -> u64 {
    assert!(bound > 0);
    let zone = u64::MAX - u64::MAX % bound;
    loop {
        let x = rng.next_u64();
        if x < zone {
            return x % bound;
        }
    }
}

/// Fisher-Yates shuffle driven by [`bounded`].
pub fn shuffle<T, R: Rng + ?Sized>(values: &mut [T], rng: &mut R) {
    for i in (1..values.len()).rev() {
        let j = bounded(rng, i as u64 + 1) as usize;
        values.swap(i, j);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    IidGaussian,
    IidExceedance { p: f64 },
    RandomWalk,
    StretchedExpIntervals { gamma: f64, alpha: f64 },
    LongMemoryVolatility { hurst: f64 },
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::IidGaussian => "iid_gaussian",
            GeneratorKind::IidExceedance { .. } => "iid_exceedance",
            GeneratorKind::RandomWalk => "random_walk",
            GeneratorKind::StretchedExpIntervals { .. } => "stretched_exp_intervals",
            GeneratorKind::LongMemoryVolatility { .. } => "long_memory_volatility",
        }
    }

    /// Whether the output is a signed, return-like series rather than a volatility.
    pub fn is_signed(&self) -> bool {
        matches!(self, GeneratorKind::IidGaussian | GeneratorKind::RandomWalk)
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorKind::IidGaussian | GeneratorKind::RandomWalk => write!(f, "{}", self.name()),
            GeneratorKind::IidExceedance { p } => write!(f, "{}:p={p}", self.name()),
            GeneratorKind::StretchedExpIntervals { gamma, alpha } => {
                write!(f, "{}:gamma={gamma},alpha={alpha}", self.name())
            }
            GeneratorKind::LongMemoryVolatility { hurst } => {
                write!(f, "{}:hurst={hurst}", self.name())
            }
        }
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    /// Parses `name` or `name:key=value,key=value`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), p.trim()),
            None => (s.trim(), ""),
        };
        let mut kv = Vec::new();
        for part in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                Error::BadGeneratorSpec(format!("expected key=value, got {part:?}"))
            })?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::BadGeneratorSpec(format!("bad number in {part:?}")))?;
            kv.push((k.trim().to_string(), v));
        }
        let get = |key: &str| {
            kv.iter()
                .find(|(k, _)| k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::BadGeneratorSpec(format!("{name} needs parameter {key}")))
        };
        let kind = match name {
            "iid_gaussian" => GeneratorKind::IidGaussian,
            "random_walk" => GeneratorKind::RandomWalk,
            "iid_exceedance" => GeneratorKind::IidExceedance { p: get("p")? },
            "stretched_exp_intervals" => GeneratorKind::StretchedExpIntervals {
                gamma: get("gamma")?,
                alpha: get("alpha")?,
            },
            "long_memory_volatility" => GeneratorKind::LongMemoryVolatility {
                hurst: get("hurst")?,
            },
            other => return Err(Error::BadGeneratorSpec(format!("unknown kind {other:?}"))),
        };
        Ok(kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub length: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, length: usize, seed: u64) -> Self {
        Self { kind, length, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::BadGeneratorSpec("length must be at least 1".into()));
        }
        let ok = match self.kind {
            GeneratorKind::IidGaussian | GeneratorKind::RandomWalk => true,
            GeneratorKind::IidExceedance { p } => p > 0.0 && p < 1.0,
            GeneratorKind::StretchedExpIntervals { gamma, alpha } => {
                gamma > 0.0 && alpha > 0.0 && gamma.is_finite() && alpha.is_finite()
            }
            // H = 0.5 is admitted as the uncorrelated reference case.
            GeneratorKind::LongMemoryVolatility { hurst } => (0.5..1.0).contains(&hurst),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::BadGeneratorSpec(format!(
                "parameters out of range for {}",
                self.kind
            )))
        }
    }
}

impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} length={} seed={}", self.kind, self.length, self.seed)
    }
}

/// Generates the series described by `spec`; identical specs give identical output.
pub fn generate(spec: &GeneratorSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    let n = spec.length;
    let out = match spec.kind {
        GeneratorKind::IidGaussian => (0..n).map(|_| StandardNormal.sample(&mut rng)).collect(),
        GeneratorKind::IidExceedance { p } => (0..n)
            .map(|_| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
            .collect(),
        GeneratorKind::RandomWalk => {
            let mut pos = 0.0;
            (0..n)
                .map(|_| {
                    pos += if rng.next_u64() >> 63 == 1 { 1.0 } else { -1.0 };
                    pos
                })
                .collect()
        }
        GeneratorKind::StretchedExpIntervals { gamma, alpha } => {
            let sampler = StretchedExpSampler::new(gamma, alpha);
            (0..n).map(|_| sampler.invert(open01(&mut rng))).collect()
        }
        GeneratorKind::LongMemoryVolatility { hurst } => {
            fractional_gaussian_noise(n, hurst, &mut rng)?
                .into_iter()
                .map(f64::abs)
                .collect()
        }
    };
    Ok(out)
}

/// Inverse-CDF sampler for the density `c * exp(-alpha * x^gamma)` on `x > 0`.
///
/// With `y = alpha * x^gamma`, `y` is Gamma(1/gamma) distributed, so the CDF is
/// the regularized lower incomplete gamma function `P(1/gamma, alpha x^gamma)`.
#[derive(Debug, Clone, Copy)]
pub struct StretchedExpSampler {
    gamma: f64,
    alpha: f64,
    shape: f64,
    ln_gamma_shape: f64,
}

impl StretchedExpSampler {
    pub const TOLERANCE: f64 = 1e-10;

    pub fn new(gamma: f64, alpha: f64) -> Self {
        let shape = 1.0 / gamma;
        Self {
            gamma,
            alpha,
            shape,
            ln_gamma_shape: ln_gamma(shape),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        gamma_lr(self.shape, self.alpha * x.powf(self.gamma))
    }

    fn x_of(&self, y: f64) -> f64 {
        (y / self.alpha).powf(self.shape)
    }

    /// Solves `cdf(x) = u` by safeguarded Newton iteration in `y`.
    pub fn invert(&self, u: f64) -> f64 {
        let a = self.shape;
        let (mut lo, mut hi) = (0.0f64, a.max(1.0));
        while gamma_lr(a, hi) < u {
            lo = hi;
            hi *= 2.0;
        }
        // Wilson-Hilferty starting point, clamped into the bracket.
        let z = inverse_std_normal(u);
        let t = 1.0 - 1.0 / (9.0 * a) + z / (3.0 * a.sqrt());
        let mut y = (a * t * t * t).clamp(lo, hi);
        if !(y > lo && y < hi) {
            y = 0.5 * (lo + hi);
        }
        for _ in 0..200 {
            let f = gamma_lr(a, y) - u;
            if f > 0.0 {
                hi = y;
            } else {
                lo = y;
            }
            let dens = ((a - 1.0) * y.ln() - y - self.ln_gamma_shape).exp();
            let mut next = y - f / dens;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            let dx = (self.x_of(next) - self.x_of(y)).abs();
            y = next;
            if dx < Self::TOLERANCE || self.x_of(hi) - self.x_of(lo) < Self::TOLERANCE {
                break;
            }
        }
        self.x_of(y)
    }
}

/// Acklam's rational approximation of the standard normal quantile; only used
/// to seed the Newton iteration above.
fn inverse_std_normal(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.38357751867269e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Autocovariance of unit-variance fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(k: usize, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Exact fractional Gaussian noise by circulant embedding (Davies-Harte).
pub fn fractional_gaussian_noise<R: Rng + ?Sized>(
    n: usize,
    hurst: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n == 1 {
        return Ok(vec![StandardNormal.sample(rng)]);
    }
    let half = (n - 1).next_power_of_two();
    let m = 2 * half;
    let mut row: Vec<Complex64> = (0..m)
        .map(|j| {
            let lag = if j <= half { j } else { m - j };
            Complex64::new(fgn_autocovariance(lag, hurst), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut row);
    let max_eig = row.iter().map(|c| c.re).fold(0.0, f64::max);
    let mut w: Vec<Complex64> = Vec::with_capacity(m);
    for c in &row {
        let mut eig = c.re;
        if eig < 0.0 {
            if eig < -1e-8 * max_eig {
                return Err(Error::BadGeneratorSpec(format!(
                    "circulant embedding not non-negative for hurst={hurst}"
                )));
            }
            eig = 0.0;
        }
        let s = (eig / m as f64).sqrt();
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        w.push(Complex64::new(s * a, s * b));
    }
    fft.process(&mut w);
    Ok(w.into_iter().take(n).map(|c| c.re).collect())
}
