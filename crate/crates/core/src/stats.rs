//! Scalar calibration statistics of z-scores and their confidence intervals.
//!
//! `<Z>` uses the Student-t interval; `<Z^2>` and `Var(Z)` use a percentile
//! bootstrap, the only approach with acceptable coverage once z-scores
//! depart from normality. The fraction of valid bins is tested against a
//! binomial acceptance interval.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};

pub const DEFAULT_LEVEL: f64 = 0.95;
pub const DEFAULT_RESAMPLES: usize = 1000;
pub const MIN_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntervalMethod {
    StudentT,
    BootstrapPercentile,
    Binomial,
}

/// Two-sided interval with its nominal level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub method: IntervalMethod,
}

impl Interval {
    pub fn new(low: f64, high: f64, level: f64, method: IntervalMethod) -> Result<Self> {
        check_level(level)?;
        if !(low <= high) {
            return Err(Error::param(format!("interval bounds out of order: [{low}, {high}]")));
        }
        Ok(Self { low, high, level, method })
    }

    pub fn contains(&self, x: f64) -> bool {
        self.low <= x && x <= self.high
    }

    pub fn width(&self) -> f64 {
        self.high - self.low
    }
}

/// What the `valid` flag of an estimate tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValidityRule {
    /// Confidence interval around the estimate covers the target.
    TargetInInterval,
    /// The estimate falls in the acceptance interval built around the target.
    ValueInInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatEstimate {
    pub value: f64,
    pub interval: Interval,
    pub target: f64,
    pub valid: bool,
    pub rule: ValidityRule,
}

impl StatEstimate {
    pub fn confidence(value: f64, interval: Interval, target: f64) -> Self {
        Self {
            value,
            interval,
            target,
            valid: interval.contains(target),
            rule: ValidityRule::TargetInInterval,
        }
    }

    pub fn acceptance(value: f64, interval: Interval, target: f64) -> Self {
        Self {
            value,
            interval,
            target,
            valid: interval.contains(value),
            rule: ValidityRule::ValueInInterval,
        }
    }

    /// Recompute the flag from the other fields.
    pub fn recheck(&self) -> bool {
        match self.rule {
            ValidityRule::TargetInInterval => self.interval.contains(self.target),
            ValidityRule::ValueInInterval => self.interval.contains(self.value),
        }
    }
}

/// Which binned statistic to compute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StatKind {
    /// `<Z>`, target 0.
    #[serde(rename = "ZM")]
    Zm,
    /// `<Z^2>`, target 1.
    #[serde(rename = "ZMS")]
    Zms,
    /// `Var(Z)`, target 1.
    #[serde(rename = "ZVAR")]
    Zvar,
}

impl StatKind {
    pub const ALL: [StatKind; 3] = [StatKind::Zm, StatKind::Zms, StatKind::Zvar];

    pub fn target(self) -> f64 {
        match self {
            StatKind::Zm => 0.0,
            StatKind::Zms | StatKind::Zvar => 1.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            StatKind::Zm => "ZM",
            StatKind::Zms => "ZMS",
            StatKind::Zvar => "ZVAR",
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            StatKind::Zm => 1,
            StatKind::Zms => 2,
            StatKind::Zvar => 3,
        }
    }
}

impl fmt::Display for StatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for StatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "ZM" => Ok(StatKind::Zm),
            "ZMS" => Ok(StatKind::Zms),
            "ZVAR" | "ZV" => Ok(StatKind::Zvar),
            other => Err(Error::Config(format!("unknown statistic `{other}`"))),
        }
    }
}

fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("level {level} not in (0, 1)")))
    }
}

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            have: sample.len(),
        });
    }
    Ok(())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn mean_squares(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance (two-pass).
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn student_t_quantile(p: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("df > 0")
        .inverse_cdf(p)
}

/// `<Z>` with the Student-t interval mean ± t·s/√n.
pub fn zm(sample: &[f64], level: f64) -> Result<StatEstimate> {
    check_sample(sample)?;
    check_level(level)?;
    let n = sample.len() as f64;
    let m = mean(sample);
    let se = (variance(sample) / n).sqrt();
    let half = student_t_quantile(0.5 * (1.0 + level), n - 1.0) * se;
    let interval = Interval::new(m - half, m + half, level, IntervalMethod::StudentT)?;
    Ok(StatEstimate::confidence(m, interval, StatKind::Zm.target()))
}

/// `<Z^2>` with a percentile-bootstrap interval.
pub fn zms(sample: &[f64], level: f64, resamples: usize, seed: u64) -> Result<StatEstimate> {
    check_sample(sample)?;
    let interval = bootstrap_percentile(sample, mean_squares, level, resamples, seed)?;
    Ok(StatEstimate::confidence(
        mean_squares(sample),
        interval,
        StatKind::Zms.target(),
    ))
}

/// `Var(Z)` (unbiased) with a percentile-bootstrap interval.
pub fn zvar(sample: &[f64], level: f64, resamples: usize, seed: u64) -> Result<StatEstimate> {
    check_sample(sample)?;
    let interval = bootstrap_percentile(sample, variance, level, resamples, seed)?;
    Ok(StatEstimate::confidence(
        variance(sample),
        interval,
        StatKind::Zvar.target(),
    ))
}

pub fn estimate(
    kind: StatKind,
    sample: &[f64],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<StatEstimate> {
    match kind {
        StatKind::Zm => zm(sample, level),
        StatKind::Zms => zms(sample, level, resamples, seed),
        StatKind::Zvar => zvar(sample, level, resamples, seed),
    }
}

/// Percentile bootstrap: `resamples` draws of `sample.len()` indices,
/// i.i.d. uniform with replacement, from a ChaCha8 stream seeded by `seed`.
pub fn bootstrap_percentile(
    sample: &[f64],
    statistic: impl Fn(&[f64]) -> f64,
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<Interval> {
    check_sample(sample)?;
    check_level(level)?;
    if resamples < MIN_RESAMPLES {
        return Err(Error::param(format!(
            "bootstrap needs at least {MIN_RESAMPLES} resamples, got {resamples}"
        )));
    }
    let n = sample.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut buf = vec![0.0; n];
    let mut stats: Vec<f64> = (0..resamples)
        .map(|_| {
            for slot in buf.iter_mut() {
                *slot = sample[rng.random_range(0..n)];
            }
            statistic(&buf)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let alpha = 0.5 * (1.0 - level);
    Interval::new(
        quantile_sorted(&stats, alpha),
        quantile_sorted(&stats, 1.0 - alpha),
        level,
        IntervalMethod::BootstrapPercentile,
    )
}

fn binomial_pmf(n: u64, p: f64, k: u64) -> f64 {
    (ln_binomial(n, k) + k as f64 * p.ln() + (n - k) as f64 * (1.0 - p).ln()).exp()
}

/// Smallest `k` with `P(X <= k) >= prob` for `X ~ Binomial(n, p)`.
pub fn binomial_quantile(n: u64, p: f64, prob: f64) -> u64 {
    if p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    let mut cdf = 0.0;
    for k in 0..=n {
        cdf += binomial_pmf(n, p, k);
        if cdf >= prob {
            return k;
        }
    }
    n
}

/// Acceptance interval for a fraction of valid bins: the central `level`
/// quantiles of Binomial(n_bins, coverage), divided by n_bins.
pub fn binomial_fv_interval(n_bins: usize, level: f64, coverage: f64) -> Result<Interval> {
    check_level(level)?;
    if n_bins == 0 {
        return Err(Error::param("binomial interval needs at least one bin"));
    }
    if !(0.0..=1.0).contains(&coverage) {
        return Err(Error::param(format!("coverage {coverage} not in [0, 1]")));
    }
    let n = n_bins as u64;
    let alpha = 0.5 * (1.0 - level);
    let lo = binomial_quantile(n, coverage, alpha);
    let hi = binomial_quantile(n, coverage, 1.0 - alpha);
    Interval::new(
        lo as f64 / n_bins as f64,
        hi as f64 / n_bins as f64,
        level,
        IntervalMethod::Binomial,
    )
}

/// Small-ensemble reference: z-scores of means of `n` normal draws follow a
/// Student-t with ν = n − 1, whose variance is ν/(ν − 2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub n: usize,
    pub nu: usize,
    pub target_variance: Option<f64>,
}

impl EnsembleSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::param(format!("ensemble size {n} < 2")));
        }
        Ok(Self {
            n,
            nu: n - 1,
            target_variance: ensemble_target_variance(n).ok(),
        })
    }
}

pub fn ensemble_target_variance(n: usize) -> Result<f64> {
    if n < 4 {
        return Err(Error::UndefinedVariance { n });
    }
    let nu = (n - 1) as f64;
    Ok(nu / (nu - 2.0))
}
