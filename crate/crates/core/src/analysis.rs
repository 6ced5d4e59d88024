//! Local z-score analyses: binned `<Z>`, `<Z^2>` and `Var(Z)` with
//! confidence intervals along any conditioning variable, the fraction of
//! valid bins, serial correlation of the binned series, reordering
//! sensitivity, and reliability-diagram statistics.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binning::{equal_count_bins, sliding_window, BinPartition, Scheme};
use crate::dataset::{Dataset, Variable, ZScores};
use crate::error::{Error, Result};
use crate::seed::{self, derive_seed};
use crate::stats::{self, Interval, StatEstimate, StatKind};

/// Level, bootstrap size and root seed shared by one analysis run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        Self {
            level: stats::DEFAULT_LEVEL,
            resamples: stats::DEFAULT_RESAMPLES,
            seed: 0,
        }
    }
}

impl AnalysisParams {
    /// Seed of the bootstrap for bin `bin` of statistic `kind`. Bin 0 is also
    /// used by the whole-dataset estimate, so a single-bin analysis repeats it.
    pub fn bootstrap_seed(&self, kind: StatKind, bin: usize) -> u64 {
        derive_seed(self.seed, &[seed::STREAM_BOOTSTRAP, kind.tag(), bin as u64])
    }

    fn estimate(&self, kind: StatKind, sample: &[f64], bin: usize) -> Result<StatEstimate> {
        stats::estimate(kind, sample, self.level, self.resamples, self.bootstrap_seed(kind, bin))
    }
}

// ---------------------------------------------------------------------------
// Average calibration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageCalibration {
    pub zm: StatEstimate,
    pub zms: StatEstimate,
    pub zvar: StatEstimate,
}

impl AverageCalibration {
    pub fn get(&self, kind: StatKind) -> &StatEstimate {
        match kind {
            StatKind::Zm => &self.zm,
            StatKind::Zms => &self.zms,
            StatKind::Zvar => &self.zvar,
        }
    }
}

pub fn average_calibration_report(d: &Dataset, params: &AnalysisParams) -> Result<AverageCalibration> {
    let z = d.zscores();
    Ok(AverageCalibration {
        zm: params.estimate(StatKind::Zm, z.values(), 0)?,
        zms: params.estimate(StatKind::Zms, z.values(), 0)?,
        zvar: params.estimate(StatKind::Zvar, z.values(), 0)?,
    })
}

// ---------------------------------------------------------------------------
// Binned analysis

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LzResult {
    pub variable: Variable,
    pub kind: StatKind,
    pub partition: BinPartition,
    /// One entry per bin; `None` marks a bin too small for an estimate.
    pub estimates: Vec<Option<StatEstimate>>,
    /// Bins with an estimate.
    pub counted: usize,
    /// Bins with an estimate whose flag is set.
    pub valid: usize,
    /// `valid / counted`; absent when no bin could be counted.
    pub f_v: Option<f64>,
    /// Binomial acceptance interval for `f_v` at nominal coverage = level.
    pub f_v_interval: Option<Interval>,
    pub params: AnalysisParams,
}

impl LzResult {
    pub fn excluded_bins(&self) -> Vec<usize> {
        self.estimates
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_none())
            .map(|(i, _)| i)
            .collect()
    }

    /// Per-bin statistic values of the counted bins, in bin order.
    pub fn series(&self) -> Vec<f64> {
        self.estimates.iter().flatten().map(|e| e.value).collect()
    }
}

fn check_partition(d: &Dataset, variable: &Variable, partition: &BinPartition) -> Result<()> {
    d.values(variable)?;
    if partition.variable != variable.name() {
        return Err(Error::PartitionMismatch(format!(
            "partition built on `{}`, analysis conditions on `{}`",
            partition.variable, variable
        )));
    }
    if let Some(max) = partition.max_index() {
        if max >= d.len() {
            return Err(Error::PartitionMismatch(format!(
                "row index {max} out of range for {} rows",
                d.len()
            )));
        }
    }
    if partition.scheme != Scheme::SlidingWindow && partition.total_members() != d.len() {
        return Err(Error::PartitionMismatch(format!(
            "partition covers {} rows, dataset has {}",
            partition.total_members(),
            d.len()
        )));
    }
    Ok(())
}

fn binned_estimates(
    z: &ZScores,
    partition: &BinPartition,
    kind: StatKind,
    params: &AnalysisParams,
) -> Result<Vec<Option<StatEstimate>>> {
    partition
        .bins
        .par_iter()
        .enumerate()
        .map(|(b, bin)| {
            if bin.count() < 2 {
                return Ok(None);
            }
            params.estimate(kind, &z.select(&bin.members), b).map(Some)
        })
        .collect()
}

fn summarize(
    variable: &Variable,
    kind: StatKind,
    partition: BinPartition,
    estimates: Vec<Option<StatEstimate>>,
    params: &AnalysisParams,
) -> Result<LzResult> {
    let counted = estimates.iter().flatten().count();
    let valid = estimates.iter().flatten().filter(|e| e.valid).count();
    let (f_v, f_v_interval) = if counted > 0 {
        (
            Some(valid as f64 / counted as f64),
            Some(stats::binomial_fv_interval(counted, params.level, params.level)?),
        )
    } else {
        (None, None)
    };
    Ok(LzResult {
        variable: variable.clone(),
        kind,
        partition,
        estimates,
        counted,
        valid,
        f_v,
        f_v_interval,
        params: *params,
    })
}

/// Binned statistic of the z-scores of each bin's members. Conditioning on
/// the uncertainty tests consistency; on a feature, adaptivity.
pub fn lz_analysis(
    d: &Dataset,
    variable: &Variable,
    partition: &BinPartition,
    kind: StatKind,
    params: &AnalysisParams,
) -> Result<LzResult> {
    check_partition(d, variable, partition)?;
    let estimates = binned_estimates(&d.zscores(), partition, kind, params)?;
    summarize(variable, kind, partition.clone(), estimates, params)
}

/// `f_v` tested against Binomial(counted bins, `coverage`).
pub fn fraction_valid(r: &LzResult, coverage: f64) -> Result<StatEstimate> {
    let f_v = r.f_v.ok_or(Error::NoCountedBins)?;
    let interval = stats::binomial_fv_interval(r.counted, r.params.level, coverage)?;
    Ok(StatEstimate::acceptance(f_v, interval, coverage))
}

// ---------------------------------------------------------------------------
// Autocorrelation

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcfSeries {
    pub values: Vec<f64>,
    /// Half-width of the white-noise band, z_{(1+level)/2}/√n.
    pub band: f64,
    pub level: f64,
}

impl AcfSeries {
    pub fn max_lag(&self) -> usize {
        self.values.len() - 1
    }
}

pub fn default_max_lag(len: usize) -> usize {
    (len / 4).min(20)
}

pub fn acf(series: &[f64], max_lag: Option<usize>, level: f64) -> Result<AcfSeries> {
    let n = series.len();
    let max_lag = max_lag.unwrap_or_else(|| default_max_lag(n));
    if n < max_lag + 2 {
        return Err(Error::InsufficientSample {
            needed: max_lag + 2,
            have: n,
        });
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::param(format!("level {level} not in (0, 1)")));
    }
    let m = stats::mean(series);
    let dev: Vec<f64> = series.iter().map(|x| x - m).collect();
    let denom: f64 = dev.iter().map(|d| d * d).sum();
    if denom == 0.0 {
        return Err(Error::UndefinedAcf);
    }
    let mut values = Vec::with_capacity(max_lag + 1);
    values.push(1.0);
    for k in 1..=max_lag {
        let num: f64 = dev[..n - k].iter().zip(&dev[k..]).map(|(a, b)| a * b).sum();
        values.push((num / denom).clamp(-1.0, 1.0));
    }
    Ok(AcfSeries {
        values,
        band: stats::normal_quantile(0.5 * (1.0 + level)) / (n as f64).sqrt(),
        level,
    })
}

// ---------------------------------------------------------------------------
// Reordering sensitivity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSummary {
    pub variable: Variable,
    pub kind: StatKind,
    pub n_bins: usize,
    pub f_v: Vec<f64>,
    pub mean: f64,
    /// Empirical 2.5/97.5 percentiles of the per-permutation `f_v`.
    pub interval: Interval,
    /// Mean after adding binomial noise to each replicate.
    pub combined_mean: f64,
    /// Percentiles after adding binomial noise to each replicate.
    pub combined_interval: Interval,
}

/// Recompute `f_v` for `n_perm` random row orders with equal-count bins.
/// The permutation and binomial-noise streams are separate from the
/// bootstrap streams; bootstrap seeds depend only on bin position, so the
/// per-bin intervals do not change with `n_perm`.
pub fn reorder_perturbation(
    d: &Dataset,
    variable: &Variable,
    n_bins: usize,
    kind: StatKind,
    n_perm: usize,
    params: &AnalysisParams,
) -> Result<PerturbationSummary> {
    if n_perm < 2 {
        return Err(Error::param("reorder perturbation needs at least 2 permutations"));
    }
    let values = d.values(variable)?;
    let z = d.zscores();
    let f_v: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|p| {
            let mut order: Vec<usize> = (0..d.len()).collect();
            order.shuffle(&mut seed::rng_for(params.seed, &[seed::STREAM_PERMUTATION, p as u64]));
            let permuted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            let partition = equal_count_bins(variable.name(), &permuted, n_bins)?.remap(&order);
            let estimates = binned_estimates(&z, &partition, kind, params)?;
            let counted = estimates.iter().flatten().count();
            if counted == 0 {
                return Err(Error::NoCountedBins);
            }
            let valid = estimates.iter().flatten().filter(|e| e.valid).count();
            Ok(valid as f64 / counted as f64)
        })
        .collect::<Result<_>>()?;

    let combined: Vec<f64> = f_v
        .iter()
        .enumerate()
        .map(|(p, &f)| {
            let mut rng = seed::rng_for(params.seed, &[seed::STREAM_BINOMIAL, p as u64]);
            let draw = Binomial::new(n_bins as u64, f)
                .map_err(|e| Error::param(e.to_string()))?;
            Ok(rng.sample(draw) as f64 / n_bins as f64)
        })
        .collect::<Result<_>>()?;

    let summary = |xs: &[f64]| -> Result<(f64, Interval)> {
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        let interval = Interval::new(
            stats::quantile_sorted(&sorted, 0.025),
            stats::quantile_sorted(&sorted, 0.975),
            0.95,
            stats::IntervalMethod::BootstrapPercentile,
        )?;
        Ok((stats::mean(xs), interval))
    };
    let (mean, interval) = summary(&f_v)?;
    let (combined_mean, mut combined_interval) = summary(&combined)?;
    combined_interval.method = stats::IntervalMethod::Binomial;
    Ok(PerturbationSummary {
        variable: variable.clone(),
        kind,
        n_bins,
        f_v,
        mean,
        interval,
        combined_mean,
        combined_interval,
    })
}

// ---------------------------------------------------------------------------
// Reliability diagram and RCE

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBin {
    pub count: usize,
    pub rmv: f64,
    pub rmse: f64,
    pub rce: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityCurve {
    pub bins: Vec<ReliabilityBin>,
    pub rce: f64,
}

fn root_mean_square(x: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = x.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n as f64).sqrt()
}

/// Relative calibration error (RMV − RMSE)/RMV.
pub fn rce(errors: &[f64], uncertainties: &[f64]) -> Result<f64> {
    if errors.len() != uncertainties.len() {
        return Err(Error::LengthMismatch {
            expected: errors.len(),
            got: uncertainties.len(),
        });
    }
    if errors.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, have: 0 });
    }
    if uncertainties.iter().any(|u| !(*u > 0.0)) {
        return Err(Error::param("uncertainties must be > 0"));
    }
    let rmv = root_mean_square(uncertainties.iter().copied());
    let rmse = root_mean_square(errors.iter().copied());
    Ok((rmv - rmse) / rmv)
}

/// RMSE against RMV over equal-count bins of the uncertainty.
pub fn reliability_diagram(d: &Dataset, n_bins: usize) -> Result<ReliabilityCurve> {
    let partition = equal_count_bins("uE", d.uncertainties(), n_bins)?;
    let bins = partition
        .bins
        .iter()
        .map(|bin| {
            let e: Vec<f64> = bin.members.iter().map(|&i| d.errors()[i]).collect();
            let u: Vec<f64> = bin.members.iter().map(|&i| d.uncertainties()[i]).collect();
            let rmv = root_mean_square(u.iter().copied());
            let rmse = root_mean_square(e.iter().copied());
            ReliabilityBin {
                count: bin.count(),
                rmv,
                rmse,
                rce: (rmv - rmse) / rmv,
            }
        })
        .collect();
    Ok(ReliabilityCurve {
        bins,
        rce: rce(d.errors(), d.uncertainties())?,
    })
}

// ---------------------------------------------------------------------------
// Running statistics

/// Running `<Z>` and `<Z^2>` over sliding windows of a variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningStats {
    pub window: usize,
    pub step: usize,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub mean_squares: Vec<f64>,
}

pub fn running_statistics(
    d: &Dataset,
    variable: &Variable,
    window: usize,
    step: Option<usize>,
) -> Result<RunningStats> {
    let values = d.values(variable)?;
    let partition = sliding_window(variable.name(), values, window, step)?;
    let z = d.zscores();
    let mut out = RunningStats {
        window,
        step: step.unwrap_or_else(|| crate::binning::default_step(window)),
        x: Vec::with_capacity(partition.len()),
        mean: Vec::with_capacity(partition.len()),
        mean_squares: Vec::with_capacity(partition.len()),
    };
    for bin in &partition.bins {
        let sample = z.select(&bin.members);
        out.x.push(bin.representative);
        out.mean.push(stats::mean(&sample));
        out.mean_squares.push(stats::mean_squares(&sample));
    }
    Ok(out)
}
