//! Partitions of a dataset along one conditioning variable.
//!
//! Bin member lists hold row indices in ascending order, so a bin is a set
//! of rows regardless of how it was built. Bins are listed by increasing
//! representative value.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_MIN_STRATUM: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    #[serde(alias = "equal")]
    EqualCount,
    #[serde(alias = "strata")]
    Stratified,
    #[serde(alias = "window")]
    SlidingWindow,
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "equal" | "equal-count" => Ok(Scheme::EqualCount),
            "strata" | "stratified" => Ok(Scheme::Stratified),
            "window" | "sliding-window" => Ok(Scheme::SlidingWindow),
            other => Err(Error::Config(format!("unknown binning scheme `{other}` (equal|strata)"))),
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::EqualCount => "equal",
            Scheme::Stratified => "strata",
            Scheme::SlidingWindow => "window",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub members: Vec<usize>,
    /// Mean of the conditioning variable over the members.
    pub representative: f64,
    pub low: f64,
    pub high: f64,
}

impl Bin {
    pub fn count(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    pub variable: String,
    pub scheme: Scheme,
    pub bins: Vec<Bin>,
    /// Stratified scheme only: the data held fewer points than the minimum,
    /// so a single undersized bin was returned.
    #[serde(default)]
    pub undersized: bool,
}

impl BinPartition {
    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.bins.iter().map(Bin::count).collect()
    }

    pub fn representatives(&self) -> Vec<f64> {
        self.bins.iter().map(|b| b.representative).collect()
    }

    /// Rows covered, counting overlaps (sliding windows) more than once.
    pub fn total_members(&self) -> usize {
        self.bins.iter().map(Bin::count).sum()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.bins
            .iter()
            .filter_map(|b| b.members.last().copied())
            .max()
    }

    /// Map member indices through `order` (row `k` here is row `order[k]`
    /// of the original table) and restore ascending member order.
    pub fn remap(&self, order: &[usize]) -> Self {
        let mut out = self.clone();
        for bin in &mut out.bins {
            for m in &mut bin.members {
                *m = order[*m];
            }
            bin.members.sort_unstable();
        }
        out
    }
}

/// Requested number of bins: fixed, or `auto` = round(√M).
/// Serialized as `"auto"` or an integer.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum BinCount {
    #[default]
    Auto,
    Fixed(usize),
}

impl BinCount {
    pub fn resolve(self, size: usize) -> usize {
        match self {
            BinCount::Auto => ((size as f64).sqrt().round() as usize).max(1),
            BinCount::Fixed(n) => n,
        }
    }
}

impl FromStr for BinCount {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "auto" => Ok(BinCount::Auto),
            n => n
                .parse::<usize>()
                .ok()
                .filter(|&n| n > 0)
                .map(BinCount::Fixed)
                .ok_or_else(|| Error::Config(format!("bin count `{n}` is not `auto` or a positive integer"))),
        }
    }
}

impl fmt::Display for BinCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinCount::Auto => f.write_str("auto"),
            BinCount::Fixed(n) => write!(f, "{n}"),
        }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidValue {
            index,
            reason: "non-finite conditioning value".into(),
        });
    }
    Ok(())
}

/// Indices sorted by value; ties keep input order.
fn stable_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order
}

/// Bin from a run of the value-sorted order. The representative is summed
/// in sorted order so it depends only on the multiset of values.
fn bin_from_sorted_run(values: &[f64], run: &[usize]) -> Bin {
    let sum: f64 = run.iter().map(|&i| values[i]).sum();
    let mut members = run.to_vec();
    members.sort_unstable();
    Bin {
        members,
        representative: sum / run.len() as f64,
        low: values[run[0]],
        high: values[run[run.len() - 1]],
    }
}

/// Equal-count bins over the stably sorted values. Sizes are ⌈M/N⌉ for the
/// first `M mod N` bins and ⌊M/N⌋ after that. Tied values are split in
/// input order, which makes the result order-sensitive on stratified data.
pub fn equal_count_bins(variable: &str, values: &[f64], n_bins: usize) -> Result<BinPartition> {
    check_finite(values)?;
    let size = values.len();
    if n_bins == 0 || n_bins > size {
        return Err(Error::InfeasiblePartition { bins: n_bins, size });
    }
    let order = stable_order(values);
    let base = size / n_bins;
    let extra = size % n_bins;
    let mut bins = Vec::with_capacity(n_bins);
    let mut start = 0;
    for b in 0..n_bins {
        let len = base + usize::from(b < extra);
        bins.push(bin_from_sorted_run(values, &order[start..start + len]));
        start += len;
    }
    Ok(BinPartition {
        variable: variable.to_string(),
        scheme: Scheme::EqualCount,
        bins,
        undersized: false,
    })
}

/// Strata-preserving bins. Starting from the exact strata, the smallest
/// stratum below `min_count` (lowest value on ties) is merged into its
/// smaller neighbour (left on ties) until none is left. The merged value
/// is the count-weighted mean. Independent of row order.
pub fn stratified_bins(variable: &str, values: &[f64], min_count: usize) -> Result<BinPartition> {
    check_finite(values)?;
    if min_count == 0 {
        return Err(Error::param("minimum stratum count must be >= 1"));
    }
    if values.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, have: 0 });
    }
    let order = stable_order(values);
    let mut strata: Vec<Bin> = Vec::new();
    for &i in &order {
        let v = values[i];
        match strata.last_mut() {
            Some(last) if last.high == v => last.members.push(i),
            _ => strata.push(Bin {
                members: vec![i],
                representative: v,
                low: v,
                high: v,
            }),
        }
    }

    while strata.len() > 1 {
        let Some(target) = strata
            .iter()
            .enumerate()
            .filter(|(_, s)| s.count() < min_count)
            .min_by_key(|(_, s)| s.count())
            .map(|(i, _)| i)
        else {
            break;
        };
        let neighbour = match (target.checked_sub(1), strata.get(target + 1)) {
            (Some(left), Some(right)) => {
                if strata[left].count() <= right.count() {
                    left
                } else {
                    target + 1
                }
            }
            (Some(left), None) => left,
            (None, _) => target + 1,
        };
        let (a, b) = if neighbour < target {
            (neighbour, target)
        } else {
            (target, neighbour)
        };
        let right = strata.remove(b);
        let left = &mut strata[a];
        let (nl, nr) = (left.count() as f64, right.count() as f64);
        left.representative = (nl * left.representative + nr * right.representative) / (nl + nr);
        left.high = right.high;
        left.members.extend(right.members);
    }

    for s in &mut strata {
        s.members.sort_unstable();
    }
    let undersized = strata.len() == 1 && strata[0].count() < min_count;
    Ok(BinPartition {
        variable: variable.to_string(),
        scheme: Scheme::Stratified,
        bins: strata,
        undersized,
    })
}

/// Step used when none is given: max(1, ⌊window/10⌋).
pub fn default_step(window: usize) -> usize {
    (window / 10).max(1)
}

/// Overlapping windows of `window` consecutive points in sorted order,
/// advanced by `step` (default [`default_step`]).
pub fn sliding_window(
    variable: &str,
    values: &[f64],
    window: usize,
    step: Option<usize>,
) -> Result<BinPartition> {
    check_finite(values)?;
    let size = values.len();
    if window < 2 || window > size {
        return Err(Error::InfeasiblePartition { bins: window, size });
    }
    let step = step.unwrap_or_else(|| default_step(window));
    if step == 0 {
        return Err(Error::param("sliding window step must be >= 1"));
    }
    let order = stable_order(values);
    let bins = (0..=size - window)
        .step_by(step)
        .map(|start| bin_from_sorted_run(values, &order[start..start + window]))
        .collect();
    Ok(BinPartition {
        variable: variable.to_string(),
        scheme: Scheme::SlidingWindow,
        bins,
        undersized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn strata_values(counts: &[usize]) -> Vec<f64> {
        counts
            .iter()
            .enumerate()
            .flat_map(|(k, &c)| std::iter::repeat_n(k as f64, c))
            .collect()
    }

    #[test]
    fn equal_count_sizes() {
        let values: Vec<f64> = (0..13885).map(|i| (i % 977) as f64).collect();
        let p = equal_count_bins("x", &values, 100).unwrap();
        let counts = p.counts();
        assert_eq!(counts.iter().filter(|&&c| c == 139).count(), 85);
        assert_eq!(counts.iter().filter(|&&c| c == 138).count(), 15);
        assert!(counts[..85].iter().all(|&c| c == 139));
        assert_eq!(85 * 139 + 15 * 138, 13885);
    }

    #[test]
    fn equal_count_identity_partition() {
        let values = [0.5, 1.5, 2.5, 3.5];
        let p = equal_count_bins("x", &values, 4).unwrap();
        for (k, b) in p.bins.iter().enumerate() {
            assert_eq!(b.members, vec![k]);
            assert_eq!(b.representative, values[k]);
        }
        assert!(matches!(
            equal_count_bins("x", &values, 5),
            Err(Error::InfeasiblePartition { bins: 5, size: 4 })
        ));
        assert!(equal_count_bins("x", &values, 0).is_err());
    }

    #[test]
    fn equal_count_ties_split_in_input_order() {
        let values = [1.0, 1.0, 1.0, 1.0];
        let p = equal_count_bins("x", &values, 2).unwrap();
        assert_eq!(p.bins[0].members, vec![0, 1]);
        assert_eq!(p.bins[1].members, vec![2, 3]);
    }

    #[test]
    fn auto_bin_count() {
        assert_eq!(BinCount::Auto.resolve(13885), 118);
        assert_eq!(BinCount::Auto.resolve(10_000), 100);
        assert_eq!(BinCount::Auto.resolve(1), 1);
        assert_eq!("auto".parse::<BinCount>().unwrap(), BinCount::Auto);
        assert_eq!("12".parse::<BinCount>().unwrap(), BinCount::Fixed(12));
        assert!("0".parse::<BinCount>().is_err());
        assert!("x".parse::<BinCount>().is_err());
    }

    #[test]
    fn stratified_merge_trace() {
        let values = strata_values(&[50, 60, 300]);
        let p = stratified_bins("x", &values, 100).unwrap();
        assert_eq!(p.counts(), vec![110, 300]);
        let rep = (50.0 * 0.0 + 60.0 * 1.0) / 110.0;
        assert_eq!(p.bins[0].representative, rep);
        assert_eq!((p.bins[0].low, p.bins[0].high), (0.0, 1.0));
        assert!(!p.undersized);
    }

    #[test]
    fn stratified_tie_breaks() {
        // The 10-point stratum has equal neighbours (40, 40) and joins the left one:
        // (200, 50, 40, 41); then 40 joins its smaller neighbour 41: (200, 50, 81).
        // Joining right first would end at (200, 131).
        let p = stratified_bins("x", &strata_values(&[200, 40, 10, 40, 41]), 45).unwrap();
        assert_eq!(p.counts(), vec![200, 50, 81]);
        assert_eq!(p.bins[1].representative, (40.0 * 1.0 + 10.0 * 2.0) / 50.0);
        assert_eq!(p.bins[2].representative, (40.0 * 3.0 + 41.0 * 4.0) / 81.0);
    }

    #[test]
    fn stratified_fixed_point() {
        let values = strata_values(&[100, 150, 120]);
        let p = stratified_bins("x", &values, 100).unwrap();
        assert_eq!(p.counts(), vec![100, 150, 120]);
        assert_eq!(p.representatives(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn stratified_undersized_total() {
        let p = stratified_bins("x", &strata_values(&[3, 4, 5]), 100).unwrap();
        assert_eq!(p.len(), 1);
        assert!(p.undersized);
        assert_eq!(p.bins[0].count(), 12);
    }

    #[test]
    fn sliding_window_examples() {
        let values: Vec<f64> = (0..13885).rev().map(|i| i as f64).collect();
        let window = 13885 / 100;
        assert_eq!(window, 138);
        assert_eq!(default_step(window), 13);
        let p = sliding_window("x", &values, window, None).unwrap();
        let mut first: Vec<usize> = (0..138).map(|k| 13884 - k).collect();
        first.sort_unstable();
        assert_eq!(p.bins[0].members, first);
        assert!(p.bins.windows(2).all(|w| w[0].representative <= w[1].representative));

        let all = sliding_window("x", &values[..50], 50, None).unwrap();
        assert_eq!(all.len(), 1);
        assert_eq!(all.bins[0].count(), 50);
        assert!(sliding_window("x", &values[..50], 51, None).is_err());
        assert!(sliding_window("x", &values[..50], 1, None).is_err());
    }

    #[test]
    fn remap_restores_original_rows() {
        let values = [3.0, 1.0, 2.0, 0.0];
        let order = [2usize, 0, 3, 1];
        let shuffled: Vec<f64> = order.iter().map(|&i| values[i]).collect();
        let p = equal_count_bins("x", &shuffled, 2).unwrap().remap(&order);
        let q = equal_count_bins("x", &values, 2).unwrap();
        assert_eq!(p, q);
    }

    fn shuffled(values: &[f64], seed: u64) -> (Vec<f64>, Vec<usize>) {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        (order.iter().map(|&i| values[i]).collect(), order)
    }

    proptest! {
        #[test]
        fn equal_count_partition_invariants(
            values in prop::collection::vec(0u8..20, 1..300),
            n in 1usize..40
        ) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            prop_assume!(n <= values.len());
            let p = equal_count_bins("x", &values, n).unwrap();
            let mut all: Vec<usize> = p.bins.iter().flat_map(|b| b.members.clone()).collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..values.len()).collect::<Vec<_>>());
            let c = p.counts();
            prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
            prop_assert!(p.bins.windows(2).all(|w| w[0].representative <= w[1].representative));
        }

        #[test]
        fn equal_count_distinct_values_order_free(
            values in prop::collection::btree_set(-1000i32..1000, 2..200),
            n in 1usize..20,
            seed in any::<u64>()
        ) {
            let values: Vec<f64> = values.into_iter().map(f64::from).collect();
            prop_assume!(n <= values.len());
            let (sh, order) = shuffled(&values, seed);
            let a = equal_count_bins("x", &values, n).unwrap();
            let b = equal_count_bins("x", &sh, n).unwrap().remap(&order);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn stratified_order_free_and_valid(
            values in prop::collection::vec(0u8..30, 1..400),
            min_count in 1usize..60,
            seed in any::<u64>()
        ) {
            let values: Vec<f64> = values.into_iter().map(|v| f64::from(v) * 0.1).collect();
            let (sh, order) = shuffled(&values, seed);
            let a = stratified_bins("x", &values, min_count).unwrap();
            let b = stratified_bins("x", &sh, min_count).unwrap();
            prop_assert_eq!(a.counts(), b.counts());
            for (x, y) in a.bins.iter().zip(&b.bins) {
                prop_assert_eq!(x.representative.to_bits(), y.representative.to_bits());
                prop_assert_eq!((x.low, x.high), (y.low, y.high));
            }
            prop_assert_eq!(&a, &b.remap(&order));
            if !a.undersized {
                prop_assert!(a.counts().iter().all(|&c| c >= min_count));
            }
            prop_assert_eq!(a.total_members(), values.len());
            prop_assert!(a.bins.windows(2).all(|w| w[0].representative <= w[1].representative));
        }
    }
}
