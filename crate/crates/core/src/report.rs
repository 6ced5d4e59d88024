//! Validation pipeline configuration, the self-contained report it
//! produces, and the verdicts derived from that report.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::analysis::{
    acf, average_calibration_report, fraction_valid, lz_analysis, reliability_diagram,
    reorder_perturbation, running_statistics, AcfSeries, AnalysisParams, AverageCalibration,
    LzResult, PerturbationSummary, ReliabilityCurve, RunningStats,
};
use crate::binning::{equal_count_bins, stratified_bins, BinCount, Scheme, DEFAULT_MIN_STRATUM};
use crate::dataset::{
    correlation_matrix, load_dataset, stratification_profile, ColumnMapping, CorrelationMatrix,
    Dataset, Loaded, Provenance, Variable,
};
use crate::error::{Error, Result};
use crate::stats::{self, StatEstimate, StatKind};

// ---------------------------------------------------------------------------
// Configuration

impl Serialize for BinCount {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            BinCount::Auto => s.serialize_str("auto"),
            BinCount::Fixed(n) => s.serialize_u64(*n as u64),
        }
    }
}

impl<'de> Deserialize<'de> for BinCount {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(u64),
            Text(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(0) => Err(serde::de::Error::custom("bin count must be >= 1")),
            Repr::Num(n) => Ok(BinCount::Fixed(n as usize)),
            Repr::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Settings of one `validate` run. Defaults: auto bins, equal-count
/// binning, minimum stratum 100, ZM and ZMS, level 0.95, 1000 bootstrap
/// resamples, 1000 permutations, seed 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub input: Option<PathBuf>,
    /// `E=<col>,uE=<col>` or `R=<col>,V=<col>[,uR=<col>][,uV=<col>]`.
    pub map: String,
    /// Conditioning variables; `uE` tests consistency, features adaptivity.
    pub by: Vec<String>,
    pub bins: BinCount,
    pub binning: Vec<Scheme>,
    pub min_stratum: usize,
    pub kinds: Vec<StatKind>,
    pub level: f64,
    pub boot: usize,
    /// Reordering replicates; 0 skips the perturbation study.
    pub perms: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub svg: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            input: None,
            map: "E=E,uE=uE".into(),
            by: Vec::new(),
            bins: BinCount::Auto,
            binning: vec![Scheme::EqualCount],
            min_stratum: DEFAULT_MIN_STRATUM,
            kinds: vec![StatKind::Zm, StatKind::Zms],
            level: stats::DEFAULT_LEVEL,
            boot: stats::DEFAULT_RESAMPLES,
            perms: 1000,
            seed: 0,
            out: None,
            svg: false,
        }
    }
}

impl AnalysisConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn mapping(&self) -> Result<ColumnMapping> {
        let features: Vec<String> = self
            .variables()
            .into_iter()
            .filter_map(|v| match v {
                Variable::Feature(name) => Some(name),
                Variable::Uncertainty => None,
            })
            .collect();
        Ok(ColumnMapping::parse(&self.map)?.with_features(&features))
    }

    pub fn variables(&self) -> Vec<Variable> {
        let mut out: Vec<Variable> = Vec::new();
        for v in self.by.iter().map(|s| Variable::parse(s)) {
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }

    pub fn params(&self) -> AnalysisParams {
        AnalysisParams {
            level: self.level,
            resamples: self.boot,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::Config(format!("level {} not in (0, 1)", self.level)));
        }
        if self.boot < stats::MIN_RESAMPLES {
            return Err(Error::Config(format!(
                "bootstrap resamples must be >= {}",
                stats::MIN_RESAMPLES
            )));
        }
        if self.min_stratum == 0 {
            return Err(Error::Config("minimum stratum count must be >= 1".into()));
        }
        if self.kinds.is_empty() {
            return Err(Error::Config("no statistic requested".into()));
        }
        if self.binning.is_empty() {
            return Err(Error::Config("no binning scheme requested".into()));
        }
        if self.perms == 1 {
            return Err(Error::Config("permutation count must be 0 or >= 2".into()));
        }
        ColumnMapping::parse(&self.map)?;
        Ok(())
    }

    /// Statistic the verdicts are based on: ZMS when requested.
    pub fn verdict_kind(&self) -> StatKind {
        if self.kinds.contains(&StatKind::Zms) {
            StatKind::Zms
        } else {
            self.kinds[0]
        }
    }
}

// ---------------------------------------------------------------------------
// Report types

/// Outcome of one analysis block; failures are recorded, not propagated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block<T> {
    Ok(T),
    Failed(String),
}

impl<T> Block<T> {
    fn from_result(r: Result<T>) -> Self {
        match r {
            Ok(v) => Block::Ok(v),
            Err(e) => Block::Failed(e.to_string()),
        }
    }

    pub fn ok(&self) -> Option<&T> {
        match self {
            Block::Ok(v) => Some(v),
            Block::Failed(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataSummary {
    pub variable: String,
    pub unique: usize,
    pub smallest_stratum: usize,
    pub largest_stratum: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub size: usize,
    pub rows_read: usize,
    pub rejected: usize,
    pub provenance: Provenance,
    pub strata: Vec<StrataSummary>,
    pub correlations: CorrelationMatrix,
}

/// Z against a variable, with running `<Z>` and `<Z^2>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Homoscedasticity {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub running: RunningStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinRow {
    pub representative: f64,
    pub low: f64,
    pub high: f64,
    pub count: usize,
    pub estimate: Option<StatEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LzBlock {
    pub kind: StatKind,
    pub bins: Vec<BinRow>,
    pub counted: usize,
    pub valid: usize,
    pub f_v: Option<f64>,
    /// `f_v` against Binomial(counted, level).
    pub fraction_valid: Option<StatEstimate>,
    pub acf: Block<AcfSeries>,
}

impl LzBlock {
    fn from_result(r: &LzResult) -> Self {
        let bins = r
            .partition
            .bins
            .iter()
            .zip(&r.estimates)
            .map(|(b, e)| BinRow {
                representative: b.representative,
                low: b.low,
                high: b.high,
                count: b.count(),
                estimate: *e,
            })
            .collect();
        Self {
            kind: r.kind,
            bins,
            counted: r.counted,
            valid: r.valid,
            f_v: r.f_v,
            fraction_valid: fraction_valid(r, r.params.level).ok(),
            acf: Block::from_result(acf(&r.series(), None, r.params.level)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeBlock {
    pub scheme: Scheme,
    pub n_bins: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub statistics: Vec<Block<LzBlock>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Consistency,
    Adaptivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableBlock {
    pub variable: Variable,
    pub target: Target,
    pub homoscedasticity: Block<Homoscedasticity>,
    pub schemes: Vec<Block<SchemeBlock>>,
    pub perturbations: Vec<Block<PerturbationSummary>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// The analysis behind the verdict failed to run.
    Undetermined,
}

impl Verdict {
    fn from_flag(flag: Option<bool>) -> Self {
        match flag {
            Some(true) => Verdict::Pass,
            Some(false) => Verdict::Fail,
            None => Verdict::Undetermined,
        }
    }

    pub fn passed(self) -> bool {
        self == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableVerdict {
    pub variable: String,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdicts {
    pub average_calibration: Verdict,
    pub consistency: Option<Verdict>,
    pub adaptivity: Vec<VariableVerdict>,
}

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_AVERAGE_CALIBRATION: i32 = 3;
pub const EXIT_CONSISTENCY: i32 = 4;
pub const EXIT_ADAPTIVITY: i32 = 5;

impl Verdicts {
    /// 0 when every verdict passes, otherwise the code of the first failed
    /// target in the order average calibration, consistency, adaptivity.
    pub fn exit_code(&self) -> i32 {
        if !self.average_calibration.passed() {
            EXIT_AVERAGE_CALIBRATION
        } else if self.consistency.is_some_and(|v| !v.passed()) {
            EXIT_CONSISTENCY
        } else if self.adaptivity.iter().any(|v| !v.verdict.passed()) {
            EXIT_ADAPTIVITY
        } else {
            EXIT_PASS
        }
    }

    pub fn first_failure(&self) -> Option<String> {
        if !self.average_calibration.passed() {
            return Some("average calibration".into());
        }
        if self.consistency.is_some_and(|v| !v.passed()) {
            return Some("consistency (uE)".into());
        }
        self.adaptivity
            .iter()
            .find(|v| !v.verdict.passed())
            .map(|v| format!("adaptivity ({})", v.variable))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: AnalysisConfig,
    pub dataset: DatasetSummary,
    pub average: Block<AverageCalibration>,
    pub variables: Vec<VariableBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reliability: Option<Block<ReliabilityCurve>>,
    pub verdicts: Verdicts,
}

impl ValidationReport {
    /// Verdicts recomputed from the estimates stored in the report.
    pub fn derive_verdicts(&self) -> Verdicts {
        let kind = self.config.verdict_kind();
        let average_calibration =
            Verdict::from_flag(self.average.ok().map(|a| a.zms.valid));
        let variable_verdict = |block: &VariableBlock| {
            let flag = block
                .schemes
                .first()
                .and_then(Block::ok)
                .and_then(|s| s.statistics.iter().filter_map(Block::ok).find(|l| l.kind == kind))
                .and_then(|l| l.fraction_valid)
                .map(|fv| fv.valid);
            Verdict::from_flag(flag)
        };
        let mut consistency = None;
        let mut adaptivity = Vec::new();
        for block in &self.variables {
            match block.target {
                Target::Consistency => consistency = Some(variable_verdict(block)),
                Target::Adaptivity => adaptivity.push(VariableVerdict {
                    variable: block.variable.name().to_string(),
                    verdict: variable_verdict(block),
                }),
            }
        }
        Verdicts {
            average_calibration,
            consistency,
            adaptivity,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.verdicts.exit_code()
    }

    pub fn variable(&self, name: &str) -> Option<&VariableBlock> {
        self.variables.iter().find(|v| v.variable.name() == name)
    }

    /// Binned block for a variable, scheme and statistic, if it ran.
    pub fn lz(&self, variable: &str, scheme: Scheme, kind: StatKind) -> Option<&LzBlock> {
        self.variable(variable)?
            .schemes
            .iter()
            .filter_map(Block::ok)
            .find(|s| s.scheme == scheme)?
            .statistics
            .iter()
            .filter_map(Block::ok)
            .find(|l| l.kind == kind)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

// ---------------------------------------------------------------------------
// Pipeline

/// Homoscedasticity window: ⌊M/100⌋, at least 2.
pub fn running_window(size: usize) -> usize {
    (size / 100).max(2)
}

fn summarize_dataset(loaded: &Loaded, variables: &[Variable]) -> DatasetSummary {
    let d = &loaded.dataset;
    let strata = variables
        .iter()
        .filter_map(|v| {
            let values = d.values(v).ok()?;
            let p = stratification_profile(v.name(), values).ok()?;
            Some(StrataSummary {
                variable: v.name().to_string(),
                unique: p.unique(),
                smallest_stratum: p.counts.iter().copied().min().unwrap_or(0),
                largest_stratum: p.counts.iter().copied().max().unwrap_or(0),
            })
        })
        .collect();
    DatasetSummary {
        size: d.len(),
        rows_read: loaded.rows_read,
        rejected: loaded.rejected.len(),
        provenance: d.provenance().clone(),
        strata,
        correlations: correlation_matrix(d),
    }
}

fn scheme_block(
    d: &Dataset,
    variable: &Variable,
    scheme: Scheme,
    config: &AnalysisConfig,
) -> Result<SchemeBlock> {
    let values = d.values(variable)?;
    let mut warnings = Vec::new();
    let partition = match scheme {
        Scheme::EqualCount => equal_count_bins(variable.name(), values, config.bins.resolve(d.len()))?,
        Scheme::Stratified => {
            let p = stratified_bins(variable.name(), values, config.min_stratum)?;
            if p.undersized {
                warnings.push(format!(
                    "fewer than {} points: single undersized stratum",
                    config.min_stratum
                ));
            }
            p
        }
        Scheme::SlidingWindow => {
            return Err(Error::Config("sliding windows are not a validation binning".into()))
        }
    };
    let params = config.params();
    let statistics = config
        .kinds
        .iter()
        .map(|&kind| {
            Block::from_result(
                lz_analysis(d, variable, &partition, kind, &params).map(|r| {
                    let block = LzBlock::from_result(&r);
                    let excluded = r.excluded_bins();
                    if !excluded.is_empty() {
                        warnings.push(format!(
                            "{kind}: {} bin(s) with < 2 points excluded",
                            excluded.len()
                        ));
                    }
                    block
                }),
            )
        })
        .collect();
    warnings.dedup();
    Ok(SchemeBlock {
        scheme,
        n_bins: partition.len(),
        warnings,
        statistics,
    })
}

fn variable_block(d: &Dataset, variable: &Variable, config: &AnalysisConfig) -> VariableBlock {
    let homoscedasticity = Block::from_result((|| {
        let running = running_statistics(d, variable, running_window(d.len()), None)?;
        Ok(Homoscedasticity {
            x: d.values(variable)?.to_vec(),
            z: d.zscores().0,
            running,
        })
    })());
    let schemes = config
        .binning
        .iter()
        .map(|&s| Block::from_result(scheme_block(d, variable, s, config)))
        .collect();
    let perturbations = if config.perms >= 2 && config.binning.contains(&Scheme::EqualCount) {
        config
            .kinds
            .iter()
            .map(|&kind| {
                Block::from_result(reorder_perturbation(
                    d,
                    variable,
                    config.bins.resolve(d.len()),
                    kind,
                    config.perms,
                    &config.params(),
                ))
            })
            .collect()
    } else {
        Vec::new()
    };
    VariableBlock {
        variable: variable.clone(),
        target: if variable.is_uncertainty() {
            Target::Consistency
        } else {
            Target::Adaptivity
        },
        homoscedasticity,
        schemes,
        perturbations,
    }
}

/// Run every requested analysis on an already loaded dataset.
pub fn validate_loaded(loaded: &Loaded, config: &AnalysisConfig) -> Result<ValidationReport> {
    config.validate()?;
    let d = &loaded.dataset;
    let variables = config.variables();
    let average = Block::from_result(average_calibration_report(d, &config.params()));
    let blocks: Vec<VariableBlock> = variables
        .iter()
        .map(|v| variable_block(d, v, config))
        .collect();
    let reliability = variables
        .contains(&Variable::Uncertainty)
        .then(|| Block::from_result(reliability_diagram(d, config.bins.resolve(d.len()))));
    let mut report = ValidationReport {
        config: config.clone(),
        dataset: summarize_dataset(loaded, &variables),
        average,
        variables: blocks,
        reliability,
        verdicts: Verdicts {
            average_calibration: Verdict::Undetermined,
            consistency: None,
            adaptivity: Vec::new(),
        },
    };
    report.verdicts = report.derive_verdicts();
    Ok(report)
}

pub fn validate_dataset(d: &Dataset, config: &AnalysisConfig) -> Result<ValidationReport> {
    validate_loaded(
        &Loaded {
            dataset: d.clone(),
            rows_read: d.len(),
            rejected: Vec::new(),
        },
        config,
    )
}

/// Load the configured input and run the pipeline.
pub fn run_validate(config: &AnalysisConfig) -> Result<ValidationReport> {
    config.validate()?;
    let input = config
        .input
        .as_ref()
        .ok_or_else(|| Error::Config("no input file given".into()))?;
    let loaded = load_dataset(input, &config.mapping()?)?;
    validate_loaded(&loaded, config)
}
