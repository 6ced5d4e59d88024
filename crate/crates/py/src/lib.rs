//! Python bindings. Reports cross the boundary as JSON text.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use zcal::analysis::{self, AnalysisParams};
use zcal::binning::{self, BinCount, BinPartition};
use zcal::dataset::{self, ColumnMapping, Variable};
use zcal::report::{self, AnalysisConfig};
use zcal::stats::{self, StatKind};
use zcal::synth::{self, Defect, SynthSpec, UncertaintyLaw};
use zcal::Error;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for zcal::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn parse_kind(name: &str) -> PyResult<StatKind> {
    name.parse().py()
}

/// A point estimate with its interval and validity flag.
#[pyclass(name = "StatEstimate", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyStatEstimate {
    value: f64,
    low: f64,
    high: f64,
    level: f64,
    target: f64,
    valid: bool,
}

impl From<stats::StatEstimate> for PyStatEstimate {
    fn from(e: stats::StatEstimate) -> Self {
        Self {
            value: e.value,
            low: e.interval.low,
            high: e.interval.high,
            level: e.interval.level,
            target: e.target,
            valid: e.valid,
        }
    }
}

#[pymethods]
impl PyStatEstimate {
    fn __repr__(&self) -> String {
        format!(
            "StatEstimate(value={}, interval=[{}, {}], target={}, valid={})",
            self.value,
            self.low,
            self.high,
            self.target,
            if self.valid { "True" } else { "False" }
        )
    }
}

/// Errors, uncertainties and named feature columns.
#[pyclass(name = "Dataset", frozen, skip_from_py_object)]
struct PyDataset(dataset::Dataset);

#[pymethods]
impl PyDataset {
    #[new]
    #[pyo3(signature = (errors, uncertainties, features=None))]
    fn new(
        errors: Vec<f64>,
        uncertainties: Vec<f64>,
        features: Option<BTreeMap<String, Vec<f64>>>,
    ) -> PyResult<Self> {
        let mut d = dataset::Dataset::new(errors, uncertainties).py()?;
        for (name, values) in features.unwrap_or_default() {
            d = d.with_feature(name, values).py()?;
        }
        Ok(Self(d))
    }

    /// Load a comma or tab separated table.
    #[staticmethod]
    #[pyo3(signature = (path, map="E=E,uE=uE", features=vec![]))]
    fn load(path: &str, map: &str, features: Vec<String>) -> PyResult<Self> {
        let mapping = ColumnMapping::parse(map).py()?.with_features(&features);
        Ok(Self(dataset::load_dataset(path, &mapping).py()?.dataset))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn errors(&self) -> Vec<f64> {
        self.0.errors().to_vec()
    }

    #[getter]
    fn uncertainties(&self) -> Vec<f64> {
        self.0.uncertainties().to_vec()
    }

    #[getter]
    fn feature_names(&self) -> Vec<String> {
        self.0.features().keys().cloned().collect()
    }

    fn feature(&self, name: &str) -> PyResult<Vec<f64>> {
        self.0
            .feature(name)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| PyValueError::new_err(format!("unknown feature `{name}`")))
    }

    fn zscores(&self) -> Vec<f64> {
        self.0.zscores().0
    }

    fn write_csv(&self, path: &str) -> PyResult<()> {
        let file = std::fs::File::create(path).map_err(|e| PyIOError::new_err(format!("{path}: {e}")))?;
        self.0.write_csv(std::io::BufWriter::new(file)).py()
    }
}

/// Result of a binned analysis.
#[pyclass(name = "LzResult", frozen, get_all, skip_from_py_object)]
struct PyLzResult {
    kind: String,
    representatives: Vec<f64>,
    counts: Vec<usize>,
    estimates: Vec<Option<PyStatEstimate>>,
    counted: usize,
    valid: usize,
    f_v: Option<f64>,
    f_v_interval: Option<(f64, f64)>,
    fraction_valid: Option<PyStatEstimate>,
}

fn bins_as_lists(p: &BinPartition) -> Vec<Vec<usize>> {
    p.bins.iter().map(|b| b.members.clone()).collect()
}

#[pyfunction]
fn zscores(errors: Vec<f64>, uncertainties: Vec<f64>) -> PyResult<Vec<f64>> {
    Ok(dataset::Dataset::new(errors, uncertainties).py()?.zscores().0)
}

#[pyfunction]
#[pyo3(signature = (sample, level=0.95))]
fn zm(sample: Vec<f64>, level: f64) -> PyResult<PyStatEstimate> {
    Ok(stats::zm(&sample, level).py()?.into())
}

#[pyfunction]
#[pyo3(signature = (sample, level=0.95, resamples=1000, seed=0))]
fn zms(sample: Vec<f64>, level: f64, resamples: usize, seed: u64) -> PyResult<PyStatEstimate> {
    Ok(stats::zms(&sample, level, resamples, seed).py()?.into())
}

#[pyfunction]
#[pyo3(signature = (sample, level=0.95, resamples=1000, seed=0))]
fn zvar(sample: Vec<f64>, level: f64, resamples: usize, seed: u64) -> PyResult<PyStatEstimate> {
    Ok(stats::zvar(&sample, level, resamples, seed).py()?.into())
}

/// Acceptance interval (low, high) for the fraction of valid bins.
#[pyfunction]
#[pyo3(signature = (n_bins, level=0.95, coverage=0.95))]
fn binomial_fv_interval(n_bins: usize, level: f64, coverage: f64) -> PyResult<(f64, f64)> {
    let i = stats::binomial_fv_interval(n_bins, level, coverage).py()?;
    Ok((i.low, i.high))
}

#[pyfunction]
fn rank_correlation(a: Vec<f64>, b: Vec<f64>) -> PyResult<f64> {
    dataset::rank_correlation(&a, &b).py()
}

/// Unique values and their counts.
#[pyfunction]
fn stratification_profile(values: Vec<f64>) -> PyResult<(Vec<f64>, Vec<usize>)> {
    let p = dataset::stratification_profile("x", &values).py()?;
    Ok((p.values, p.counts))
}

/// Row indices of each equal-count bin, in increasing value order.
#[pyfunction]
fn equal_count_bins(values: Vec<f64>, n_bins: usize) -> PyResult<Vec<Vec<usize>>> {
    Ok(bins_as_lists(&binning::equal_count_bins("x", &values, n_bins).py()?))
}

/// (representative, row indices) per merged stratum.
#[pyfunction]
#[pyo3(signature = (values, min_count=100))]
fn stratified_bins(values: Vec<f64>, min_count: usize) -> PyResult<Vec<(f64, Vec<usize>)>> {
    let p = binning::stratified_bins("x", &values, min_count).py()?;
    Ok(p.bins.into_iter().map(|b| (b.representative, b.members)).collect())
}

#[pyfunction]
#[pyo3(signature = (values, window, step=None))]
fn sliding_window(values: Vec<f64>, window: usize, step: Option<usize>) -> PyResult<Vec<Vec<usize>>> {
    Ok(bins_as_lists(&binning::sliding_window("x", &values, window, step).py()?))
}

#[pyfunction]
#[pyo3(signature = (dataset, level=0.95, resamples=1000, seed=0))]
fn average_calibration(
    dataset: PyRef<'_, PyDataset>,
    level: f64,
    resamples: usize,
    seed: u64,
) -> PyResult<BTreeMap<String, PyStatEstimate>> {
    let params = AnalysisParams { level, resamples, seed };
    let r = analysis::average_calibration_report(&dataset.0, &params).py()?;
    Ok(StatKind::ALL
        .into_iter()
        .map(|k| (k.to_string(), (*r.get(k)).into()))
        .collect())
}

/// Binned calibration statistic against `variable` ("uE" or a feature).
#[pyfunction]
#[pyo3(signature = (dataset, variable, kind="ZMS", scheme="equal", bins="auto", min_stratum=100, level=0.95, resamples=1000, seed=0))]
#[allow(clippy::too_many_arguments)]
fn lz_analysis(
    dataset: PyRef<'_, PyDataset>,
    variable: &str,
    kind: &str,
    scheme: &str,
    bins: &str,
    min_stratum: usize,
    level: f64,
    resamples: usize,
    seed: u64,
) -> PyResult<PyLzResult> {
    let d = &dataset.0;
    let var = Variable::parse(variable);
    let values = d.values(&var).py()?;
    let partition = match scheme.parse().py()? {
        binning::Scheme::Stratified => binning::stratified_bins(var.name(), values, min_stratum),
        _ => {
            let n = bins.parse::<BinCount>().py()?.resolve(d.len());
            binning::equal_count_bins(var.name(), values, n)
        }
    }
    .py()?;
    let params = AnalysisParams { level, resamples, seed };
    let r = analysis::lz_analysis(d, &var, &partition, parse_kind(kind)?, &params).py()?;
    Ok(PyLzResult {
        kind: r.kind.to_string(),
        representatives: r.partition.representatives(),
        counts: r.partition.counts(),
        estimates: r.estimates.iter().map(|e| e.map(Into::into)).collect(),
        counted: r.counted,
        valid: r.valid,
        f_v: r.f_v,
        f_v_interval: r.f_v_interval.map(|i| (i.low, i.high)),
        fraction_valid: analysis::fraction_valid(&r, level).ok().map(Into::into),
    })
}

/// Autocorrelation (values, band half-width).
#[pyfunction]
#[pyo3(signature = (series, max_lag=None, level=0.95))]
fn acf(series: Vec<f64>, max_lag: Option<usize>, level: f64) -> PyResult<(Vec<f64>, f64)> {
    let a = analysis::acf(&series, max_lag, level).py()?;
    Ok((a.values, a.band))
}

#[pyfunction]
fn rce(errors: Vec<f64>, uncertainties: Vec<f64>) -> PyResult<f64> {
    analysis::rce(&errors, &uncertainties).py()
}

/// Calibrated dataset with log-uniform uncertainties in [low, high].
#[pyfunction]
#[pyo3(signature = (size, low=0.1, high=1.0, seed=0))]
fn synth_calibrated(size: usize, low: f64, high: f64, seed: u64) -> PyResult<PyDataset> {
    let spec = SynthSpec::new(size, UncertaintyLaw::LogUniform { low, high }, seed);
    Ok(PyDataset(synth::generate_calibrated(&spec).py()?))
}

/// Generate from a TOML spec.
#[pyfunction]
fn synth_from_spec(spec_toml: &str) -> PyResult<PyDataset> {
    let spec: SynthSpec = toml::from_str(spec_toml).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(PyDataset(synth::generate(&spec).py()?))
}

/// Scale uncertainties by `factor` where low <= feature <= high.
#[pyfunction]
fn inject_miscalibration(
    dataset: PyRef<'_, PyDataset>,
    feature: &str,
    low: f64,
    high: f64,
    factor: f64,
) -> PyResult<PyDataset> {
    let defect = Defect { feature: feature.into(), low, high, factor };
    Ok(PyDataset(synth::inject_miscalibration(&dataset.0, &defect).py()?.dataset))
}

/// Full validation; returns (report JSON, exit code).
#[pyfunction]
#[pyo3(signature = (dataset, config_toml=""))]
fn validate(dataset: PyRef<'_, PyDataset>, config_toml: &str) -> PyResult<(String, i32)> {
    let config = AnalysisConfig::from_toml_str(config_toml).py()?;
    let r = report::validate_dataset(&dataset.0, &config).py()?;
    Ok((r.to_json().py()?, r.exit_code()))
}

#[pymodule]
#[pyo3(name = "zcal")]
fn zcal_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDataset>()?;
    m.add_class::<PyStatEstimate>()?;
    m.add_class::<PyLzResult>()?;
    m.add_function(wrap_pyfunction!(zscores, m)?)?;
    m.add_function(wrap_pyfunction!(zm, m)?)?;
    m.add_function(wrap_pyfunction!(zms, m)?)?;
    m.add_function(wrap_pyfunction!(zvar, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_fv_interval, m)?)?;
    m.add_function(wrap_pyfunction!(rank_correlation, m)?)?;
    m.add_function(wrap_pyfunction!(stratification_profile, m)?)?;
    m.add_function(wrap_pyfunction!(equal_count_bins, m)?)?;
    m.add_function(wrap_pyfunction!(stratified_bins, m)?)?;
    m.add_function(wrap_pyfunction!(sliding_window, m)?)?;
    m.add_function(wrap_pyfunction!(average_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(lz_analysis, m)?)?;
    m.add_function(wrap_pyfunction!(acf, m)?)?;
    m.add_function(wrap_pyfunction!(rce, m)?)?;
    m.add_function(wrap_pyfunction!(synth_calibrated, m)?)?;
    m.add_function(wrap_pyfunction!(synth_from_spec, m)?)?;
    m.add_function(wrap_pyfunction!(inject_miscalibration, m)?)?;
    m.add_function(wrap_pyfunction!(validate, m)?)?;
    Ok(())
}
