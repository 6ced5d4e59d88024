//! Synthetic datasets with known calibration properties.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Derivation, Provenance};
use crate::error::{Error, Result};
use crate::seed::{self, rng_for};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum UncertaintyLaw {
    /// ln u uniform on [ln low, ln high].
    LogUniform { low: f64, high: f64 },
    Constant { value: f64 },
    /// Exactly `round(weight * M)` copies of each value (largest remainder),
    /// in random order. Equal weights when omitted.
    Strata {
        values: Vec<f64>,
        #[serde(default)]
        weights: Option<Vec<f64>>,
    },
}

impl UncertaintyLaw {
    fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        match self {
            UncertaintyLaw::LogUniform { low, high } => {
                if !(positive(*low) && positive(*high) && low <= high) {
                    return Err(Error::param(format!("log-uniform bounds [{low}, {high}] invalid")));
                }
            }
            UncertaintyLaw::Constant { value } => {
                if !positive(*value) {
                    return Err(Error::param(format!("constant uncertainty {value} must be > 0")));
                }
            }
            UncertaintyLaw::Strata { values, weights } => {
                if values.is_empty() || !values.iter().all(|v| positive(*v)) {
                    return Err(Error::param("strata values must be nonempty and > 0"));
                }
                if let Some(w) = weights {
                    if w.len() != values.len()
                        || !w.iter().all(|x| x.is_finite() && *x >= 0.0)
                        || w.iter().sum::<f64>() <= 0.0
                    {
                        return Err(Error::param("strata weights must match values and be >= 0"));
                    }
                }
            }
        }
        Ok(())
    }

    fn sample(&self, size: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        match self {
            UncertaintyLaw::LogUniform { low, high } => {
                let (a, b) = (low.ln(), high.ln());
                (0..size)
                    .map(|_| if a == b { *low } else { rng.random_range(a..b).exp() })
                    .collect()
            }
            UncertaintyLaw::Constant { value } => vec![*value; size],
            UncertaintyLaw::Strata { values, weights } => {
                let weights = weights.clone().unwrap_or_else(|| vec![1.0; values.len()]);
                let mut out: Vec<f64> = strata_counts(&weights, size)
                    .into_iter()
                    .zip(values)
                    .flat_map(|(c, &v)| std::iter::repeat_n(v, c))
                    .collect();
                out.shuffle(rng);
                out
            }
        }
    }
}

/// Largest-remainder apportionment of `total` by `weights`; ties go to the
/// earlier entry.
fn strata_counts(weights: &[f64], total: usize) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "law", rename_all = "kebab-case")]
pub enum ErrorLaw {
    /// E ~ N(0, u_E).
    #[default]
    Normal,
    /// E = 0 exactly.
    Zero,
    /// E and u_E from an ensemble of `n` normal draws (mean and standard
    /// error of the mean).
    Ensemble { n: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum FeatureRecipe {
    /// Independent of everything else.
    Uniform { name: String, low: f64, high: f64 },
    /// Independent, uniformly chosen among `values`.
    Strata { name: String, values: Vec<f64> },
    /// `scale * u_E`, a deterministic function of the uncertainty.
    Linked { name: String, scale: f64 },
}

impl FeatureRecipe {
    pub fn name(&self) -> &str {
        match self {
            FeatureRecipe::Uniform { name, .. }
            | FeatureRecipe::Strata { name, .. }
            | FeatureRecipe::Linked { name, .. } => name,
        }
    }
}

/// Multiply u_E by `factor` where `low <= feature <= high`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    pub feature: String,
    pub low: f64,
    pub high: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub size: usize,
    pub uncertainty: UncertaintyLaw,
    #[serde(default)]
    pub errors: ErrorLaw,
    #[serde(default)]
    pub features: Vec<FeatureRecipe>,
    #[serde(default)]
    pub defects: Vec<Defect>,
    #[serde(default)]
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(size: usize, uncertainty: UncertaintyLaw, seed: u64) -> Self {
        Self {
            size,
            uncertainty,
            errors: ErrorLaw::Normal,
            features: Vec::new(),
            defects: Vec::new(),
            seed,
        }
    }

    pub fn with_feature(mut self, recipe: FeatureRecipe) -> Self {
        self.features.push(recipe);
        self
    }

    pub fn with_errors(mut self, errors: ErrorLaw) -> Self {
        self.errors = errors;
        self
    }

    pub fn with_defect(mut self, defect: Defect) -> Self {
        self.defects.push(defect);
        self
    }
}

fn synthetic_provenance(seed: u64) -> Provenance {
    Provenance {
        derivation: Derivation::Synthetic { seed },
        source: None,
        units: None,
        history: Vec::new(),
    }
}

/// Draw a dataset that is calibrated by construction. The defect list must
/// be empty; see [`generate`] to apply defects.
pub fn generate_calibrated(spec: &SynthSpec) -> Result<Dataset> {
    if !spec.defects.is_empty() {
        return Err(Error::param("generate_calibrated takes a spec without defects"));
    }
    if spec.size == 0 {
        return Err(Error::param("synthetic size must be >= 1"));
    }
    spec.uncertainty.validate()?;

    let (errors, uncertainties) = match spec.errors {
        ErrorLaw::Ensemble { n } => ensemble_draws(spec.size, n, &spec.uncertainty, spec.seed)?,
        law => {
            let u = spec
                .uncertainty
                .sample(spec.size, &mut rng_for(spec.seed, &[seed::STREAM_SYNTH, 1]));
            let e = match law {
                ErrorLaw::Zero => vec![0.0; spec.size],
                _ => {
                    let mut rng = rng_for(spec.seed, &[seed::STREAM_SYNTH, 2]);
                    u.iter()
                        .map(|s| {
                            let z: f64 = StandardNormal.sample(&mut rng);
                            s * z
                        })
                        .collect()
                }
            };
            (e, u)
        }
    };

    let mut d = Dataset::new(errors, uncertainties)?;
    for (k, recipe) in spec.features.iter().enumerate() {
        let mut rng = rng_for(spec.seed, &[seed::STREAM_SYNTH, 3, k as u64]);
        let values = match recipe {
            FeatureRecipe::Uniform { low, high, .. } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::param(format!("uniform feature bounds [{low}, {high}] invalid")));
                }
                (0..spec.size).map(|_| rng.random_range(*low..*high)).collect()
            }
            FeatureRecipe::Strata { values, .. } => {
                if values.is_empty() {
                    return Err(Error::param("feature strata must be nonempty"));
                }
                (0..spec.size)
                    .map(|_| values[rng.random_range(0..values.len())])
                    .collect()
            }
            FeatureRecipe::Linked { scale, .. } => {
                d.uncertainties().iter().map(|u| scale * u).collect()
            }
        };
        d = d.with_feature(recipe.name(), values)?;
    }
    Ok(d.with_provenance(synthetic_provenance(spec.seed)))
}

/// [`generate_calibrated`] followed by every defect of the spec, in order.
pub fn generate(spec: &SynthSpec) -> Result<Dataset> {
    let base = SynthSpec {
        defects: Vec::new(),
        ..spec.clone()
    };
    spec.defects
        .iter()
        .try_fold(generate_calibrated(&base)?, |d, defect| {
            Ok(inject_miscalibration(&d, defect)?.dataset)
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Injection {
    pub dataset: Dataset,
    pub affected: usize,
    /// No row fell in the interval; the dataset is returned unchanged.
    pub empty_selection: bool,
}

pub fn inject_miscalibration(d: &Dataset, defect: &Defect) -> Result<Injection> {
    let x = d
        .feature(&defect.feature)
        .ok_or_else(|| Error::UnknownVariable(defect.feature.clone()))?;
    if !(defect.low <= defect.high) {
        return Err(Error::param(format!(
            "defect interval [{}, {}] is empty",
            defect.low, defect.high
        )));
    }
    if !(defect.factor.is_finite() && defect.factor > 0.0) {
        return Err(Error::param(format!("scale factor {} must be > 0", defect.factor)));
    }
    let selected = |v: f64| defect.low <= v && v <= defect.high;
    let affected = x.iter().filter(|&&v| selected(v)).count();
    if affected == 0 {
        return Ok(Injection {
            dataset: d.clone(),
            affected,
            empty_selection: true,
        });
    }
    let u = d
        .uncertainties()
        .iter()
        .zip(x)
        .map(|(&u, &v)| if selected(v) { u * defect.factor } else { u })
        .collect();
    let note = format!(
        "uE x {} where {} in [{}, {}] ({} rows)",
        defect.factor, defect.feature, defect.low, defect.high, affected
    );
    Ok(Injection {
        dataset: d.with_uncertainties(u, note)?,
        affected,
        empty_selection: false,
    })
}

fn ensemble_draws(
    size: usize,
    n: usize,
    law: &UncertaintyLaw,
    seed_value: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    stats::ensemble_target_variance(n)?;
    law.validate()?;
    let scales = law.sample(size, &mut rng_for(seed_value, &[seed::STREAM_SYNTH, 1]));
    let mut rng = rng_for(seed_value, &[seed::STREAM_SYNTH, 4]);
    let mut draws = vec![0.0; n];
    let mut errors = Vec::with_capacity(size);
    let mut uncertainties = Vec::with_capacity(size);
    for s in scales {
        for d in draws.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *d = s * z;
        }
        errors.push(stats::mean(&draws));
        uncertainties.push((stats::variance(&draws) / n as f64).sqrt());
    }
    Ok((errors, uncertainties))
}

/// Rows of mean and standard error of the mean of `n` normal draws with
/// scale from `law`; z-scores follow Student-t with n − 1 degrees of freedom.
pub fn generate_ensemble_dataset(
    size: usize,
    n: usize,
    law: &UncertaintyLaw,
    seed_value: u64,
) -> Result<Dataset> {
    if size == 0 {
        return Err(Error::param("synthetic size must be >= 1"));
    }
    let (e, u) = ensemble_draws(size, n, law, seed_value)?;
    Ok(Dataset::new(e, u)?.with_provenance(synthetic_provenance(seed_value)))
}
