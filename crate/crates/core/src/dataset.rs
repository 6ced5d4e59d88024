//! Paired errors and uncertainties, optional feature columns, and the
//! derived quantities every analysis starts from (z-scores, strata,
//! rank correlations).

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the errors and uncertainties of a dataset were obtained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Derivation {
    /// E and u_E read as given.
    Direct,
    /// E = R - V and u_E = sqrt(u_R^2 + u_V^2).
    Components { has_ur: bool, has_uv: bool },
    /// Drawn by the synthetic generator.
    Synthetic { seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub derivation: Derivation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Opaque unit label for E and u_E.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
    /// Post-hoc modifications, in application order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub history: Vec<String>,
}

impl Provenance {
    pub fn direct() -> Self {
        Self {
            derivation: Derivation::Direct,
            source: None,
            units: None,
            history: Vec::new(),
        }
    }
}

/// Conditioning variable selector: the uncertainty itself (consistency)
/// or a named feature column (adaptivity).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variable {
    Uncertainty,
    Feature(String),
}

impl Variable {
    /// `uE`, `u_E` and `uncertainty` select the uncertainty; anything else
    /// names a feature.
    pub fn parse(name: &str) -> Self {
        match name.trim() {
            "uE" | "u_E" | "ue" | "uncertainty" => Variable::Uncertainty,
            other => Variable::Feature(other.to_string()),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Variable::Uncertainty => "uE",
            Variable::Feature(name) => name,
        }
    }

    pub fn is_uncertainty(&self) -> bool {
        matches!(self, Variable::Uncertainty)
    }
}

impl fmt::Display for Variable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Validation dataset: errors E, uncertainties u_E > 0, feature columns.
///
/// Immutable once built; every constructor checks the invariants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    errors: Vec<f64>,
    uncertainties: Vec<f64>,
    features: IndexMap<String, Vec<f64>>,
    provenance: Provenance,
}

impl Dataset {
    pub fn new(errors: Vec<f64>, uncertainties: Vec<f64>) -> Result<Self> {
        if errors.is_empty() {
            return Err(Error::InsufficientSample { needed: 1, have: 0 });
        }
        if errors.len() != uncertainties.len() {
            return Err(Error::LengthMismatch {
                expected: errors.len(),
                got: uncertainties.len(),
            });
        }
        if let Some(index) = errors.iter().position(|e| !e.is_finite()) {
            return Err(Error::InvalidValue {
                index,
                reason: "non-finite error".into(),
            });
        }
        if let Some(index) = uncertainties
            .iter()
            .position(|u| !(u.is_finite() && *u > 0.0))
        {
            return Err(Error::InvalidValue {
                index,
                reason: "uncertainty must be finite and > 0".into(),
            });
        }
        Ok(Self {
            errors,
            uncertainties,
            features: IndexMap::new(),
            provenance: Provenance::direct(),
        })
    }

    pub fn with_feature(mut self, name: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if values.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue {
                index,
                reason: format!("non-finite value in feature `{name}`"),
            });
        }
        if Variable::parse(&name).is_uncertainty() {
            return Err(Error::param(format!(
                "feature name `{name}` is reserved for the uncertainty"
            )));
        }
        self.features.insert(name, values);
        Ok(self)
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn len(&self) -> usize {
        self.errors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn errors(&self) -> &[f64] {
        &self.errors
    }

    pub fn uncertainties(&self) -> &[f64] {
        &self.uncertainties
    }

    pub fn features(&self) -> &IndexMap<String, Vec<f64>> {
        &self.features
    }

    pub fn feature(&self, name: &str) -> Option<&[f64]> {
        self.features.get(name).map(Vec::as_slice)
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    /// Values of a conditioning variable.
    pub fn values(&self, variable: &Variable) -> Result<&[f64]> {
        match variable {
            Variable::Uncertainty => Ok(&self.uncertainties),
            Variable::Feature(name) => self
                .feature(name)
                .ok_or_else(|| Error::UnknownVariable(name.clone())),
        }
    }

    pub fn zscores(&self) -> ZScores {
        zscores(self)
    }

    /// Same rows in a new order: row `k` of the result is row `order[k]`.
    pub fn reordered(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                got: order.len(),
            });
        }
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Ok(Self {
            errors: pick(&self.errors),
            uncertainties: pick(&self.uncertainties),
            features: self
                .features
                .iter()
                .map(|(k, v)| (k.clone(), pick(v)))
                .collect(),
            provenance: self.provenance.clone(),
        })
    }

    /// Replace the uncertainties, keeping errors and features. Used by the
    /// miscalibration injector.
    pub(crate) fn with_uncertainties(&self, uncertainties: Vec<f64>, note: String) -> Result<Self> {
        let mut out = Dataset::new(self.errors.clone(), uncertainties)?;
        out.features = self.features.clone();
        out.provenance = self.provenance.clone();
        out.provenance.history.push(note);
        Ok(out)
    }

    /// Write as a comma-separated table with columns `E,uE,<features…>`,
    /// readable by [`read_dataset`] with [`ColumnMapping::direct`].
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(writer);
        let mut header = vec!["E".to_string(), "uE".to_string()];
        header.extend(self.features.keys().cloned());
        out.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![self.errors[i].to_string(), self.uncertainties[i].to_string()];
            row.extend(self.features.values().map(|col| col[i].to_string()));
            out.write_record(&row)?;
        }
        out.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

/// z-scores Z = E / u_E.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZScores(pub Vec<f64>);

impl ZScores {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn select(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().map(|&i| self.0[i]).collect()
    }
}

pub fn zscores(d: &Dataset) -> ZScores {
    ZScores(
        d.errors
            .iter()
            .zip(&d.uncertainties)
            .map(|(e, u)| e / u)
            .collect(),
    )
}

// ---------------------------------------------------------------------------
// Loading

/// Where E and u_E come from in a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorColumns {
    Direct {
        e: String,
        ue: String,
    },
    Components {
        r: String,
        v: String,
        #[serde(default)]
        ur: Option<String>,
        #[serde(default)]
        uv: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub errors: ErrorColumns,
    #[serde(default)]
    pub features: Vec<String>,
}

impl ColumnMapping {
    pub fn direct(e: &str, ue: &str) -> Self {
        Self {
            errors: ErrorColumns::Direct {
                e: e.into(),
                ue: ue.into(),
            },
            features: Vec::new(),
        }
    }

    pub fn with_features<S: AsRef<str>>(mut self, features: &[S]) -> Self {
        self.features = features.iter().map(|s| s.as_ref().to_string()).collect();
        self
    }

    /// Parse `E=<col>,uE=<col>` or `R=<col>,V=<col>[,uR=<col>][,uV=<col>]`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut keys: IndexMap<String, String> = IndexMap::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("mapping entry `{part}` is not key=column")))?;
            let key = match k.trim() {
                "E" => "E",
                "uE" | "u_E" => "uE",
                "R" => "R",
                "V" => "V",
                "uR" | "u_R" => "uR",
                "uV" | "u_V" => "uV",
                other => return Err(Error::Config(format!("unknown mapping key `{other}`"))),
            };
            if keys.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("mapping key `{key}` given twice")));
            }
        }
        let get = |k: &str| keys.get(k).cloned();
        let errors = match (get("E"), get("uE"), get("R"), get("V")) {
            (Some(e), Some(ue), None, None) if get("uR").is_none() && get("uV").is_none() => {
                ErrorColumns::Direct { e, ue }
            }
            (None, None, Some(r), Some(v)) => ErrorColumns::Components {
                r,
                v,
                ur: get("uR"),
                uv: get("uV"),
            },
            _ => {
                return Err(Error::Config(
                    "mapping must name either E and uE, or R and V (with optional uR, uV)".into(),
                ))
            }
        };
        Ok(Self {
            errors,
            features: Vec::new(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedRow {
    /// 1-based line in the source, header is line 1.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub dataset: Dataset,
    pub rows_read: usize,
    pub rejected: Vec<RejectedRow>,
}

fn detect_delimiter(text: &str) -> u8 {
    let header = text.lines().next().unwrap_or("");
    if header.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

pub fn load_dataset(path: impl AsRef<Path>, mapping: &ColumnMapping) -> Result<Loaded> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut loaded = read_dataset(file, mapping)?;
    loaded.dataset.provenance.source = Some(path.display().to_string());
    Ok(loaded)
}

/// Read a delimited table (comma or tab, detected from the header line).
/// Rows with a missing, unparsable or non-finite mapped value, or with
/// u_E <= 0, are rejected and reported.
pub fn read_dataset<R: Read>(mut reader: R, mapping: &ColumnMapping) -> Result<Loaded> {
    let mut text = String::new();
    reader
        .read_to_string(&mut text)
        .map_err(|e| Error::io("<input>", e))?;
    let mut table = csv::ReaderBuilder::new()
        .delimiter(detect_delimiter(&text))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = table.headers()?.clone();
    let column = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    enum Source {
        Direct { e: usize, ue: usize },
        Components { r: usize, v: usize, ur: Option<usize>, uv: Option<usize> },
    }
    let source = match &mapping.errors {
        ErrorColumns::Direct { e, ue } => Source::Direct {
            e: column(e)?,
            ue: column(ue)?,
        },
        ErrorColumns::Components { r, v, ur, uv } => Source::Components {
            r: column(r)?,
            v: column(v)?,
            ur: ur.as_deref().map(column).transpose()?,
            uv: uv.as_deref().map(column).transpose()?,
        },
    };
    let feature_cols = mapping
        .features
        .iter()
        .map(|f| column(f))
        .collect::<Result<Vec<_>>>()?;

    let mut errors = Vec::new();
    let mut uncertainties = Vec::new();
    let mut features = vec![Vec::new(); feature_cols.len()];
    let mut rejected = Vec::new();
    let mut rows_read = 0;

    for (row_index, record) in table.records().enumerate() {
        let line = row_index + 2;
        rows_read += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                rejected.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let parsed = (|| -> std::result::Result<(f64, f64, Vec<f64>), String> {
            let field = |i: usize| -> std::result::Result<f64, String> {
                let raw = record.get(i).unwrap_or("");
                let name = &header[i];
                let value: f64 = raw
                    .parse()
                    .map_err(|_| format!("column `{name}`: cannot parse `{raw}`"))?;
                if !value.is_finite() {
                    return Err(format!("column `{name}`: non-finite value"));
                }
                Ok(value)
            };
            let (e, ue) = match source {
                Source::Direct { e, ue } => (field(e)?, field(ue)?),
                Source::Components { r, v, ur, uv } => {
                    let ur = ur.map(field).transpose()?.unwrap_or(0.0);
                    let uv = uv.map(field).transpose()?.unwrap_or(0.0);
                    (field(r)? - field(v)?, ur.hypot(uv))
                }
            };
            if !e.is_finite() {
                return Err("derived error is not finite".into());
            }
            if !(ue.is_finite() && ue > 0.0) {
                return Err(format!("uncertainty {ue} is not > 0"));
            }
            let xs = feature_cols
                .iter()
                .map(|&c| field(c))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            Ok((e, ue, xs))
        })();
        match parsed {
            Ok((e, ue, xs)) => {
                errors.push(e);
                uncertainties.push(ue);
                for (col, x) in features.iter_mut().zip(xs) {
                    col.push(x);
                }
            }
            Err(reason) => rejected.push(RejectedRow { line, reason }),
        }
    }

    if errors.is_empty() {
        return Err(Error::NoUsableRows {
            rejected: rejected.len(),
        });
    }
    let derivation = match mapping.errors {
        ErrorColumns::Direct { .. } => Derivation::Direct,
        ErrorColumns::Components { ref ur, ref uv, .. } => Derivation::Components {
            has_ur: ur.is_some(),
            has_uv: uv.is_some(),
        },
    };
    let mut dataset = Dataset::new(errors, uncertainties)?;
    for (name, col) in mapping.features.iter().zip(features) {
        dataset = dataset.with_feature(name.clone(), col)?;
    }
    dataset.provenance.derivation = derivation;
    Ok(Loaded {
        dataset,
        rows_read,
        rejected,
    })
}

// ---------------------------------------------------------------------------
// Profiles

/// Unique values of a variable and how often each occurs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrataProfile {
    pub variable: String,
    pub values: Vec<f64>,
    pub counts: Vec<usize>,
}

impl StrataProfile {
    pub fn unique(&self) -> usize {
        self.values.len()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn stratification_profile(variable: &str, values: &[f64]) -> Result<StrataProfile> {
    if values.is_empty() {
        return Err(Error::InsufficientSample { needed: 1, have: 0 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut uniq: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for v in sorted {
        match uniq.last() {
            Some(&last) if last == v => *counts.last_mut().unwrap() += 1,
            _ => {
                uniq.push(v);
                counts.push(1);
            }
        }
    }
    Ok(StrataProfile {
        variable: variable.to_string(),
        values: uniq,
        counts,
    })
}

/// Mid-ranks (1-based); tied values share the average of their ranks.
pub fn mid_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation with mid-ranks for ties.
pub fn rank_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::InsufficientSample {
            needed: 2,
            have: a.len(),
        });
    }
    let ra = mid_ranks(a);
    let rb = mid_ranks(b);
    let n = ra.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Pairwise rank correlations among named columns, upper triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `(i, j, rho)` for `i < j`; `rho` is absent when undefined.
    pub entries: Vec<(usize, usize, Option<f64>)>,
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let ia = self.names.iter().position(|n| n == a)?;
        let ib = self.names.iter().position(|n| n == b)?;
        let (i, j) = if ia < ib { (ia, ib) } else { (ib, ia) };
        self.entries
            .iter()
            .find(|(x, y, _)| *x == i && *y == j)
            .and_then(|e| e.2)
    }
}

/// Rank correlations among the features, |E| and u_E (in that order).
pub fn correlation_matrix(d: &Dataset) -> CorrelationMatrix {
    let abs_e: Vec<f64> = d.errors().iter().map(|e| e.abs()).collect();
    let mut columns: Vec<(String, &[f64])> = d
        .features()
        .iter()
        .map(|(k, v)| (k.clone(), v.as_slice()))
        .collect();
    columns.push(("|E|".into(), &abs_e));
    columns.push(("uE".into(), d.uncertainties()));
    let mut entries = Vec::new();
    for i in 0..columns.len() {
        for j in i + 1..columns.len() {
            entries.push((i, j, rank_correlation(columns[i].1, columns[j].1).ok()));
        }
    }
    CorrelationMatrix {
        names: columns.into_iter().map(|c| c.0).collect(),
        entries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn load(text: &str, mapping: &ColumnMapping) -> Result<Loaded> {
        read_dataset(text.as_bytes(), mapping)
    }

    #[test]
    fn two_row_direct_table() {
        let got = load("E,uE\n0.1,0.1\n-0.1,0.1\n", &ColumnMapping::direct("E", "uE")).unwrap();
        assert_eq!(got.dataset.len(), 2);
        assert_eq!(got.dataset.zscores().values(), &[1.0, -1.0]);
        assert!(got.rejected.is_empty());
    }

    #[test]
    fn zero_uncertainty_row_is_rejected() {
        let mut text = String::from("E,uE\n");
        for i in 0..10 {
            let u = if i == 4 { 0.0 } else { 0.5 };
            text.push_str(&format!("{},{}\n", i as f64 * 0.1, u));
        }
        let got = load(&text, &ColumnMapping::direct("E", "uE")).unwrap();
        assert_eq!(got.dataset.len(), 9);
        assert_eq!(got.rejected.len(), 1);
        assert_eq!(got.rejected[0].line, 6);
        assert_eq!(got.rows_read, 10);
    }

    #[test]
    fn missing_and_nonfinite_values_are_rejected() {
        let text = "E\tuE\tX\n1\t1\t3\n\t1\t2\n2\tinf\t1\n1\t2\tNaN\n";
        let got = load(text, &ColumnMapping::direct("E", "uE").with_features(&["X"])).unwrap();
        assert_eq!(got.dataset.len(), 1);
        assert_eq!(got.rejected.len(), 3);
    }

    #[test]
    fn missing_column_is_named() {
        let err = load("E,u\n1,1\n", &ColumnMapping::direct("E", "uE")).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(ref c) if c == "uE"));
    }

    #[test]
    fn no_usable_rows() {
        let err = load("E,uE\n1,0\n2,-1\n", &ColumnMapping::direct("E", "uE")).unwrap_err();
        assert!(matches!(err, Error::NoUsableRows { rejected: 2 }));
    }

    #[test]
    fn components_are_combined() {
        let mapping = ColumnMapping::parse("R=ref,V=pred,uR=ur,uV=uv").unwrap();
        let got = load("ref,pred,ur,uv\n1.0,0.5,0.3,0.4\n", &mapping).unwrap();
        assert_eq!(got.dataset.errors(), &[0.5]);
        assert!((got.dataset.uncertainties()[0] - 0.5).abs() < 1e-15);
        assert_eq!(
            got.dataset.provenance().derivation,
            Derivation::Components { has_ur: true, has_uv: true }
        );
    }

    #[test]
    fn mapping_parse_errors() {
        assert!(ColumnMapping::parse("E=a").is_err());
        assert!(ColumnMapping::parse("E=a,uE=b,R=c").is_err());
        assert!(ColumnMapping::parse("E=a,uE=b,foo=c").is_err());
        assert!(ColumnMapping::parse("E=a,E=b,uE=c").is_err());
        assert!(ColumnMapping::parse("R=a,V=b").is_ok());
    }

    #[test]
    fn zscore_examples() {
        let d = Dataset::new(vec![0.2], vec![0.1]).unwrap();
        assert_eq!(d.zscores().values(), &[2.0]);
        let d = Dataset::new(vec![0.0; 3], vec![0.3, 1.0, 7.0]).unwrap();
        assert_eq!(d.zscores().values(), &[0.0; 3]);
    }

    #[test]
    fn dataset_invariants_enforced() {
        assert!(Dataset::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![1.0], vec![0.0]).is_err());
        assert!(Dataset::new(vec![f64::NAN], vec![1.0]).is_err());
        assert!(Dataset::new(vec![1.0, 2.0], vec![1.0]).is_err());
        let d = Dataset::new(vec![1.0], vec![1.0]).unwrap();
        assert!(d.clone().with_feature("X", vec![1.0, 2.0]).is_err());
        assert!(d.with_feature("uE", vec![1.0]).is_err());
    }

    #[test]
    fn profile_counts() {
        let p = stratification_profile("x", &[1.0, 1.0, 2.0]).unwrap();
        assert_eq!(p.values, vec![1.0, 2.0]);
        assert_eq!(p.counts, vec![2, 1]);
        assert!(stratification_profile("x", &[]).is_err());
    }

    #[test]
    fn rank_correlation_examples() {
        let a: Vec<f64> = (0..10).map(f64::from).collect();
        let rev: Vec<f64> = a.iter().rev().copied().collect();
        assert_eq!(rank_correlation(&a, &a).unwrap(), 1.0);
        assert_eq!(rank_correlation(&a, &rev).unwrap(), -1.0);
        assert!(matches!(
            rank_correlation(&a, &[2.0; 10]),
            Err(Error::UndefinedCorrelation)
        ));
    }

    #[test]
    fn mid_ranks_average_ties() {
        assert_eq!(mid_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn csv_roundtrip() {
        let d = Dataset::new(vec![0.1, -1.0 / 3.0], vec![1e-3, 2.5])
            .unwrap()
            .with_feature("mass", vec![12.011, 1.0 / 7.0])
            .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = read_dataset(
            buf.as_slice(),
            &ColumnMapping::direct("E", "uE").with_features(&["mass"]),
        )
        .unwrap();
        assert_eq!(back.dataset.errors(), d.errors());
        assert_eq!(back.dataset.uncertainties(), d.uncertainties());
        assert_eq!(back.dataset.feature("mass"), d.feature("mass"));
    }

    proptest! {
        #[test]
        fn rank_correlation_monotone_invariant(
            pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..60)
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            if let Ok(rho) = rank_correlation(&a, &b) {
                let ta: Vec<f64> = a.iter().map(|x| (x / 100.0).exp()).collect();
                let tb: Vec<f64> = b.iter().map(|x| x * 3.0 - 7.0).collect();
                let rho_t = rank_correlation(&ta, &tb).unwrap();
                prop_assert!((rho - rho_t).abs() < 1e-12);
                prop_assert!((-1.0..=1.0).contains(&rho));
            }
        }

        #[test]
        fn zscores_follow_row_permutation(
            rows in prop::collection::vec((-5f64..5.0, 0.01f64..3.0), 1..40),
            seed in any::<u64>()
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut order: Vec<usize> = (0..rows.len()).collect();
            order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let table = |idx: &[usize]| {
                let mut t = String::from("E,uE\n");
                for &i in idx {
                    t.push_str(&format!("{},{}\n", rows[i].0, rows[i].1));
                }
                t
            };
            let identity: Vec<usize> = (0..rows.len()).collect();
            let mapping = ColumnMapping::direct("E", "uE");
            let z = load(&table(&identity), &mapping).unwrap().dataset.zscores();
            let zp = load(&table(&order), &mapping).unwrap().dataset.zscores();
            for (k, &i) in order.iter().enumerate() {
                prop_assert_eq!(zp.values()[k].to_bits(), z.values()[i].to_bits());
            }
        }

        #[test]
        fn components_without_ur_match_direct(
            rows in prop::collection::vec((-5f64..5.0, -5f64..5.0, 0.01f64..3.0), 1..30)
        ) {
            let mut comp = String::from("R,V,uV\n");
            let mut direct = String::from("E,uE\n");
            for (r, v, uv) in &rows {
                comp.push_str(&format!("{r},{v},{uv}\n"));
                direct.push_str(&format!("{},{}\n", r - v, uv));
            }
            let a = load(&comp, &ColumnMapping::parse("R=R,V=V,uV=uV").unwrap()).unwrap();
            let b = load(&direct, &ColumnMapping::direct("E", "uE")).unwrap();
            prop_assert_eq!(a.dataset.errors(), b.dataset.errors());
            prop_assert_eq!(a.dataset.uncertainties(), b.dataset.uncertainties());
        }
    }
}
