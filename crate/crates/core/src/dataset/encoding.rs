use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::matrix::{FeatureGroup, FeatureMatrix, GroupKind};
use super::records::RecordSet;
use super::schema::{TrafficClass, CATEGORICAL_FIELDS, FEATURE_NAMES};
use crate::autodiff::Tensor;
use crate::error::{contract_err, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoricalVocab {
    pub feature: String,
    /// Sorted distinct training values; the one-hot column order.
    pub categories: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub feature: String,
    pub mu: f64,
    /// Population standard deviation, or 1 for constant columns.
    pub sigma: f64,
}

/// Encoding fitted on a training split. Immutable once built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoding {
    pub vocab: Vec<CategoricalVocab>,
    pub numeric: Vec<ColumnStats>,
    /// Constant numeric columns whose sigma was replaced by 1.
    pub warnings: Vec<String>,
}

impl Encoding {
    /// Encoded width: numeric columns plus every one-hot block.
    pub fn dim(&self) -> usize {
        self.numeric.len() + self.vocab.iter().map(|v| v.categories.len()).sum::<usize>()
    }
}

/// Categories seen at transform time that the training vocab lacks.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UnseenReport {
    /// feature → category → row count.
    pub unseen: BTreeMap<String, BTreeMap<String, usize>>,
}

impl UnseenReport {
    pub fn total(&self) -> usize {
        self.unseen.values().flat_map(|m| m.values()).sum()
    }
}

pub fn fit_encoding(train: &RecordSet) -> Result<Encoding> {
    if train.is_empty() {
        return Err(contract_err!("cannot fit an encoding on an empty training split"));
    }
    let vocab = CATEGORICAL_FIELDS
        .iter()
        .enumerate()
        .map(|(c, &field)| {
            let set: BTreeSet<&str> = train.rows.iter().map(|r| r.categorical[c].as_str()).collect();
            CategoricalVocab { feature: FEATURE_NAMES[field].to_string(), categories: set.into_iter().map(String::from).collect() }
        })
        .collect();

    let n = train.len() as f64;
    let mut numeric = Vec::new();
    let mut warnings = Vec::new();
    for (j, name) in super::schema::numeric_feature_names().enumerate() {
        let mu = train.rows.iter().map(|r| r.numeric[j]).sum::<f64>() / n;
        let var = train.rows.iter().map(|r| (r.numeric[j] - mu).powi(2)).sum::<f64>() / n;
        let mut sigma = var.sqrt();
        if sigma == 0.0 || !sigma.is_finite() {
            warnings.push(format!("{name} is constant on the training split; sigma set to 1"));
            sigma = 1.0;
        }
        numeric.push(ColumnStats { feature: name.to_string(), mu, sigma });
    }
    Ok(Encoding { vocab, numeric, warnings })
}

/// Standardizes numeric fields and one-hot encodes categorical ones, keeping
/// the raw field order. Unseen categories encode as an all-zero block.
pub fn transform(records: &RecordSet, enc: &Encoding) -> Result<(FeatureMatrix, UnseenReport)> {
    let d = enc.dim();
    let mut names = Vec::with_capacity(d);
    let mut groups = Vec::new();
    let mut mu = Vec::with_capacity(d);
    let mut sigma = Vec::with_capacity(d);
    // (is_categorical, index into numeric stats or vocab)
    let mut layout = Vec::with_capacity(FEATURE_NAMES.len());
    let (mut ni, mut ci) = (0, 0);
    for (field, fname) in FEATURE_NAMES.iter().enumerate() {
        let start = names.len();
        if CATEGORICAL_FIELDS.contains(&field) {
            let v = &enc.vocab[ci];
            for cat in &v.categories {
                names.push(format!("{fname}_{cat}"));
                mu.push(0.0);
                sigma.push(1.0);
            }
            groups.push(FeatureGroup { name: fname.to_string(), kind: GroupKind::Categorical, start, len: v.categories.len() });
            layout.push((true, ci));
            ci += 1;
        } else {
            let s = &enc.numeric[ni];
            names.push(fname.to_string());
            mu.push(s.mu);
            sigma.push(s.sigma);
            groups.push(FeatureGroup { name: fname.to_string(), kind: GroupKind::Numeric, start, len: 1 });
            layout.push((false, ni));
            ni += 1;
        }
    }

    let lookups: Vec<BTreeMap<&str, usize>> = enc
        .vocab
        .iter()
        .map(|v| v.categories.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect())
        .collect();
    let mut report = UnseenReport::default();
    let mut data = vec![0.0; records.len() * d];
    for (r, rec) in records.rows.iter().enumerate() {
        let row = &mut data[r * d..(r + 1) * d];
        for ((is_cat, k), g) in layout.iter().zip(&groups) {
            if *is_cat {
                let value = rec.categorical[*k].as_str();
                match lookups[*k].get(value) {
                    Some(&pos) => row[g.start + pos] = 1.0,
                    None => {
                        *report
                            .unseen
                            .entry(enc.vocab[*k].feature.clone())
                            .or_default()
                            .entry(value.to_string())
                            .or_default() += 1
                    }
                }
            } else {
                let s = &enc.numeric[*k];
                row[g.start] = (rec.numeric[*k] - s.mu) / s.sigma;
            }
        }
    }
    let m = FeatureMatrix {
        values: Tensor::new(vec![records.len(), d], data)?,
        labels: records.class_labels.iter().map(|c| c.index()).collect(),
        feature_names: names,
        groups,
        mu,
        sigma,
        class_names: TrafficClass::names(),
    };
    m.validate()?;
    Ok((m, report))
}
