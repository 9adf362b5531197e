use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::schema::BINARY_CLASS_NAMES;
use super::stats::ClassStats;
use crate::autodiff::Tensor;
use crate::container::{self, Section};
use crate::error::{contract_err, dim_err, Error, Result};

pub const MAGIC: &[u8; 8] = b"NIDSMATX";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupKind {
    Numeric,
    Categorical,
}

/// A raw input field and the encoded columns it occupies. Categorical fields
/// span one one-hot block; numeric fields span a single column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub kind: GroupKind,
    pub start: usize,
    pub len: usize,
}

impl FeatureGroup {
    pub fn columns(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

/// Encoded design matrix with labels and the metadata needed to interpret it.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub values: Tensor,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
    /// Per-column standardization (`mu`, `sigma`); one-hot columns carry (0, 1).
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
    pub class_names: Vec<String>,
}

impl FeatureMatrix {
    /// Plain numeric matrix with generated column names `x0, x1, …`.
    pub fn from_parts(values: Tensor, labels: Vec<usize>, class_names: Vec<String>) -> Result<Self> {
        if values.rank() != 2 {
            return Err(dim_err!("feature matrix must be rank 2, got {:?}", values.shape()));
        }
        let d = values.shape()[1];
        let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        let groups = names
            .iter()
            .enumerate()
            .map(|(i, n)| FeatureGroup { name: n.clone(), kind: GroupKind::Numeric, start: i, len: 1 })
            .collect();
        let m = FeatureMatrix {
            values,
            labels,
            feature_names: names,
            groups,
            mu: vec![0.0; d],
            sigma: vec![1.0; d],
            class_names,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.rows(), self.dim());
        if self.labels.len() != n {
            return Err(dim_err!("{} labels for {n} rows", self.labels.len()));
        }
        if self.feature_names.len() != d || self.mu.len() != d || self.sigma.len() != d {
            return Err(dim_err!("column metadata does not match width {d}"));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.class_names.len()) {
            return Err(contract_err!("label {bad} outside {} classes", self.class_names.len()));
        }
        let covered: usize = self.groups.iter().map(|g| g.len).sum();
        if covered != d {
            return Err(dim_err!("feature groups cover {covered} of {d} columns"));
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn class_stats(&self) -> ClassStats {
        ClassStats::from_labels(&self.labels, &self.class_names)
    }

    /// Same metadata, different rows.
    pub fn with_rows(&self, values: Tensor, labels: Vec<usize>) -> Result<Self> {
        let m = FeatureMatrix { values, labels, ..self.clone_meta() };
        m.validate()?;
        Ok(m)
    }

    fn clone_meta(&self) -> FeatureMatrix {
        FeatureMatrix {
            values: Tensor::zeros(&[0, self.dim()]),
            labels: vec![],
            feature_names: self.feature_names.clone(),
            groups: self.groups.clone(),
            mu: self.mu.clone(),
            sigma: self.sigma.clone(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn select(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ..self.clone_meta()
        }
    }

    /// Row-wise concatenation; both matrices must share a feature space.
    pub fn append(&self, other: &FeatureMatrix) -> Result<FeatureMatrix> {
        if self.feature_names != other.feature_names || self.class_names != other.class_names {
            return Err(contract_err!("cannot append matrices with different feature spaces"));
        }
        let values = Tensor::vstack(&[&self.values, &other.values])?;
        let mut labels = self.labels.clone();
        labels.extend(&other.labels);
        self.with_rows(values, labels)
    }

    /// Collapses every non-zero class into a single `Attack` class.
    pub fn to_binary(&self) -> FeatureMatrix {
        FeatureMatrix {
            values: self.values.clone(),
            labels: self.labels.iter().map(|&l| usize::from(l != 0)).collect(),
            class_names: BINARY_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
            ..self.clone_meta()
        }
    }

    pub fn indices_of_class(&self, class: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == class).map(|(i, _)| i).collect()
    }

    pub fn to_bytes(&self, meta: Option<&Value>) -> Result<Vec<u8>> {
        let mut h = Map::new();
        h.insert("kind".into(), "feature-matrix".into());
        h.insert("shape".into(), serde_json::json!([self.rows(), self.dim()]));
        h.insert("feature_names".into(), serde_json::to_value(&self.feature_names)?);
        h.insert("groups".into(), serde_json::to_value(&self.groups)?);
        h.insert("mu".into(), serde_json::to_value(&self.mu)?);
        h.insert("sigma".into(), serde_json::to_value(&self.sigma)?);
        h.insert("class_map".into(), serde_json::to_value(&self.class_names)?);
        if let Some(m) = meta {
            h.insert("meta".into(), m.clone());
        }
        let labels = self.labels.iter().map(|&l| l as u32).collect();
        container::encode(
            MAGIC,
            h,
            &[("values", Section::F64(self.values.data().to_vec())), ("labels", Section::U32(labels))],
        )
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, Option<Value>)> {
        let mut d = container::decode(MAGIC, bytes)?;
        let field = |k: &str| d.header.get(k).cloned().ok_or_else(|| Error::Format(format!("matrix header lacks `{k}`")));
        let shape: Vec<usize> = serde_json::from_value(field("shape")?)?;
        let feature_names = serde_json::from_value(field("feature_names")?)?;
        let groups = serde_json::from_value(field("groups")?)?;
        let mu = serde_json::from_value(field("mu")?)?;
        let sigma = serde_json::from_value(field("sigma")?)?;
        let class_names = serde_json::from_value(field("class_map")?)?;
        let meta = d.header.get("meta").cloned();
        let values = Tensor::new(shape, d.take_f64("values")?)?;
        let labels = d.take_u32("labels")?.into_iter().map(|l| l as usize).collect();
        let m = FeatureMatrix { values, labels, feature_names, groups, mu, sigma, class_names };
        m.validate()?;
        Ok((m, meta))
    }

    pub fn save(&self, path: &Path, meta: Option<&Value>) -> Result<()> {
        container::write_file(path, &self.to_bytes(meta)?)
    }

    pub fn load(path: &Path) -> Result<(Self, Option<Value>)> {
        Self::from_bytes(&container::read_file(path)?)
    }
}

/// Splits indices per class, sending `holdout` of each class (at least one
/// row when the class has two or more) to the second set.
pub fn stratified_split<R: Rng>(labels: &[usize], num_classes: usize, holdout: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut keep = Vec::new();
    let mut held = Vec::new();
    for c in 0..num_classes {
        let mut idx: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| l == c).map(|(i, _)| i).collect();
        idx.shuffle(rng);
        let mut n_hold = (idx.len() as f64 * holdout).round() as usize;
        if n_hold == 0 && idx.len() >= 2 && holdout > 0.0 {
            n_hold = 1;
        }
        n_hold = n_hold.min(idx.len().saturating_sub(1));
        held.extend_from_slice(&idx[..n_hold]);
        keep.extend_from_slice(&idx[n_hold..]);
    }
    keep.sort_unstable();
    held.sort_unstable();
    (keep, held)
}

/// Draws about `n` rows while preserving class proportions; every present
/// class keeps at least one row.
pub fn stratified_subsample<R: Rng>(labels: &[usize], num_classes: usize, n: usize, rng: &mut R) -> Vec<usize> {
    if n >= labels.len() {
        return (0..labels.len()).collect();
    }
    let frac = n as f64 / labels.len() as f64;
    let mut out = Vec::new();
    for c in 0..num_classes {
        let mut idx: Vec<usize> = labels.iter().enumerate().filter(|(_, &l)| l == c).map(|(i, _)| i).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(rng);
        let take = ((idx.len() as f64 * frac).round() as usize).clamp(1, idx.len());
        out.extend_from_slice(&idx[..take]);
    }
    out.sort_unstable();
    out
}
