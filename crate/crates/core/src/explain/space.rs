use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::classifier::{predict, ClassifierModel};
use crate::dataset::{FeatureGroup, FeatureMatrix, GroupKind};
use crate::error::{contract_err, dim_err, Result};

/// A model reduced to one real output per row, e.g. a class probability.
pub trait ScalarModel: Sync {
    fn eval_rows(&self, x: &Tensor) -> Result<Vec<f64>>;
}

impl<F> ScalarModel for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn eval_rows(&self, x: &Tensor) -> Result<Vec<f64>> {
        let d = x.last_dim();
        if d == 0 {
            return Ok(vec![self(&[]); x.rows()]);
        }
        Ok(x.data().par_chunks(d).map(self).collect())
    }
}

/// `P(class | x)` under a trained classifier.
pub struct ClassProbability<'a> {
    pub model: &'a ClassifierModel,
    pub class: usize,
}

impl ScalarModel for ClassProbability<'_> {
    fn eval_rows(&self, x: &Tensor) -> Result<Vec<f64>> {
        let p = predict(self.model, x)?;
        let c = p.probs.last_dim();
        Ok(p.probs.data().chunks(c).map(|r| r[self.class]).collect())
    }
}

/// Column names plus the groups that are switched on and off as a unit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub names: Vec<String>,
    pub groups: Vec<FeatureGroup>,
}

impl FeatureSpace {
    pub fn from_matrix(m: &FeatureMatrix) -> Self {
        FeatureSpace { names: m.feature_names.clone(), groups: m.groups.clone() }
    }

    /// Every column is its own numeric group.
    pub fn per_feature(names: &[&str]) -> Self {
        let groups = names
            .iter()
            .enumerate()
            .map(|(i, n)| FeatureGroup { name: n.to_string(), kind: GroupKind::Numeric, start: i, len: 1 })
            .collect();
        FeatureSpace { names: names.iter().map(|s| s.to_string()).collect(), groups }
    }

    pub fn dim(&self) -> usize {
        self.names.len()
    }

    pub fn group_names(&self) -> Vec<String> {
        self.groups.iter().map(|g| g.name.clone()).collect()
    }

    pub(crate) fn check(&self, x: &[f64], background: &Tensor) -> Result<()> {
        if x.len() != self.dim() {
            return Err(dim_err!("sample has {} features, space has {}", x.len(), self.dim()));
        }
        if background.rank() != 2 || background.last_dim() != self.dim() {
            return Err(dim_err!("background {:?} does not match {} features", background.shape(), self.dim()));
        }
        if background.rows() == 0 {
            return Err(contract_err!("background set is empty"));
        }
        Ok(())
    }

    /// Display name and value of group `g` at `x`. A one-hot group reports
    /// its active indicator column (`service_http`, value 1).
    pub(crate) fn describe(&self, g: usize, x: &[f64]) -> (String, f64) {
        let grp = &self.groups[g];
        match grp.kind {
            GroupKind::Numeric if grp.len == 1 => (self.names[grp.start].clone(), x[grp.start]),
            GroupKind::Numeric => (grp.name.clone(), x[grp.columns()].iter().sum()),
            GroupKind::Categorical => match grp.columns().find(|&c| x[c] != 0.0) {
                Some(c) => (self.names[c].clone(), x[c]),
                None => (format!("{}=<none>", grp.name), 0.0),
            },
        }
    }
}

/// Fills row `out` with `x` on groups where `keep[g]` and with `fill` elsewhere.
pub(crate) fn compose(space: &FeatureSpace, keep: &[bool], x: &[f64], fill: &[f64], out: &mut [f64]) {
    out.copy_from_slice(fill);
    for (g, grp) in space.groups.iter().enumerate() {
        if keep[g] {
            out[grp.columns()].copy_from_slice(&x[grp.columns()]);
        }
    }
}
