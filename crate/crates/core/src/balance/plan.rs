use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{generate, GanModel};
use crate::autodiff::Tensor;
use crate::dataset::{ClassStats, FeatureMatrix};
use crate::error::{contract_err, Error, Result};

/// Rows to synthesize per class so every class reaches the majority count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalancePlan {
    pub class_names: Vec<String>,
    pub counts: Vec<usize>,
}

impl BalancePlan {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn zeros(class_names: &[String]) -> Self {
        BalancePlan { class_names: class_names.to_vec(), counts: vec![0; class_names.len()] }
    }

    fn check(&self, data: &FeatureMatrix) -> Result<()> {
        if self.counts.len() != data.num_classes() {
            return Err(contract_err!("plan covers {} classes, data has {}", self.counts.len(), data.num_classes()));
        }
        Ok(())
    }
}

pub fn make_balance_plan(stats: &ClassStats) -> BalancePlan {
    let max = stats.max_count();
    BalancePlan { class_names: stats.class_names.clone(), counts: stats.counts.iter().map(|&c| max - c).collect() }
}

/// Derives an independent seed for class `c` from a stage seed.
pub(crate) fn class_seed(seed: u64, c: usize) -> u64 {
    seed ^ (c as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn append_rows(data: &FeatureMatrix, parts: Vec<(usize, Tensor)>) -> Result<FeatureMatrix> {
    let mut values = vec![&data.values];
    let mut labels = data.labels.clone();
    for (c, t) in &parts {
        values.push(t);
        labels.extend(std::iter::repeat(*c).take(t.shape()[0]));
    }
    data.with_rows(Tensor::vstack(&values)?, labels)
}

/// Original rows followed by `plan[c]` generated rows for each class in order.
pub fn balance_with_gan(data: &FeatureMatrix, model: &GanModel, plan: &BalancePlan, seed: u64) -> Result<FeatureMatrix> {
    plan.check(data)?;
    if model.feature_dim() != data.dim() || model.num_classes() != data.num_classes() {
        return Err(Error::Dimension(format!(
            "GAN produces {} features for {} classes, data has {} and {}",
            model.feature_dim(),
            model.num_classes(),
            data.dim(),
            data.num_classes()
        )));
    }
    let mut parts = Vec::new();
    for (c, &n) in plan.counts.iter().enumerate() {
        if n > 0 {
            parts.push((c, generate(model, c, n, class_seed(seed, c))?));
        }
    }
    append_rows(data, parts)
}

/// Duplicates uniformly drawn rows of each class per the plan.
pub fn random_oversample(data: &FeatureMatrix, plan: &BalancePlan, seed: u64) -> Result<FeatureMatrix> {
    plan.check(data)?;
    let mut parts = Vec::new();
    for (c, &n) in plan.counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let idx = data.indices_of_class(c);
        if idx.is_empty() {
            return Err(contract_err!("cannot oversample class `{}`: it has no rows", data.class_names[c]));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(seed, c));
        let pick: Vec<usize> = (0..n).map(|_| idx[rng.gen_range(0..idx.len())]).collect();
        parts.push((c, data.values.select_rows(&pick)));
    }
    append_rows(data, parts)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `k` nearest same-class rows of `base` (positions into `rows`), excluding itself.
/// Ties are broken by position.
fn neighbours(data: &FeatureMatrix, rows: &[usize], base: usize, k: usize) -> Vec<usize> {
    let x = data.row(rows[base]);
    let mut d: Vec<(f64, usize)> =
        (0..rows.len()).filter(|&j| j != base).map(|j| (sq_dist(x, data.row(rows[j])), j)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.into_iter().map(|(_, j)| j).collect()
}

#[derive(Clone, Debug)]
pub struct SmoteOutput {
    pub data: FeatureMatrix,
    pub warnings: Vec<String>,
}

/// SMOTE: `x + u·(neighbour − x)` with a neighbour drawn from the `k` nearest
/// same-class rows. `k` is clipped to class size − 1; single-row classes are
/// duplicated instead.
pub fn smote(data: &FeatureMatrix, plan: &BalancePlan, k: usize, seed: u64) -> Result<SmoteOutput> {
    plan.check(data)?;
    if k == 0 {
        return Err(Error::Config("SMOTE needs k >= 1".into()));
    }
    let d = data.dim();
    let mut parts = Vec::new();
    let mut warnings = Vec::new();
    for (c, &n) in plan.counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        let rows = data.indices_of_class(c);
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(seed, c));
        match rows.len() {
            0 => return Err(contract_err!("cannot oversample class `{}`: it has no rows", data.class_names[c])),
            1 => {
                warnings.push(format!("class `{}` has a single row; SMOTE falls back to duplication", data.class_names[c]));
                parts.push((c, data.values.select_rows(&vec![rows[0]; n])));
                continue;
            }
            _ => {}
        }
        let kk = k.min(rows.len() - 1);
        let draws: Vec<(usize, usize, f64)> =
            (0..n).map(|_| (rng.gen_range(0..rows.len()), rng.gen_range(0..kk), rng.gen::<f64>())).collect();
        let mut bases: Vec<usize> = draws.iter().map(|t| t.0).collect();
        bases.sort_unstable();
        bases.dedup();
        let nn: BTreeMap<usize, Vec<usize>> =
            bases.par_iter().map(|&b| (b, neighbours(data, &rows, b, kk))).collect::<Vec<_>>().into_iter().collect();
        let mut out = Vec::with_capacity(n * d);
        for (b, slot, u) in draws {
            let x = data.row(rows[b]);
            let y = data.row(rows[nn[&b][slot]]);
            out.extend(x.iter().zip(y).map(|(a, bb)| a + u * (bb - a)));
        }
        parts.push((c, Tensor::new(vec![n, d], out)?));
    }
    Ok(SmoteOutput { data: append_rows(data, parts)?, warnings })
}
