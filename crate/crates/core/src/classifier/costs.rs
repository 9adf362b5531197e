use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::dataset::ClassStats;
use crate::error::{contract_err, Error, Result};

pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CostScheme {
    InverseFrequency,
    Uniform,
    Custom(Vec<f64>),
}

/// Per-class loss weights, normalized to mean 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostMatrix {
    pub weights: Vec<f64>,
}

impl CostMatrix {
    pub fn uniform(classes: usize) -> Self {
        CostMatrix { weights: vec![1.0; classes] }
    }

    fn normalized(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() || raw.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config(format!("cost weights must be finite and positive, got {raw:?}")));
        }
        let mean = raw.iter().sum::<f64>() / raw.len() as f64;
        Ok(CostMatrix { weights: raw.into_iter().map(|w| w / mean).collect() })
    }
}

pub fn cost_weights(stats: &ClassStats, scheme: &CostScheme) -> Result<CostMatrix> {
    match scheme {
        CostScheme::Uniform => Ok(CostMatrix::uniform(stats.num_classes())),
        CostScheme::InverseFrequency => {
            if let Some(c) = stats.counts.iter().position(|&n| n == 0) {
                return Err(Error::Config(format!(
                    "class `{}` has no samples; inverse-frequency weights are undefined",
                    stats.class_names[c]
                )));
            }
            CostMatrix::normalized(stats.counts.iter().map(|&n| 1.0 / n as f64).collect())
        }
        CostScheme::Custom(w) => {
            if w.len() != stats.num_classes() {
                return Err(Error::Config(format!("{} custom weights for {} classes", w.len(), stats.num_classes())));
            }
            CostMatrix::normalized(w.clone())
        }
    }
}

/// Cost-sensitive cross-entropy: batch mean of `−Σ_i w_i·y_i·ln p_i`.
///
/// `p` must hold probability rows; `y` must be one-hot.
pub fn cs_ce_loss(tape: &mut Tape, p: Var, y: &Tensor, w: &CostMatrix) -> Result<Var> {
    let pv = tape.value(p);
    let c = pv.last_dim();
    if pv.rank() != 2 || y.shape() != pv.shape() || w.weights.len() != c {
        return Err(contract_err!("probs {:?}, targets {:?}, {} weights", pv.shape(), y.shape(), w.weights.len()));
    }
    for (i, row) in pv.data().chunks(c).enumerate() {
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > 1e-6 || row.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(contract_err!("row {i} of p is not a distribution (sum {s})"));
        }
    }
    for (i, row) in y.data().chunks(c).enumerate() {
        if row.iter().filter(|&&v| v == 1.0).count() != 1 || row.iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(contract_err!("row {i} of y is not one-hot"));
        }
    }
    tape.weighted_nll(p, y, &w.weights, PROB_FLOOR)
}
