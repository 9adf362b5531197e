use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::costs::{cost_weights, cs_ce_loss, CostScheme};
use super::model::{ClassifierConfig, ClassifierModel};
use super::predict::predict;
use crate::autodiff::{AdamConfig, AdamState, Tape, Tensor};
use crate::dataset::{stratified_split, ClassStats, FeatureMatrix};
use crate::error::{contract_err, Error, Result};
use crate::metrics::weighted_prf;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a validation weighted-F1 improvement before stopping.
    pub patience: usize,
    /// Stratified fraction held out for model selection.
    pub val_fraction: f64,
    pub cost_scheme: CostScheme,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 128,
            max_epochs: 60,
            patience: 10,
            val_fraction: 0.1,
            cost_scheme: CostScheme::InverseFrequency,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_weighted_f1: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedClassifier {
    pub model: ClassifierModel,
    pub log: Vec<EpochLog>,
    /// Epoch whose weights were kept; 0 means the initial weights.
    pub best_epoch: usize,
}

fn training_error(epoch: usize, message: String, model: &ClassifierModel) -> Error {
    Error::Training { epoch, message, checkpoint: Some(Box::new(model.to_checkpoint(json!({ "epoch": epoch })))) }
}

/// Mini-batch Adam on the cost-sensitive loss with early stopping on
/// validation weighted F1. `arch.input_dim` and `arch.num_classes` are taken
/// from `data`.
pub fn train_cscacnn(data: &FeatureMatrix, arch: ClassifierConfig, cfg: &TrainConfig) -> Result<TrainedClassifier> {
    let classes = data.num_classes();
    let stats = data.class_stats();
    if let Some(c) = stats.counts.iter().position(|&n| n == 0) {
        return Err(contract_err!("class `{}` has no training rows", data.class_names[c]));
    }
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::Config(format!(
            "invalid training config: batch {}, lr {}, val fraction {}",
            cfg.batch_size, cfg.learning_rate, cfg.val_fraction
        )));
    }
    let arch = ClassifierConfig { input_dim: data.dim(), num_classes: classes, ..arch };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let (train_idx, val_idx) = stratified_split(&data.labels, classes, cfg.val_fraction, &mut rng);
    let val_idx = if val_idx.is_empty() { train_idx.clone() } else { val_idx };
    let train_labels: Vec<usize> = train_idx.iter().map(|&i| data.labels[i]).collect();
    let cost = cost_weights(&ClassStats::from_labels(&train_labels, &data.class_names), &cfg.cost_scheme)?;

    let mut model = ClassifierModel::new(arch, data.class_names.clone(), cost, &mut rng)?;
    let mut adam = AdamState::new(&model.params, AdamConfig::default());
    let x_val = data.values.select_rows(&val_idx);
    let y_val: Vec<usize> = val_idx.iter().map(|&i| data.labels[i]).collect();
    let score = |m: &ClassifierModel| -> Result<(f64, f64)> {
        let pred = predict(m, &x_val)?;
        let prf = weighted_prf(&y_val, &pred.labels, classes)?;
        Ok((prf.f1, prf.recall))
    };

    let (mut best_f1, _) = score(&model)?;
    let mut best = model.params.clone();
    let mut best_epoch = 0;
    let mut waited = 0;
    let mut log = Vec::new();
    let mut order = train_idx.clone();
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut tape = Tape::new();
            let vars = model.params.bind(&mut tape, true);
            let x = tape.constant(data.values.select_rows(batch));
            let labels: Vec<usize> = batch.iter().map(|&i| data.labels[i]).collect();
            let y = Tensor::one_hot(&labels, classes)?;
            let logits = model.logits(&mut tape, &vars, x, Some(&mut rng))?;
            let p = tape.softmax(logits)?;
            let loss = cs_ce_loss(&mut tape, p, &y, &model.cost)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(training_error(epoch, format!("loss became {value}"), &model));
            }
            loss_sum += value * batch.len() as f64;
            let mut grads = tape.backward(loss).map_err(|e| training_error(epoch, e.to_string(), &model))?;
            let g = model.params.collect_grads(&mut grads, &vars);
            let snapshot = model.params.clone();
            adam.step(&mut model.params, &g, cfg.learning_rate)?;
            if !model.params.is_finite() {
                model.params = snapshot;
                return Err(training_error(epoch, "parameters became non-finite".into(), &model));
            }
        }
        let (f1, acc) = score(&model)?;
        log.push(EpochLog { epoch, train_loss: loss_sum / order.len() as f64, val_weighted_f1: f1, val_accuracy: acc });
        if f1 > best_f1 {
            best_f1 = f1;
            best = model.params.clone();
            best_epoch = epoch;
            waited = 0;
        } else {
            waited += 1;
            if waited >= cfg.patience {
                break;
            }
        }
    }
    model.params = best;
    Ok(TrainedClassifier { model, log, best_epoch })
}
