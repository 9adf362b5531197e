use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::loss::{discriminator_loss, generator_loss};
use super::model::{GanConfig, GanModel};
use crate::autodiff::{AdamConfig, AdamState, Tape, Tensor};
use crate::dataset::FeatureMatrix;
use crate::error::{contract_err, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanTrainConfig {
    pub gen_learning_rate: f64,
    pub disc_learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig { gen_learning_rate: 1e-3, disc_learning_rate: 5e-6, batch_size: 128, epochs: 30, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanEpochLog {
    pub epoch: usize,
    /// Mean discriminator and generator losses over the epoch's iterations.
    pub loss_d: f64,
    pub loss_g: f64,
}

#[derive(Clone, Debug)]
pub struct TrainedGan {
    pub model: GanModel,
    pub log: Vec<GanEpochLog>,
}

fn noise<R: Rng>(rows: usize, dim: usize, rng: &mut R) -> Result<Tensor> {
    Tensor::new(vec![rows, dim], (0..rows * dim).map(|_| rng.sample(StandardNormal)).collect())
}

fn diverged(epoch: usize, what: &str, value: f64, last_good: &GanModel) -> Error {
    Error::Training {
        epoch,
        message: format!("{what} became {value}"),
        checkpoint: Some(Box::new(last_good.to_checkpoint(json!({ "epoch": epoch })))),
    }
}

/// Alternating training: per mini-batch, one discriminator step on a real
/// batch and a generated batch with uniformly drawn labels, then one generator
/// step. `arch.feature_dim` and `arch.num_classes` are taken from `train`.
pub fn train_scgan(train: &FeatureMatrix, arch: GanConfig, cfg: &GanTrainConfig) -> Result<TrainedGan> {
    let classes = train.num_classes();
    let stats = train.class_stats();
    if let Some(c) = stats.counts.iter().position(|&n| n == 0) {
        return Err(contract_err!("class `{}` has no training rows", train.class_names[c]));
    }
    if cfg.batch_size == 0 || !(cfg.gen_learning_rate > 0.0) || !(cfg.disc_learning_rate > 0.0) {
        return Err(Error::Config("GAN batch size and learning rates must be positive".into()));
    }
    let arch = GanConfig { feature_dim: train.dim(), num_classes: classes, ..arch };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = GanModel::new(arch, train.class_names.clone(), stats.counts.clone(), &mut rng)?;
    let mut adam_g = AdamState::new(&model.generator, AdamConfig::default());
    let mut adam_d = AdamState::new(&model.discriminator, AdamConfig::default());
    let nz = model.config.noise();

    let mut order: Vec<usize> = (0..train.rows()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut sum_d, mut sum_g, mut iters) = (0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            let b = batch.len();
            let last_good = model.clone();

            // discriminator step
            let real_labels: Vec<usize> = batch.iter().map(|&i| train.labels[i]).collect();
            let fake_labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();
            let z = noise(b, nz, &mut rng)?;
            let mut tape = Tape::new();
            let gv = model.generator.bind(&mut tape, false);
            let dv = model.discriminator.bind(&mut tape, true);
            let x_real = tape.constant(train.values.select_rows(batch));
            let c_real = tape.constant(Tensor::one_hot(&real_labels, classes)?);
            let c_fake = tape.constant(Tensor::one_hot(&fake_labels, classes)?);
            let zv = tape.constant(z);
            let x_fake = model.generator_forward(&mut tape, &gv, zv, c_fake)?;
            let d_real = model.discriminator_forward(&mut tape, &dv, x_real, c_real, Some(&mut rng))?;
            let d_fake = model.discriminator_forward(&mut tape, &dv, x_fake, c_fake, Some(&mut rng))?;
            if !tape.value(d_real).is_finite() || !tape.value(d_fake).is_finite() {
                return Err(diverged(epoch, "discriminator output", f64::NAN, &last_good));
            }
            let loss_d = discriminator_loss(&mut tape, d_real, d_fake)?;
            let ld = tape.value(loss_d).item();
            if !ld.is_finite() {
                return Err(diverged(epoch, "L_D", ld, &last_good));
            }
            let mut grads = tape.backward(loss_d)?;
            let g = model.discriminator.collect_grads(&mut grads, &dv);
            adam_d.step(&mut model.discriminator, &g, cfg.disc_learning_rate)?;

            // generator step
            let gen_labels: Vec<usize> = (0..b).map(|_| rng.gen_range(0..classes)).collect();
            let z = noise(b, nz, &mut rng)?;
            let mut tape = Tape::new();
            let gv = model.generator.bind(&mut tape, true);
            let dv = model.discriminator.bind(&mut tape, false);
            let cond = tape.constant(Tensor::one_hot(&gen_labels, classes)?);
            let zv = tape.constant(z);
            let x_fake = model.generator_forward(&mut tape, &gv, zv, cond)?;
            if !tape.value(x_fake).is_finite() {
                return Err(diverged(epoch, "generator output", f64::NAN, &last_good));
            }
            let d_fake = model.discriminator_forward(&mut tape, &dv, x_fake, cond, Some(&mut rng))?;
            let loss_g = generator_loss(&mut tape, d_fake)?;
            let lg = tape.value(loss_g).item();
            if !lg.is_finite() {
                return Err(diverged(epoch, "L_G", lg, &last_good));
            }
            let mut grads = tape.backward(loss_g)?;
            let g = model.generator.collect_grads(&mut grads, &gv);
            adam_g.step(&mut model.generator, &g, cfg.gen_learning_rate)?;

            if !model.generator.is_finite() || !model.discriminator.is_finite() {
                return Err(diverged(epoch, "parameters", f64::NAN, &last_good));
            }
            sum_d += ld;
            sum_g += lg;
            iters += 1;
        }
        let k = iters.max(1) as f64;
        log.push(GanEpochLog { epoch, loss_d: sum_d / k, loss_g: sum_g / k });
    }
    Ok(TrainedGan { model, log })
}
