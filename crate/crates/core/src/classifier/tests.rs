use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::{grad_check, Tape, Tensor};
use crate::dataset::FeatureMatrix;
use crate::error::Error;
use crate::metrics::{count_params, Complexity};

fn small() -> ClassifierConfig {
    ClassifierConfig {
        input_dim: 8,
        num_classes: 3,
        channels: 8,
        conv_blocks: 2,
        dense_width: 6,
        squeeze_ratio: 4,
        ..ClassifierConfig::default()
    }
}

fn names(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("c{i}")).collect()
}

fn model(cfg: ClassifierConfig, seed: u64) -> ClassifierModel {
    let c = cfg.num_classes;
    ClassifierModel::new(cfg, names(c), CostMatrix::uniform(c), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random(shape: &[usize], r: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap()
}

#[test]
fn default_layout_has_twelve_layers() {
    let m = model(ClassifierConfig::default(), 0);
    let layers = m.layer_costs();
    assert_eq!(layers.len(), 12);
    assert_eq!(count_params(&m).params as usize, m.params.numel());
    assert_eq!(m.params.get(m.params.index_of("cam0.fc1.weight").unwrap()).shape(), &[40, 5]);
}

#[test]
fn squeeze_larger_than_channels_is_a_config_error() {
    let cfg = ClassifierConfig { channels: 4, squeeze_ratio: 8, ..small() };
    let r = ClassifierModel::new(cfg, names(3), CostMatrix::uniform(3), &mut ChaCha8Rng::seed_from_u64(0));
    assert!(matches!(r, Err(Error::Config(_))));
    let short = ClassifierConfig { input_dim: 2, conv_blocks: 3, ..small() };
    assert!(short.validate().is_err());
}

#[test]
fn probabilities_are_distributions_and_batching_is_invisible() {
    let m = model(small(), 1);
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let mut x = random(&[600, 8], &mut r);
    x.data_mut().copy_within(0..8, 8); // row 1 duplicates row 0
    let all = predict(&m, &x).unwrap();
    for row in all.probs.data().chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    assert_eq!(all.probs.row(0), all.probs.row(1));
    for i in [0, 299, 599] {
        let one = predict(&m, &x.select_rows(&[i])).unwrap();
        for (a, b) in one.probs.data().iter().zip(all.probs.row(i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(predict(&m, &x).unwrap(), all);
}

#[test]
fn wrong_width_is_a_dimension_error() {
    let m = model(small(), 1);
    assert!(matches!(predict(&m, &Tensor::zeros(&[2, 7])), Err(Error::Dimension(_))));
}

#[test]
fn argmax_prefers_lowest_index() {
    assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
    assert_eq!(argmax(&[0.1, 0.45, 0.45]), 1);
}

#[test]
fn full_model_gradient_check() {
    for use_cam in [true, false] {
        let m = model(ClassifierConfig { use_cam, ..small() }, 3);
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let x = random(&[4, 8], &mut r);
        let y = Tensor::one_hot(&[0, 2, 1, 2], 3).unwrap();
        let cost = CostMatrix { weights: vec![0.5, 1.0, 1.5] };
        let rep = grad_check(
            |tape, vars| {
                let xv = tape.constant(x.clone());
                let logits = m.logits(tape, vars, xv, None::<&mut ChaCha8Rng>)?;
                let p = tape.softmax(logits)?;
                cs_ce_loss(tape, p, &y, &cost)
            },
            m.params.tensors(),
            1e-6,
        )
        .unwrap();
        assert!(rep.max_relative_error < 1e-4, "cam={use_cam}: {rep:?}");
    }
}

fn blobs(n_per: &[usize], d: usize, gap: f64, seed: u64) -> FeatureMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (c, &n) in n_per.iter().enumerate() {
        for _ in 0..n {
            for j in 0..d {
                let centre = if j % n_per.len() == c { gap } else { 0.0 };
                data.push(centre + r.gen_range(-1.0..1.0));
            }
            labels.push(c);
        }
    }
    let rows = labels.len();
    FeatureMatrix::from_parts(Tensor::new(vec![rows, d], data).unwrap(), labels, names(n_per.len())).unwrap()
}

#[test]
fn separable_task_is_learned() {
    let data = blobs(&[150, 150], 8, 3.0, 5);
    let arch = ClassifierConfig { channels: 8, squeeze_ratio: 4, conv_blocks: 2, dense_width: 8, ..ClassifierConfig::default() };
    let cfg = TrainConfig { max_epochs: 50, patience: 50, batch_size: 32, seed: 1, ..TrainConfig::default() };
    let t = train_cscacnn(&data, arch, &cfg).unwrap();
    let pred = predict(&t.model, &data.values).unwrap();
    let acc = pred.labels.iter().zip(&data.labels).filter(|(a, b)| a == b).count() as f64 / data.rows() as f64;
    assert!(acc >= 0.99, "accuracy {acc}");
    assert!(!t.log.is_empty() && t.log.len() <= 50);
}

#[test]
fn untrained_model_is_near_uniform() {
    let m = model(ClassifierConfig { input_dim: 40, num_classes: 5, ..ClassifierConfig::default() }, 9);
    let x = random(&[200, 40], &mut ChaCha8Rng::seed_from_u64(10));
    let p = predict(&m, &x).unwrap();
    let mean_entropy: f64 = p.probs.data().chunks(5).map(|r| -r.iter().map(|v| v * v.ln()).sum::<f64>()).sum::<f64>() / 200.0;
    assert!(mean_entropy > 0.8 * 5f64.ln(), "entropy {mean_entropy}");
}

#[test]
fn zero_epochs_returns_initial_model() {
    let data = blobs(&[20, 20], 8, 3.0, 1);
    let arch = ClassifierConfig { channels: 8, squeeze_ratio: 4, conv_blocks: 2, ..ClassifierConfig::default() };
    let t = train_cscacnn(&data, arch, &TrainConfig { max_epochs: 0, ..TrainConfig::default() }).unwrap();
    assert_eq!(t.best_epoch, 0);
    assert!(t.log.is_empty());
}

#[test]
fn training_is_deterministic() {
    let data = blobs(&[60, 30, 10], 8, 2.0, 2);
    let arch = ClassifierConfig { channels: 8, squeeze_ratio: 4, conv_blocks: 2, ..ClassifierConfig::default() };
    let cfg = TrainConfig { max_epochs: 3, batch_size: 16, seed: 4, ..TrainConfig::default() };
    let a = train_cscacnn(&data, arch.clone(), &cfg).unwrap();
    let b = train_cscacnn(&data, arch, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.log, b.log);
}

#[test]
fn missing_class_is_rejected() {
    let mut data = blobs(&[10, 10], 8, 2.0, 2);
    data.class_names.push("empty".into());
    assert!(train_cscacnn(&data, small(), &TrainConfig::default()).is_err());
}

#[test]
fn scaled_weights_give_same_step_direction() {
    // One Adam step is invariant to a positive loss scale, so predictions match.
    let data = blobs(&[30, 20, 10], 8, 2.0, 3);
    let arch = ClassifierConfig { channels: 8, squeeze_ratio: 4, conv_blocks: 2, dropout: 0.0, ..ClassifierConfig::default() };
    let base = CostMatrix { weights: vec![0.5, 1.0, 1.5] };
    let scaled = CostMatrix { weights: base.weights.iter().map(|w| w * 4.0).collect() };
    let step = |cost: &CostMatrix| {
        let mut m = ClassifierModel::new(
            ClassifierConfig { input_dim: 8, num_classes: 3, ..arch.clone() },
            names(3),
            cost.clone(),
            &mut ChaCha8Rng::seed_from_u64(11),
        )
        .unwrap();
        let mut tape = Tape::new();
        let vars = m.params.bind(&mut tape, true);
        let x = tape.constant(data.values.clone());
        let logits = m.logits(&mut tape, &vars, x, None::<&mut ChaCha8Rng>).unwrap();
        let p = tape.softmax(logits).unwrap();
        let y = Tensor::one_hot(&data.labels, 3).unwrap();
        let loss = cs_ce_loss(&mut tape, p, &y, cost).unwrap();
        let value = tape.value(loss).item();
        let mut grads = tape.backward(loss).unwrap();
        let g = m.params.collect_grads(&mut grads, &vars);
        let mut adam = crate::autodiff::AdamState::new(&m.params, Default::default());
        adam.step(&mut m.params, &g, 0.01).unwrap();
        (value, predict(&m, &data.values).unwrap().labels)
    };
    let (la, pa) = step(&base);
    let (lb, pb) = step(&scaled);
    assert!((lb - 4.0 * la).abs() < 1e-9 * lb.abs());
    assert_eq!(pa, pb);
}

#[test]
fn checkpoint_round_trip_is_exact() {
    let m = model(small(), 12);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.ckpt");
    m.save(&path, serde_json::json!({"seed": 12})).unwrap();
    let back = ClassifierModel::load(&path).unwrap();
    assert_eq!(back, m);
    let x = random(&[5, 8], &mut ChaCha8Rng::seed_from_u64(1));
    assert_eq!(predict(&back, &x).unwrap(), predict(&m, &x).unwrap());
}

#[test]
fn threshold_mode_and_json_lines() {
    let pred = Prediction {
        probs: Tensor::new(vec![2, 3], vec![0.7, 0.2, 0.1, 0.3, 0.3, 0.4]).unwrap(),
        labels: vec![0, 2],
    };
    let b = threshold_binary(&pred, 0, 0.5).unwrap();
    assert_eq!(b.labels, vec![0, 1]);
    assert!((b.probs.row(1)[1] - 0.7).abs() < 1e-15);
    let mut buf = Vec::new();
    write_predictions_jsonl(&pred, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["row_index"], 0);
    assert_eq!(first["label"], 0);
    assert_eq!(text.lines().count(), 2);
}
