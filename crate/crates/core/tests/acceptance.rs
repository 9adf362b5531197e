//! Acceptance suite. Prints one line per criterion and exits non-zero if any
//! criterion fails. A criterion that needs data this machine lacks prints
//! NOT RUN and is never counted as a pass.
//!
//! Criterion 6 reads `NSLKDD_DIR` (a directory holding KDDTrain+.txt and
//! KDDTest+.txt). Criterion 3 uses those files too when present, otherwise a
//! generated file with the same per-attack row counts.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use nids_core::autodiff::{grad_check, Tape, Tensor, Var};
use nids_core::balance::{
    csam_forward, discriminator_loss, generate, generator_loss, make_balance_plan, train_scgan, CsamVars, GanConfig,
    GanModel, GanTrainConfig,
};
use nids_core::classifier::{
    cam_forward, cs_ce_loss, predict, train_cscacnn, CamVars, ClassifierConfig, ClassifierModel, CostMatrix, CostScheme,
    TrainConfig,
};
use nids_core::cli::{run_pipeline, Ctx, RunConfig, Stage};
use nids_core::dataset::{class_stats, load_nslkdd, FeatureMatrix, SplitTag};
use nids_core::explain::{kernel_shap, lime_explain, reference_row, FeatureSpace, LimeConfig, ShapConfig, ShapMode};
use nids_core::metrics::{accuracy, weighted_prf};

const TOL_FORMULA: f64 = 1e-12;
const TOL_GRAD: f64 = 1e-4;
const TOL_SHAP: f64 = 1e-9;
const MIN_FIDELITY: f64 = 0.90;
const MIN_SPEARMAN: f64 = 0.9;

enum Status {
    Pass,
    Fail,
    NotRun,
}

struct Outcome {
    status: Status,
    detail: String,
}

fn judged(ok: bool, detail: String) -> Outcome {
    Outcome { status: if ok { Status::Pass } else { Status::Fail }, detail }
}

fn rnd(r: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| r.gen_range(-scale..scale)).collect()).unwrap()
}

/// Entries bounded away from zero so ReLU-type kinks stay out of FD reach.
fn rnd_off_zero(r: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let v = (0..n).map(|_| r.gen_range(0.1..1.0) * if r.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    Tensor::new(shape.to_vec(), v).unwrap()
}

// ---- 1 ------------------------------------------------------------------

fn formula_oracles() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = BTreeMap::<&str, f64>::new();
    let mut track = |k: &'static str, a: f64, b: f64| {
        let e = (a - b).abs() / b.abs().max(1.0);
        let w = worst.entry(k).or_insert(0.0);
        *w = w.max(e);
    };
    let prob = |r: &mut ChaCha8Rng| match r.gen_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        2 => r.gen_range(0.0..1e-13),
        _ => r.gen_range(0.0..1.0),
    };
    for _ in 0..1000 {
        let n = r.gen_range(1..40);
        let dr: Vec<f64> = (0..n).map(|_| prob(&mut r)).collect();
        let df: Vec<f64> = (0..n).map(|_| prob(&mut r)).collect();
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::new(vec![n], dr.clone()).unwrap());
        let b = tape.constant(Tensor::new(vec![n], df.clone()).unwrap());
        let ld = discriminator_loss(&mut tape, a, b).unwrap();
        let lg = generator_loss(&mut tape, b).unwrap();
        let (mut sr, mut sf, mut sg) = (0.0, 0.0, 0.0);
        for i in 0..n {
            sr += dr[i].max(1e-12).ln();
            sf += (1.0 - df[i]).max(1e-12).ln();
            sg += df[i].max(1e-12).ln();
        }
        track("Eq2", tape.value(ld).item(), -sr / n as f64 - sf / n as f64);
        track("Eq3", tape.value(lg).item(), -sg / n as f64);
    }
    for _ in 0..1000 {
        let (n, c) = (r.gen_range(1..30), r.gen_range(2..7));
        let mut p = Vec::with_capacity(n * c);
        for _ in 0..n {
            let z: Vec<f64> = (0..c).map(|_| r.gen_range(-8.0..8.0)).collect();
            let m = z.iter().cloned().fold(f64::MIN, f64::max);
            let s: f64 = z.iter().map(|v| (v - m).exp()).sum();
            p.extend(z.iter().map(|v| (v - m).exp() / s));
        }
        let y: Vec<usize> = (0..n).map(|_| r.gen_range(0..c)).collect();
        let w: Vec<f64> = (0..c).map(|_| r.gen_range(0.05..5.0)).collect();
        let mut tape = Tape::new();
        let pv = tape.constant(Tensor::new(vec![n, c], p.clone()).unwrap());
        let l = cs_ce_loss(&mut tape, pv, &Tensor::one_hot(&y, c).unwrap(), &CostMatrix { weights: w.clone() }).unwrap();
        let mut s = 0.0;
        for i in 0..n {
            for k in 0..c {
                let yk = if y[i] == k { 1.0 } else { 0.0 };
                if yk != 0.0 {
                    s -= w[k] * yk * p[i * c + k].max(1e-12).ln();
                }
            }
        }
        track("Eq5", tape.value(l).item(), s / n as f64);
    }
    for _ in 0..1000 {
        let (n, c) = (r.gen_range(1..200), r.gen_range(2..6));
        let t: Vec<usize> = (0..n).map(|_| r.gen_range(0..c)).collect();
        let p: Vec<usize> = (0..n).map(|i| if r.gen_bool(0.6) { t[i] } else { r.gen_range(0..c) }).collect();
        let hits = t.iter().zip(&p).filter(|(a, b)| a == b).count();
        track("Eq6", accuracy(&t, &p).unwrap(), hits as f64 / n as f64);

        // one-vs-rest counts straight from the label lists
        let got = weighted_prf(&t, &p, c).unwrap();
        let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
        for k in 0..c {
            let tp = (0..n).filter(|&i| t[i] == k && p[i] == k).count() as f64;
            let fp = (0..n).filter(|&i| t[i] != k && p[i] == k).count() as f64;
            let fnn = (0..n).filter(|&i| t[i] == k && p[i] != k).count() as f64;
            let pre = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fnn > 0.0 { tp / (tp + fnn) } else { 0.0 };
            let f1 = if pre + rec > 0.0 { 2.0 * pre * rec / (pre + rec) } else { 0.0 };
            let share = (tp + fnn) / n as f64;
            wp += share * pre;
            wr += share * rec;
            wf += share * f1;
        }
        track("Eq7", got.precision, wp);
        track("Eq7", got.recall, wr);
        track("Eq7", got.f1, wf);
    }
    let ok = worst.values().all(|&e| e <= TOL_FORMULA);
    let detail = worst.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect::<Vec<_>>().join(", ");
    judged(ok, format!("max rel err over 1000 cases each: {detail} (tol {TOL_FORMULA:.0e})"))
}

// ---- 2 ------------------------------------------------------------------

fn gradient_suite() -> Outcome {
    let mut r = ChaCha8Rng::seed_from_u64(77);
    let mut results: Vec<(&str, f64)> = Vec::new();
    let sink = |tape: &mut Tape, y: Var, r: &mut ChaCha8Rng| -> Var {
        let shape = tape.shape(y).to_vec();
        let s = tape.constant(rnd(r, &shape, 1.0));
        let p = tape.mul(y, s).unwrap();
        tape.sum(p)
    };
    macro_rules! check {
        ($name:expr, $params:expr, $eps:expr, |$tape:ident, $v:ident| $body:expr) => {{
            let seed: u64 = r.gen();
            let rep = grad_check(
                |$tape, $v| {
                    let y: Var = $body;
                    Ok(sink($tape, y, &mut ChaCha8Rng::seed_from_u64(seed)))
                },
                &$params,
                $eps,
            )
            .unwrap();
            results.push(($name, rep.max_relative_error));
        }};
    }
    let x = rnd(&mut r, &[4, 6], 1.0);
    check!("linear", [rnd(&mut r, &[6, 3], 1.0), rnd(&mut r, &[3], 1.0)], 1e-6, |t, v| {
        let xv = t.constant(x.clone());
        t.linear(xv, v[0], Some(v[1])).unwrap()
    });
    check!("conv1d", [rnd(&mut r, &[2, 3, 7], 1.0), rnd(&mut r, &[4, 3, 3], 1.0), rnd(&mut r, &[4], 1.0)], 1e-6, |t, v| {
        t.conv1d(v[0], v[1], Some(v[2]), 1, 1).unwrap()
    });
    check!("maxpool", [rnd(&mut r, &[2, 3, 9], 1.0)], 1e-6, |t, v| t.maxpool1d(v[0], 2).unwrap());
    check!("leaky_relu", [rnd_off_zero(&mut r, &[3, 5])], 1e-6, |t, v| t.leaky_relu(v[0], 0.01));
    check!("softmax", [rnd(&mut r, &[3, 5], 2.0)], 1e-6, |t, v| t.softmax(v[0]).unwrap());

    let cond = Tensor::one_hot(&[0, 2, 1], 3).unwrap();
    let (w, dk) = (10, 4);
    check!(
        "csam",
        [
            rnd(&mut r, &[3, w], 1.0),
            rnd(&mut r, &[dk + 3, dk], 0.5),
            rnd(&mut r, &[dk + 3, dk], 0.5),
            rnd(&mut r, &[dk + 3, dk], 0.5),
            rnd(&mut r, &[dk, dk], 0.5),
            rnd(&mut r, &[dk], 0.5)
        ],
        1e-5,
        |t, v| {
            let c = t.constant(cond.clone());
            let p = CsamVars { w_q: v[1], w_k: v[2], w_v: v[3], w_o: v[4], b_o: v[5] };
            csam_forward(t, v[0], c, &p, dk).unwrap()
        }
    );
    check!(
        "cam",
        [
            rnd(&mut r, &[2, 6, 5], 1.0),
            rnd(&mut r, &[6, 3], 0.7),
            rnd(&mut r, &[3], 0.7),
            rnd(&mut r, &[3, 6], 0.7),
            rnd(&mut r, &[6], 0.7)
        ],
        1e-6,
        |t, v| {
            let p = CamVars { fc1_w: v[1], fc1_b: v[2], fc2_w: v[3], fc2_b: v[4] };
            cam_forward(t, v[0], &p).unwrap()
        }
    );

    // full CSCA-CNN through the cost-sensitive loss
    let cfg = ClassifierConfig { input_dim: 10, num_classes: 3, channels: 8, conv_blocks: 2, dense_width: 6, squeeze_ratio: 4, ..Default::default() };
    let names: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
    let cost = CostMatrix { weights: vec![0.5, 1.0, 1.5] };
    let clf = ClassifierModel::new(cfg, names.clone(), cost.clone(), &mut r).unwrap();
    let xc = rnd(&mut r, &[4, 10], 1.0);
    let yc = Tensor::one_hot(&[0, 1, 2, 1], 3).unwrap();
    let rep = grad_check(
        |t, v| {
            let xv = t.constant(xc.clone());
            let logits = clf.logits(t, v, xv, None::<&mut ChaCha8Rng>)?;
            let p = t.softmax(logits)?;
            cs_ce_loss(t, p, &yc, &cost)
        },
        clf.params.tensors(),
        1e-5,
    )
    .unwrap();
    results.push(("csca-cnn", rep.max_relative_error));

    // full SC-CGAN: generator through L_G, discriminator through L_D
    let gcfg = GanConfig {
        feature_dim: 6,
        num_classes: 3,
        noise_dim: Some(4),
        gen_hidden: 10,
        attention_dim: 4,
        disc_channels: 3,
        disc_hidden: 5,
        ..GanConfig::default()
    };
    let gan = GanModel::new(gcfg, names, vec![1; 3], &mut r).unwrap();
    let z = rnd(&mut r, &[4, 4], 1.0);
    let gc = Tensor::one_hot(&[0, 1, 2, 1], 3).unwrap();
    let fixed_d = gan.discriminator.tensors().to_vec();
    let rep = grad_check(
        |t, v| {
            let zv = t.constant(z.clone());
            let cv = t.constant(gc.clone());
            let fake = gan.generator_forward(t, v, zv, cv)?;
            let dv: Vec<Var> = fixed_d.iter().map(|p| t.constant(p.clone())).collect();
            let d = gan.discriminator_forward(t, &dv, fake, cv, None::<&mut ChaCha8Rng>)?;
            generator_loss(t, d)
        },
        gan.generator.tensors(),
        1e-5,
    )
    .unwrap();
    results.push(("sc-cgan generator", rep.max_relative_error));
    let (xr, xf) = (rnd(&mut r, &[4, 6], 1.0), rnd(&mut r, &[4, 6], 1.0));
    let rep = grad_check(
        |t, v| {
            let cv = t.constant(gc.clone());
            let (a, b) = (t.constant(xr.clone()), t.constant(xf.clone()));
            let dr = gan.discriminator_forward(t, v, a, cv, None::<&mut ChaCha8Rng>)?;
            let df = gan.discriminator_forward(t, v, b, cv, None::<&mut ChaCha8Rng>)?;
            discriminator_loss(t, dr, df)
        },
        gan.discriminator.tensors(),
        1e-5,
    )
    .unwrap();
    results.push(("sc-cgan discriminator", rep.max_relative_error));

    let ok = results.iter().all(|(_, e)| *e < TOL_GRAD);
    let worst = results.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a });
    judged(ok, format!("{} checks, worst {} rel err {:.1e} (tol {TOL_GRAD:.0e})", results.len(), worst.0, worst.1))
}

// ---- 3 ------------------------------------------------------------------

fn balance_plan_reproduction(scratch: &Path) -> (Outcome, Instant) {
    let (train, test, source) = match common::real_nslkdd() {
        Some((a, b)) => (a, b, "NSLKDD_DIR"),
        None => {
            let (a, b) = common::write_full_fixture(scratch);
            (a, b, "generated file with KDDTrain+/KDDTest+ attack counts")
        }
    };
    let start = Instant::now();
    let tr = class_stats(&load_nslkdd(&train, SplitTag::Train).unwrap());
    let te = class_stats(&load_nslkdd(&test, SplitTag::Test).unwrap());
    let plan = make_balance_plan(&tr);
    let ratio = tr.merged(&te).ci_ratio(4).unwrap_or(f64::NAN);
    let ok = plan.counts == [0, 21416, 55687, 66348, 67291] && (ratio - 305.77).abs() <= 0.01;
    (judged(ok, format!("plan {:?}, U2R CI ratio {ratio:.4} ({source})", plan.counts)), start)
}

// ---- 4 ------------------------------------------------------------------

fn two_gaussians(n_per: usize, seed: u64) -> FeatureMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (mut data, mut labels) = (Vec::new(), Vec::new());
    for (c, m) in [2.0, -2.0].into_iter().enumerate() {
        for _ in 0..n_per {
            for _ in 0..2 {
                data.push(m + 0.5 * r.sample::<f64, _>(StandardNormal));
            }
            labels.push(c);
        }
    }
    FeatureMatrix::from_parts(Tensor::new(vec![2 * n_per, 2], data).unwrap(), labels, vec!["a".into(), "b".into()]).unwrap()
}

fn conditional_fidelity() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let real = two_gaussians(500, 100 + seed);
        let arch = ClassifierConfig { channels: 8, conv_blocks: 1, dense_width: 8, ..Default::default() };
        let clf = train_cscacnn(&real, arch, &TrainConfig { max_epochs: 20, seed, ..Default::default() }).unwrap().model;
        let cfg = GanTrainConfig { epochs: 40, batch_size: 64, disc_learning_rate: 5e-4, seed, ..Default::default() };
        let gan = train_scgan(&real, GanConfig::default(), &cfg).unwrap().model;
        let mut hits = 0;
        for c in 0..2 {
            let g = generate(&gan, c, 1000, 9 + seed).unwrap();
            hits += predict(&clf, &g).unwrap().labels.iter().filter(|&&l| l == c).count();
        }
        let frac = hits as f64 / 2000.0;
        ok &= frac >= MIN_FIDELITY;
        parts.push(format!("{:.3}", frac));
    }
    judged(ok, format!("share labelled as the conditioned class per seed: [{}] (min {MIN_FIDELITY})", parts.join(", ")))
}

// ---- 5 ------------------------------------------------------------------

/// Two overlapping 8-D Gaussians; class 1 is the minority.
fn imbalanced(n0: usize, n1: usize, seed: u64) -> FeatureMatrix {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let (mut data, mut labels) = (Vec::new(), Vec::new());
    for (c, (n, m)) in [(n0, -0.35), (n1, 0.35)].into_iter().enumerate() {
        for _ in 0..n {
            for _ in 0..8 {
                data.push(m + r.sample::<f64, _>(StandardNormal));
            }
            labels.push(c);
        }
    }
    FeatureMatrix::from_parts(Tensor::new(vec![n0 + n1, 8], data).unwrap(), labels, vec!["major".into(), "minor".into()]).unwrap()
}

fn cost_sensitivity() -> Outcome {
    let mut wins = 0;
    let mut parts = Vec::new();
    for seed in 0..5u64 {
        let train = imbalanced(900, 100, 10 + seed);
        let test = imbalanced(500, 500, 1000 + seed);
        let arch = ClassifierConfig { channels: 8, conv_blocks: 2, dense_width: 16, ..Default::default() };
        let recall = |scheme: CostScheme| {
            let cfg = TrainConfig { cost_scheme: scheme, max_epochs: 30, batch_size: 64, seed, ..Default::default() };
            let m = train_cscacnn(&train, arch.clone(), &cfg).unwrap().model;
            let p = predict(&m, &test.values).unwrap();
            weighted_prf(&test.labels, &p.labels, 2).unwrap().per_class[1].recall
        };
        let (inv, uni) = (recall(CostScheme::InverseFrequency), recall(CostScheme::Uniform));
        if inv > uni {
            wins += 1;
        }
        parts.push(format!("{inv:.3}/{uni:.3}"));
    }
    judged(wins >= 4, format!("minority recall inverse/uniform per seed: [{}], {wins}/5 strictly higher (need 4)", parts.join(", ")))
}

// ---- 6 ------------------------------------------------------------------

fn desk_end_to_end() -> Outcome {
    let Some((train, test)) = common::real_nslkdd() else {
        return Outcome { status: Status::NotRun, detail: "NSLKDD_DIR with KDDTrain+.txt/KDDTest+.txt not set".into() };
    };
    let (ours, plain) = common::desk_comparison(&train, &test, &common::DeskSetup::default());
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (a, b) = (mean(&ours), mean(&plain));
    let fmt = |v: &[f64]| v.iter().map(|f| format!("{:.4}", f)).collect::<Vec<_>>().join(", ");
    judged(a > b, format!("weighted F1 mean {a:.4} [{}] vs plain CNN {b:.4} [{}]", fmt(&ours), fmt(&plain)))
}

// ---- 7 ------------------------------------------------------------------

fn shap_axioms() -> Outcome {
    let mut worst = BTreeMap::<&str, f64>::new();
    let mut note = |k: &'static str, e: f64| {
        let w = worst.entry(k).or_insert(0.0);
        *w = w.max(e);
    };
    let mut r = ChaCha8Rng::seed_from_u64(31);
    for d in 3..=12usize {
        let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
        let space = FeatureSpace::per_feature(&names.iter().map(String::as_str).collect::<Vec<_>>());
        let cfg = ShapConfig { mode: ShapMode::Exact, ..Default::default() };
        let bg = rnd(&mut r, &[5, d], 1.0);

        // linear model: phi_i = w_i (x_i - mean_bg_i)
        let w: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let wl = w.clone();
        let lin = move |v: &[f64]| v.iter().zip(&wl).map(|(a, b)| a * b).sum::<f64>();
        let rep = kernel_shap(&lin, &x, &space, &bg, &cfg, 0, "f").unwrap();
        for (i, a) in rep.attributions.iter().enumerate() {
            let mu = (0..5).map(|k| bg.row(k)[i]).sum::<f64>() / 5.0;
            note("linear", (a.attribution - w[i] * (x[i] - mu)).abs());
        }
        note("efficiency", rep.efficiency_gap().abs());

        // nonlinear model, symmetric in x0/x1 and blind to the last input
        let f = |v: &[f64]| {
            let d = v.len();
            v[0] * v[1] + (v[0] + v[1]).sin() + v[2..d - 1].iter().map(|t| t * t).sum::<f64>() * v[2].tanh()
        };
        let mut x: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        x[1] = x[0];
        let mut sym_bg = rnd(&mut r, &[5, d], 1.0);
        for k in 0..5 {
            let v = sym_bg.row(k)[0];
            sym_bg.data_mut()[k * d + 1] = v;
        }
        let rep = kernel_shap(&f, &x, &space, &sym_bg, &cfg, 0, "f").unwrap();
        let phi: Vec<f64> = rep.attributions.iter().map(|a| a.attribution).collect();
        note("efficiency", rep.efficiency_gap().abs());
        note("symmetry", (phi[0] - phi[1]).abs());
        note("null", phi[d - 1].abs());
    }
    let ok = worst.values().all(|&e| e <= TOL_SHAP);
    let detail = worst.iter().map(|(k, e)| format!("{k} {e:.1e}")).collect::<Vec<_>>().join(", ");
    judged(ok, format!("D = 3..12, max abs error: {detail} (tol {TOL_SHAP:.0e})"))
}

// ---- 8 ------------------------------------------------------------------

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        for k in i..=j {
            out[idx[k]] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    out
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn lime_recovery() -> Outcome {
    let d = 10;
    let names: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let space = FeatureSpace::per_feature(&names.iter().map(String::as_str).collect::<Vec<_>>());
    let mut rhos = Vec::new();
    for seed in 0..5u64 {
        let mut r = ChaCha8Rng::seed_from_u64(500 + seed);
        let w: Vec<f64> = (0..d).map(|_| r.gen_range(-3.0..3.0)).collect();
        let x: Vec<f64> = (0..d).map(|_| r.gen_range(-2.0..2.0)).collect();
        let bg = rnd(&mut r, &[50, d], 1.0);
        let wl = w.clone();
        let f = move |v: &[f64]| v.iter().zip(&wl).map(|(a, b)| a * b).sum::<f64>();
        let cfg = LimeConfig { n_features: d, seed, ..Default::default() };
        let rep = lime_explain(&f, &x, &space, &bg, &cfg, 0, "f").unwrap();
        let reference = reference_row(&space, &bg);
        let mut got = vec![0.0; d];
        for a in &rep.attributions {
            got[a.feature[1..].parse::<usize>().unwrap()] = a.attribution;
        }
        let truth: Vec<f64> = (0..d).map(|i| w[i] * (x[i] - reference[i])).collect();
        rhos.push(spearman(&got, &truth));
    }
    let ok = rhos.iter().all(|&p| p >= MIN_SPEARMAN);
    let parts: Vec<String> = rhos.iter().map(|p| format!("{p:.3}")).collect();
    judged(ok, format!("Spearman rho per seed: [{}] (min {MIN_SPEARMAN})", parts.join(", ")))
}

// ---- 9 ------------------------------------------------------------------

fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn reproducibility(scratch: &Path) -> Outcome {
    let train = common::write_kdd(&scratch.join("small_train.txt"), &common::scaled(&common::TRAIN_COUNTS, 0.01, 3), 21);
    let test = common::write_kdd(&scratch.join("small_test.txt"), &common::scaled(&common::TEST_COUNTS, 0.01, 1), 22);
    let run = scratch.join("run");
    let text = format!(
        "seed = 9\nout_dir = {run:?}\n[data]\ntrain = {train:?}\ntest = {test:?}\ntrain_subsample = 400\n\
         [gan]\ngen_hidden = 24\nattention_dim = 8\ndisc_channels = 4\ndisc_hidden = 12\n\
         [gan_train]\nepochs = 2\nbatch_size = 64\n[classifier]\nchannels = 8\nconv_blocks = 2\ndense_width = 12\n\
         [classifier_train]\nmax_epochs = 3\nbatch_size = 64\n[explain]\nbackground = 6\n[explain.shap]\nn_samples = 120\n\
         [report]\nprojection_rows = 200\n"
    );
    let ctx = Ctx::new(RunConfig::from_toml(&text).unwrap());
    run_pipeline(&ctx, &Stage::ALL).unwrap();
    let first = tree(&run);
    let mut mismatched = Vec::new();
    let mut compare = |label: &str, now: &BTreeMap<String, Vec<u8>>| {
        for (k, v) in &first {
            if now.get(k) != Some(v) {
                mismatched.push(format!("{label}:{k}"));
            }
        }
        if now.len() != first.len() {
            mismatched.push(format!("{label}: file set changed"));
        }
    };
    run_pipeline(&ctx, &Stage::ALL).unwrap();
    compare("all", &tree(&run));
    for stage in Stage::ALL {
        run_pipeline(&ctx, &[stage]).unwrap();
        compare(stage.name(), &tree(&run));
    }
    let ok = mismatched.is_empty();
    let detail = if ok {
        format!("{} artifacts identical after a full rerun and after rerunning each of the 7 stages alone", first.len())
    } else {
        format!("differing: {}", mismatched.join(", "))
    };
    judged(ok, detail)
}

fn main() {
    // `cargo test -- --list` and filters from the harness are not meaningful here
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let scratch = tempfile::tempdir().unwrap();
    let mut failed = 0;
    let mut report = |n: usize, title: &str, limit: Duration, run: &mut dyn FnMut() -> (Outcome, Instant)| {
        let (outcome, start) = run();
        let elapsed = start.elapsed();
        let within = elapsed <= limit;
        let tag = match (&outcome.status, within) {
            (Status::NotRun, _) => "NOT RUN",
            (Status::Pass, true) => "PASS",
            _ => "FAIL",
        };
        if tag == "FAIL" {
            failed += 1;
        }
        let time = if matches!(outcome.status, Status::NotRun) {
            String::new()
        } else {
            format!(" [{:.1}s / limit {}s{}]", elapsed.as_secs_f64(), limit.as_secs(), if within { "" } else { ", OVER TIME" })
        };
        println!("criterion {n} {tag:<7} {title}: {}{time}", outcome.detail);
    };
    let timed = |f: fn() -> Outcome| move || {
        let start = Instant::now();
        (f(), start)
    };
    let secs = Duration::from_secs;
    report(1, "formula oracles", secs(10), &mut timed(formula_oracles));
    report(2, "gradient suite", secs(120), &mut timed(gradient_suite));
    report(3, "balance plan", secs(30), &mut || balance_plan_reproduction(scratch.path()));
    report(4, "conditional generation", secs(300), &mut timed(conditional_fidelity));
    report(5, "cost sensitivity", secs(600), &mut timed(cost_sensitivity));
    report(6, "desk-scale end to end", secs(3600), &mut timed(desk_end_to_end));
    report(7, "SHAP axioms", secs(60), &mut timed(shap_axioms));
    report(8, "LIME recovery", secs(60), &mut timed(lime_recovery));
    report(9, "reproducibility", secs(600), &mut || {
        let start = Instant::now();
        (reproducibility(scratch.path()), start)
    });
    if failed > 0 {
        println!("{failed} criterion/criteria failed");
        std::process::exit(1);
    }
}
