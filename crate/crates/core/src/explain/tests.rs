use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autodiff::Tensor;
use crate::dataset::{FeatureGroup, GroupKind};
use crate::error::Error;

fn space(d: usize) -> FeatureSpace {
    let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    FeatureSpace::per_feature(&refs)
}

fn random(rows: usize, d: usize, r: &mut ChaCha8Rng) -> Tensor {
    Tensor::new(vec![rows, d], (0..rows * d).map(|_| r.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn shap(f: &dyn ScalarModel, x: &[f64], bg: &Tensor, mode: ShapMode, n: usize, seed: u64) -> ExplanationReport {
    let cfg = ShapConfig { mode, n_samples: n, seed };
    kernel_shap(f, x, &space(x.len()), bg, &cfg, 0, "f").unwrap()
}

fn phis(r: &ExplanationReport) -> Vec<f64> {
    r.attributions.iter().map(|a| a.attribution).collect()
}

#[test]
fn linear_model_single_background_row() {
    let w = [1.5, -2.0, 0.5, 3.0];
    let f = move |x: &[f64]| 0.3 + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let x = [1.0, 2.0, -1.0, 0.5];
    let b = Tensor::new(vec![1, 4], vec![0.5, -1.0, 2.0, 0.0]).unwrap();
    let r = shap(&f, &x, &b, ShapMode::Exact, 0, 0);
    for i in 0..4 {
        assert!((phis(&r)[i] - w[i] * (x[i] - b.data()[i])).abs() < 1e-12);
    }
    assert!(r.efficiency_gap().abs() < 1e-12);
}

#[test]
fn sample_at_background_mean_gets_no_credit() {
    let f = |x: &[f64]| 2.0 * x[0] - x[1] + 0.5 * x[2];
    let bg = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0]).unwrap();
    let r = shap(&f, &[0.0, 1.0, 2.0], &bg, ShapMode::Exact, 0, 0);
    assert!(phis(&r).iter().all(|p| p.abs() < 1e-12));
}

#[test]
fn symmetry_null_and_efficiency_axioms() {
    let f = |x: &[f64]| x[0] + x[1] + (x[0] * x[1]).sin() + x[2].powi(2) * x[3];
    let x = [1.0, 1.0, 0.7, -1.2, 3.0];
    let bg = Tensor::new(vec![1, 5], vec![0.0, 0.0, 0.1, 0.4, -2.0]).unwrap();
    let r = shap(&f, &x, &bg, ShapMode::Exact, 0, 0);
    let p = phis(&r);
    assert!((p[0] - p[1]).abs() < 1e-12);
    assert_eq!(p[4], 0.0);
    assert!((r.base_value + p.iter().sum::<f64>() - f(&x)).abs() < 1e-9);
}

#[test]
fn exact_mode_rejects_too_many_groups() {
    let f = |x: &[f64]| x.iter().sum::<f64>();
    let bg = Tensor::zeros(&[1, 13]);
    let cfg = ShapConfig { mode: ShapMode::Exact, ..ShapConfig::default() };
    let r = kernel_shap(&f, &[1.0; 13], &space(13), &bg, &cfg, 0, "f");
    assert!(matches!(r, Err(Error::Config(_))));
    let few = ShapConfig { mode: ShapMode::Sampled, n_samples: 10, seed: 0 };
    assert!(kernel_shap(&f, &[1.0; 13], &space(13), &bg, &few, 0, "f").is_err());
}

#[test]
fn full_coalition_budget_reproduces_exact_values() {
    let f = |x: &[f64]| x[0] * x[1] - x[2].tanh() + x[3] * x[4] * x[0];
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let bg = random(3, 5, &mut r);
    let x = [0.5, -1.0, 2.0, 1.0, 0.3];
    let exact = phis(&shap(&f, &x, &bg, ShapMode::Exact, 0, 0));
    let sampled = shap(&f, &x, &bg, ShapMode::Sampled, 100, 0);
    for (a, b) in exact.iter().zip(phis(&sampled)) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}

#[test]
fn sampled_estimates_converge() {
    let mut r = ChaCha8Rng::seed_from_u64(2);
    let wts: Vec<f64> = (0..8).map(|_| r.gen_range(-1.0..1.0)).collect();
    let f = move |x: &[f64]| {
        let lin: f64 = x.iter().zip(&wts).map(|(a, b)| a * b).sum();
        lin + x[0] * x[1] - x[2] * x[3] * 0.5 + (x[4] * x[5]).sin() + x[6] * x[7] * 0.8
    };
    let bg = random(4, 8, &mut r);
    let x: Vec<f64> = (0..8).map(|_| r.gen_range(-2.0..2.0)).collect();
    let exact = phis(&shap(&f, &x, &bg, ShapMode::Exact, 0, 0));
    let err = |n: usize| -> f64 {
        (0..20)
            .map(|seed| {
                let s = shap(&f, &x, &bg, ShapMode::Sampled, n, seed);
                assert!(s.efficiency_gap().abs() < 1e-9);
                phis(&s).iter().zip(&exact).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .sum::<f64>()
            / 20.0
    };
    let (e1, e4) = (err(20), err(80));
    assert!(e4 < 0.75 * e1, "error {e1} -> {e4}");
}

#[test]
fn one_hot_groups_are_named_by_the_active_column() {
    let names = ["dur", "service_ftp", "service_http", "service_smtp"];
    let sp = FeatureSpace {
        names: names.iter().map(|s| s.to_string()).collect(),
        groups: vec![
            FeatureGroup { name: "dur".into(), kind: GroupKind::Numeric, start: 0, len: 1 },
            FeatureGroup { name: "service".into(), kind: GroupKind::Categorical, start: 1, len: 3 },
        ],
    };
    let f = |x: &[f64]| x[0] + 2.0 * x[2] - x[3];
    let bg = Tensor::new(vec![3, 4], vec![0.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 1.0]).unwrap();
    let x = [0.5, 0.0, 1.0, 0.0];
    let r = kernel_shap(&f, &x, &sp, &bg, &ShapConfig::default(), 7, "f").unwrap();
    assert_eq!(r.attributions[1].feature, "service_http");
    assert_eq!(r.attributions.len(), 2);
    // service block from background: mean of (0, 0, -1); from x: 2
    assert!((r.attributions[1].attribution - (2.0 + 1.0 / 3.0)).abs() < 1e-12);
    let reference = reference_row(&sp, &bg);
    assert_eq!(&reference[1..], &[1.0, 0.0, 0.0]);
    assert!((reference[0] - 1.0).abs() < 1e-15);
}

#[test]
fn lime_constant_model_has_zero_coefficients() {
    let f = |_: &[f64]| 0.42;
    let mut r = ChaCha8Rng::seed_from_u64(3);
    let bg = random(20, 5, &mut r);
    let rep = lime_explain(&f, &[1.0; 5], &space(5), &bg, &LimeConfig { n_perturb: 500, ..Default::default() }, 0, "f").unwrap();
    assert!(rep.attributions.iter().all(|a| a.attribution.abs() < 1e-9));
}

#[test]
fn lime_recovers_linear_contributions() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    let w = [2.0, -1.0, 0.5, 3.0, -0.2];
    let f = move |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
    let bg = random(50, 5, &mut r);
    let x = [1.0, 2.0, -1.0, 0.5, 1.5];
    let reference = reference_row(&space(5), &bg);
    for seed in 0..5 {
        let cfg = LimeConfig { n_perturb: 1000, n_features: 5, seed, ..Default::default() };
        let rep = lime_explain(&f, &x, &space(5), &bg, &cfg, 0, "f").unwrap();
        for a in &rep.attributions {
            let i: usize = a.feature[1..].parse().unwrap();
            let truth = w[i] * (x[i] - reference[i]);
            assert!((a.attribution - truth).abs() < 1e-3, "{} {} vs {truth}", a.feature, a.attribution);
        }
        let mags: Vec<f64> = rep.attributions.iter().map(|a| a.attribution.abs()).collect();
        assert!(mags.windows(2).all(|p| p[0] >= p[1]));
    }
    let few = LimeConfig { n_perturb: 50, ..Default::default() };
    assert!(lime_explain(&f, &x, &space(5), &bg, &few, 0, "f").is_err());
}

fn report(attrs: &[f64], base: f64, space_size: usize) -> ExplanationReport {
    ExplanationReport {
        sample_id: 0,
        method: Method::Shap,
        target: "P(attack)".into(),
        base_value: base,
        output: base + attrs.iter().sum::<f64>(),
        attributions: attrs
            .iter()
            .enumerate()
            .map(|(i, &a)| Attribution { feature: format!("f{i}"), value: 0.0, attribution: a })
            .collect(),
        feature_space: (0..space_size).map(|i| format!("f{i}")).collect(),
        settings: serde_json::Value::Null,
        notes: vec![],
    }
}

#[test]
fn force_plot_cases() {
    let one = force_plot_data(&[report(&[0.3], 0.2, 1)], Stacking::Single).unwrap();
    let s = &one.samples[0];
    assert_eq!(s.positive.len(), 1);
    assert!(s.negative.is_empty());
    assert_eq!((s.positive[0].start, s.positive[0].end), (0.2, s.output));

    let flat = force_plot_data(&[report(&[0.0, 0.0], 0.4, 2)], Stacking::Single).unwrap();
    assert!(flat.samples[0].positive.is_empty() && flat.samples[0].negative.is_empty());
    assert_eq!(flat.samples[0].output, 0.4);

    let mixed = [report(&[0.1], 0.0, 1), report(&[0.1, 0.2], 0.0, 2)];
    assert!(force_plot_data(&mixed, Stacking::Horizontal).is_err());
    assert!(render_svg(&one).contains("<rect"));
}

#[test]
fn horizontal_stack_of_shap_reports() {
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let f = |x: &[f64]| (x[0] * x[1]).tanh() + x[2] - 0.5 * x[3] * x[3];
    let bg = random(5, 4, &mut r);
    let reports: Vec<ExplanationReport> = (0..100)
        .map(|i| {
            let x: Vec<f64> = (0..4).map(|_| r.gen_range(-2.0..2.0)).collect();
            kernel_shap(&f, &x, &space(4), &bg, &ShapConfig::default(), i, "f").unwrap()
        })
        .collect();
    let plot = force_plot_data(&reports, Stacking::Horizontal).unwrap();
    assert_eq!(plot.samples.len(), 100);
    for s in &plot.samples {
        assert!(s.efficiency_gap.abs() < 1e-9);
        let top = s.negative.last().map(|g| g.end).or(s.positive.last().map(|g| g.end)).unwrap_or(s.base_value);
        assert!((top - s.output).abs() < 1e-9);
    }
    let svg = render_svg(&plot);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}
