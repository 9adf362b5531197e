use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::{Attribution, ExplanationReport, Method};
use super::space::{compose, FeatureSpace, ScalarModel};
use crate::autodiff::Tensor;
use crate::dataset::GroupKind;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LimeConfig {
    pub n_perturb: usize,
    /// Defaults to `0.75·√G` for `G` feature groups.
    pub kernel_width: Option<f64>,
    pub ridge: f64,
    pub n_features: usize,
    pub seed: u64,
}

impl Default for LimeConfig {
    fn default() -> Self {
        LimeConfig { n_perturb: 5000, kernel_width: None, ridge: 1e-3, n_features: 10, seed: 0 }
    }
}

/// Replacement values used when a group is masked: background means for
/// numeric groups, the most frequent background pattern for one-hot groups.
pub fn reference_row(space: &FeatureSpace, background: &Tensor) -> Vec<f64> {
    let m = background.rows();
    let mut r = vec![0.0; space.dim()];
    for g in &space.groups {
        match g.kind {
            GroupKind::Numeric => {
                for c in g.columns() {
                    r[c] = (0..m).map(|i| background.row(i)[c]).sum::<f64>() / m as f64;
                }
            }
            GroupKind::Categorical => {
                let mut patterns: Vec<(&[f64], usize)> = Vec::new();
                for i in 0..m {
                    let p = &background.row(i)[g.columns()];
                    match patterns.iter_mut().find(|(q, _)| *q == p) {
                        Some(e) => e.1 += 1,
                        None => patterns.push((p, 1)),
                    }
                }
                let mut best = 0;
                for (k, e) in patterns.iter().enumerate() {
                    if e.1 > patterns[best].1 {
                        best = k;
                    }
                }
                r[g.columns()].copy_from_slice(patterns[best].0);
            }
        }
    }
    r
}

pub(crate) struct RidgeFit {
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub r2: f64,
    pub notes: Vec<String>,
}

/// Weighted ridge on centred data; the intercept is not penalized.
pub(crate) fn weighted_ridge(z: &[Vec<f64>], y: &[f64], w: &[f64], lambda: f64) -> Result<RidgeFit> {
    let (n, p) = (z.len(), z.first().map_or(0, Vec::len));
    let wsum: f64 = w.iter().sum();
    let zbar: Vec<f64> = (0..p).map(|j| (0..n).map(|i| w[i] * z[i][j]).sum::<f64>() / wsum).collect();
    let ybar = (0..n).map(|i| w[i] * y[i]).sum::<f64>() / wsum;
    let mut notes = Vec::new();
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for i in 0..n {
        let zc: Vec<f64> = (0..p).map(|j| z[i][j] - zbar[j]).collect();
        let yc = y[i] - ybar;
        for j in 0..p {
            b[j] += w[i] * zc[j] * yc;
            for k in 0..p {
                a[(j, k)] += w[i] * zc[j] * zc[k];
            }
        }
    }
    let degenerate: Vec<usize> = (0..p).filter(|&j| a[(j, j)] <= 1e-12 * wsum).collect();
    if !degenerate.is_empty() {
        notes.push(format!("{} surrogate columns never varied; ridge penalty sets their weight", degenerate.len()));
    }
    let mut lam = lambda;
    let coef = loop {
        let mut reg = a.clone();
        for j in 0..p {
            reg[(j, j)] += lam;
        }
        if let Some(ch) = reg.cholesky() {
            break ch.solve(&b);
        }
        let bumped = (lam * 1e3).max(1e-8 * (a.trace() / p.max(1) as f64 + 1.0));
        notes.push(format!("design matrix singular at ridge {lam:e}; retried with {bumped:e}"));
        lam = bumped;
        if !lam.is_finite() {
            return Err(Error::Numeric("ridge solve failed".into()));
        }
    };
    let coef: Vec<f64> = coef.iter().copied().collect();
    let intercept = ybar - zbar.iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for i in 0..n {
        let pred = intercept + z[i].iter().zip(&coef).map(|(a, b)| a * b).sum::<f64>();
        ss_res += w[i] * (y[i] - pred).powi(2);
        ss_tot += w[i] * (y[i] - ybar).powi(2);
    }
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RidgeFit { coef, intercept, r2, notes })
}

/// LIME: masks feature groups against reference values, weights each
/// perturbation by `exp(−d²/width²)` with `d² =` number of masked groups, and
/// fits a weighted ridge surrogate on the model output. Attributions are the
/// surrogate coefficients, i.e. the change in output from restoring each
/// group to its value in `x`. The top `n_features` by magnitude are kept.
pub fn lime_explain(
    model: &dyn ScalarModel,
    x: &[f64],
    space: &FeatureSpace,
    background: &Tensor,
    cfg: &LimeConfig,
    sample_id: usize,
    target: &str,
) -> Result<ExplanationReport> {
    space.check(x, background)?;
    if cfg.n_perturb < 100 {
        return Err(Error::Config(format!("LIME needs at least 100 perturbations, got {}", cfg.n_perturb)));
    }
    let g = space.groups.len();
    let width = cfg.kernel_width.unwrap_or(0.75 * (g as f64).sqrt());
    if !(width > 0.0) || cfg.ridge < 0.0 {
        return Err(Error::Config(format!("kernel width {width} and ridge {} must be positive", cfg.ridge)));
    }
    let reference = reference_row(space, background);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = space.dim();
    let mut masks = Vec::with_capacity(cfg.n_perturb);
    let mut rows = vec![0.0; cfg.n_perturb * d];
    for i in 0..cfg.n_perturb {
        let mut keep = vec![true; g];
        if i > 0 && g > 0 {
            let off = rng.gen_range(1..=g);
            for j in sample(&mut rng, g, off) {
                keep[j] = false;
            }
        }
        compose(space, &keep, x, &reference, &mut rows[i * d..(i + 1) * d]);
        masks.push(keep);
    }
    let y = model.eval_rows(&Tensor::new(vec![cfg.n_perturb, d], rows)?)?;
    let z: Vec<Vec<f64>> = masks.iter().map(|m| m.iter().map(|&k| f64::from(u8::from(k))).collect()).collect();
    let w: Vec<f64> = masks
        .iter()
        .map(|m| {
            let off = m.iter().filter(|k| !**k).count() as f64;
            (-off / (width * width)).exp()
        })
        .collect();
    let fit = weighted_ridge(&z, &y, &w, cfg.ridge)?;

    let mut attributions: Vec<Attribution> = (0..g)
        .map(|j| {
            let (feature, value) = space.describe(j, x);
            Attribution { feature, value, attribution: fit.coef[j] }
        })
        .collect();
    attributions.sort_by(|a, b| b.attribution.abs().total_cmp(&a.attribution.abs()));
    attributions.truncate(cfg.n_features);
    Ok(ExplanationReport {
        sample_id,
        method: Method::Lime,
        target: target.to_string(),
        base_value: fit.intercept,
        output: y[0],
        attributions,
        feature_space: space.group_names(),
        settings: json!({
            "n_perturb": cfg.n_perturb,
            "kernel_width": width,
            "ridge": cfg.ridge,
            "n_features": cfg.n_features,
            "seed": cfg.seed,
            "background_rows": background.rows(),
            "surrogate_r2": fit.r2,
        }),
        notes: fit.notes,
    })
}
