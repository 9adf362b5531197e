use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::report::{Attribution, ExplanationReport, Method};
use super::space::{compose, FeatureSpace, ScalarModel};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const MAX_EXACT_GROUPS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapMode {
    /// Exact when the group count allows it, sampled otherwise.
    Auto,
    Exact,
    Sampled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ShapConfig {
    pub mode: ShapMode,
    /// Coalitions evaluated in sampled mode.
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        ShapConfig { mode: ShapMode::Auto, n_samples: 2048, seed: 0 }
    }
}

const MASKS_PER_BATCH: usize = 64;

/// `v(S) = mean_b f(x_S, b_{¬S})` for each coalition.
fn coalition_values(
    model: &dyn ScalarModel,
    space: &FeatureSpace,
    x: &[f64],
    background: &Tensor,
    masks: &[Vec<bool>],
) -> Result<Vec<f64>> {
    let (m, d) = (background.rows(), space.dim());
    let mut out = Vec::with_capacity(masks.len());
    for chunk in masks.chunks(MASKS_PER_BATCH) {
        let mut rows = vec![0.0; chunk.len() * m * d];
        for (k, mask) in chunk.iter().enumerate() {
            for b in 0..m {
                let at = (k * m + b) * d;
                compose(space, mask, x, background.row(b), &mut rows[at..at + d]);
            }
        }
        let y = model.eval_rows(&Tensor::new(vec![chunk.len() * m, d], rows)?)?;
        out.extend(y.chunks(m).map(|v| v.iter().sum::<f64>() / m as f64));
    }
    Ok(out)
}

fn mask_of(bits: usize, g: usize) -> Vec<bool> {
    (0..g).map(|j| bits >> j & 1 == 1).collect()
}

/// Shapley values by enumerating all `2^G` coalitions.
fn exact(v: &[f64], g: usize) -> Vec<f64> {
    let fact: Vec<f64> = (0..=g).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    })
    .collect();
    let mut phi = vec![0.0; g];
    for (i, p) in phi.iter_mut().enumerate() {
        let bit = 1 << i;
        for s in 0..(1usize << g) {
            if s & bit == 0 {
                let size = s.count_ones() as usize;
                let w = fact[size] * fact[g - size - 1] / fact[g];
                *p += w * (v[s | bit] - v[s]);
            }
        }
    }
    phi
}

/// Kernel-SHAP regression with `Σφ = v(N) − v(∅)` imposed by eliminating the
/// last coefficient.
fn constrained_wls(z: &[Vec<bool>], y: &[f64], w: &[f64], total: f64, g: usize) -> (Vec<f64>, Vec<String>) {
    let mut notes = Vec::new();
    if g == 1 {
        return (vec![total], notes);
    }
    let p = g - 1;
    let mut a = DMatrix::<f64>::zeros(p, p);
    let mut b = DVector::<f64>::zeros(p);
    for (k, mask) in z.iter().enumerate() {
        let last = f64::from(u8::from(mask[p]));
        let row: Vec<f64> = (0..p).map(|j| f64::from(u8::from(mask[j])) - last).collect();
        let target = y[k] - last * total;
        for i in 0..p {
            b[i] += w[k] * row[i] * target;
            for j in 0..p {
                a[(i, j)] += w[k] * row[i] * row[j];
            }
        }
    }
    let sol = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => {
            notes.push("sampled coalitions do not identify every feature; added ridge 1e-9".into());
            for i in 0..p {
                a[(i, i)] += 1e-9;
            }
            a.lu().solve(&b).unwrap_or_else(|| DVector::zeros(p))
        }
    };
    let mut phi: Vec<f64> = sol.iter().copied().collect();
    phi.push(total - phi.iter().sum::<f64>());
    (phi, notes)
}

fn binom(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Kernel SHAP over feature groups, with masked groups imputed from every
/// background row. Exact mode enumerates all coalitions (G ≤ 12). Sampled
/// mode draws coalition sizes from the Shapley kernel, pairs every coalition
/// with its complement, and solves the efficiency-constrained least squares.
pub fn kernel_shap(
    model: &dyn ScalarModel,
    x: &[f64],
    space: &FeatureSpace,
    background: &Tensor,
    cfg: &ShapConfig,
    sample_id: usize,
    target: &str,
) -> Result<ExplanationReport> {
    space.check(x, background)?;
    let g = space.groups.len();
    let exact_mode = match cfg.mode {
        ShapMode::Exact if g > MAX_EXACT_GROUPS => {
            return Err(Error::Config(format!("exact SHAP supports at most {MAX_EXACT_GROUPS} groups, got {g}")))
        }
        ShapMode::Exact => true,
        ShapMode::Auto => g <= MAX_EXACT_GROUPS,
        ShapMode::Sampled => false,
    };
    if !exact_mode && cfg.n_samples < 2 * g + 2 {
        return Err(Error::Config(format!("sampled SHAP needs at least {} coalitions, got {}", 2 * g + 2, cfg.n_samples)));
    }
    let mut notes = Vec::new();
    let full = vec![true; g];
    let empty = vec![false; g];
    let ends = coalition_values(model, space, x, background, &[empty, full])?;
    let (base, output) = (ends[0], ends[1]);

    let phi = if exact_mode {
        let masks: Vec<Vec<bool>> = (0..1usize << g).map(|s| mask_of(s, g)).collect();
        let v = coalition_values(model, space, x, background, &masks)?;
        exact(&v, g)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let (masks, weights): (Vec<Vec<bool>>, Vec<f64>) = if g < usize::BITS as usize - 1 && (1usize << g) - 2 <= cfg.n_samples {
            notes.push("sample budget covers every coalition; enumerated them".into());
            (1..(1usize << g) - 1)
                .map(|s| {
                    let size = s.count_ones() as usize;
                    (mask_of(s, g), (g - 1) as f64 / (binom(g, size) * (size * (g - size)) as f64))
                })
                .unzip()
        } else {
            let kernel: Vec<f64> = (1..g).map(|s| 1.0 / (s * (g - s)) as f64).collect();
            let ksum: f64 = kernel.iter().sum();
            let mut masks = Vec::with_capacity(cfg.n_samples);
            while masks.len() + 1 < cfg.n_samples {
                let mut u = rng.gen::<f64>() * ksum;
                let mut size = 1;
                for (k, kw) in kernel.iter().enumerate() {
                    size = k + 1;
                    if u < *kw {
                        break;
                    }
                    u -= kw;
                }
                let mut m = vec![false; g];
                for j in sample(&mut rng, g, size) {
                    m[j] = true;
                }
                let comp: Vec<bool> = m.iter().map(|b| !b).collect();
                masks.push(m);
                masks.push(comp);
            }
            let n = masks.len();
            (masks, vec![1.0; n])
        };
        let v = coalition_values(model, space, x, background, &masks)?;
        let y: Vec<f64> = v.iter().map(|vi| vi - base).collect();
        let (phi, more) = constrained_wls(&masks, &y, &weights, output - base, g);
        notes.extend(more);
        phi
    };

    let attributions = (0..g)
        .map(|j| {
            let (feature, value) = space.describe(j, x);
            Attribution { feature, value, attribution: phi[j] }
        })
        .collect();
    Ok(ExplanationReport {
        sample_id,
        method: Method::Shap,
        target: target.to_string(),
        base_value: base,
        output,
        attributions,
        feature_space: space.group_names(),
        settings: json!({
            "mode": if exact_mode { "exact" } else { "sampled" },
            "n_samples": if exact_mode { 1usize << g } else { cfg.n_samples },
            "seed": cfg.seed,
            "background_rows": background.rows(),
        }),
        notes,
    })
}
