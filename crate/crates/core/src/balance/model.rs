use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::csam::{csam_forward, token_count, CsamVars};
use crate::autodiff::{Init, ParamSet, Tape, Tensor, Var};
use crate::checkpoint::Checkpoint;
use crate::error::{dim_err, Error, Result};
use crate::metrics::{Complexity, LayerCost};

pub const CHECKPOINT_KIND: &str = "sc-cgan";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub feature_dim: usize,
    pub num_classes: usize,
    /// `None` means "same as `feature_dim`".
    pub noise_dim: Option<usize>,
    pub gen_hidden: usize,
    pub attention_dim: usize,
    /// Hidden dense layers before and after the attention block.
    pub gen_layers_before: usize,
    pub gen_layers_after: usize,
    pub disc_channels: usize,
    pub disc_hidden: usize,
    pub disc_conv_blocks: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub gen_init: Init,
    pub disc_init: Init,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            feature_dim: 122,
            num_classes: 5,
            noise_dim: None,
            gen_hidden: 100,
            attention_dim: 30,
            gen_layers_before: 3,
            gen_layers_after: 2,
            disc_channels: 16,
            disc_hidden: 60,
            disc_conv_blocks: 2,
            kernel_size: 3,
            pool_size: 2,
            dropout: 0.3,
            leaky_slope: 0.01,
            gen_init: Init::He,
            disc_init: Init::Xavier,
        }
    }
}

impl GanConfig {
    pub fn noise(&self) -> usize {
        self.noise_dim.unwrap_or(self.feature_dim)
    }

    fn disc_lengths(&self) -> Result<Vec<usize>> {
        let mut len = self.feature_dim + self.num_classes;
        let mut lens = vec![len];
        for b in 0..self.disc_conv_blocks {
            let conv = len + 2 * (self.kernel_size / 2) + 1 - self.kernel_size;
            if conv < self.pool_size {
                return Err(Error::Config(format!("discriminator block {b} sees length {len}, too short to pool")));
            }
            len = conv / self.pool_size;
            lens.push(len);
        }
        Ok(lens)
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.num_classes < 2 || self.noise() == 0 {
            return Err(Error::Config("GAN needs feature_dim >= 1, noise_dim >= 1 and num_classes >= 2".into()));
        }
        if self.gen_hidden == 0 || self.attention_dim == 0 || self.disc_channels == 0 || self.disc_hidden == 0 {
            return Err(Error::Config("GAN layer widths must be positive".into()));
        }
        if self.kernel_size == 0 || self.pool_size == 0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("kernel and pool sizes must be positive and dropout in [0, 1)".into()));
        }
        self.disc_lengths().map(|_| ())
    }
}

/// Conditional GAN with a self-attention generator and a 1-D conv discriminator.
#[derive(Clone, Debug, PartialEq)]
pub struct GanModel {
    pub config: GanConfig,
    pub generator: ParamSet,
    pub discriminator: ParamSet,
    pub class_names: Vec<String>,
    /// Per-class row counts of the training data, kept for automatic balance plans.
    pub train_counts: Vec<usize>,
}

impl GanModel {
    pub fn new<R: Rng>(config: GanConfig, class_names: Vec<String>, train_counts: Vec<usize>, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if class_names.len() != config.num_classes || train_counts.len() != config.num_classes {
            return Err(Error::Config(format!("{} classes configured, {} names given", config.num_classes, class_names.len())));
        }
        let (c, h, dk) = (config.num_classes, config.gen_hidden, config.attention_dim);
        let gi = config.gen_init;
        let mut g = ParamSet::new();
        let dense = |g: &mut ParamSet, name: &str, i: usize, o: usize, init: Init, rng: &mut R| {
            g.push(format!("{name}.weight"), init.tensor(&[i, o], i, o, rng));
            g.push(format!("{name}.bias"), Tensor::zeros(&[o]));
        };
        dense(&mut g, "fusion", config.noise() + c, h, gi, rng);
        for l in 0..config.gen_layers_before {
            dense(&mut g, &format!("pre{l}"), h, h, gi, rng);
        }
        for name in ["csam.w_q", "csam.w_k", "csam.w_v"] {
            g.push(name, gi.tensor(&[dk + c, dk], dk + c, dk, rng));
        }
        // zero output projection: the attention block starts as the identity
        g.push("csam.w_o", Tensor::zeros(&[dk, dk]));
        g.push("csam.b_o", Tensor::zeros(&[dk]));
        for l in 0..config.gen_layers_after {
            dense(&mut g, &format!("post{l}"), h, h, gi, rng);
        }
        dense(&mut g, "head", h, config.feature_dim, gi, rng);

        let di = config.disc_init;
        let (ch, k) = (config.disc_channels, config.kernel_size);
        let mut d = ParamSet::new();
        let mut c_in = 1;
        for b in 0..config.disc_conv_blocks {
            d.push(format!("conv{b}.weight"), di.tensor(&[ch, c_in, k], c_in * k, ch * k, rng));
            d.push(format!("conv{b}.bias"), Tensor::zeros(&[ch]));
            c_in = ch;
        }
        let flat = config.disc_flat()?;
        dense(&mut d, "fc1", flat, config.disc_hidden, di, rng);
        dense(&mut d, "fc2", config.disc_hidden, 1, di, rng);
        Ok(GanModel { config, generator: g, discriminator: d, class_names, train_counts })
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// `G(z, cond)`: `[B, noise]` and one-hot `[B, C]` to `[B, D]`.
    pub fn generator_forward(&self, tape: &mut Tape, vars: &[Var], z: Var, cond: Var) -> Result<Var> {
        let cfg = &self.config;
        let (zs, cs) = (tape.shape(z).to_vec(), tape.shape(cond).to_vec());
        if zs.len() != 2 || zs[1] != cfg.noise() || cs.len() != 2 || cs[1] != cfg.num_classes || cs[0] != zs[0] {
            return Err(dim_err!("generator inputs {:?} and {:?} do not match noise {} / classes {}", zs, cs, cfg.noise(), cfg.num_classes));
        }
        let mut next = vars.iter().copied();
        let mut take = || next.next().expect("parameter count matches architecture");
        let slope = cfg.leaky_slope;
        let h = tape.concat_last(z, cond)?;
        let (w, b) = (take(), take());
        let h = tape.linear(h, w, Some(b))?;
        let mut h = tape.leaky_relu(h, slope);
        for _ in 0..cfg.gen_layers_before {
            let (w, b) = (take(), take());
            let y = tape.linear(h, w, Some(b))?;
            h = tape.leaky_relu(y, slope);
        }
        let p = CsamVars { w_q: take(), w_k: take(), w_v: take(), w_o: take(), b_o: take() };
        h = csam_forward(tape, h, cond, &p, cfg.attention_dim)?;
        for _ in 0..cfg.gen_layers_after {
            let (w, b) = (take(), take());
            let y = tape.linear(h, w, Some(b))?;
            h = tape.leaky_relu(y, slope);
        }
        let (w, b) = (take(), take());
        tape.linear(h, w, Some(b))
    }

    /// `D(x, cond)` in (0,1), shape `[B, 1]`. Dropout is active only with `rng`.
    pub fn discriminator_forward<R: Rng>(
        &self,
        tape: &mut Tape,
        vars: &[Var],
        x: Var,
        cond: Var,
        rng: Option<&mut R>,
    ) -> Result<Var> {
        let cfg = &self.config;
        let (xs, cs) = (tape.shape(x).to_vec(), tape.shape(cond).to_vec());
        if xs.len() != 2 || xs[1] != cfg.feature_dim || cs.len() != 2 || cs[1] != cfg.num_classes || cs[0] != xs[0] {
            return Err(dim_err!("discriminator inputs {:?} and {:?} do not match D {} / classes {}", xs, cs, cfg.feature_dim, cfg.num_classes));
        }
        let n = xs[0];
        let mut next = vars.iter().copied();
        let mut take = || next.next().expect("parameter count matches architecture");
        let h = tape.concat_last(x, cond)?;
        let mut h = tape.reshape(h, &[n, 1, cfg.feature_dim + cfg.num_classes])?;
        for _ in 0..cfg.disc_conv_blocks {
            let (w, b) = (take(), take());
            h = tape.conv1d(h, w, Some(b), 1, cfg.kernel_size / 2)?;
            h = tape.leaky_relu(h, cfg.leaky_slope);
            h = tape.maxpool1d(h, cfg.pool_size)?;
        }
        let flat = tape.value(h).numel() / n.max(1);
        h = tape.reshape(h, &[n, flat])?;
        let (w, b) = (take(), take());
        h = tape.linear(h, w, Some(b))?;
        h = tape.leaky_relu(h, cfg.leaky_slope);
        if let Some(r) = rng {
            h = tape.dropout(h, cfg.dropout, r)?;
        }
        let (w, b) = (take(), take());
        let logit = tape.linear(h, w, Some(b))?;
        Ok(tape.sigmoid(logit))
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            meta: json!({
                "config": self.config,
                "class_names": self.class_names,
                "train_counts": self.train_counts,
                "extra": extra,
            }),
            groups: vec![("generator".into(), self.generator.clone()), ("discriminator".into(), self.discriminator.clone())],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!("expected a {CHECKPOINT_KIND} checkpoint, found `{}`", ck.kind)));
        }
        let field = |k: &str| ck.meta.get(k).cloned().ok_or_else(|| Error::Format(format!("checkpoint meta lacks `{k}`")));
        let config: GanConfig = serde_json::from_value(field("config")?)?;
        let class_names: Vec<String> = serde_json::from_value(field("class_names")?)?;
        let train_counts: Vec<usize> = serde_json::from_value(field("train_counts")?)?;
        let template = GanModel::new(config.clone(), class_names.clone(), train_counts.clone(), &mut ChaCha8Rng::seed_from_u64(0))?;
        let generator = ck.group("generator")?.clone();
        let discriminator = ck.group("discriminator")?.clone();
        let shapes = |p: &ParamSet| p.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect::<Vec<_>>();
        if shapes(&generator) != shapes(&template.generator) || shapes(&discriminator) != shapes(&template.discriminator) {
            return Err(Error::Format("GAN checkpoint parameters do not match its config".into()));
        }
        Ok(GanModel { config, generator, discriminator, class_names, train_counts })
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        self.to_checkpoint(extra).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    pub fn generator_costs(&self) -> Vec<LayerCost> {
        let cfg = &self.config;
        let (h, dk, c) = (cfg.gen_hidden, cfg.attention_dim, cfg.num_classes);
        let mut out = vec![LayerCost::dense("fusion", cfg.noise() + c, h, true, 1)];
        for l in 0..cfg.gen_layers_before {
            out.push(LayerCost::dense(format!("pre{l}"), h, h, true, 1));
        }
        let t = token_count(h, dk);
        let qkv = 3 * LayerCost::dense("", dk + c, dk, false, t).flops;
        let attn = (2 * t * t * dk + 2 * t * t * dk) as u64;
        let proj = LayerCost::dense("", dk, dk, true, t).flops;
        let params = (3 * (dk + c) * dk + dk * dk + dk) as u64;
        out.push(LayerCost::new("csam", "attention", params, qkv + attn + proj));
        for l in 0..cfg.gen_layers_after {
            out.push(LayerCost::dense(format!("post{l}"), h, h, true, 1));
        }
        out.push(LayerCost::dense("head", h, cfg.feature_dim, true, 1));
        out
    }

    pub fn discriminator_costs(&self) -> Vec<LayerCost> {
        let cfg = &self.config;
        let lens = cfg.disc_lengths().unwrap_or_default();
        let mut out = Vec::new();
        let mut c_in = 1;
        for b in 0..cfg.disc_conv_blocks {
            let len_out = lens[b] + 2 * (cfg.kernel_size / 2) + 1 - cfg.kernel_size;
            out.push(LayerCost::conv1d(format!("conv{b}"), c_in, cfg.disc_channels, cfg.kernel_size, len_out, true));
            out.push(LayerCost::free(format!("pool{b}"), "maxpool"));
            c_in = cfg.disc_channels;
        }
        out.push(LayerCost::dense("fc1", cfg.disc_flat().unwrap_or(0), cfg.disc_hidden, true, 1));
        out.push(LayerCost::free("dropout", "dropout"));
        out.push(LayerCost::dense("fc2", cfg.disc_hidden, 1, true, 1));
        out
    }
}

impl GanConfig {
    fn disc_flat(&self) -> Result<usize> {
        let lens = self.disc_lengths()?;
        let ch = if self.disc_conv_blocks == 0 { 1 } else { self.disc_channels };
        Ok(ch * lens[lens.len() - 1])
    }
}

impl Complexity for GanModel {
    fn layer_costs(&self) -> Vec<LayerCost> {
        let mut out = Vec::new();
        for (p, layers) in [("generator", self.generator_costs()), ("discriminator", self.discriminator_costs())] {
            out.extend(layers.into_iter().map(|mut l| {
                l.name = format!("{p}.{}", l.name);
                l
            }));
        }
        out
    }
}

const GEN_CHUNK: usize = 1024;

/// `n` samples conditioned on `class`, in standardized feature space.
/// Chunk `i` draws its noise from stream `i` of a generator seeded with `seed`,
/// so the output does not depend on thread scheduling.
pub fn generate(model: &GanModel, class: usize, n: usize, seed: u64) -> Result<Tensor> {
    let (c, d, nz) = (model.num_classes(), model.feature_dim(), model.config.noise());
    if class >= c {
        return Err(Error::Config(format!("class {class} outside 0..{c}")));
    }
    let chunks: Vec<usize> = (0..n.div_ceil(GEN_CHUNK)).collect();
    let parts: Vec<Vec<f64>> = chunks
        .par_iter()
        .map(|&i| {
            let rows = GEN_CHUNK.min(n - i * GEN_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let noise: Vec<f64> = (0..rows * nz).map(|_| rng.sample(StandardNormal)).collect();
            let mut tape = Tape::new();
            let vars = model.generator.bind(&mut tape, false);
            let z = tape.constant(Tensor::new(vec![rows, nz], noise)?);
            let cond = tape.constant(Tensor::one_hot(&vec![class; rows], c)?);
            let out = model.generator_forward(&mut tape, &vars, z, cond)?;
            Ok(tape.value(out).data().to_vec())
        })
        .collect::<Result<_>>()?;
    Tensor::new(vec![n, d], parts.concat())
}
