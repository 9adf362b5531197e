use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::cam::{cam_forward, CamVars};
use super::costs::CostMatrix;
use crate::autodiff::{Init, ParamSet, Tape, Tensor, Var};
use crate::checkpoint::Checkpoint;
use crate::error::{dim_err, Error, Result};
use crate::metrics::{Complexity, LayerCost};

pub const CHECKPOINT_KIND: &str = "csca-cnn";

/// Architecture of the CSCA-CNN. Defaults follow the 5-class NSL-KDD setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub input_dim: usize,
    pub num_classes: usize,
    /// Channels of every conv block.
    pub channels: usize,
    pub kernel_size: usize,
    pub conv_blocks: usize,
    pub pool_size: usize,
    pub dense_width: usize,
    pub dropout: f64,
    pub squeeze_ratio: usize,
    pub use_cam: bool,
    pub leaky_slope: f64,
    pub init: Init,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            input_dim: 122,
            num_classes: 5,
            channels: 40,
            kernel_size: 3,
            conv_blocks: 3,
            pool_size: 2,
            dense_width: 40,
            dropout: 0.3,
            squeeze_ratio: 8,
            use_cam: true,
            leaky_slope: 0.01,
            init: Init::Xavier,
        }
    }
}

impl ClassifierConfig {
    fn padding(&self) -> usize {
        self.kernel_size / 2
    }

    /// Signal length entering each conv block, plus the final flattened length.
    pub fn block_lengths(&self) -> Result<Vec<usize>> {
        let mut lens = vec![self.input_dim];
        let mut len = self.input_dim;
        for b in 0..self.conv_blocks {
            let conv = (len + 2 * self.padding()).checked_sub(self.kernel_size).map(|l| l + 1).unwrap_or(0);
            if conv < self.pool_size || conv == 0 {
                return Err(Error::Config(format!(
                    "input length {} is too short for {} conv blocks (block {b} sees length {len})",
                    self.input_dim, self.conv_blocks
                )));
            }
            len = conv / self.pool_size;
            lens.push(len);
        }
        Ok(lens)
    }

    pub fn cam_hidden(&self) -> usize {
        self.channels / self.squeeze_ratio
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 || self.num_classes < 2 {
            return bad(format!("need input_dim >= 1 and num_classes >= 2, got {} and {}", self.input_dim, self.num_classes));
        }
        if self.channels == 0 || self.kernel_size == 0 || self.pool_size == 0 || self.dense_width == 0 {
            return bad("channels, kernel_size, pool_size and dense_width must be positive".into());
        }
        if self.use_cam && (self.squeeze_ratio == 0 || self.channels < self.squeeze_ratio) {
            return bad(format!("CAM needs channels ({}) >= squeeze ratio ({})", self.channels, self.squeeze_ratio));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        self.block_lengths().map(|_| ())
    }

    fn flat_width(&self) -> Result<usize> {
        let lens = self.block_lengths()?;
        let ch = if self.conv_blocks == 0 { 1 } else { self.channels };
        Ok(ch * lens[lens.len() - 1])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub config: ClassifierConfig,
    pub params: ParamSet,
    pub cost: CostMatrix,
    pub class_names: Vec<String>,
}

impl ClassifierModel {
    pub fn new<R: Rng>(config: ClassifierConfig, class_names: Vec<String>, cost: CostMatrix, rng: &mut R) -> Result<Self> {
        config.validate()?;
        if class_names.len() != config.num_classes || cost.weights.len() != config.num_classes {
            return Err(Error::Config(format!(
                "{} classes configured but {} names and {} cost weights given",
                config.num_classes,
                class_names.len(),
                cost.weights.len()
            )));
        }
        let init = config.init;
        let mut p = ParamSet::new();
        let (k, ch) = (config.kernel_size, config.channels);
        let mut c_in = 1;
        for b in 0..config.conv_blocks {
            p.push(format!("conv{b}.weight"), init.tensor(&[ch, c_in, k], c_in * k, ch * k, rng));
            p.push(format!("conv{b}.bias"), Tensor::zeros(&[ch]));
            if config.use_cam {
                let h = config.cam_hidden();
                p.push(format!("cam{b}.fc1.weight"), init.tensor(&[ch, h], ch, h, rng));
                p.push(format!("cam{b}.fc1.bias"), Tensor::zeros(&[h]));
                p.push(format!("cam{b}.fc2.weight"), init.tensor(&[h, ch], h, ch, rng));
                p.push(format!("cam{b}.fc2.bias"), Tensor::zeros(&[ch]));
            }
            c_in = ch;
        }
        let (flat, dw, c) = (config.flat_width()?, config.dense_width, config.num_classes);
        p.push("fc1.weight", init.tensor(&[flat, dw], flat, dw, rng));
        p.push("fc1.bias", Tensor::zeros(&[dw]));
        p.push("fc2.weight", init.tensor(&[dw, c], dw, c, rng));
        p.push("fc2.bias", Tensor::zeros(&[c]));
        Ok(ClassifierModel { config, params: p, cost, class_names })
    }

    pub fn input_dim(&self) -> usize {
        self.config.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Logits `[n, C]` for `x:[n, D]`. Dropout is applied only when `rng` is given.
    pub fn logits<R: Rng>(&self, tape: &mut Tape, vars: &[Var], x: Var, mut rng: Option<&mut R>) -> Result<Var> {
        let cfg = &self.config;
        let xs = tape.shape(x).to_vec();
        if xs.len() != 2 || xs[1] != cfg.input_dim {
            return Err(dim_err!("classifier expects [n, {}], got {:?}", cfg.input_dim, xs));
        }
        let n = xs[0];
        let mut next = vars.iter().copied();
        let mut take = || next.next().expect("parameter count matches architecture");
        let mut h = tape.reshape(x, &[n, 1, cfg.input_dim])?;
        for _ in 0..cfg.conv_blocks {
            let (w, b) = (take(), take());
            h = tape.conv1d(h, w, Some(b), 1, cfg.padding())?;
            h = tape.leaky_relu(h, cfg.leaky_slope);
            if cfg.use_cam {
                let p = CamVars { fc1_w: take(), fc1_b: take(), fc2_w: take(), fc2_b: take() };
                h = cam_forward(tape, h, &p)?;
            }
            h = tape.maxpool1d(h, cfg.pool_size)?;
        }
        let flat = tape.value(h).numel() / n.max(1);
        h = tape.reshape(h, &[n, flat])?;
        let (w, b) = (take(), take());
        h = tape.linear(h, w, Some(b))?;
        h = tape.leaky_relu(h, cfg.leaky_slope);
        if let Some(r) = rng.as_deref_mut() {
            h = tape.dropout(h, cfg.dropout, r)?;
        }
        let (w, b) = (take(), take());
        tape.linear(h, w, Some(b))
    }

    pub fn to_checkpoint(&self, extra: serde_json::Value) -> Checkpoint {
        Checkpoint {
            kind: CHECKPOINT_KIND.into(),
            meta: json!({
                "config": self.config,
                "cost_weights": self.cost.weights,
                "class_names": self.class_names,
                "extra": extra,
            }),
            groups: vec![("classifier".into(), self.params.clone())],
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!("expected a {CHECKPOINT_KIND} checkpoint, found `{}`", ck.kind)));
        }
        let field = |k: &str| ck.meta.get(k).cloned().ok_or_else(|| Error::Format(format!("checkpoint meta lacks `{k}`")));
        let config: ClassifierConfig = serde_json::from_value(field("config")?)?;
        let weights: Vec<f64> = serde_json::from_value(field("cost_weights")?)?;
        let class_names: Vec<String> = serde_json::from_value(field("class_names")?)?;
        let params = ck.group("classifier")?.clone();
        // shapes must match what the config would build
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let template = ClassifierModel::new(config.clone(), class_names.clone(), CostMatrix { weights: weights.clone() }, &mut rng)?;
        let expected: Vec<(&str, &[usize])> = template.params.iter().map(|(n, t)| (n, t.shape())).collect();
        let found: Vec<(&str, &[usize])> = params.iter().map(|(n, t)| (n, t.shape())).collect();
        if expected != found {
            return Err(Error::Format("classifier checkpoint parameters do not match its config".into()));
        }
        Ok(ClassifierModel { config, params, cost: CostMatrix { weights }, class_names })
    }

    pub fn save(&self, path: &Path, extra: serde_json::Value) -> Result<()> {
        self.to_checkpoint(extra).save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Complexity for ClassifierModel {
    fn layer_costs(&self) -> Vec<LayerCost> {
        let cfg = &self.config;
        let lens = cfg.block_lengths().unwrap_or_default();
        let mut out = Vec::new();
        let mut c_in = 1;
        for b in 0..cfg.conv_blocks {
            let len_out = lens[b] + 2 * cfg.padding() + 1 - cfg.kernel_size;
            out.push(LayerCost::conv1d(format!("conv{b}"), c_in, cfg.channels, cfg.kernel_size, len_out, true));
            if cfg.use_cam {
                let h = cfg.cam_hidden();
                let mlp = LayerCost::dense("", cfg.channels, h, true, 2).flops + LayerCost::dense("", h, cfg.channels, true, 2).flops;
                let params = (cfg.channels * h + h + h * cfg.channels + cfg.channels) as u64;
                out.push(LayerCost::new(format!("cam{b}"), "cam", params, mlp));
            }
            out.push(LayerCost::free(format!("pool{b}"), "maxpool"));
            c_in = cfg.channels;
        }
        let flat = cfg.flat_width().unwrap_or(0);
        out.push(LayerCost::dense("fc1", flat, cfg.dense_width, true, 1));
        out.push(LayerCost::free("dropout", "dropout"));
        out.push(LayerCost::dense("fc2", cfg.dense_width, cfg.num_classes, true, 1));
        out
    }
}
