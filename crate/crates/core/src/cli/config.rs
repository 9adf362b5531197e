//! Run configuration: one TOML file whose unspecified fields take the
//! defaults of the published setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::balance::{GanConfig, GanTrainConfig};
use crate::classifier::{ClassifierConfig, CostScheme, TrainConfig};
use crate::error::{Error, Result};
use crate::explain::{LimeConfig, ShapConfig};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Replaces the built-in attack → class table.
    pub attack_map: Option<PathBuf>,
    /// Stratified number of training rows kept after encoding.
    pub train_subsample: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    ScCgan,
    Ros,
    Smote,
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BalanceConfig {
    pub strategy: Strategy,
    pub smote_k: usize,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        BalanceConfig { strategy: Strategy::ScCgan, smote_k: 5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Five,
    Binary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryMode {
    /// Train a separate 2-logit model on Normal vs. Attack.
    Retrain,
    /// Collapse a 5-class model's probabilities: attack when `1 − P(Normal) >= 0.5`.
    Threshold,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExplainMethod {
    Lime,
    Shap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub method: ExplainMethod,
    /// Test-set row to explain.
    pub sample: usize,
    /// Stratified training rows used as background.
    pub background: usize,
    pub lime: LimeConfig,
    pub shap: ShapConfig,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            method: ExplainMethod::Shap,
            sample: 0,
            background: crate::explain::DEFAULT_BACKGROUND_ROWS,
            lime: LimeConfig::default(),
            shap: ShapConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReportConfig {
    /// Rows of the training matrix projected to 2-D (PCA).
    pub projection_rows: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig { projection_rows: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub task: Task,
    pub binary_mode: BinaryMode,
    pub data: DataConfig,
    pub balance: BalanceConfig,
    pub gan: GanConfig,
    pub gan_train: GanTrainConfig,
    pub classifier: ClassifierConfig,
    pub classifier_train: TrainConfig,
    pub explain: ExplainConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out_dir: PathBuf::from("runs/default"),
            task: Task::Five,
            binary_mode: BinaryMode::Retrain,
            data: DataConfig::default(),
            balance: BalanceConfig::default(),
            gan: GanConfig::default(),
            gan_train: GanTrainConfig::default(),
            classifier: ClassifierConfig::default(),
            classifier_train: TrainConfig::default(),
            explain: ExplainConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

/// Keys that are filled in from the data or the master seed and may not be set.
const DERIVED_KEYS: [&str; 8] = [
    "gan.feature_dim",
    "gan.num_classes",
    "gan_train.seed",
    "classifier.input_dim",
    "classifier.num_classes",
    "classifier_train.seed",
    "explain.lime.seed",
    "explain.shap.seed",
];

impl RunConfig {
    /// Parses TOML, rejecting unknown keys, keys derived elsewhere, and invalid values.
    pub fn from_toml(text: &str) -> Result<Self> {
        let value: toml::Value = text.parse().map_err(|e: toml::de::Error| Error::Validation(vec![e.message().to_string()]))?;
        let mut problems = Vec::new();
        for key in DERIVED_KEYS {
            let mut node = Some(&value);
            for part in key.split('.') {
                node = node.and_then(|n| n.get(part));
            }
            if node.is_some() {
                problems.push(format!("`{key}` is derived and cannot be set"));
            }
        }
        let mut unknown = Vec::new();
        let cfg: RunConfig = serde_ignored::deserialize(value, |path| unknown.push(path.to_string()))
            .map_err(|e| Error::Validation(vec![e.to_string()]))?;
        problems.extend(unknown.into_iter().map(|k| format!("unknown key `{k}`")));
        problems.extend(cfg.value_problems());
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Serializes without the derived keys, so the output loads back.
    pub fn to_toml(&self) -> Result<String> {
        let err = |e: &dyn std::fmt::Display| Error::Internal(format!("cannot serialize config: {e}"));
        let mut value = toml::Value::try_from(self).map_err(|e| err(&e))?;
        for key in DERIVED_KEYS {
            let (parents, leaf) = key.rsplit_once('.').expect("derived keys are nested");
            let mut node = Some(&mut value);
            for part in parents.split('.') {
                node = node.and_then(|n| n.get_mut(part));
            }
            if let Some(toml::Value::Table(t)) = node {
                t.remove(leaf);
            }
        }
        toml::to_string(&value).map_err(|e| err(&e))
    }

    fn value_problems(&self) -> Vec<String> {
        let mut p = Vec::new();
        let mut need = |ok: bool, msg: &str| {
            if !ok {
                p.push(msg.to_string());
            }
        };
        let (g, c, e) = (&self.gan_train, &self.classifier_train, &self.explain);
        need(g.gen_learning_rate > 0.0, "gan_train.gen_learning_rate must be positive");
        need(g.disc_learning_rate > 0.0, "gan_train.disc_learning_rate must be positive");
        need(g.batch_size > 0, "gan_train.batch_size must be positive");
        need(c.learning_rate > 0.0, "classifier_train.learning_rate must be positive");
        need(c.batch_size > 0, "classifier_train.batch_size must be positive");
        need((0.0..1.0).contains(&c.val_fraction), "classifier_train.val_fraction must be in [0, 1)");
        need(self.balance.smote_k > 0, "balance.smote_k must be positive");
        need((0.0..1.0).contains(&self.classifier.dropout), "classifier.dropout must be in [0, 1)");
        need((0.0..1.0).contains(&self.gan.dropout), "gan.dropout must be in [0, 1)");
        need(!self.classifier.use_cam || self.classifier.channels >= self.classifier.squeeze_ratio, "classifier.channels must be >= classifier.squeeze_ratio");
        need(e.background > 0, "explain.background must be positive");
        need(e.lime.n_perturb >= 100, "explain.lime.n_perturb must be at least 100");
        need(self.data.train_subsample != Some(0), "data.train_subsample must be positive");
        if let CostScheme::Custom(w) = &c.cost_scheme {
            need(w.iter().all(|v| *v > 0.0 && v.is_finite()), "classifier_train.cost_scheme custom weights must be positive");
        }
        p
    }

    /// SHA-256 of the resolved config, hex encoded. The output directory is excluded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex(&Sha256::digest(json.as_bytes()))
    }

    /// Seed of a pipeline stage, derived from the master seed and the stage name.
    pub fn stage_seed(&self, stage: &str) -> u64 {
        let mut h = Sha256::new();
        h.update(self.seed.to_le_bytes());
        h.update(stage.as_bytes());
        let d = h.finalize();
        u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
