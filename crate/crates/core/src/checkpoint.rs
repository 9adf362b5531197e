//! Model checkpoints: versioned JSON header plus named parameter arrays.
//!
//! Parameters are stored as raw little-endian `f64`, so reloading reproduces
//! every weight bit for bit.

use std::path::Path;

use serde_json::{Map, Value};

use crate::autodiff::{ParamSet, Tensor};
use crate::container::{self, Section};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"NIDSCKPT";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// Model family, e.g. `"sc-cgan"` or `"csca-cnn"`.
    pub kind: String,
    /// Architecture config, seeds, epoch and any model-specific metadata.
    pub meta: Value,
    /// Parameter groups (e.g. `generator`, `discriminator`), each in slot order.
    pub groups: Vec<(String, ParamSet)>,
}

impl Checkpoint {
    pub fn group(&self, name: &str) -> Result<&ParamSet> {
        self.groups
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::Format(format!("checkpoint has no `{name}` parameters")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut header = Map::new();
        header.insert("kind".into(), self.kind.clone().into());
        header.insert("meta".into(), self.meta.clone());
        let mut layout = Vec::new();
        let mut sections = Vec::new();
        for (group, params) in &self.groups {
            let mut entries = Vec::new();
            for (name, t) in params.iter() {
                let key = format!("{group}/{name}");
                entries.push(serde_json::json!({ "name": name, "shape": t.shape(), "section": key }));
                sections.push((key, Section::F64(t.data().to_vec())));
            }
            layout.push(serde_json::json!({ "group": group, "params": entries }));
        }
        header.insert("params".into(), Value::Array(layout));
        let refs: Vec<(&str, Section)> = sections.iter().map(|(k, s)| (k.as_str(), s.clone())).collect();
        container::encode(MAGIC, header, &refs)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut d = container::decode(MAGIC, bytes)?;
        let kind = d.header.get("kind").and_then(Value::as_str).ok_or_else(|| Error::Format("missing kind".into()))?.to_string();
        let meta = d.header.get("meta").cloned().unwrap_or(Value::Null);
        let layout = d.header.get("params").and_then(Value::as_array).cloned().unwrap_or_default();
        let mut groups = Vec::new();
        for g in layout {
            let gname = g["group"].as_str().ok_or_else(|| Error::Format("group without name".into()))?.to_string();
            let mut params = ParamSet::new();
            for e in g["params"].as_array().cloned().unwrap_or_default() {
                let name = e["name"].as_str().unwrap_or_default().to_string();
                let shape: Vec<usize> = serde_json::from_value(e["shape"].clone())?;
                let key = e["section"].as_str().unwrap_or_default();
                let data = d.take_f64(key)?;
                params.push(name, Tensor::new(shape, data)?);
            }
            groups.push((gname, params));
        }
        Ok(Checkpoint { kind, meta, groups })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        container::write_file(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&container::read_file(path)?)
    }
}
