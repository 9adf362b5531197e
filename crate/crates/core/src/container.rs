//! Binary container shared by matrix files and model checkpoints.
//!
//! ```text
//! offset  size  field
//! 0       8     magic (e.g. b"NIDSMATX", b"NIDSCKPT")
//! 8       4     format version, u32 little-endian
//! 12      8     header length H in bytes, u64 little-endian
//! 20      H     UTF-8 JSON header; `sections` lists the payload layout
//! 20+H    ...   payload sections, back to back, little-endian
//! ```
//!
//! Each header section entry is `{"name", "dtype": "f64"|"u32", "offset", "len"}`
//! with `offset` in bytes from the start of the payload and `len` in elements.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F64,
    U32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SectionInfo {
    pub name: String,
    pub dtype: Dtype,
    pub offset: u64,
    pub len: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Section {
    F64(Vec<f64>),
    U32(Vec<u32>),
}

/// Serializes `header` (a JSON object) plus named sections.
pub fn encode(magic: &[u8; 8], mut header: serde_json::Map<String, Value>, sections: &[(&str, Section)]) -> Result<Vec<u8>> {
    let mut infos = Vec::with_capacity(sections.len());
    let mut payload = Vec::new();
    for (name, s) in sections {
        let offset = payload.len() as u64;
        let (dtype, len) = match s {
            Section::F64(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                (Dtype::F64, v.len())
            }
            Section::U32(v) => {
                v.iter().for_each(|x| payload.extend_from_slice(&x.to_le_bytes()));
                (Dtype::U32, v.len())
            }
        };
        infos.push(SectionInfo { name: (*name).to_string(), dtype, offset, len: len as u64 });
    }
    header.insert("format_version".into(), FORMAT_VERSION.into());
    header.insert("sections".into(), serde_json::to_value(&infos)?);
    let header_bytes = serde_json::to_vec(&Value::Object(header))?;

    let mut out = Vec::with_capacity(20 + header_bytes.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header_bytes.len() as u64).to_le_bytes());
    out.extend_from_slice(&header_bytes);
    out.extend_from_slice(&payload);
    Ok(out)
}

pub struct Decoded {
    pub header: serde_json::Map<String, Value>,
    sections: Vec<(String, Section)>,
}

impl Decoded {
    pub fn take(&mut self, name: &str) -> Result<Section> {
        let pos = self
            .sections
            .iter()
            .position(|(n, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing section `{name}`")))?;
        Ok(self.sections.swap_remove(pos).1)
    }

    pub fn take_f64(&mut self, name: &str) -> Result<Vec<f64>> {
        match self.take(name)? {
            Section::F64(v) => Ok(v),
            Section::U32(_) => Err(Error::Format(format!("section `{name}` is not f64"))),
        }
    }

    pub fn take_u32(&mut self, name: &str) -> Result<Vec<u32>> {
        match self.take(name)? {
            Section::U32(v) => Ok(v),
            Section::F64(_) => Err(Error::Format(format!("section `{name}` is not u32"))),
        }
    }
}

pub fn decode(magic: &[u8; 8], bytes: &[u8]) -> Result<Decoded> {
    let bad = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 20 || &bytes[..8] != magic {
        return Err(Error::Format(format!("bad magic, expected {:?}", String::from_utf8_lossy(magic))));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let header_end = 20usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Value = serde_json::from_slice(&bytes[20..header_end])?;
    let Value::Object(header) = header else { return Err(bad("header is not a JSON object")) };
    let infos: Vec<SectionInfo> =
        serde_json::from_value(header.get("sections").cloned().ok_or_else(|| bad("header lacks `sections`"))?)?;
    let payload = &bytes[header_end..];
    let mut sections = Vec::with_capacity(infos.len());
    for info in infos {
        let width = match info.dtype {
            Dtype::F64 => 8,
            Dtype::U32 => 4,
        };
        let start = info.offset as usize;
        let end = start
            .checked_add(info.len as usize * width)
            .filter(|&e| e <= payload.len())
            .ok_or_else(|| Error::Format(format!("section `{}` runs past end of file", info.name)))?;
        let raw = &payload[start..end];
        let s = match info.dtype {
            Dtype::F64 => Section::F64(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect()),
            Dtype::U32 => Section::U32(raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect()),
        };
        sections.push((info.name, s));
    }
    Ok(Decoded { header, sections })
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}
