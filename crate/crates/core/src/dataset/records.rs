use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::{TrafficClass, CATEGORICAL_FIELDS, FEATURE_NAMES, FIELD_COUNT};
use crate::error::{Error, Result};

const DEFAULT_ATTACK_MAP: &str = include_str!("../../data/attack_map.csv");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitTag {
    Train,
    Test,
}

/// Attack name → traffic class lookup.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackMap {
    map: BTreeMap<String, TrafficClass>,
}

impl Default for AttackMap {
    fn default() -> Self {
        AttackMap::from_csv(DEFAULT_ATTACK_MAP).expect("shipped attack map is valid")
    }
}

impl AttackMap {
    /// Parses `attack,class` lines; `#` comments and an `attack,class` header are skipped.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.eq_ignore_ascii_case("attack,class") {
                continue;
            }
            let (attack, class) = line
                .split_once(',')
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("expected `attack,class`, got `{line}`") })?;
            let class = TrafficClass::parse(class.trim())
                .ok_or_else(|| Error::Parse { line: i + 1, message: format!("unknown class `{}`", class.trim()) })?;
            map.insert(normalize_label(attack), class);
        }
        Ok(AttackMap { map })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text)
    }

    pub fn get(&self, attack: &str) -> Option<TrafficClass> {
        self.map.get(&normalize_label(attack)).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

fn normalize_label(s: &str) -> String {
    s.trim().trim_end_matches('.').to_ascii_lowercase()
}

/// One NSL-KDD connection record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    /// The 38 numeric fields in file order.
    pub numeric: Vec<f64>,
    /// `protocol_type`, `service`, `flag`.
    pub categorical: [String; 3],
    pub attack: String,
    pub difficulty: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordSet {
    pub rows: Vec<Record>,
    pub class_labels: Vec<TrafficClass>,
    pub split: SplitTag,
}

impl RecordSet {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Rows at the given indices, in that order.
    pub fn select(&self, idx: &[usize]) -> RecordSet {
        RecordSet {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            class_labels: idx.iter().map(|&i| self.class_labels[i]).collect(),
            split: self.split,
        }
    }

    pub fn concat(&self, other: &RecordSet) -> RecordSet {
        let mut out = self.clone();
        out.rows.extend(other.rows.iter().cloned());
        out.class_labels.extend(&other.class_labels);
        out
    }
}

pub fn load_nslkdd(path: &Path, split: SplitTag) -> Result<RecordSet> {
    load_nslkdd_with(path, split, &AttackMap::default())
}

pub fn load_nslkdd_with(path: &Path, split: SplitTag, map: &AttackMap) -> Result<RecordSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_nslkdd(&text, split, map)
}

/// Parses NSL-KDD CSV text (43 comma-separated fields per line, no header).
pub fn parse_nslkdd(text: &str, split: SplitTag, map: &AttackMap) -> Result<RecordSet> {
    let mut rows = Vec::new();
    let mut class_labels = Vec::new();
    let mut unknown = BTreeSet::new();
    let categorical_at = |i: usize| CATEGORICAL_FIELDS.iter().position(|&c| c == i);

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != FIELD_COUNT {
            return Err(Error::Parse { line: line_no, message: format!("expected {FIELD_COUNT} fields, found {}", fields.len()) });
        }
        let mut numeric = Vec::with_capacity(38);
        let mut categorical: [String; 3] = Default::default();
        for (j, raw) in fields[..41].iter().enumerate() {
            if let Some(c) = categorical_at(j) {
                categorical[c] = (*raw).to_string();
            } else {
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("field `{}` is not numeric: `{raw}`", FEATURE_NAMES[j]),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line: line_no, message: format!("field `{}` is not finite", FEATURE_NAMES[j]) });
                }
                numeric.push(v);
            }
        }
        let difficulty = fields[42]
            .parse()
            .map_err(|_| Error::Parse { line: line_no, message: format!("difficulty `{}` is not an integer", fields[42]) })?;
        let attack = fields[41].to_string();
        match map.get(&attack) {
            Some(c) => class_labels.push(c),
            None => {
                unknown.insert(attack.clone());
                class_labels.push(TrafficClass::Normal);
            }
        }
        rows.push(Record { numeric, categorical, attack, difficulty });
    }
    if !unknown.is_empty() {
        return Err(Error::Mapping(unknown.into_iter().collect()));
    }
    Ok(RecordSet { rows, class_labels, split })
}
