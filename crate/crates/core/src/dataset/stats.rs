use serde::{Deserialize, Serialize};

use super::records::RecordSet;
use super::schema::TrafficClass;

/// Per-class counts with class-imbalance ratios (majority count / class count).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub class_names: Vec<String>,
    pub counts: Vec<usize>,
}

impl ClassStats {
    pub fn from_labels(labels: &[usize], class_names: &[String]) -> Self {
        let mut counts = vec![0; class_names.len()];
        for &l in labels {
            counts[l] += 1;
        }
        ClassStats { class_names: class_names.to_vec(), counts }
    }

    pub fn from_counts(class_names: &[&str], counts: &[usize]) -> Self {
        ClassStats { class_names: class_names.iter().map(|s| s.to_string()).collect(), counts: counts.to_vec() }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn max_count(&self) -> usize {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    /// `None` for classes with no rows.
    pub fn ci_ratio(&self, class: usize) -> Option<f64> {
        let c = self.counts[class];
        (c > 0).then(|| self.max_count() as f64 / c as f64)
    }

    pub fn ci_ratios(&self) -> Vec<Option<f64>> {
        (0..self.counts.len()).map(|c| self.ci_ratio(c)).collect()
    }

    pub fn merged(&self, other: &ClassStats) -> ClassStats {
        ClassStats {
            class_names: self.class_names.clone(),
            counts: self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect(),
        }
    }
}

pub fn class_stats(records: &RecordSet) -> ClassStats {
    let labels: Vec<usize> = records.class_labels.iter().map(|c| c.index()).collect();
    ClassStats::from_labels(&labels, &TrafficClass::names())
}
