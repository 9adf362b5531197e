use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{contract_err, Result};

fn check(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<()> {
    if y_true.len() != y_pred.len() {
        return Err(contract_err!("{} true labels vs {} predictions", y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(contract_err!("metrics need at least one sample"));
    }
    if let Some(bad) = y_true.iter().chain(y_pred).find(|&&l| l >= classes) {
        return Err(contract_err!("label {bad} outside 0..{classes}"));
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy(y_true: &[usize], y_pred: &[usize]) -> Result<f64> {
    let classes = y_true.iter().chain(y_pred).max().map_or(0, |m| m + 1);
    check(y_true, y_pred, classes)?;
    let hits = y_true.iter().zip(y_pred).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / y_true.len() as f64)
}

/// `cm[true][pred]` counts.
pub fn confusion_matrix(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<Vec<Vec<usize>>> {
    check(y_true, y_pred, classes)?;
    let mut cm = vec![vec![0; classes]; classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        cm[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightedPrf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest precision/recall/F1 per class, averaged with support weights.
/// Zero denominators yield 0.
pub fn weighted_prf(y_true: &[usize], y_pred: &[usize], classes: usize) -> Result<WeightedPrf> {
    let cm = confusion_matrix(y_true, y_pred, classes)?;
    Ok(prf_from_confusion(&cm))
}

/// `Σ_i (support_i / Σ_j support_j) · value_i`.
pub fn support_weighted(values: &[f64], supports: &[usize]) -> f64 {
    let total: usize = supports.iter().sum();
    values.iter().zip(supports).map(|(v, &s)| ratio(s, total) * v).sum()
}

pub(crate) fn prf_from_confusion(cm: &[Vec<usize>]) -> WeightedPrf {
    let classes = cm.len();
    let mut per_class = Vec::with_capacity(classes);
    for c in 0..classes {
        let tp = cm[c][c];
        let support: usize = cm[c].iter().sum();
        let predicted: usize = cm.iter().map(|row| row[c]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_class.push(ClassMetrics { precision, recall, f1, support });
    }
    let supports: Vec<usize> = per_class.iter().map(|m| m.support).collect();
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        let v: Vec<f64> = per_class.iter().map(f).collect();
        support_weighted(&v, &supports)
    };
    WeightedPrf {
        precision: weighted(|m| m.precision),
        recall: weighted(|m| m.recall),
        f1: weighted(|m| m.f1),
        per_class,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub samples: usize,
    pub confusion: Vec<Vec<usize>>,
    pub accuracy: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub zero_division: String,
}

impl EvalReport {
    pub fn compute(y_true: &[usize], y_pred: &[usize], class_names: &[String]) -> Result<Self> {
        let cm = confusion_matrix(y_true, y_pred, class_names.len())?;
        let prf = prf_from_confusion(&cm);
        let hits: usize = (0..cm.len()).map(|c| cm[c][c]).sum();
        Ok(EvalReport {
            class_names: class_names.to_vec(),
            samples: y_true.len(),
            accuracy: hits as f64 / y_true.len() as f64,
            confusion: cm,
            weighted_precision: prf.precision,
            weighted_recall: prf.recall,
            weighted_f1: prf.f1,
            per_class: prf.per_class,
            zero_division: "0".into(),
        })
    }

    /// Percent table: one summary row then per-class rows.
    pub fn format_table(&self, title: &str) -> String {
        let pct = |v: f64| format!("{:.2}", 100.0 * v);
        let mut s = String::new();
        let _ = writeln!(s, "{:<14} {:>8} {:>8} {:>8} {:>8}", title, "Acc", "Pre", "Recall", "F1");
        let _ = writeln!(
            s,
            "{:<14} {:>8} {:>8} {:>8} {:>8}",
            "weighted",
            pct(self.accuracy),
            pct(self.weighted_precision),
            pct(self.weighted_recall),
            pct(self.weighted_f1)
        );
        for (name, m) in self.class_names.iter().zip(&self.per_class) {
            let _ = writeln!(
                s,
                "{:<14} {:>8} {:>8} {:>8} {:>8}  (n={})",
                name,
                "",
                pct(m.precision),
                pct(m.recall),
                pct(m.f1),
                m.support
            );
        }
        s
    }
}
