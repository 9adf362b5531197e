use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::model::ClassifierModel;
use crate::autodiff::{Tape, Tensor};
use crate::error::{dim_err, Error, Result};

const CHUNK_ROWS: usize = 256;

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// `[n, C]`, each row a probability vector.
    pub probs: Tensor,
    pub labels: Vec<usize>,
}

/// Index of the largest value; the lowest index wins exact ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn probs_chunk(model: &ClassifierModel, x: Tensor) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = model.params.bind(&mut tape, false);
    let xv = tape.constant(x);
    let logits = model.logits(&mut tape, &vars, xv, None::<&mut ChaCha8Rng>)?;
    let p = tape.softmax(logits)?;
    Ok(tape.value(p).data().to_vec())
}

/// Class probabilities and argmax labels for `x:[n, D]`. Rows are processed
/// independently, so results do not depend on how the input is batched.
pub fn predict(model: &ClassifierModel, x: &Tensor) -> Result<Prediction> {
    let d = model.input_dim();
    if x.rank() != 2 || x.shape()[1] != d {
        return Err(dim_err!("model expects {d} features, input has shape {:?}", x.shape()));
    }
    let n = x.shape()[0];
    let c = model.num_classes();
    let chunks: Vec<Vec<f64>> = x
        .data()
        .par_chunks(CHUNK_ROWS * d)
        .map(|rows| probs_chunk(model, Tensor::new(vec![rows.len() / d, d], rows.to_vec())?))
        .collect::<Result<_>>()?;
    let probs = Tensor::new(vec![n, c], chunks.concat())?;
    let labels = probs.data().chunks(c).map(argmax).collect();
    Ok(Prediction { probs, labels })
}

/// Collapses multi-class probabilities to `[P(normal), P(attack)]`, labelling
/// a row as attack when `P(attack) >= threshold`.
pub fn threshold_binary(pred: &Prediction, normal_class: usize, threshold: f64) -> Result<Prediction> {
    let c = pred.probs.last_dim();
    if normal_class >= c {
        return Err(Error::Config(format!("normal class {normal_class} outside 0..{c}")));
    }
    let mut data = Vec::with_capacity(pred.labels.len() * 2);
    let mut labels = Vec::with_capacity(pred.labels.len());
    for row in pred.probs.data().chunks(c) {
        let attack = 1.0 - row[normal_class];
        data.extend([row[normal_class], attack]);
        labels.push(usize::from(attack >= threshold));
    }
    Ok(Prediction { probs: Tensor::new(vec![labels.len(), 2], data)?, labels })
}

#[derive(Serialize)]
struct Line<'a> {
    row_index: usize,
    probs: &'a [f64],
    label: usize,
}

/// One JSON object per row: `{"row_index", "probs", "label"}`.
pub fn write_predictions_jsonl<W: Write>(pred: &Prediction, mut out: W) -> Result<()> {
    let c = pred.probs.last_dim();
    for (i, (row, &label)) in pred.probs.data().chunks(c).zip(&pred.labels).enumerate() {
        let line = serde_json::to_string(&Line { row_index: i, probs: row, label })?;
        writeln!(out, "{line}").map_err(|e| Error::io("<predictions>", e))?;
    }
    Ok(())
}
