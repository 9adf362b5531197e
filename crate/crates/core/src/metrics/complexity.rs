//! Parameter and FLOP counting.
//!
//! Conventions: a multiply-accumulate counts as 2 FLOPs; bias additions,
//! activations, pooling, softmax and other elementwise work count as 0.
//!
//! | layer      | params                     | FLOPs                              |
//! |------------|----------------------------|------------------------------------|
//! | dense      | in·out (+ out bias)        | 2·in·out per row                   |
//! | conv1d     | k·c_in·c_out (+ c_out)     | 2·k·c_in·c_out·len_out             |
//! | attention  | projections as dense       | projections + 2·T²·d (QKᵀ) + 2·T²·d (PV) |
//! | CAM        | shared MLP as dense        | MLP applied to avg and max branches |
//! | maxpool    | 0                          | 0                                  |

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub name: String,
    pub kind: String,
    pub params: u64,
    pub flops: u64,
}

impl LayerCost {
    pub fn new(name: impl Into<String>, kind: &str, params: u64, flops: u64) -> Self {
        LayerCost { name: name.into(), kind: kind.to_string(), params, flops }
    }

    pub fn dense(name: impl Into<String>, inputs: usize, outputs: usize, bias: bool, rows: usize) -> Self {
        let params = inputs * outputs + if bias { outputs } else { 0 };
        Self::new(name, "dense", params as u64, (2 * inputs * outputs * rows) as u64)
    }

    pub fn conv1d(name: impl Into<String>, c_in: usize, c_out: usize, k: usize, len_out: usize, bias: bool) -> Self {
        let params = k * c_in * c_out + if bias { c_out } else { 0 };
        Self::new(name, "conv1d", params as u64, (2 * k * c_in * c_out * len_out) as u64)
    }

    pub fn free(name: impl Into<String>, kind: &str) -> Self {
        Self::new(name, kind, 0, 0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub params: u64,
    pub flops: u64,
    pub layers: Vec<LayerCost>,
}

impl ComplexityReport {
    pub fn from_layers(layers: Vec<LayerCost>) -> Self {
        ComplexityReport {
            params: layers.iter().map(|l| l.params).sum(),
            flops: layers.iter().map(|l| l.flops).sum(),
            layers,
        }
    }
}

/// Models that can describe their per-layer cost for a single input sample.
pub trait Complexity {
    fn layer_costs(&self) -> Vec<LayerCost>;
}

pub fn count_params(model: &impl Complexity) -> ComplexityReport {
    let mut r = ComplexityReport::from_layers(model.layer_costs());
    r.flops = 0;
    r.layers.iter_mut().for_each(|l| l.flops = 0);
    r
}

/// FLOPs for a batch of `rows` samples.
pub fn count_flops(model: &impl Complexity, rows: usize) -> ComplexityReport {
    let mut layers = model.layer_costs();
    layers.iter_mut().for_each(|l| l.flops *= rows as u64);
    ComplexityReport::from_layers(layers)
}
