//! Classification metrics and model-complexity counters.

mod classification;
mod complexity;

pub use classification::{
    accuracy, confusion_matrix, support_weighted, weighted_prf, ClassMetrics, EvalReport, WeightedPrf,
};
pub use complexity::{count_flops, count_params, Complexity, ComplexityReport, LayerCost};
