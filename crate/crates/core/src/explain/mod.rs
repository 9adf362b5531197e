//! Local explanations: LIME surrogates, Kernel SHAP, and force-plot export.
//!
//! Both explainers work on feature groups. A one-hot block (e.g. `service`)
//! is masked and restored as a unit, and its attribution is reported under
//! the active indicator column (`service_http`).

mod force;
mod lime;
mod report;
mod shap;
mod space;

#[cfg(test)]
mod tests;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use force::{force_plot_data, render_svg, ForcePlot, ForceSample, Segment, Stacking};
pub use lime::{lime_explain, reference_row, LimeConfig};
pub use report::{Attribution, ExplanationReport, Method};
pub use shap::{kernel_shap, ShapConfig, ShapMode, MAX_EXACT_GROUPS};
pub use space::{ClassProbability, FeatureSpace, ScalarModel};

use crate::autodiff::Tensor;
use crate::dataset::{stratified_subsample, FeatureMatrix};

pub const DEFAULT_BACKGROUND_ROWS: usize = 100;

/// About `n` class-stratified rows of `data`, drawn with `seed`.
pub fn default_background(data: &FeatureMatrix, n: usize, seed: u64) -> Tensor {
    let idx = stratified_subsample(&data.labels, data.num_classes(), n, &mut ChaCha8Rng::seed_from_u64(seed));
    data.values.select_rows(&idx)
}
