//! CSCA-CNN: a 1-D convolutional classifier with channel attention after each
//! conv block, trained with a cost-sensitive cross-entropy.
//!
//! Layout (default 12 layers): 3 × [conv(40, k=3) → LeakyReLU → CAM → maxpool(2)]
//! → flatten → dense(40) → LeakyReLU → dropout(0.3) → dense(C). The input vector
//! is read as a one-channel signal of length D.

mod cam;
mod costs;
mod model;
mod predict;
mod train;

#[cfg(test)]
mod tests;

pub use cam::{cam_forward, cam_weights, CamVars};
pub use costs::{cost_weights, cs_ce_loss, CostMatrix, CostScheme, PROB_FLOOR};
pub use model::{ClassifierConfig, ClassifierModel, CHECKPOINT_KIND};
pub use predict::{argmax, predict, threshold_binary, write_predictions_jsonl, Prediction};
pub use train::{train_cscacnn, EpochLog, TrainConfig, TrainedClassifier};
