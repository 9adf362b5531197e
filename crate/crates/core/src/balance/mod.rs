//! Class rebalancing: the SC-CGAN generator with conditional self-attention,
//! its convolutional discriminator, balance plans, and the ROS / SMOTE
//! baselines.
//!
//! Generator (8 layers): fusion dense(noise ‖ label → 100) → 3 × dense(100)
//! → CSAM with residual → 2 × dense(100) → linear head to D. Discriminator
//! (8 layers): the sample concatenated with its label is read as a 1-channel
//! signal → 2 × [conv(k=3) → maxpool(2)] → dense(60) → dropout → dense(1) → sigmoid.

mod csam;
mod loss;
mod model;
mod plan;
mod train;


pub use csam::{csam_forward, token_count, CsamVars};
pub use loss::{discriminator_loss, generator_loss, PROB_FLOOR};
pub use model::{generate, GanConfig, GanModel, CHECKPOINT_KIND};
pub use plan::{balance_with_gan, make_balance_plan, random_oversample, smote, BalancePlan, SmoteOutput};
pub use train::{train_scgan, GanEpochLog, GanTrainConfig, TrainedGan};
