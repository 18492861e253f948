//! Keypoint-to-parameter regressor, its losses and optimizer.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod network;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use gradcheck::{finite_difference_gradient, relative_error};
pub use loss::{
    ema_consistency_loss, loss_2d_joint, loss_expression, loss_feature, loss_pose, loss_total, normalized_difference,
    output_loss, Consistency, KeypointTarget, LossBreakdown, LossConfig, LossWeights, OutputLoss, Target,
};
pub use network::{encode_observation, input_len, Architecture, ForwardCache, ModelState, Output, GLOBAL_INPUTS};
