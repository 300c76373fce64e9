//! Semi-supervised training: model, losses, splits, metrics and the loop.

pub mod config;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod split;
pub mod train;

pub use config::{DataPaths, TrainConfig, TrainStrategy};
pub use losses::{
    c2l_loss, cross_entropy_loss, generate_pseudo_labels, lkg_loss, mean_teacher_loss, total_loss, LossReport,
    LossWeights, PrototypeScores, PseudoLabels, TextScoreProvider,
};
pub use metrics::{evaluate, predict, EvalReport};
pub use model::{ema_update, forward, point_features, sgd_step, softmax, Gradients, ModelParams};
pub use split::{split_frames, SplitPlan, SplitStrategy};
pub use train::{run_semi_supervised, TrainData, TrainOutcome};
