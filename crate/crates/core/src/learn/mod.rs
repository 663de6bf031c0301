//! Training and evaluation: AdamW, learning-rate schedules, the multi-term
//! reconstruction loss, the three token-training schemes, backbone
//! pretraining, the camera-type classifier fit, and sequence evaluation.

use std::fmt;

use crate::camera::CameraError;
use crate::metrics::MetricsError;

mod config;
mod data;
mod eval;
mod loss;
mod optim;
mod pretrain;
mod schemes;

pub use config::{schedule,
    lr_at, Decay, LossWeights, MixPlan, Scheme, TrainConfig, FULL_SCALE_ITERATIONS,
    FULL_SCALE_LR_END, FULL_SCALE_LR_START, HYBRID_FRAME_FISHEYE_PROB,
};
pub use data::{
    mix_bits, native_sample, warped_sample, warped_sample_to, AdaptFrame, AdaptSample,
    SequenceMix,
};
pub use loss::{reconstruction_loss, FramePrediction, FrameTarget, LossTerms};
pub use eval::{
    evaluate_corpus, evaluate_sequence, geometry_map, report_from_predictions, Adaptation,
    POSE_TAU_DEG,
};
pub use optim::{adamw_step, AdamHyper, AdamState};
pub use pretrain::{pretrain_backbone, PretrainConfig, PretrainReport, PretrainedBackbone};
pub use schemes::{loss_sl, loss_slplus, loss_ssl, loss_with_targets, ssl_targets};

/// Everything that can go wrong while configuring or running training.
#[derive(Debug)]
pub enum LearnError {
    /// A frame has no pixel valid on both the prediction and target side.
    NoValidPixels { frame: usize },
    LengthMismatch { left: usize, right: usize },
    InvalidConfig(String),
    ScheduleOutOfRange { iter: usize, iterations: usize },
    /// A gradient, parameter, or loss stopped being finite (divergence).
    NonFinite { context: String, iteration: u64 },
    /// A training run ended above its promised quality bar.
    ThresholdNotReached { what: &'static str, achieved: f64, threshold: f64 },
    Camera(CameraError),
    Metrics(MetricsError),
}

impl fmt::Display for LearnError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LearnError::NoValidPixels { frame } => {
                write!(f, "frame {frame} has no pixels valid in both prediction and target")
            }
            LearnError::LengthMismatch { left, right } => {
                write!(f, "list lengths differ: {left} vs {right}")
            }
            LearnError::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            LearnError::ScheduleOutOfRange { iter, iterations } => {
                write!(f, "iteration {iter} outside a schedule of {iterations}")
            }
            LearnError::NonFinite { context, iteration } => {
                write!(f, "non-finite {context} at iteration {iteration}")
            }
            LearnError::ThresholdNotReached { what, achieved, threshold } => {
                write!(f, "{what} reached {achieved} but needed {threshold}")
            }
            LearnError::Camera(e) => write!(f, "camera: {e}"),
            LearnError::Metrics(e) => write!(f, "metrics: {e}"),
        }
    }
}

impl std::error::Error for LearnError {}

impl From<CameraError> for LearnError {
    fn from(e: CameraError) -> LearnError {
        LearnError::Camera(e)
    }
}

impl From<MetricsError> for LearnError {
    fn from(e: MetricsError) -> LearnError {
        LearnError::Metrics(e)
    }
}
