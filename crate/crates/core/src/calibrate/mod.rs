//! Calibration-token adaptation of the frozen backbone.
//!
//! A small set of trainable tokens is appended to the image tokens at every
//! layer past a split point, jointly attended, and dropped again before the
//! next layer. Camera-type masks keep those tokens invisible to perspective
//! frames, so the adapted model stays bit-identical to the original on
//! perspective input (in the default pre-softmax masking mode) while fisheye
//! frames get the extra capacity. A logistic-regression classifier on the
//! mid-encoder class token predicts each frame's camera type at inference;
//! training uses ground-truth labels instead.

mod attention;
mod classifier;
mod forward;
mod masks;
mod tokens;

pub use attention::masked_attention;
pub use classifier::{classify_camera, CameraClassifier};
pub use forward::{forward_calibrated, forward_with_labels};
pub use masks::{build_frame_mask, build_global_mask, CameraTypeMask};
pub use tokens::{CalibrationTokenSet, CalibrationTokenVars, TOKEN_INIT_STD};
