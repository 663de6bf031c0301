//! Calibration-token adaptation of a frozen multi-view reconstruction
//! transformer to fisheye lenses.
//!
//! A small vision transformer is pretrained on perspective (pinhole) views of
//! synthetic scenes and then frozen. Per-layer learnable *calibration tokens*
//! are appended to the token set of the later encoder layers and of every
//! alternating-attention layer; they are jointly attended and dropped again
//! after each layer, so only the tokens themselves are trained while the
//! backbone stays bit-identical. Masked attention hides the tokens from
//! perspective frames at inference, which keeps the original perspective
//! behaviour exactly while fisheye frames get the adapted one.
//!
//! Module map:
//! * [`nncore`]    — dense f64 tensors and reverse-mode autodiff on a flat tape
//! * [`camera`]    — pinhole and Kannala-Brandt fisheye models, warps, resampling
//! * [`backbone`]  — the toy multi-view transformer (patchify, encoder,
//!   alternating attention, pose/geometry decoder, checkpoints)
//! * [`scenegen`]  — synthetic textured scenes, ray-cast rendering, covisibility
//! * [`calibrate`] — calibration tokens, camera-type classifier, attention masks
//! * [`learn`]     — losses (self-supervised / supervised / fisheye-supervised),
//!   AdamW, schedules, backbone pretraining and token training
//! * [`metrics`]   — pose, trajectory, depth, point-cloud and field-of-view
//!   metrics plus report serialization

pub mod backbone;
pub mod calibrate;
pub mod camera;
pub mod learn;
pub mod metrics;
pub mod nncore;
pub mod scenegen;
