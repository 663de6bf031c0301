//! Toy-scale frozen reconstruction transformer.
//!
//! A multi-view feed-forward model: images are patchified (plus a class
//! token), encoded per frame, exchanged across frames by alternating
//! frame-wise/global attention, and decoded into a camera pose and a dense
//! ray-direction + ray-depth map per frame. Every attention stage accepts
//! optional appended token rows with a mask, which is the hook the
//! adaptation layer uses; the backbone itself stays agnostic about why.
//!
//! Submodules: [`config`](BackboneConfig) for shapes, `weights` for
//! parameter storage and tape mirroring, `model` for the forward pass,
//! `pose` for rigid transforms, `checkpoint` for persistence.

mod checkpoint;
mod config;
mod model;
mod pose;
mod weights;

pub use checkpoint::{Checkpoint, CheckpointError};
pub use config::BackboneConfig;
pub use model::{
    encode_prefix, forward, patchify, position_encoding, run_suffix, EncodedPrefix, FrameOutput,
    GlobalInjection, Injection, SequenceOutput, StageInjection,
};
pub use pose::{compose, relative_pose, CameraPose};
pub use weights::{BackboneVars, BackboneWeights, BlockVars, BlockWeights, HeadVars, HeadWeights};
