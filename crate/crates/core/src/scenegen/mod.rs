//! Procedural multi-view scene synthesis.
//!
//! Scenes are bounded rooms of textured rectangles and axis-aligned boxes,
//! ray-cast per pixel through either camera model to produce color, ray
//! depth, exact ray directions, and exact poses. Fisheye ground truth is
//! rendered natively through the distorted model rather than by warping a
//! perspective render. Sequences are grown frame by frame under a
//! covisibility threshold so every view overlaps the others enough to be
//! useful for multi-view training.

mod primitives;
mod render;
mod sequence;
mod store;

pub use primitives::{generate_scene, BoxPrim, Primitive, Rect, Scene, Texture};
pub use render::{render, RenderedView};
pub use sequence::{
    covisibility, look_at, sample_sequence, Frame, SceneGenError, SceneSample, SequenceSpec,
};
pub use store::{load_sample, save_sample, StoreError};
