//! Backbone hyper-parameters.

use serde::{Deserialize, Serialize};

/// Shape of the reconstruction transformer.
///
/// The default is the toy scale used throughout: enough structure to carry
/// every mechanism (patch embedding, class token, encoder, alternating
/// attention, heads) at desk-scale cost. [`BackboneConfig::compact`] is a
/// further-shrunk variant for end-to-end tests that train inside the suite.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    /// Patch edge length in pixels.
    pub patch_size: usize,
    /// Token width d.
    pub embed_dim: usize,
    /// Encoder depth L1.
    pub encoder_layers: usize,
    /// Number of alternating-attention blocks L2 (each runs a frame-wise and
    /// a global stage).
    pub aa_blocks: usize,
    /// Attention heads.
    pub heads: usize,
    pub width: usize,
    pub height: usize,
}

impl Default for BackboneConfig {
    fn default() -> BackboneConfig {
        BackboneConfig {
            patch_size: 14,
            embed_dim: 64,
            encoder_layers: 6,
            aa_blocks: 4,
            heads: 4,
            width: 112,
            height: 112,
        }
    }
}

impl BackboneConfig {
    /// Smallest config that still exercises every code path; used where a
    /// test has to train something from scratch.
    pub fn compact() -> BackboneConfig {
        BackboneConfig {
            patch_size: 14,
            embed_dim: 32,
            encoder_layers: 4,
            aa_blocks: 2,
            heads: 4,
            width: 56,
            height: 56,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.patch_size == 0 || self.embed_dim == 0 || self.heads == 0 {
            return Err("zero-sized dimension".into());
        }
        if self.width % self.patch_size != 0 || self.height % self.patch_size != 0 {
            return Err(format!(
                "image {}x{} not divisible by patch size {}",
                self.width, self.height, self.patch_size
            ));
        }
        if self.embed_dim % self.heads != 0 {
            return Err(format!("embed dim {} not divisible by {} heads", self.embed_dim, self.heads));
        }
        if self.embed_dim % 4 != 0 {
            return Err("embed dim must be a multiple of 4 for 2-D position encodings".into());
        }
        if self.encoder_layers < 2 {
            return Err("need at least two encoder layers to split for classification".into());
        }
        if self.aa_blocks == 0 {
            return Err("need at least one alternating-attention block".into());
        }
        Ok(())
    }

    /// Patch-grid extents (columns, rows).
    pub fn grid(&self) -> (usize, usize) {
        (self.width / self.patch_size, self.height / self.patch_size)
    }

    /// Image tokens per frame, N = HW / P^2.
    pub fn n_patches(&self) -> usize {
        let (gw, gh) = self.grid();
        gw * gh
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.heads
    }

    /// MLP hidden width inside each transformer block.
    pub fn hidden_dim(&self) -> usize {
        4 * self.embed_dim
    }

    /// Values emitted per patch by the dense head (4 channels per pixel).
    pub fn dense_out(&self) -> usize {
        self.patch_size * self.patch_size * 4
    }

    /// Default encoder depth at which the class token is read for camera
    /// classification: halfway, mirroring the reference ratio.
    pub fn default_split_layer(&self) -> usize {
        self.encoder_layers / 2
    }
}
