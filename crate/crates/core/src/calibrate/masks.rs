//! Attention masks that hide calibration tokens from perspective frames.
//!
//! Masks are binary matrices over (query row, key column). Image tokens
//! always see each other, and calibration rows always see everything; the
//! only entries that vary are image rows looking at calibration columns,
//! which are zeroed exactly when the frame is perspective.

use crate::nncore::Tensor;

/// Per-frame camera-type bits; `true` marks a fisheye frame.
pub type CameraTypeMask = Vec<bool>;

/// Frame-wise mask over `n` image tokens plus `k` calibration tokens:
///
/// ```text
/// [ 1_{n×n}  b·1_{n×k} ]        b = 1 for fisheye, 0 for perspective
/// [ 1_{k×n}  1_{k×k}   ]
/// ```
pub fn build_frame_mask(fisheye: bool, n: usize, k: usize) -> Tensor {
    assert!(n >= 1 && k >= 1, "mask needs at least one image and one calibration token");
    let t = n + k;
    let mut mask = Tensor::full(vec![t, t], 1.0);
    if !fisheye {
        for i in 0..n {
            for j in n..t {
                mask.data_mut()[i * t + j] = 0.0;
            }
        }
    }
    mask
}

/// Global mask over `S·n` image tokens (all frames concatenated) plus `k`
/// calibration tokens: frame `s`'s image rows see the calibration columns
/// only when `fisheye[s]` is set.
pub fn build_global_mask(fisheye: &[bool], n: usize, k: usize) -> Tensor {
    assert!(!fisheye.is_empty(), "at least one frame");
    assert!(n >= 1 && k >= 1, "mask needs at least one image and one calibration token");
    let s = fisheye.len();
    let t = s * n + k;
    let mut mask = Tensor::full(vec![t, t], 1.0);
    for (frame, &bit) in fisheye.iter().enumerate() {
        if bit {
            continue;
        }
        for i in frame * n..(frame + 1) * n {
            for j in s * n..t {
                mask.data_mut()[i * t + j] = 0.0;
            }
        }
    }
    mask
}
