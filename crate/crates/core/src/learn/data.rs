//! Adaptation sequences: the warped-perspective and native data paths.
//!
//! The warped path starts from an all-perspective render, re-images chosen
//! frames through a sampled fisheye camera for the student's input, and keeps
//! ground truth (and the self-supervised teacher) in the source perspective
//! domain — each warped frame carries the resampling plan that brings dense
//! student predictions back there. The native path uses mixed-camera renders
//! as they are.

use rand::Rng;

use crate::camera::{sample_distortion, Camera, DenseMap, ResamplePlan};
use crate::nncore::Tensor;
use crate::scenegen::{Frame, SceneSample};

use super::config::{MixPlan, HYBRID_FRAME_FISHEYE_PROB};
use super::loss::FrameTarget;
use super::LearnError;

/// Per-sequence camera mix drawn from a [`MixPlan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SequenceMix {
    AllPerspective,
    AllFisheye,
    Hybrid,
}

impl MixPlan {
    pub fn draw(&self, rng: &mut impl Rng) -> SequenceMix {
        let u: f64 = rng.gen();
        if u < self.all_perspective {
            SequenceMix::AllPerspective
        } else if u < self.all_perspective + self.all_fisheye {
            SequenceMix::AllFisheye
        } else {
            SequenceMix::Hybrid
        }
    }
}

/// Frame camera-type bits for a sequence of the given mix; hybrid sequences
/// flip a fair coin per frame.
pub fn mix_bits(mix: SequenceMix, len: usize, rng: &mut impl Rng) -> Vec<bool> {
    match mix {
        SequenceMix::AllPerspective => vec![false; len],
        SequenceMix::AllFisheye => vec![true; len],
        SequenceMix::Hybrid => {
            (0..len).map(|_| rng.gen_bool(HYBRID_FRAME_FISHEYE_PROB)).collect()
        }
    }
}

/// One frame as the training schemes consume it.
pub struct AdaptFrame {
    /// What the student sees.
    pub input_rgb: DenseMap,
    /// The perspective render behind it (identical to `input_rgb` for native
    /// frames); the self-supervised teacher runs on this.
    pub source_rgb: DenseMap,
    /// Camera-type bit steering the attention masks during training.
    pub fisheye: bool,
    /// For warped frames, the resampling that carries dense predictions from
    /// the input domain back to the comparison domain. Native frames have
    /// none — they are compared where they were predicted.
    pub unwarp: Option<ResamplePlan>,
    /// Camera of the input domain.
    pub camera: Camera,
}

/// A training sequence plus its ground truth, each frame's target expressed
/// in that frame's comparison domain.
pub struct AdaptSample {
    pub frames: Vec<AdaptFrame>,
    pub targets: Vec<FrameTarget>,
}

impl AdaptSample {
    pub fn images(&self) -> Vec<DenseMap> {
        self.frames.iter().map(|f| f.input_rgb.clone()).collect()
    }

    pub fn fisheye_bits(&self) -> Vec<bool> {
        self.frames.iter().map(|f| f.fisheye).collect()
    }
}

impl FrameTarget {
    /// Ground truth of a rendered frame: per-pixel rays and ray depth (valid
    /// where geometry was hit) and the world-to-camera pose.
    pub fn from_frame(frame: &Frame) -> FrameTarget {
        let (w, h) = (frame.rgb.width, frame.rgb.height);
        let m = w * h;
        let mut dirs = Tensor::zeros(vec![m, 3]);
        let mut depth = Tensor::full(vec![m, 1], 1.0);
        let mut valid = vec![false; m];
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let d = frame.rays.dir(x, y);
                dirs.set(i, 0, d[0]);
                dirs.set(i, 1, d[1]);
                dirs.set(i, 2, d[2]);
                if frame.ray_depth.is_valid(x, y) {
                    depth.set(i, 0, frame.ray_depth.pixel(x, y)[0]);
                    valid[i] = true;
                }
            }
        }
        let t = frame.pose.translation;
        FrameTarget { quat: frame.pose.quaternion(), trans: [t[0], t[1], t[2]], dirs, depth, valid }
    }
}

/// Re-images the chosen frames of an all-perspective sequence through the
/// given cameras. `warps[i] = None` leaves frame `i` untouched; the fisheye
/// bits are taken as given so tests can decouple imaging from masking.
pub fn warped_sample_to(
    src: &SceneSample,
    warps: &[Option<Camera>],
    fisheye_bits: &[bool],
) -> AdaptSample {
    assert_eq!(warps.len(), src.frames.len(), "one warp slot per frame");
    assert_eq!(fisheye_bits.len(), src.frames.len(), "one camera-type bit per frame");
    let mut frames = Vec::with_capacity(src.frames.len());
    let mut targets = Vec::with_capacity(src.frames.len());
    for ((frame, warp), &bit) in src.frames.iter().zip(warps).zip(fisheye_bits) {
        targets.push(FrameTarget::from_frame(frame));
        frames.push(match warp {
            None => AdaptFrame {
                input_rgb: frame.rgb.clone(),
                source_rgb: frame.rgb.clone(),
                fisheye: bit,
                unwarp: None,
                camera: frame.camera.clone(),
            },
            Some(cam) => {
                assert_eq!(
                    (cam.width(), cam.height()),
                    (frame.camera.width(), frame.camera.height()),
                    "warps must preserve the image extent"
                );
                let input_rgb = ResamplePlan::between(cam, &frame.camera).apply(&frame.rgb);
                AdaptFrame {
                    input_rgb,
                    source_rgb: frame.rgb.clone(),
                    fisheye: bit,
                    unwarp: Some(ResamplePlan::between(&frame.camera, cam)),
                    camera: cam.clone(),
                }
            }
        });
    }
    AdaptSample { frames, targets }
}

/// Samples a fisheye distortion for every `true` bit and warps those frames.
/// The source sequence must be all-perspective.
pub fn warped_sample(
    src: &SceneSample,
    bits: &[bool],
    rng: &mut impl Rng,
) -> Result<AdaptSample, LearnError> {
    assert!(
        src.camera_types.iter().all(|b| !b),
        "warped samples start from an all-perspective sequence"
    );
    let mut warps = Vec::with_capacity(src.frames.len());
    for (frame, &bit) in src.frames.iter().zip(bits) {
        if !bit {
            warps.push(None);
            continue;
        }
        let base = match &frame.camera {
            Camera::Pinhole(p) => p,
            Camera::KannalaBrandt(_) => unreachable!("camera_types said perspective"),
        };
        warps.push(Some(Camera::KannalaBrandt(sample_distortion(rng, base)?)));
    }
    Ok(warped_sample_to(src, &warps, bits))
}

/// Wraps a natively rendered (possibly mixed-camera) sequence: inputs are the
/// renders themselves and every frame is compared in its own domain.
pub fn native_sample(src: &SceneSample) -> AdaptSample {
    let frames = src
        .frames
        .iter()
        .zip(&src.camera_types)
        .map(|(frame, &fisheye)| AdaptFrame {
            input_rgb: frame.rgb.clone(),
            source_rgb: frame.rgb.clone(),
            fisheye,
            unwarp: None,
            camera: frame.camera.clone(),
        })
        .collect();
    let targets = src.frames.iter().map(FrameTarget::from_frame).collect();
    AdaptSample { frames, targets }
}
