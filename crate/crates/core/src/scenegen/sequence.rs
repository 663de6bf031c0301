//! Multi-view sequence sampling driven by pairwise covisibility.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

use crate::backbone::CameraPose;
use crate::camera::{sample_distortion, Camera, DenseMap, PinholeCamera, RayMap};

use super::primitives::Scene;
use super::render::{render, RenderedView};

/// One rendered frame with its ground truth.
#[derive(Debug, Clone)]
pub struct Frame {
    pub rgb: DenseMap,
    pub ray_depth: DenseMap,
    pub rays: RayMap,
    pub pose: CameraPose,
    pub camera: Camera,
}

/// An ordered multi-view sequence; `camera_types[i]` is true when frame `i`
/// uses a fisheye camera.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub frames: Vec<Frame>,
    pub camera_types: Vec<bool>,
}

/// Controls for [`sample_sequence`].
#[derive(Debug, Clone)]
pub struct SequenceSpec {
    /// Inclusive bounds on the number of frames; the length is drawn
    /// uniformly from this range.
    pub length_range: (usize, usize),
    /// Perspective intrinsics shared by all frames; fisheye frames distort
    /// a copy of these intrinsics.
    pub base_camera: PinholeCamera,
    /// Probability that a frame is rendered through a fisheye camera.
    pub fisheye_fraction: f64,
}

impl SequenceSpec {
    pub fn new(base_camera: PinholeCamera) -> SequenceSpec {
        SequenceSpec { length_range: (2, 24), base_camera, fisheye_fraction: 0.0 }
    }

    pub fn with_length(mut self, lo: usize, hi: usize) -> SequenceSpec {
        self.length_range = (lo, hi);
        self
    }

    pub fn with_fisheye_fraction(mut self, f: f64) -> SequenceSpec {
        self.fisheye_fraction = f;
        self
    }
}

#[derive(Debug)]
pub enum SceneGenError {
    /// No pose satisfying the hit-fraction and covisibility thresholds was
    /// found within the retry budget.
    SequenceRejected { frame: usize, tries: usize },
    /// Fisheye intrinsics sampling failed.
    Camera(crate::camera::CameraError),
}

impl std::fmt::Display for SceneGenError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SceneGenError::SequenceRejected { frame, tries } => {
                write!(f, "no acceptable pose for frame {frame} after {tries} tries")
            }
            SceneGenError::Camera(e) => write!(f, "camera sampling failed: {e}"),
        }
    }
}

impl std::error::Error for SceneGenError {}

/// Minimum fraction of pixels that must hit geometry for a pose to count as
/// "looking at the scene".
const MIN_HIT_FRACTION: f64 = 0.5;
/// Minimum covisibility against some already-accepted frame.
const MIN_COVISIBILITY: f64 = 0.25;
/// Pose proposals per frame before giving up.
const MAX_POSE_TRIES: usize = 200;
/// Relative ray-depth agreement for a reprojected point to count as visible.
const COVIS_DEPTH_TOL: f64 = 0.02;

/// World-to-camera pose looking from `eye` toward `target` (y is down, so the
/// world up direction is -y).
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>) -> CameraPose {
    let forward = (target - eye).normalize();
    let mut up = Vector3::new(0.0, -1.0, 0.0);
    if forward.dot(&up).abs() > 0.999 {
        up = Vector3::new(0.0, 0.0, 1.0);
    }
    let right = forward.cross(&up).normalize();
    let down = forward.cross(&right);
    let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
    let translation = -rotation * eye;
    CameraPose::new(rotation, translation)
}

impl Scene {
    /// A random pose inside the room, aimed at the far corner region so the
    /// view is dominated by geometry. Avoids placing the eye inside boxes and
    /// rejection-samples against a coarse probe render until at least 55% of
    /// a 90° view hits geometry, so callers always start from a pose that
    /// actually looks at the scene.
    pub fn sample_pose(&self, rng: &mut impl Rng) -> CameraPose {
        let mut best: Option<(f64, CameraPose)> = None;
        for _ in 0..100 {
            let eye = self.sample_eye(rng);
            let target = Vector3::new(
                rng.gen_range(-1.5..1.5),
                rng.gen_range(-0.5..1.2),
                rng.gen_range(3.0..5.2),
            );
            let pose = look_at(eye, target);
            let frac = self.probe_hit_fraction(&pose);
            if frac >= 0.55 {
                return pose;
            }
            if best.as_ref().map_or(true, |(bf, _)| frac > *bf) {
                best = Some((frac, pose));
            }
        }
        best.expect("at least one candidate pose").1
    }

    /// Hit fraction of a coarse 16×16, 90°-field probe render.
    fn probe_hit_fraction(&self, pose: &CameraPose) -> f64 {
        let rot_t = pose.rotation.transpose();
        let center = pose.center();
        let mut hits = 0usize;
        for gy in 0..16 {
            for gx in 0..16 {
                let mx = (gx as f64 + 0.5 - 8.0) / 8.0;
                let my = (gy as f64 + 0.5 - 8.0) / 8.0;
                let dir = rot_t * Vector3::new(mx, my, 1.0).normalize();
                if self.cast(center, dir).is_some() {
                    hits += 1;
                }
            }
        }
        hits as f64 / 256.0
    }

    fn sample_eye(&self, rng: &mut impl Rng) -> Vector3<f64> {
        for _ in 0..100 {
            let eye = Vector3::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.5..1.0),
            );
            if !self.inside_solid(eye, 0.1) {
                return eye;
            }
        }
        // Boxes never cover the region behind the camera band.
        Vector3::new(0.0, 0.0, -1.8)
    }

    /// A pose near `anchor`: eye jittered, aim jittered around the anchor's
    /// forward point.
    fn perturbed_pose(&self, anchor: &CameraPose, rng: &mut impl Rng) -> CameraPose {
        let center = anchor.center();
        let forward = anchor.rotation.transpose() * Vector3::new(0.0, 0.0, 1.0);
        for _ in 0..100 {
            let eye = center
                + Vector3::new(
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.4..0.4),
                    rng.gen_range(-0.6..0.6),
                );
            let target = center
                + forward * rng.gen_range(2.0..3.5)
                + Vector3::new(
                    rng.gen_range(-0.8..0.8),
                    rng.gen_range(-0.6..0.6),
                    rng.gen_range(-0.8..0.8),
                );
            if !self.inside_solid(eye, 0.1) && (target - eye).norm() > 0.5 {
                return look_at(eye, target);
            }
        }
        anchor.clone()
    }
}

/// Fraction of `src`'s valid pixels whose 3-D points land inside `dst`'s
/// image with ray depth agreeing within 2%.
pub fn covisibility(src: &Frame, dst: &Frame) -> f64 {
    let src_center = src.pose.center();
    let src_rot_t = src.pose.rotation.transpose();
    let mut valid = 0usize;
    let mut visible = 0usize;
    for y in 0..src.ray_depth.height {
        for x in 0..src.ray_depth.width {
            if !src.ray_depth.is_valid(x, y) {
                continue;
            }
            valid += 1;
            let d = src.rays.dir(x, y);
            let s = src.ray_depth.pixel(x, y)[0];
            let world = src_center + src_rot_t * Vector3::new(d[0], d[1], d[2]) * s;
            let p_cam = dst.pose.transform([world.x, world.y, world.z]);
            let Some((u, v)) = dst.camera.project(p_cam) else {
                continue;
            };
            let px = (u.floor() as isize).clamp(0, dst.ray_depth.width as isize - 1) as usize;
            let py = (v.floor() as isize).clamp(0, dst.ray_depth.height as isize - 1) as usize;
            if !dst.ray_depth.is_valid(px, py) {
                continue;
            }
            let expected =
                (p_cam[0] * p_cam[0] + p_cam[1] * p_cam[1] + p_cam[2] * p_cam[2]).sqrt();
            let measured = dst.ray_depth.pixel(px, py)[0];
            if (measured - expected).abs() <= COVIS_DEPTH_TOL * expected {
                visible += 1;
            }
        }
    }
    if valid == 0 {
        0.0
    } else {
        visible as f64 / valid as f64
    }
}

fn frame_camera(
    spec: &SequenceSpec,
    rng: &mut impl Rng,
) -> Result<(Camera, bool), SceneGenError> {
    if rng.gen_bool(spec.fisheye_fraction) {
        let kb = sample_distortion(rng, &spec.base_camera).map_err(SceneGenError::Camera)?;
        Ok((Camera::KannalaBrandt(kb), true))
    } else {
        Ok((Camera::Pinhole(spec.base_camera), false))
    }
}

fn frame_from_view(view: RenderedView, pose: CameraPose, camera: Camera) -> Frame {
    Frame { rgb: view.rgb, ray_depth: view.ray_depth, rays: view.rays, pose, camera }
}

/// Draws a sequence of frames: the first pose is random, every later pose is
/// perturbed from a random accepted frame and kept only if ≥50% of its pixels
/// hit geometry and it shares ≥25% covisibility with some accepted frame.
pub fn sample_sequence(
    scene: &Scene,
    rng: &mut impl Rng,
    spec: &SequenceSpec,
) -> Result<SceneSample, SceneGenError> {
    let (lo, hi) = spec.length_range;
    assert!(1 <= lo && lo <= hi, "invalid length range [{lo}, {hi}]");
    let length = rng.gen_range(lo..=hi);

    let mut frames: Vec<Frame> = Vec::with_capacity(length);
    let mut camera_types = Vec::with_capacity(length);

    while frames.len() < length {
        let index = frames.len();
        let (camera, is_fisheye) = frame_camera(spec, rng)?;
        let mut accepted = None;
        for _ in 0..MAX_POSE_TRIES {
            let pose = if frames.is_empty() {
                scene.sample_pose(rng)
            } else {
                let anchor = &frames[rng.gen_range(0..frames.len())].pose;
                scene.perturbed_pose(anchor, rng)
            };
            let view = render(scene, &camera, &pose);
            if view.hit_fraction() < MIN_HIT_FRACTION {
                continue;
            }
            let candidate = frame_from_view(view, pose, camera.clone());
            let covisible = frames.is_empty()
                || frames.iter().any(|f| covisibility(&candidate, f) >= MIN_COVISIBILITY);
            if covisible {
                accepted = Some(candidate);
                break;
            }
        }
        match accepted {
            Some(frame) => {
                frames.push(frame);
                camera_types.push(is_fisheye);
            }
            None => {
                return Err(SceneGenError::SequenceRejected { frame: index, tries: MAX_POSE_TRIES })
            }
        }
    }

    Ok(SceneSample { frames, camera_types })
}
