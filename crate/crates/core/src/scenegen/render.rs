//! Per-pixel ray casting of a scene through either camera model.

use nalgebra::Vector3;

use crate::backbone::CameraPose;
use crate::camera::{Camera, DenseMap, RayMap};

use super::primitives::Scene;

/// Everything a rendered frame provides: color, ray depth (distance along the
/// unit ray, not z-depth), and the per-pixel ray directions in camera
/// coordinates. Pixels whose rays leave the camera's valid domain or miss all
/// geometry are invalid in `rgb` and `ray_depth`.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub rgb: DenseMap,
    pub ray_depth: DenseMap,
    pub rays: RayMap,
}

/// Ray-casts the scene: one ray through every pixel center, transformed by the
/// world-to-camera pose, colored by the nearest primitive's texture.
pub fn render(scene: &Scene, camera: &Camera, pose: &CameraPose) -> RenderedView {
    let (w, h) = (camera.width(), camera.height());
    let mut rgb = DenseMap::zeros(w, h, 3);
    let mut ray_depth = DenseMap::zeros(w, h, 1);
    // Pixels start invalid; only actual hits mark them valid.
    rgb.valid.fill(false);
    ray_depth.valid.fill(false);
    let rays = RayMap::from_camera(camera);

    let center = pose.center();
    let rot_t = pose.rotation.transpose();

    for y in 0..h {
        for x in 0..w {
            if !rays.is_valid(x, y) {
                continue;
            }
            let d = rays.dir(x, y);
            let dir_world = rot_t * Vector3::new(d[0], d[1], d[2]);
            let Some((idx, s)) = scene.cast(center, dir_world) else {
                continue;
            };
            let point = center + dir_world * s;
            let color = scene.primitives[idx].texture().sample(point);
            rgb.pixel_mut(x, y).copy_from_slice(&color);
            rgb.set_valid(x, y, true);
            ray_depth.pixel_mut(x, y)[0] = s;
            ray_depth.set_valid(x, y, true);
        }
    }

    RenderedView { rgb, ray_depth, rays }
}

impl RenderedView {
    /// Fraction of pixels that hit geometry.
    pub fn hit_fraction(&self) -> f64 {
        self.ray_depth.valid_fraction()
    }

    /// World-space hit point for a valid pixel.
    pub fn world_point(&self, x: usize, y: usize, pose: &CameraPose) -> Option<Vector3<f64>> {
        if !self.ray_depth.is_valid(x, y) {
            return None;
        }
        let d = self.rays.dir(x, y);
        let s = self.ray_depth.pixel(x, y)[0];
        let dir_world = pose.rotation.transpose() * Vector3::new(d[0], d[1], d[2]);
        Some(pose.center() + dir_world * s)
    }
}
