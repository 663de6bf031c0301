//! Camera models and image-space geometry.
//!
//! Two projection models are supported: an ideal pinhole and the
//! Kannala-Brandt fisheye model, whose radial profile
//! `r(theta) = theta + k1 theta^3 + k2 theta^5 + k3 theta^7 + k4 theta^9`
//! maps the incident angle to image radius. Both share one pixel
//! convention: continuous coordinates where pixel `(i, j)` covers
//! `[i, i+1) x [j, j+1)` with its center at `(i + 0.5, j + 0.5)`.
//!
//! [`sample_distortion`] draws random fisheye cameras around a perspective
//! base camera, and [`warp_to_fisheye`] / [`unwarp_dense`] move images and
//! dense predictions between the two domains by bilinear resampling along
//! shared optical rays ([`ResamplePlan`] precomputes the taps so the same
//! resampling can also run differentiably on a tape).

mod dense;
mod model;
mod warp;

pub use dense::{DenseMap, RayMap};
pub use model::{
    fov_of, sample_distortion, Camera, CameraError, KannalaBrandtCamera, PinholeCamera,
    KB_THETA_GRID_STEP, KB_THETA_LIMIT,
};
pub use warp::{
    unwarp_channels, unwarp_dense, warp_ops_performed, warp_to_fisheye, ResamplePlan,
};

/// Channel layout of dense geometry maps: unit ray direction then ray depth.
pub const GEOM_CHANNELS: usize = 4;
pub const GEOM_DIR_X: usize = 0;
pub const GEOM_DIR_Y: usize = 1;
pub const GEOM_DIR_Z: usize = 2;
pub const GEOM_RAY_DEPTH: usize = 3;
