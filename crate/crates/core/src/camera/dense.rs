//! Dense per-pixel maps: multi-channel images and ray-direction grids.

use super::model::Camera;
use super::{GEOM_DIR_X, GEOM_DIR_Y, GEOM_DIR_Z};
use serde::{Deserialize, Serialize};

/// Row-major multi-channel image with a per-pixel validity mask.
///
/// Channel values for pixel `(x, y)` live at
/// `data[(y * width + x) * channels ..][..channels]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseMap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<f64>,
    pub valid: Vec<bool>,
}

impl DenseMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> DenseMap {
        DenseMap {
            width,
            height,
            channels,
            data: vec![0.0; width * height * channels],
            valid: vec![true; width * height],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn set_valid(&mut self, x: usize, y: usize, ok: bool) {
        self.valid[y * self.width + x] = ok;
    }

    /// Fraction of pixels marked valid.
    pub fn valid_fraction(&self) -> f64 {
        let n = self.valid.iter().filter(|v| **v).count();
        n as f64 / self.valid.len() as f64
    }
}

/// Unit ray directions through every pixel center of a camera.
#[derive(Debug, Clone, PartialEq)]
pub struct RayMap {
    pub width: usize,
    pub height: usize,
    /// `[x, y, z]` per pixel, row-major; zero where invalid.
    pub dirs: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl RayMap {
    /// Unprojects every pixel center `(x + 0.5, y + 0.5)`.
    pub fn from_camera(cam: &Camera) -> RayMap {
        let (w, h) = (cam.width(), cam.height());
        let mut dirs = vec![[0.0; 3]; w * h];
        let mut valid = vec![false; w * h];
        for y in 0..h {
            for x in 0..w {
                if let Some(d) = cam.unproject(x as f64 + 0.5, y as f64 + 0.5) {
                    dirs[y * w + x] = d;
                    valid[y * w + x] = true;
                }
            }
        }
        RayMap { width: w, height: h, dirs, valid }
    }

    pub fn dir(&self, x: usize, y: usize) -> [f64; 3] {
        self.dirs[y * self.width + x]
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Copies the direction channels into the first three channels of a
    /// [`DenseMap`], propagating validity.
    pub fn write_into(&self, map: &mut DenseMap) {
        assert_eq!((map.width, map.height), (self.width, self.height), "extent mismatch");
        assert!(map.channels > GEOM_DIR_Z, "map lacks direction channels");
        for y in 0..self.height {
            for x in 0..self.width {
                let d = self.dir(x, y);
                let px = map.pixel_mut(x, y);
                px[GEOM_DIR_X] = d[0];
                px[GEOM_DIR_Y] = d[1];
                px[GEOM_DIR_Z] = d[2];
                if !self.is_valid(x, y) {
                    map.set_valid(x, y, false);
                }
            }
        }
    }
}
