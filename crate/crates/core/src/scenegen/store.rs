//! Directory persistence for scene samples.
//!
//! Layout (one directory per sample):
//!
//! ```text
//! manifest.json        frame names in order + per-frame fisheye bits
//! frame_000.rgb.png    8-bit lossless color
//! frame_000.depth.pfm  ray depth, grayscale PFM; 0.0 marks invalid pixels
//! frame_000.rays.pfm   ray directions, 3-channel PFM; zero vector = invalid
//! frame_000.meta.json  pose and camera intrinsics
//! ...
//! ```
//!
//! PFM stores 32-bit floats, so depth and rays round-trip to single
//! precision; poses and cameras round-trip exactly through JSON.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backbone::CameraPose;
use crate::camera::{Camera, DenseMap, RayMap};

use super::sequence::{Frame, SceneSample};

#[derive(Debug)]
pub enum StoreError {
    Io(std::io::Error),
    Json(serde_json::Error),
    Image(String),
    Format(String),
}

impl std::fmt::Display for StoreError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StoreError::Io(e) => write!(f, "io error: {e}"),
            StoreError::Json(e) => write!(f, "json error: {e}"),
            StoreError::Image(e) => write!(f, "image error: {e}"),
            StoreError::Format(e) => write!(f, "format error: {e}"),
        }
    }
}

impl std::error::Error for StoreError {}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> StoreError {
        StoreError::Io(e)
    }
}

impl From<serde_json::Error> for StoreError {
    fn from(e: serde_json::Error) -> StoreError {
        StoreError::Json(e)
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    frames: Vec<String>,
    camera_types: Vec<bool>,
}

#[derive(Serialize, Deserialize)]
struct FrameMeta {
    pose: CameraPose,
    camera: Camera,
}

/// Writes one sample to `dir`, creating it if needed.
pub fn save_sample(sample: &SceneSample, dir: &Path) -> Result<(), StoreError> {
    fs::create_dir_all(dir)?;
    let mut names = Vec::with_capacity(sample.frames.len());
    for (i, frame) in sample.frames.iter().enumerate() {
        let name = format!("frame_{i:03}");
        save_rgb_png(&frame.rgb, &dir.join(format!("{name}.rgb.png")))?;
        save_depth_pfm(&frame.ray_depth, &dir.join(format!("{name}.depth.pfm")))?;
        save_rays_pfm(&frame.rays, &dir.join(format!("{name}.rays.pfm")))?;
        let meta = FrameMeta { pose: frame.pose.clone(), camera: frame.camera.clone() };
        fs::write(dir.join(format!("{name}.meta.json")), serde_json::to_vec_pretty(&meta)?)?;
        names.push(name);
    }
    let manifest = Manifest { frames: names, camera_types: sample.camera_types.clone() };
    fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

/// Reads a sample back. Color is quantized to 8 bits and float maps to single
/// precision; validity is reconstructed from the depth map (zero = miss).
pub fn load_sample(dir: &Path) -> Result<SceneSample, StoreError> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
    if manifest.frames.len() != manifest.camera_types.len() {
        return Err(StoreError::Format("manifest frame/type count mismatch".into()));
    }
    let mut frames = Vec::with_capacity(manifest.frames.len());
    for name in &manifest.frames {
        let meta: FrameMeta =
            serde_json::from_slice(&fs::read(dir.join(format!("{name}.meta.json")))?)?;
        let ray_depth = load_depth_pfm(&dir.join(format!("{name}.depth.pfm")))?;
        let rays = load_rays_pfm(&dir.join(format!("{name}.rays.pfm")))?;
        let mut rgb = load_rgb_png(&dir.join(format!("{name}.rgb.png")))?;
        if (rgb.width, rgb.height) != (ray_depth.width, ray_depth.height)
            || (rays.width, rays.height) != (ray_depth.width, ray_depth.height)
        {
            return Err(StoreError::Format(format!("{name}: map extents disagree")));
        }
        rgb.valid = ray_depth.valid.clone();
        frames.push(Frame { rgb, ray_depth, rays, pose: meta.pose, camera: meta.camera });
    }
    Ok(SceneSample { frames, camera_types: manifest.camera_types })
}

fn save_rgb_png(rgb: &DenseMap, path: &Path) -> Result<(), StoreError> {
    assert_eq!(rgb.channels, 3, "expected a color map");
    let mut img = image::RgbImage::new(rgb.width as u32, rgb.height as u32);
    for y in 0..rgb.height {
        for x in 0..rgb.width {
            let px = rgb.pixel(x, y);
            let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
            img.put_pixel(x as u32, y as u32, image::Rgb([q(px[0]), q(px[1]), q(px[2])]));
        }
    }
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| StoreError::Image(e.to_string()))
}

fn load_rgb_png(path: &Path) -> Result<DenseMap, StoreError> {
    let img = image::open(path).map_err(|e| StoreError::Image(e.to_string()))?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut map = DenseMap::zeros(w, h, 3);
    for y in 0..h {
        for x in 0..w {
            let p = img.get_pixel(x as u32, y as u32);
            let out = map.pixel_mut(x, y);
            for c in 0..3 {
                out[c] = p[c] as f64 / 255.0;
            }
        }
    }
    Ok(map)
}

fn save_depth_pfm(depth: &DenseMap, path: &Path) -> Result<(), StoreError> {
    assert_eq!(depth.channels, 1, "expected a depth map");
    let samples = |x: usize, y: usize| {
        if depth.is_valid(x, y) {
            vec![depth.pixel(x, y)[0] as f32]
        } else {
            vec![0.0f32]
        }
    };
    write_pfm(path, depth.width, depth.height, 1, samples)
}

fn load_depth_pfm(path: &Path) -> Result<DenseMap, StoreError> {
    let (w, h, channels, data) = read_pfm(path)?;
    if channels != 1 {
        return Err(StoreError::Format("depth map must be grayscale".into()));
    }
    let mut map = DenseMap::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let v = data[y * w + x] as f64;
            map.pixel_mut(x, y)[0] = v;
            map.set_valid(x, y, v > 0.0);
        }
    }
    Ok(map)
}

fn save_rays_pfm(rays: &RayMap, path: &Path) -> Result<(), StoreError> {
    let samples = |x: usize, y: usize| {
        if rays.is_valid(x, y) {
            let d = rays.dir(x, y);
            vec![d[0] as f32, d[1] as f32, d[2] as f32]
        } else {
            vec![0.0f32; 3]
        }
    };
    write_pfm(path, rays.width, rays.height, 3, samples)
}

fn load_rays_pfm(path: &Path) -> Result<RayMap, StoreError> {
    let (w, h, channels, data) = read_pfm(path)?;
    if channels != 3 {
        return Err(StoreError::Format("ray map must have 3 channels".into()));
    }
    let mut dirs = vec![[0.0f64; 3]; w * h];
    let mut valid = vec![false; w * h];
    for i in 0..w * h {
        let d = [data[i * 3] as f64, data[i * 3 + 1] as f64, data[i * 3 + 2] as f64];
        let nonzero = d.iter().any(|v| *v != 0.0);
        dirs[i] = d;
        valid[i] = nonzero;
    }
    Ok(RayMap { width: w, height: h, dirs, valid })
}

/// Portable float map: `Pf`/`PF` magic, dimensions, a negative scale marking
/// little-endian floats, then rows stored bottom-to-top.
fn write_pfm(
    path: &Path,
    width: usize,
    height: usize,
    channels: usize,
    samples: impl Fn(usize, usize) -> Vec<f32>,
) -> Result<(), StoreError> {
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut out = fs::File::create(path)?;
    write!(out, "{magic}\n{width} {height}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(width * height * channels * 4);
    for y in (0..height).rev() {
        for x in 0..width {
            for v in samples(x, y) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_pfm(path: &Path) -> Result<(usize, usize, usize, Vec<f32>), StoreError> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut token = || -> Result<String, StoreError> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(StoreError::Format("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token()?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(StoreError::Format(format!("bad magic {other:?}"))),
    };
    let width: usize =
        token()?.parse().map_err(|_| StoreError::Format("bad width".into()))?;
    let height: usize =
        token()?.parse().map_err(|_| StoreError::Format("bad height".into()))?;
    let scale: f64 = token()?.parse().map_err(|_| StoreError::Format("bad scale".into()))?;
    if scale >= 0.0 {
        return Err(StoreError::Format("big-endian data unsupported".into()));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;

    let count = width * height * channels;
    if bytes.len() < pos + count * 4 {
        return Err(StoreError::Format("truncated raster".into()));
    }
    let mut data = vec![0.0f32; count];
    for y in 0..height {
        let src_row = height - 1 - y;
        for i in 0..width * channels {
            let off = pos + (src_row * width * channels + i) * 4;
            data[y * width * channels + i] =
                f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
        }
    }
    Ok((width, height, channels, data))
}
