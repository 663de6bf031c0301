//! Pinhole and Kannala-Brandt projection models.

use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt;

/// Incident angles are only considered up to 120 degrees.
pub const KB_THETA_LIMIT: f64 = 120.0 * std::f64::consts::PI / 180.0;
/// Grid step used to establish the monotone range of `r(theta)`.
pub const KB_THETA_GRID_STEP: f64 = 1e-3;

/// Bounded retries for rejection sampling in [`sample_distortion`].
const MAX_DISTORTION_TRIES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub enum CameraError {
    BadIntrinsics(String),
    /// No acceptable distortion sample within the retry budget.
    DistortionRejected { tries: usize },
    /// A border midpoint failed to unproject while measuring field of view.
    BorderUnprojection { pixel: (f64, f64) },
}

impl fmt::Display for CameraError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CameraError::BadIntrinsics(why) => write!(f, "bad camera intrinsics: {why}"),
            CameraError::DistortionRejected { tries } => {
                write!(f, "no monotone full-coverage distortion sample in {tries} tries")
            }
            CameraError::BorderUnprojection { pixel } => {
                write!(f, "border pixel ({}, {}) does not unproject", pixel.0, pixel.1)
            }
        }
    }
}

impl std::error::Error for CameraError {}

/// Ideal perspective camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PinholeSpec", into = "PinholeSpec")]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

#[derive(Serialize, Deserialize)]
struct PinholeSpec {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
}

impl From<PinholeCamera> for PinholeSpec {
    fn from(c: PinholeCamera) -> Self {
        PinholeSpec { fx: c.fx, fy: c.fy, cx: c.cx, cy: c.cy, width: c.width, height: c.height }
    }
}

impl TryFrom<PinholeSpec> for PinholeCamera {
    type Error = CameraError;
    fn try_from(s: PinholeSpec) -> Result<Self, CameraError> {
        PinholeCamera::new(s.fx, s.fy, s.cx, s.cy, s.width, s.height)
    }
}

impl PinholeCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<PinholeCamera, CameraError> {
        check_intrinsics(fx, fy, cx, cy, width, height)?;
        Ok(PinholeCamera { fx, fy, cx, cy, width, height })
    }

    /// Centered camera with square pixels, the usual synthetic default.
    pub fn centered(focal: f64, width: usize, height: usize) -> Result<PinholeCamera, CameraError> {
        PinholeCamera::new(focal, focal, width as f64 / 2.0, height as f64 / 2.0, width, height)
    }

    /// Projects a camera-frame point; `None` when the point is behind the
    /// camera or lands outside the image.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        let [x, y, z] = p;
        if z <= 0.0 {
            return None;
        }
        let u = self.fx * x / z + self.cx;
        let v = self.fy * y / z + self.cy;
        inside(u, v, self.width, self.height).then_some((u, v))
    }

    /// Unit ray direction through a continuous pixel coordinate.
    pub fn unproject(&self, u: f64, v: f64) -> Option<[f64; 3]> {
        let mx = (u - self.cx) / self.fx;
        let my = (v - self.cy) / self.fy;
        Some(normalize([mx, my, 1.0]))
    }
}

/// Kannala-Brandt fisheye camera.
///
/// `theta_max` is the largest angle not beyond [`KB_THETA_LIMIT`] for which
/// the radial profile stays strictly increasing on a [`KB_THETA_GRID_STEP`]
/// grid; it is fixed at construction, and projection rejects rays beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KannalaBrandtSpec", into = "KannalaBrandtSpec")]
pub struct KannalaBrandtCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub k: [f64; 4],
    theta_max: f64,
    r_max: f64,
}

#[derive(Serialize, Deserialize)]
struct KannalaBrandtSpec {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    k: [f64; 4],
}

impl From<KannalaBrandtCamera> for KannalaBrandtSpec {
    fn from(c: KannalaBrandtCamera) -> Self {
        KannalaBrandtSpec {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            k: c.k,
        }
    }
}

impl TryFrom<KannalaBrandtSpec> for KannalaBrandtCamera {
    type Error = CameraError;
    fn try_from(s: KannalaBrandtSpec) -> Result<Self, CameraError> {
        KannalaBrandtCamera::new(s.fx, s.fy, s.cx, s.cy, s.width, s.height, s.k)
    }
}

impl KannalaBrandtCamera {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        k: [f64; 4],
    ) -> Result<KannalaBrandtCamera, CameraError> {
        check_intrinsics(fx, fy, cx, cy, width, height)?;
        if k.iter().any(|v| !v.is_finite()) {
            return Err(CameraError::BadIntrinsics("non-finite distortion coefficient".into()));
        }
        let theta_max = monotone_theta_range(&k);
        let r_max = radial(&k, theta_max);
        Ok(KannalaBrandtCamera { fx, fy, cx, cy, width, height, k, theta_max, r_max })
    }

    pub fn theta_max(&self) -> f64 {
        self.theta_max
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    /// `r(theta)` for this camera's coefficients.
    pub fn radial(&self, theta: f64) -> f64 {
        radial(&self.k, theta)
    }

    /// Projects a camera-frame point; `None` when the incident angle exceeds
    /// `theta_max` or the pixel lands outside the image.
    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        let [x, y, z] = p;
        let rho = (x * x + y * y).sqrt();
        let theta = rho.atan2(z);
        if theta > self.theta_max {
            return None;
        }
        let (u, v) = if rho == 0.0 {
            (self.cx, self.cy)
        } else {
            let r = radial(&self.k, theta);
            (self.fx * (x / rho) * r + self.cx, self.fy * (y / rho) * r + self.cy)
        };
        inside(u, v, self.width, self.height).then_some((u, v))
    }

    /// Unit ray direction through a continuous pixel coordinate; `None` when
    /// the pixel radius exceeds the monotone range of the radial profile.
    pub fn unproject(&self, u: f64, v: f64) -> Option<[f64; 3]> {
        let mx = (u - self.cx) / self.fx;
        let my = (v - self.cy) / self.fy;
        let r = (mx * mx + my * my).sqrt();
        if r == 0.0 {
            return Some([0.0, 0.0, 1.0]);
        }
        let theta = self.solve_theta(r)?;
        let (s, c) = theta.sin_cos();
        Some([s * mx / r, s * my / r, c])
    }

    /// Inverts `r(theta) = r` on `[0, theta_max]` by Newton iteration with a
    /// bisection safeguard; the profile is strictly increasing there, so the
    /// bracket is valid. For an undistorted profile (`k = 0`) the initial
    /// guess is already exact.
    fn solve_theta(&self, r: f64) -> Option<f64> {
        if r > self.r_max + 1e-9 {
            return None;
        }
        let (mut lo, mut hi) = (0.0f64, self.theta_max);
        let mut theta = r.min(self.theta_max);
        for _ in 0..60 {
            let f = radial(&self.k, theta) - r;
            if f.abs() < 1e-14 {
                return Some(theta);
            }
            if f > 0.0 {
                hi = theta;
            } else {
                lo = theta;
            }
            let df = radial_derivative(&self.k, theta);
            let newton = theta - f / df;
            theta = if df > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
        }
        Some(theta)
    }
}

/// Tagged union over the supported projection models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Camera {
    Pinhole(PinholeCamera),
    KannalaBrandt(KannalaBrandtCamera),
}

impl Camera {
    pub fn width(&self) -> usize {
        match self {
            Camera::Pinhole(c) => c.width,
            Camera::KannalaBrandt(c) => c.width,
        }
    }

    pub fn height(&self) -> usize {
        match self {
            Camera::Pinhole(c) => c.height,
            Camera::KannalaBrandt(c) => c.height,
        }
    }

    pub fn project(&self, p: [f64; 3]) -> Option<(f64, f64)> {
        match self {
            Camera::Pinhole(c) => c.project(p),
            Camera::KannalaBrandt(c) => c.project(p),
        }
    }

    pub fn unproject(&self, u: f64, v: f64) -> Option<[f64; 3]> {
        match self {
            Camera::Pinhole(c) => c.unproject(u, v),
            Camera::KannalaBrandt(c) => c.unproject(u, v),
        }
    }

    pub fn is_fisheye(&self) -> bool {
        matches!(self, Camera::KannalaBrandt(_))
    }
}

/// Horizontal and vertical field of view in degrees, measured between the
/// unprojected midpoints of opposite image borders.
pub fn fov_of(cam: &Camera) -> Result<(f64, f64), CameraError> {
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    let angle = |a: (f64, f64), b: (f64, f64)| -> Result<f64, CameraError> {
        let da = cam.unproject(a.0, a.1).ok_or(CameraError::BorderUnprojection { pixel: a })?;
        let db = cam.unproject(b.0, b.1).ok_or(CameraError::BorderUnprojection { pixel: b })?;
        Ok(dot(da, db).clamp(-1.0, 1.0).acos().to_degrees())
    };
    let hfov = angle((0.0, h / 2.0), (w, h / 2.0))?;
    let vfov = angle((w / 2.0, 0.0), (w / 2.0, h))?;
    Ok((hfov, vfov))
}

/// Draws a random fisheye camera around a perspective base: focal scaled by
/// U[1, 1.2], principal point shifted by U[-10, 10] pixels per axis, and
/// distortion coefficients k1..k3 ~ U(-0.5, 0.5), k4 ~ U(-0.05, 0.05).
///
/// A draw is rejected (and resampled, up to a bounded number of tries) unless
/// the radial profile is strictly increasing over the angles the image needs,
/// i.e. every corner of the image unprojects within the monotone range — so
/// every accepted camera can see its whole image plane.
pub fn sample_distortion(
    rng: &mut impl Rng,
    base: &PinholeCamera,
) -> Result<KannalaBrandtCamera, CameraError> {
    for _ in 0..MAX_DISTORTION_TRIES {
        let scale = rng.gen_range(1.0..1.2);
        let cx = base.cx + rng.gen_range(-10.0..10.0);
        let cy = base.cy + rng.gen_range(-10.0..10.0);
        let k = [
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.05..0.05),
        ];
        let Ok(cam) =
            KannalaBrandtCamera::new(base.fx * scale, base.fy * scale, cx, cy, base.width, base.height, k)
        else {
            continue; // principal point drifted outside a tiny image
        };
        // r is a norm of an affine map of the pixel, so its maximum over the
        // image rectangle sits at a corner.
        let corners = [(0.0, 0.0), (cam.width as f64, 0.0), (0.0, cam.height as f64), (cam.width as f64, cam.height as f64)];
        let covered = corners.iter().all(|&(u, v)| {
            let mx = (u - cam.cx) / cam.fx;
            let my = (v - cam.cy) / cam.fy;
            (mx * mx + my * my).sqrt() <= cam.r_max
        });
        if covered {
            return Ok(cam);
        }
    }
    Err(CameraError::DistortionRejected { tries: MAX_DISTORTION_TRIES })
}

/// `r(theta)` with the odd-polynomial fisheye profile.
fn radial(k: &[f64; 4], theta: f64) -> f64 {
    let t2 = theta * theta;
    theta * (1.0 + t2 * (k[0] + t2 * (k[1] + t2 * (k[2] + t2 * k[3]))))
}

fn radial_derivative(k: &[f64; 4], theta: f64) -> f64 {
    let t2 = theta * theta;
    1.0 + t2 * (3.0 * k[0] + t2 * (5.0 * k[1] + t2 * (7.0 * k[2] + t2 * 9.0 * k[3])))
}

/// Largest angle within [`KB_THETA_LIMIT`] for which the derivative of the
/// radial profile stays positive on the construction grid.
fn monotone_theta_range(k: &[f64; 4]) -> f64 {
    let steps = (KB_THETA_LIMIT / KB_THETA_GRID_STEP).ceil() as usize;
    let mut theta_max = 0.0;
    for i in 1..=steps {
        let theta = (i as f64 * KB_THETA_GRID_STEP).min(KB_THETA_LIMIT);
        if radial_derivative(k, theta) <= 0.0 {
            break;
        }
        theta_max = theta;
    }
    theta_max
}

fn check_intrinsics(
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
) -> Result<(), CameraError> {
    if width == 0 || height == 0 {
        return Err(CameraError::BadIntrinsics("zero image extent".into()));
    }
    if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
        return Err(CameraError::BadIntrinsics(format!("focal ({fx}, {fy}) must be positive")));
    }
    if !(cx.is_finite() && cy.is_finite() && (0.0..width as f64).contains(&cx) && (0.0..height as f64).contains(&cy)) {
        return Err(CameraError::BadIntrinsics(format!(
            "principal point ({cx}, {cy}) outside {width}x{height} image"
        )));
    }
    Ok(())
}

fn inside(u: f64, v: f64, width: usize, height: usize) -> bool {
    (0.0..=width as f64).contains(&u) && (0.0..=height as f64).contains(&v)
}

pub(crate) fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
