//! Image warps between camera models by inverse-mapped bilinear resampling.
//!
//! Every warp is planned per destination pixel: unproject the pixel center
//! through the destination camera, project the ray through the source
//! camera, and blend the four surrounding source texels. The plan is a plain
//! linear map, so the same taps drive both eager [`DenseMap`] resampling and
//! differentiable resampling on a tape.

use super::dense::{DenseMap, RayMap};
use super::model::{Camera, KannalaBrandtCamera, PinholeCamera};
use super::{GEOM_CHANNELS, GEOM_DIR_X, GEOM_DIR_Y, GEOM_DIR_Z};
use crate::nncore::Tap;
use std::rc::Rc;
use std::sync::atomic::{AtomicUsize, Ordering};

/// Process-wide count of warp operations (plan constructions and
/// applications), for audits that assert a code path performs no warps.
static WARP_OPS: AtomicUsize = AtomicUsize::new(0);

pub fn warp_ops_performed() -> usize {
    WARP_OPS.load(Ordering::Relaxed)
}

/// Sample coordinates this close to a texel center snap onto it, which makes
/// warps between identical cameras reproduce the input bitwise.
const SNAP_EPS: f64 = 1e-9;

/// Precomputed inverse-mapping resample: for every destination pixel, four
/// weighted taps into the flattened (row-major) source image.
///
/// A destination pixel is invalid when its center does not unproject, or the
/// ray does not land on the source image. Taps are clamped to the image edge;
/// zero-weight taps are collapsed onto their nonzero neighbor so they never
/// touch pixels outside the true interpolation support.
pub struct ResamplePlan {
    dst_width: usize,
    dst_height: usize,
    src_width: usize,
    src_height: usize,
    taps: Rc<Vec<Tap>>,
    valid: Vec<bool>,
}

impl ResamplePlan {
    pub fn between(dst_cam: &Camera, src_cam: &Camera) -> ResamplePlan {
        WARP_OPS.fetch_add(1, Ordering::Relaxed);
        let (dw, dh) = (dst_cam.width(), dst_cam.height());
        let (sw, sh) = (src_cam.width(), src_cam.height());
        let mut taps = Vec::with_capacity(dw * dh);
        let mut valid = Vec::with_capacity(dw * dh);
        for y in 0..dh {
            for x in 0..dw {
                let sample = dst_cam
                    .unproject(x as f64 + 0.5, y as f64 + 0.5)
                    .and_then(|d| src_cam.project(d));
                match sample {
                    Some((u, v)) => {
                        taps.push(bilinear_taps(u, v, sw, sh));
                        valid.push(true);
                    }
                    None => {
                        taps.push([(0, 0.0); 4]);
                        valid.push(false);
                    }
                }
            }
        }
        ResamplePlan { dst_width: dw, dst_height: dh, src_width: sw, src_height: sh, taps: Rc::new(taps), valid }
    }

    pub fn dst_extent(&self) -> (usize, usize) {
        (self.dst_width, self.dst_height)
    }

    /// Shared tap table, one entry per destination pixel in row-major order,
    /// indices into the flattened source. Invalid pixels carry all-zero taps.
    pub fn taps(&self) -> Rc<Vec<Tap>> {
        Rc::clone(&self.taps)
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.dst_width + x]
    }

    pub fn valid_fraction(&self) -> f64 {
        let n = self.valid.iter().filter(|v| **v).count();
        n as f64 / self.valid.len() as f64
    }

    /// Resamples every channel of `src`. A destination pixel is valid only if
    /// its plan entry is valid and all of its tap pixels are valid — no
    /// interpolation across validity boundaries.
    pub fn apply(&self, src: &DenseMap) -> DenseMap {
        WARP_OPS.fetch_add(1, Ordering::Relaxed);
        assert_eq!(
            (src.width, src.height),
            (self.src_width, self.src_height),
            "source extent does not match the plan"
        );
        let mut out = DenseMap::zeros(self.dst_width, self.dst_height, src.channels);
        for i in 0..self.dst_width * self.dst_height {
            let tap = &self.taps[i];
            let ok = self.valid[i] && tap.iter().all(|&(idx, _)| src.valid[idx]);
            out.valid[i] = ok;
            if !ok {
                continue;
            }
            for &(idx, w) in tap {
                if w != 0.0 {
                    for c in 0..src.channels {
                        out.data[i * src.channels + c] += w * src.data[idx * src.channels + c];
                    }
                }
            }
        }
        out
    }
}

/// Four clamp-to-edge bilinear taps around continuous source pixel `(u, v)`,
/// interpolating between texel centers.
fn bilinear_taps(u: f64, v: f64, width: usize, height: usize) -> Tap {
    let (x0, x1, fx) = axis_taps(u, width);
    let (y0, y1, fy) = axis_taps(v, height);
    [
        (y0 * width + x0, (1.0 - fx) * (1.0 - fy)),
        (y0 * width + x1, fx * (1.0 - fy)),
        (y1 * width + x0, (1.0 - fx) * fy),
        (y1 * width + x1, fx * fy),
    ]
}

fn axis_taps(coord: f64, extent: usize) -> (usize, usize, f64) {
    // Texel centers sit at integer+0.5, so the interpolation grid is the
    // pixel coordinate shifted by half.
    let mut g = coord - 0.5;
    if (g - g.round()).abs() < SNAP_EPS {
        g = g.round();
    }
    let base = g.floor();
    let frac = g - base;
    let clamp = |i: f64| (i.max(0.0) as usize).min(extent - 1);
    let lo = clamp(base);
    // A zero fraction collapses both taps onto one texel, so edge snapping
    // never drags the neighbor's validity into the output.
    let hi = if frac == 0.0 { lo } else { clamp(base + 1.0) };
    (lo, hi, frac)
}

/// Warps a perspective-rendered map into the view of a fisheye camera that
/// shares its optical center and orientation. Fisheye pixels whose rays miss
/// the source image come back invalid.
pub fn warp_to_fisheye(src: &DenseMap, src_cam: &Camera, dst_cam: &KannalaBrandtCamera) -> DenseMap {
    let plan = ResamplePlan::between(&Camera::KannalaBrandt(dst_cam.clone()), src_cam);
    plan.apply(src)
}

/// Inverse warp: resamples every channel of a fisheye-view map back into the
/// perspective view. Use [`unwarp_dense`] for geometry maps, which must not
/// resample direction channels.
pub fn unwarp_channels(pred: &DenseMap, fish_cam: &Camera, persp_cam: &Camera) -> DenseMap {
    let plan = ResamplePlan::between(persp_cam, fish_cam);
    plan.apply(pred)
}

/// Inverse warp of a dense geometry map (ray directions + ray depth).
///
/// Ray depth is invariant under reprojection along the same ray, so it is
/// resampled like any scalar channel. Ray directions are not resampled: the
/// perspective view has its own analytic rays, which are written in place of
/// the interpolated ones (and are exactly unit-norm by construction).
pub fn unwarp_dense(
    pred: &DenseMap,
    fish_cam: &KannalaBrandtCamera,
    persp_cam: &PinholeCamera,
) -> DenseMap {
    assert_eq!(pred.channels, GEOM_CHANNELS, "geometry map expected");
    let persp = Camera::Pinhole(persp_cam.clone());
    let mut out = unwarp_channels(pred, &Camera::KannalaBrandt(fish_cam.clone()), &persp);
    let rays = RayMap::from_camera(&persp);
    for y in 0..out.height {
        for x in 0..out.width {
            let d = rays.dir(x, y);
            let px = out.pixel_mut(x, y);
            px[GEOM_DIR_X] = d[0];
            px[GEOM_DIR_Y] = d[1];
            px[GEOM_DIR_Z] = d[2];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::super::model::sample_distortion;
    use super::super::GEOM_RAY_DEPTH;
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kb0() -> KannalaBrandtCamera {
        KannalaBrandtCamera::new(30.8, 30.8, 28.0, 28.0, 56, 56, [0.0; 4]).unwrap()
    }

    fn persp() -> PinholeCamera {
        PinholeCamera::centered(30.8, 56, 56).unwrap()
    }

    fn smooth_map(width: usize, height: usize, channels: usize) -> DenseMap {
        let mut m = DenseMap::zeros(width, height, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    m.pixel_mut(x, y)[c] =
                        0.6 + 0.3 * ((x as f64) / 9.0 + c as f64).sin() * ((y as f64) / 7.0).cos();
                }
            }
        }
        m
    }

    #[test]
    fn identity_warp_is_bitwise() {
        // Same camera on both sides: every sample lands exactly on a texel
        // center, snapping makes the taps exact, and the blend copies bits.
        let cam = kb0();
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let mut src = DenseMap::zeros(56, 56, 3);
        for v in src.data.iter_mut() {
            *v = rng.gen_range(0.0..1.0);
        }
        let out = warp_to_fisheye(&src, &Camera::KannalaBrandt(cam.clone()), &cam);
        assert!(out.valid.iter().all(|v| *v));
        assert_eq!(out.data, src.data);
    }

    #[test]
    fn constant_source_stays_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let fish = sample_distortion(&mut rng, &persp()).unwrap();
        let mut src = DenseMap::zeros(56, 56, 2);
        for px in src.data.chunks_mut(2) {
            px.copy_from_slice(&[0.25, 0.75]);
        }
        let out = warp_to_fisheye(&src, &Camera::Pinhole(persp()), &fish);
        assert!(out.valid_fraction() > 0.5, "warp produced an almost-empty view");
        for (i, px) in out.data.chunks(2).enumerate() {
            if out.valid[i] {
                assert!((px[0] - 0.25).abs() < 1e-12 && (px[1] - 0.75).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn warp_then_unwarp_recovers_smooth_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(52);
        let src = smooth_map(56, 56, 2);
        let mut errs = Vec::new();
        for _ in 0..5 {
            let fish = sample_distortion(&mut rng, &persp()).unwrap();
            let warped = warp_to_fisheye(&src, &Camera::Pinhole(persp()), &fish);
            let back = unwarp_channels(
                &warped,
                &Camera::KannalaBrandt(fish),
                &Camera::Pinhole(persp()),
            );
            for i in 0..back.valid.len() {
                if back.valid[i] {
                    for c in 0..2 {
                        errs.push((back.data[i * 2 + c] - src.data[i * 2 + c]).abs());
                    }
                }
            }
        }
        assert!(!errs.is_empty());
        errs.sort_by(f64::total_cmp);
        let median = errs[errs.len() / 2];
        let mean = errs.iter().sum::<f64>() / errs.len() as f64;
        assert!(median < 1e-3, "median round-trip error {median}");
        assert!(mean < 5e-3, "mean round-trip error {mean}");
    }

    #[test]
    fn unwarp_dense_recomputes_directions() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let fish = sample_distortion(&mut rng, &persp()).unwrap();
        let mut geom = DenseMap::zeros(56, 56, GEOM_CHANNELS);
        // Deliberately bogus directions: they must not survive the unwarp.
        for y in 0..56 {
            for x in 0..56 {
                let px = geom.pixel_mut(x, y);
                px[GEOM_DIR_X] = 1.0;
                px[GEOM_RAY_DEPTH] = 2.0 + (x + y) as f64 / 56.0;
            }
        }
        let out = unwarp_dense(&geom, &fish, &persp());
        let rays = RayMap::from_camera(&Camera::Pinhole(persp()));
        for y in 0..56 {
            for x in 0..56 {
                let px = out.pixel(x, y);
                let d = [px[GEOM_DIR_X], px[GEOM_DIR_Y], px[GEOM_DIR_Z]];
                let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                assert!((n - 1.0).abs() < 1e-12, "unit norm");
                assert_eq!(d, rays.dir(x, y), "analytic perspective ray");
                if out.is_valid(x, y) {
                    // Bilinear blending keeps values inside the source range.
                    let depth = px[GEOM_RAY_DEPTH];
                    let hi = 2.0 + 110.0 / 56.0;
                    assert!((2.0..=hi).contains(&depth), "depth {depth} outside source range");
                }
            }
        }
    }

    #[test]
    fn invalid_source_pixels_poison_their_taps() {
        let cam = kb0();
        let mut src = smooth_map(56, 56, 1);
        src.set_valid(20, 30, false);
        // Identity plan: each output pixel taps exactly its own source pixel.
        let out = warp_to_fisheye(&src, &Camera::KannalaBrandt(cam.clone()), &cam);
        assert!(!out.is_valid(20, 30));
        assert!(out.is_valid(21, 30) && out.is_valid(19, 30));
        let n_invalid = out.valid.iter().filter(|v| !**v).count();
        assert_eq!(n_invalid, 1);
    }

    #[test]
    fn rays_outside_source_come_back_invalid() {
        // Wider-than-source fisheye: border fisheye pixels look beyond the
        // perspective frustum and must be dropped, center must survive.
        let fish = KannalaBrandtCamera::new(18.0, 18.0, 28.0, 28.0, 56, 56, [0.0; 4]).unwrap();
        let src = smooth_map(56, 56, 1);
        let out = warp_to_fisheye(&src, &Camera::Pinhole(persp()), &fish);
        assert!(out.is_valid(28, 28));
        assert!(!out.is_valid(0, 28));
        assert!(out.valid_fraction() < 1.0);
    }

    #[test]
    fn plan_taps_are_convex_and_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(54);
        for _ in 0..5 {
            let fish = sample_distortion(&mut rng, &persp()).unwrap();
            let plan = ResamplePlan::between(
                &Camera::Pinhole(persp()),
                &Camera::KannalaBrandt(fish),
            );
            for (i, tap) in plan.taps().iter().enumerate() {
                let total: f64 = tap.iter().map(|t| t.1).sum();
                if plan.valid()[i] {
                    assert!((total - 1.0).abs() < 1e-12, "weights sum to one");
                    for &(idx, w) in tap {
                        assert!(idx < 56 * 56);
                        assert!((0.0..=1.0).contains(&w));
                    }
                } else {
                    assert_eq!(total, 0.0);
                }
            }
        }
    }

    #[test]
    fn warp_ops_counter_advances() {
        let before = warp_ops_performed();
        let cam = kb0();
        let src = smooth_map(56, 56, 1);
        let _ = warp_to_fisheye(&src, &Camera::KannalaBrandt(cam.clone()), &cam);
        // One plan construction plus one application.
        assert_eq!(warp_ops_performed() - before, 2);
    }
}
