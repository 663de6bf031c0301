//! Point-cloud accuracy, completeness and Chamfer distance.

use nalgebra::Vector3;

use super::align::{icp_refine, umeyama, GridIndex};
use super::MetricsError;
use crate::backbone::CameraPose;
use crate::camera::{DenseMap, GEOM_DIR_X, GEOM_DIR_Y, GEOM_DIR_Z, GEOM_RAY_DEPTH};

/// Iteration cap for the ICP refinement step of [`aligned_point_metrics`].
pub const ICP_MAX_ITERS: usize = 32;
/// RMS-residual improvement below which ICP stops.
pub const ICP_TOL: f64 = 1e-10;

/// Acc / Comp / Chamfer over already-aligned clouds.
///
/// Acc = mean over predicted points of the distance to the nearest
/// ground-truth point; Comp = the same with the roles swapped;
/// CD = (Acc + Comp) / 2. Nearest neighbors are exact.
pub fn point_metrics(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
) -> Result<(f64, f64, f64), MetricsError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let gt_index = GridIndex::build(gt);
    let acc =
        pred.iter().map(|p| gt_index.nearest(*p).1).sum::<f64>() / pred.len() as f64;
    let pred_index = GridIndex::build(pred);
    let comp =
        gt.iter().map(|g| pred_index.nearest(*g).1).sum::<f64>() / gt.len() as f64;
    Ok((acc, comp, (acc + comp) / 2.0))
}

/// Acc / Comp / Chamfer after aligning the prediction to the ground truth.
///
/// `pred[i]` and `gt[i]` must correspond pixelwise: the initial similarity
/// comes from Umeyama on these pairs, then point-to-point ICP (scale frozen)
/// polishes it, and the metrics are computed on the moved prediction.
pub fn aligned_point_metrics(
    pred: &[Vector3<f64>],
    gt: &[Vector3<f64>],
) -> Result<(f64, f64, f64), MetricsError> {
    if pred.is_empty() || gt.is_empty() {
        return Err(MetricsError::EmptyCloud);
    }
    let init = umeyama(pred, gt)?;
    let refined = icp_refine(pred, gt, &init, ICP_MAX_ITERS, ICP_TOL)?;
    let moved: Vec<Vector3<f64>> = pred.iter().map(|p| refined.apply(*p)).collect();
    point_metrics(&moved, gt)
}

/// World-space points of the valid pixels of a geometry map (unit ray
/// directions scaled by ray depth, mapped out of the camera frame).
pub fn cloud_from_geometry(map: &DenseMap, pose: &CameraPose) -> Vec<Vector3<f64>> {
    assert!(map.channels > GEOM_RAY_DEPTH, "geometry map expected");
    let cam_to_world = pose.inverse();
    let mut out = Vec::new();
    for y in 0..map.height {
        for x in 0..map.width {
            if !map.is_valid(x, y) {
                continue;
            }
            let px = map.pixel(x, y);
            let d = px[GEOM_RAY_DEPTH];
            let p = cam_to_world.transform([
                px[GEOM_DIR_X] * d,
                px[GEOM_DIR_Y] * d,
                px[GEOM_DIR_Z] * d,
            ]);
            out.push(Vector3::new(p[0], p[1], p[2]));
        }
    }
    out
}
