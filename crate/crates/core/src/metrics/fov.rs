//! Field-of-view errors from predicted ray maps.

use nalgebra::Vector3;

use super::MetricsError;
use crate::camera::{fov_of, Camera, DenseMap, GEOM_DIR_X, GEOM_DIR_Y, GEOM_DIR_Z};

/// Threshold ceiling (degrees) of the FoV accuracy curve.
pub const FOV_AUC_CAP_DEG: f64 = 10.0;

/// Worst-case error assigned when a border has no valid ray to measure.
const UNMEASURABLE_ERR_DEG: f64 = 180.0;

/// Median horizontal / vertical FoV error (degrees) and the area under the
/// joint accuracy-threshold curve up to 10°.
///
/// Per frame, the predicted horizontal FoV is the angle between the mean ray
/// directions of the leftmost and rightmost pixel columns (vertical
/// analogously from the top and bottom rows), compared against the true
/// camera's field of view. The AUC integrand at threshold τ is the fraction
/// of frames whose *larger* axis error is ≤ τ; its integral has the closed
/// form mean over frames of `1 − min(err, 10°)/10°`. A frame whose border
/// mean cannot be formed (no valid pixels, or directions that cancel) is
/// scored with a 180° error on that axis.
pub fn fov_metrics(
    pred: &[DenseMap],
    cams: &[Camera],
) -> Result<(f64, f64, f64), MetricsError> {
    if pred.len() != cams.len() {
        return Err(MetricsError::LengthMismatch { left: pred.len(), right: cams.len() });
    }
    if pred.is_empty() {
        return Err(MetricsError::TooFewFrames { got: 0, need: 1 });
    }
    let mut h_errs = Vec::with_capacity(pred.len());
    let mut v_errs = Vec::with_capacity(pred.len());
    for (map, cam) in pred.iter().zip(cams) {
        let (h_gt, v_gt) = fov_of(cam)
            .map_err(|e| MetricsError::Degenerate(format!("camera has no field of view: {e}")))?;
        let (h_pred, v_pred) = predicted_fov_deg(map);
        h_errs.push(h_pred.map_or(UNMEASURABLE_ERR_DEG, |h| (h - h_gt).abs()));
        v_errs.push(v_pred.map_or(UNMEASURABLE_ERR_DEG, |v| (v - v_gt).abs()));
    }

    let auc = h_errs
        .iter()
        .zip(&v_errs)
        .map(|(h, v)| 1.0 - h.max(*v).min(FOV_AUC_CAP_DEG) / FOV_AUC_CAP_DEG)
        .sum::<f64>()
        / pred.len() as f64;
    Ok((median(&mut h_errs), median(&mut v_errs), auc))
}

/// Horizontal and vertical FoV (degrees) read off a predicted ray map, or
/// `None` per axis when a border mean cannot be normalized.
fn predicted_fov_deg(map: &DenseMap) -> (Option<f64>, Option<f64>) {
    let border_mean = |xs: &mut dyn Iterator<Item = (usize, usize)>| -> Option<Vector3<f64>> {
        let mut sum = Vector3::zeros();
        let mut count = 0usize;
        for (x, y) in xs {
            if !map.is_valid(x, y) {
                continue;
            }
            let px = map.pixel(x, y);
            sum += Vector3::new(px[GEOM_DIR_X], px[GEOM_DIR_Y], px[GEOM_DIR_Z]);
            count += 1;
        }
        (count > 0 && sum.norm() > 1e-12).then(|| sum.normalize())
    };
    let angle = |a: Option<Vector3<f64>>, b: Option<Vector3<f64>>| -> Option<f64> {
        Some(a?.dot(&b?).clamp(-1.0, 1.0).acos().to_degrees())
    };
    let (w, h) = (map.width, map.height);
    let left = border_mean(&mut (0..h).map(|y| (0, y)));
    let right = border_mean(&mut (0..h).map(|y| (w - 1, y)));
    let top = border_mean(&mut (0..w).map(|x| (x, 0)));
    let bottom = border_mean(&mut (0..w).map(|x| (x, h - 1)));
    (angle(left, right), angle(top, bottom))
}

/// Median with the even-count mean-of-middles convention. Reorders `vals`.
fn median(vals: &mut [f64]) -> f64 {
    assert!(!vals.is_empty());
    vals.sort_by(f64::total_cmp);
    let mid = vals.len() / 2;
    if vals.len() % 2 == 1 {
        vals[mid]
    } else {
        0.5 * (vals[mid - 1] + vals[mid])
    }
}
