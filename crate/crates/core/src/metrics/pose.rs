//! Pose accuracy over frame pairs and trajectory errors.

use nalgebra::Vector3;

use super::align::{umeyama, SimilarityTransform};
use super::MetricsError;
use crate::backbone::{relative_pose, CameraPose};

/// Translations shorter than this are treated as zero-length when comparing
/// directions.
const ZERO_TRANSLATION: f64 = 1e-9;

/// Rotation and translation-direction errors, in degrees, for every ordered
/// frame pair `(i, j)`, `i != j`, of the relative poses `pred_j ∘ pred_i⁻¹`
/// vs `gt_j ∘ gt_i⁻¹`.
fn pair_errors(
    pred: &[CameraPose],
    gt: &[CameraPose],
) -> Result<Vec<(f64, f64)>, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch { left: pred.len(), right: gt.len() });
    }
    if pred.len() < 2 {
        return Err(MetricsError::TooFewFrames { got: pred.len(), need: 2 });
    }
    let mut errs = Vec::with_capacity(pred.len() * (pred.len() - 1));
    for i in 0..pred.len() {
        for j in 0..pred.len() {
            if i == j {
                continue;
            }
            let rp = relative_pose(&pred[i], &pred[j]);
            let rg = relative_pose(&gt[i], &gt[j]);
            let m = rp.rotation * rg.rotation.transpose();
            let rot = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
            let trans = direction_angle_deg(rp.translation, rg.translation);
            errs.push((rot, trans));
        }
    }
    Ok(errs)
}

/// Angle between translation directions; zero-length against zero-length is
/// a perfect 0°, zero-length against nonzero is the agnostic 90°.
fn direction_angle_deg(a: Vector3<f64>, b: Vector3<f64>) -> f64 {
    let (na, nb) = (a.norm(), b.norm());
    match (na < ZERO_TRANSLATION, nb < ZERO_TRANSLATION) {
        (true, true) => 0.0,
        (true, false) | (false, true) => 90.0,
        (false, false) => (a.dot(&b) / (na * nb)).clamp(-1.0, 1.0).acos().to_degrees(),
    }
}

/// Fraction of ordered frame pairs whose relative-rotation geodesic angle
/// (resp. relative-translation direction angle) is within `tau_deg`.
pub fn pose_angular(
    pred: &[CameraPose],
    gt: &[CameraPose],
    tau_deg: f64,
) -> Result<(f64, f64), MetricsError> {
    let errs = pair_errors(pred, gt)?;
    let n = errs.len() as f64;
    let rra = errs.iter().filter(|(r, _)| *r <= tau_deg).count() as f64 / n;
    let rta = errs.iter().filter(|(_, t)| *t <= tau_deg).count() as f64 / n;
    Ok((rra, rta))
}

/// Area under the accuracy-threshold curve `τ ↦ min(RRA@τ, RTA@τ)` over
/// `[0, max_tau_deg]`, normalized to `[0, 1]`.
///
/// Both accuracies are right-continuous step functions of the threshold, so
/// the integral is evaluated exactly by summing over the segments between
/// consecutive error values.
pub fn auc_pose(
    pred: &[CameraPose],
    gt: &[CameraPose],
    max_tau_deg: f64,
) -> Result<f64, MetricsError> {
    assert!(max_tau_deg > 0.0, "threshold ceiling must be positive");
    let errs = pair_errors(pred, gt)?;
    let n = errs.len() as f64;
    let mut rot: Vec<f64> = errs.iter().map(|(r, _)| *r).collect();
    let mut trans: Vec<f64> = errs.iter().map(|(_, t)| *t).collect();
    rot.sort_by(f64::total_cmp);
    trans.sort_by(f64::total_cmp);

    // Segment boundaries: 0, every error value inside the range, and the cap.
    let mut cuts = vec![0.0, max_tau_deg];
    for &e in rot.iter().chain(&trans) {
        if e > 0.0 && e < max_tau_deg {
            cuts.push(e);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();

    let frac_le = |sorted: &[f64], tau: f64| -> f64 {
        sorted.partition_point(|e| *e <= tau) as f64 / n
    };
    let mut area = 0.0;
    for w in cuts.windows(2) {
        // On [w[0], w[1]) both step functions are constant at their w[0] value.
        area += frac_le(&rot, w[0]).min(frac_le(&trans, w[0])) * (w[1] - w[0]);
    }
    Ok(area / max_tau_deg)
}

/// Absolute trajectory error and consecutive-frame relative pose errors.
///
/// Camera centers of the prediction are aligned to the ground truth with a
/// least-squares similarity; configurations Umeyama cannot resolve (fewer
/// than three frames, coincident or collinear centers) fall back to a
/// translation-only alignment with scale 1. Returns `(ATE, RPEt, RPEr)`:
/// RMS center residual after alignment, RMS relative-translation error with
/// the alignment's scale applied to the prediction, and RMS relative-rotation
/// angle in degrees.
pub fn trajectory(
    pred: &[CameraPose],
    gt: &[CameraPose],
) -> Result<(f64, f64, f64), MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch { left: pred.len(), right: gt.len() });
    }
    if pred.len() < 2 {
        return Err(MetricsError::TooFewFrames { got: pred.len(), need: 2 });
    }
    let pc: Vec<Vector3<f64>> = pred.iter().map(CameraPose::center).collect();
    let gc: Vec<Vector3<f64>> = gt.iter().map(CameraPose::center).collect();

    let align = match umeyama(&pc, &gc) {
        Ok(t) => t,
        Err(MetricsError::Degenerate(_)) | Err(MetricsError::TooFewFrames { .. }) => {
            let n = pc.len() as f64;
            let shift =
                gc.iter().sum::<Vector3<f64>>() / n - pc.iter().sum::<Vector3<f64>>() / n;
            SimilarityTransform {
                scale: 1.0,
                rotation: nalgebra::Matrix3::identity(),
                translation: shift,
            }
        }
        Err(e) => return Err(e),
    };

    let rms = |sq: &[f64]| (sq.iter().sum::<f64>() / sq.len() as f64).sqrt();
    let ate_sq: Vec<f64> =
        pc.iter().zip(&gc).map(|(p, g)| (align.apply(*p) - g).norm_squared()).collect();

    let mut rpet_sq = Vec::with_capacity(pred.len() - 1);
    let mut rper_sq = Vec::with_capacity(pred.len() - 1);
    for i in 0..pred.len() - 1 {
        let rp = relative_pose(&pred[i], &pred[i + 1]);
        let rg = relative_pose(&gt[i], &gt[i + 1]);
        rpet_sq.push((align.scale * rp.translation - rg.translation).norm_squared());
        let m = rp.rotation * rg.rotation.transpose();
        let ang = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
        rper_sq.push(ang * ang);
    }
    Ok((rms(&ate_sq), rms(&rpet_sq), rms(&rper_sq)))
}
