//! The three token-training objectives.
//!
//! All three run the same masked student forward and the same
//! [`reconstruction_loss`]; they differ only in where the imagery and the
//! targets come from:
//!
//! * **self-supervised** — warped perspective input, targets predicted by the
//!   frozen backbone on the unwarped imagery (no ground truth anywhere);
//! * **supervised** — the same warped input, ground-truth targets;
//! * **supervised-plus** — natively rendered fisheye input compared directly
//!   against its native ground truth, with no resampling in the loop.
//!
//! Warped frames carry their dense predictions back to the comparison domain
//! *on the tape*: the constant resampling taps blend predicted rows (ray
//! depth is invariant along a ray, so it resamples like any scalar), and the
//! blended directions are re-normalized. An identity warp's taps collapse to
//! single full-weight taps, so the student's rows pass through bitwise and a
//! student matching its teacher scores (numerically) zero.

use crate::backbone::{forward, BackboneConfig, BackboneVars, BackboneWeights};
use crate::calibrate::{forward_with_labels, CalibrationTokenSet, CalibrationTokenVars};
use crate::camera::DenseMap;
use crate::nncore::{MaskMode, Tape, Tensor};

use super::config::LossWeights;
use super::data::AdaptSample;
use super::loss::{reconstruction_loss, FramePrediction, FrameTarget, LossTerms};
use super::LearnError;

/// Masked student forward plus the per-frame return to the comparison
/// domain.
fn student_predictions(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    set: &CalibrationTokenSet,
    tokens: &CalibrationTokenVars,
    mode: MaskMode,
    sample: &AdaptSample,
) -> Vec<FramePrediction> {
    let out = forward_with_labels(
        tape,
        vars,
        cfg,
        set,
        tokens,
        &sample.fisheye_bits(),
        &sample.images(),
        mode,
    );
    let rows = cfg.width * cfg.height;
    out.frames
        .iter()
        .zip(&sample.frames)
        .map(|(fo, af)| match &af.unwarp {
            None => FramePrediction {
                quat: fo.quat,
                trans: fo.trans,
                dense: fo.dense,
                valid: vec![true; rows],
            },
            Some(plan) => {
                let blended = tape.gather_blend(fo.dense, plan.taps());
                let dirs = tape.l2_normalize_rows(tape.slice_cols(blended, 0, 3));
                let depth = tape.slice_cols(blended, 3, 4);
                FramePrediction {
                    quat: fo.quat,
                    trans: fo.trans,
                    dense: tape.concat_cols(&[dirs, depth]),
                    valid: plan.valid().to_vec(),
                }
            }
        })
        .collect()
}

/// Pseudo-labels: the backbone's own plain predictions on the perspective
/// imagery, extracted as values from a private tape. Nothing of the teacher
/// survives as a differentiable node, so no gradient can reach it.
pub fn ssl_targets(
    weights: &BackboneWeights,
    cfg: &BackboneConfig,
    sample: &AdaptSample,
) -> Vec<FrameTarget> {
    let tape = Tape::new();
    let vars = weights.vars(&tape, false);
    let images: Vec<DenseMap> = sample.frames.iter().map(|f| f.source_rgb.clone()).collect();
    let out = forward(&tape, &vars, cfg, &images);
    out.frames
        .iter()
        .map(|fo| {
            let q = tape.value(fo.quat);
            let t = tape.value(fo.trans);
            let dense = tape.value(fo.dense);
            let m = dense.rows();
            let mut dirs = Tensor::zeros(vec![m, 3]);
            let mut depth = Tensor::zeros(vec![m, 1]);
            for i in 0..m {
                dirs.set(i, 0, dense.at(i, 0));
                dirs.set(i, 1, dense.at(i, 1));
                dirs.set(i, 2, dense.at(i, 2));
                depth.set(i, 0, dense.at(i, 3));
            }
            FrameTarget {
                quat: [q.at(0, 0), q.at(0, 1), q.at(0, 2), q.at(0, 3)],
                trans: [t.at(0, 0), t.at(0, 1), t.at(0, 2)],
                dirs,
                depth,
                valid: vec![true; m],
            }
        })
        .collect()
}

/// Student forward against explicit targets — the shared core of the three
/// schemes, also used directly by the training loop when teacher targets are
/// cached across iterations.
pub fn loss_with_targets(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    set: &CalibrationTokenSet,
    tokens: &CalibrationTokenVars,
    mode: MaskMode,
    sample: &AdaptSample,
    targets: &[FrameTarget],
    weights: &LossWeights,
) -> Result<LossTerms, LearnError> {
    let preds = student_predictions(tape, vars, cfg, set, tokens, mode, sample);
    reconstruction_loss(tape, &preds, targets, weights)
}

/// Self-supervised objective: teacher on the perspective source, student on
/// the warped input.
#[allow(clippy::too_many_arguments)]
pub fn loss_ssl(
    tape: &Tape,
    backbone: &BackboneWeights,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    set: &CalibrationTokenSet,
    tokens: &CalibrationTokenVars,
    mode: MaskMode,
    sample: &AdaptSample,
    weights: &LossWeights,
) -> Result<LossTerms, LearnError> {
    let targets = ssl_targets(backbone, cfg, sample);
    loss_with_targets(tape, vars, cfg, set, tokens, mode, sample, &targets, weights)
}

/// Supervised objective on warped imagery: ground truth replaces the
/// teacher, everything else matches the self-supervised path.
pub fn loss_sl(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    set: &CalibrationTokenSet,
    tokens: &CalibrationTokenVars,
    mode: MaskMode,
    sample: &AdaptSample,
    weights: &LossWeights,
) -> Result<LossTerms, LearnError> {
    loss_with_targets(tape, vars, cfg, set, tokens, mode, sample, &sample.targets, weights)
}

/// Supervised objective on native fisheye renders: raw predictions against
/// native ground truth, no resampling anywhere in the loop.
pub fn loss_slplus(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    set: &CalibrationTokenSet,
    tokens: &CalibrationTokenVars,
    mode: MaskMode,
    sample: &AdaptSample,
    weights: &LossWeights,
) -> Result<LossTerms, LearnError> {
    assert!(
        sample.frames.iter().all(|f| f.unwarp.is_none()),
        "the native scheme compares frames in their own domain"
    );
    loss_with_targets(tape, vars, cfg, set, tokens, mode, sample, &sample.targets, weights)
}
