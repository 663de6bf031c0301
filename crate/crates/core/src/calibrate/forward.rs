//! The calibrated forward pass: classify each frame, then complete the
//! network with calibration tokens and camera-type masks.

use crate::backbone::{
    encode_prefix, run_suffix, BackboneConfig, BackboneVars, GlobalInjection, Injection,
    SequenceOutput, StageInjection,
};
use crate::camera::DenseMap;
use crate::nncore::{MaskMode, Tape};

use super::classifier::{classify_camera, CameraClassifier};
use super::masks::{build_frame_mask, build_global_mask};
use super::tokens::{CalibrationTokenSet, CalibrationTokenVars};

/// Runs the first `split_layer` encoder layers plain, classifies every
/// frame from its class token, and finishes the forward pass with
/// calibration tokens masked according to the predictions. Returns the
/// output and the predicted per-frame fisheye bits.
pub fn forward_calibrated(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    set: &CalibrationTokenSet,
    tokens: &CalibrationTokenVars,
    classifier: &CameraClassifier,
    images: &[DenseMap],
    mode: MaskMode,
) -> (SequenceOutput, Vec<bool>) {
    let prefix = encode_prefix(tape, vars, cfg, images, set.split_layer);
    let split_features = &prefix.class_features[set.split_layer - 1];
    let bits: Vec<bool> =
        split_features.iter().map(|f| classify_camera(f.data(), classifier)).collect();
    let out = forward_with_labels(tape, vars, cfg, set, tokens, &bits, images, mode);
    (out, bits)
}

/// The same pass with camera types supplied directly — used during training,
/// where masks come from ground-truth labels rather than the classifier.
pub fn forward_with_labels(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    set: &CalibrationTokenSet,
    tokens: &CalibrationTokenVars,
    fisheye: &[bool],
    images: &[DenseMap],
    mode: MaskMode,
) -> SequenceOutput {
    assert_eq!(fisheye.len(), images.len(), "one camera-type bit per frame");
    assert_eq!(tokens.encoder.len(), cfg.encoder_layers - set.split_layer);
    assert_eq!(tokens.frame.len(), cfg.aa_blocks);
    assert_eq!(tokens.global.len(), cfg.aa_blocks);

    let n = cfg.n_patches();
    let k = set.k;

    // Encoder layers still carry the class token, which attends like an
    // image token, so those masks span 1 + N image rows.
    let encoder_mask: Vec<_> =
        fisheye.iter().map(|&bit| build_frame_mask(bit, 1 + n, k)).collect();
    let frame_mask: Vec<_> = fisheye.iter().map(|&bit| build_frame_mask(bit, n, k)).collect();
    let global_mask = build_global_mask(fisheye, n, k);

    let injection = Injection {
        mode,
        encoder: (0..cfg.encoder_layers)
            .map(|layer| {
                (layer >= set.split_layer).then(|| StageInjection {
                    tokens: tokens.encoder[layer - set.split_layer],
                    masks: encoder_mask.clone(),
                })
            })
            .collect(),
        frame: (0..cfg.aa_blocks)
            .map(|block| {
                Some(StageInjection { tokens: tokens.frame[block], masks: frame_mask.clone() })
            })
            .collect(),
        global: (0..cfg.aa_blocks)
            .map(|block| {
                Some(GlobalInjection { tokens: tokens.global[block], mask: global_mask.clone() })
            })
            .collect(),
    };

    let prefix = encode_prefix(tape, vars, cfg, images, set.split_layer);
    run_suffix(tape, vars, cfg, prefix, Some(&injection))
}
