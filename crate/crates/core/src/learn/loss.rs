//! The multi-term reconstruction loss shared by every training scheme.
//!
//! All four terms are built so that a prediction bitwise equal to its target
//! scores exactly zero: angles between unit vectors (rays) and between unit
//! quaternions (relative rotations) are computed from the Euclidean chord —
//! `2·asin(‖p−q‖/2)` for vectors, `4·asin(‖p−q‖/2)` for quaternions — with
//! `asin(x)` written as `π/2 − acos(x)`, which collapses to exactly zero when
//! the chord is zero. The usual `acos(⟨p,q⟩)` would instead amplify the
//! last-bit rounding of the dot product into ~1e-8 radians of noise.

use std::f64::consts::FRAC_PI_2;

use crate::nncore::{quat_product, Tape, Tensor, Var};

use super::config::LossWeights;
use super::LearnError;

/// Floor for the scene-scale normalizer of the translation term.
const SCALE_FLOOR: f64 = 1e-9;

/// One frame of on-tape predictions entering the loss.
pub struct FramePrediction {
    /// Unit quaternion `[w, x, y, z]`, 1 x 4.
    pub quat: Var,
    /// Translation, 1 x 3.
    pub trans: Var,
    /// (H·W) x 4: unit ray directions and positive ray depth, in the same
    /// domain as the target maps.
    pub dense: Var,
    /// Pixels of `dense` that carry a real prediction (resampling can leave
    /// uncovered pixels); length H·W.
    pub valid: Vec<bool>,
}

/// One frame of plain-value targets (ground truth or a frozen teacher's
/// predictions).
#[derive(Debug, Clone)]
pub struct FrameTarget {
    /// Unit quaternion `[w, x, y, z]`.
    pub quat: [f64; 4],
    pub trans: [f64; 3],
    /// (H·W) x 3 unit ray directions; rows at invalid pixels are ignored.
    pub dirs: Tensor,
    /// (H·W) x 1 positive ray depth; entries at invalid pixels are ignored
    /// but must be finite and positive (use 1.0).
    pub depth: Tensor,
    pub valid: Vec<bool>,
}

/// The loss and its pieces, all live on the tape. `ray`..`trans` are the
/// unweighted term means; `total` is their weighted sum.
pub struct LossTerms {
    pub total: Var,
    pub ray: Var,
    pub depth: Var,
    pub rot: Var,
    pub trans: Var,
    /// Per-frame masked means behind `ray` and `depth`, in frame order.
    pub frame_ray: Vec<Var>,
    pub frame_depth: Vec<Var>,
}

/// Sum of squared row differences against a constant target, then the root:
/// the per-row Euclidean chord ‖p − q‖, exactly zero for bitwise-equal rows.
fn row_chord(tape: &Tape, pred: Var, target: &Tensor) -> Var {
    let diff = tape.sub(pred, tape.leaf(target.clone()));
    let sq = tape.mul(diff, diff);
    let ones = tape.leaf(Tensor::full(vec![target.cols(), 1], 1.0));
    tape.sqrt(tape.matmul(sq, ones))
}

/// `factor · asin(chord/2)` via `π/2 − acos`, rows independent.
fn chord_to_angle(tape: &Tape, chord: Var, rows: usize, factor: f64) -> Var {
    let half = tape.scale(chord, 0.5);
    let right_angle = tape.leaf(Tensor::full(vec![rows, 1], FRAC_PI_2));
    tape.scale(tape.sub(right_angle, tape.acos_safe(half)), factor)
}

/// Mean of the masked entries of a column vector.
fn masked_mean(tape: &Tape, col: Var, mask: &[bool]) -> Var {
    let count = mask.iter().filter(|v| **v).count();
    let weights =
        Tensor::new(vec![mask.len(), 1], mask.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect());
    tape.scale(tape.sum_all(tape.mul(col, tape.leaf(weights))), 1.0 / count as f64)
}

/// Mean of 1x1 terms.
fn mean_of(tape: &Tape, terms: &[Var]) -> Var {
    let mut acc = terms[0];
    for t in &terms[1..] {
        acc = tape.add(acc, *t);
    }
    tape.scale(acc, 1.0 / terms.len() as f64)
}

fn quat_conj(q: &[f64; 4]) -> [f64; 4] {
    [q[0], q[1] * -1.0, q[2] * -1.0, q[3] * -1.0]
}

/// Median of the valid target depths across the sequence; scene scale for
/// the translation term.
fn median_target_depth(targets: &[FrameTarget]) -> f64 {
    let mut vals: Vec<f64> = Vec::new();
    for t in targets {
        for (i, &v) in t.valid.iter().enumerate() {
            if v {
                vals.push(t.depth.at(i, 0));
            }
        }
    }
    if vals.is_empty() {
        return 1.0;
    }
    vals.sort_by(f64::total_cmp);
    let n = vals.len();
    if n % 2 == 1 {
        vals[n / 2]
    } else {
        0.5 * (vals[n / 2 - 1] + vals[n / 2])
    }
}

/// Four-term loss over a sequence:
///
/// * **ray** — per-frame masked mean angle between predicted and target ray
///   directions, then averaged over frames;
/// * **depth** — per-frame masked mean `|log d̂ − log d|`, averaged over
///   frames;
/// * **rot** — mean geodesic angle between predicted and target rotations of
///   frames `1..S` relative to frame 0;
/// * **trans** — mean Euclidean error of the same relative translations,
///   divided by the median target depth of the sequence.
///
/// A pixel contributes only where both sides are valid; a frame with no such
/// pixel is an error. Target relative poses are derived with the same
/// quaternion arithmetic the tape uses, and the target quaternion's sign is
/// aligned to the prediction, so predictions bitwise equal to their targets
/// yield exactly zero. Single-frame sequences have no relative poses; their
/// pose terms are zero.
pub fn reconstruction_loss(
    tape: &Tape,
    preds: &[FramePrediction],
    targets: &[FrameTarget],
    weights: &LossWeights,
) -> Result<LossTerms, LearnError> {
    weights.validate()?;
    if preds.len() != targets.len() {
        return Err(LearnError::LengthMismatch { left: preds.len(), right: targets.len() });
    }
    if preds.is_empty() {
        return Err(LearnError::InvalidConfig("loss over an empty sequence".into()));
    }

    let mut frame_ray = Vec::with_capacity(preds.len());
    let mut frame_depth = Vec::with_capacity(preds.len());
    for (f, (p, t)) in preds.iter().zip(targets).enumerate() {
        let m = p.valid.len();
        assert_eq!(t.valid.len(), m, "frame {f}: prediction and target extents differ");
        assert_eq!(t.dirs.rows(), m, "frame {f}: target dirs rows");
        assert_eq!(t.depth.rows(), m, "frame {f}: target depth rows");
        let mask: Vec<bool> = p.valid.iter().zip(&t.valid).map(|(a, b)| *a && *b).collect();
        if mask.iter().all(|v| !v) {
            return Err(LearnError::NoValidPixels { frame: f });
        }

        let pred_dirs = tape.slice_cols(p.dense, 0, 3);
        let angles = chord_to_angle(tape, row_chord(tape, pred_dirs, &t.dirs), m, 2.0);
        frame_ray.push(masked_mean(tape, angles, &mask));

        let pred_log = tape.log(tape.slice_cols(p.dense, 3, 4));
        // Same clamp-then-ln the tape's log applies, so equal depths cancel
        // exactly.
        let target_log = t.depth.map(|x| x.max(f64::MIN_POSITIVE).ln());
        let abs_diff = tape.abs(tape.sub(pred_log, tape.leaf(target_log)));
        frame_depth.push(masked_mean(tape, abs_diff, &mask));
    }
    let ray = mean_of(tape, &frame_ray);
    let depth = mean_of(tape, &frame_depth);

    let (rot, trans) = if preds.len() >= 2 {
        let conj_signs = tape.leaf(Tensor::new(vec![1, 4], vec![1.0, -1.0, -1.0, -1.0]));
        let conj0 = tape.mul(preds[0].quat, conj_signs);
        let zero = tape.leaf(Tensor::zeros(vec![1, 1]));
        let t0_pure = tape.concat_cols(&[zero, preds[0].trans]);
        let conj0_t = quat_conj(&targets[0].quat);
        let scale = median_target_depth(targets).max(SCALE_FLOOR);

        let mut rot_terms = Vec::with_capacity(preds.len() - 1);
        let mut trans_terms = Vec::with_capacity(preds.len() - 1);
        for (p, t) in preds.iter().zip(targets).skip(1) {
            let q_rel = tape.quat_mul(p.quat, conj0);
            let mut q_rel_t = quat_product(&t.quat, &conj0_t);
            // q and -q are the same rotation; align the constant target to
            // the prediction's hemisphere.
            let qv = tape.value(q_rel);
            let dot: f64 = (0..4).map(|i| qv.at(0, i) * q_rel_t[i]).sum();
            if dot < 0.0 {
                for c in &mut q_rel_t {
                    *c = -*c;
                }
            }
            let chord = row_chord(tape, q_rel, &Tensor::new(vec![1, 4], q_rel_t.to_vec()));
            rot_terms.push(chord_to_angle(tape, chord, 1, 4.0));

            // t_rel = t_i − R_rel t_0, the rotation applied as a quaternion
            // sandwich on both sides.
            let sandwich =
                tape.quat_mul(tape.quat_mul(q_rel, t0_pure), tape.mul(q_rel, conj_signs));
            let t_rel = tape.sub(p.trans, tape.slice_cols(sandwich, 1, 4));
            let t0_pure_t = [0.0, targets[0].trans[0], targets[0].trans[1], targets[0].trans[2]];
            let rotated_t = quat_product(&quat_product(&q_rel_t, &t0_pure_t), &quat_conj(&q_rel_t));
            let t_rel_t: Vec<f64> = (0..3).map(|i| t.trans[i] - rotated_t[i + 1]).collect();
            let norm = row_chord(tape, t_rel, &Tensor::new(vec![1, 3], t_rel_t));
            trans_terms.push(tape.scale(norm, 1.0 / scale));
        }
        (mean_of(tape, &rot_terms), mean_of(tape, &trans_terms))
    } else {
        (tape.leaf(Tensor::zeros(vec![1, 1])), tape.leaf(Tensor::zeros(vec![1, 1])))
    };

    let total = tape.add(
        tape.add(tape.scale(ray, weights.w_ray), tape.scale(depth, weights.w_depth)),
        tape.add(tape.scale(rot, weights.w_rot), tape.scale(trans, weights.w_trans)),
    );
    Ok(LossTerms { total, ray, depth, rot, trans, frame_ray, frame_depth })
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::nncore::grad_check;

    use super::*;

    /// The zero-chord identities the loss construction leans on.
    #[test]
    fn asin_of_zero_via_acos_is_exactly_zero() {
        assert_eq!(0.0f64.acos(), FRAC_PI_2);
        assert_eq!(FRAC_PI_2 - 0.0f64.acos(), 0.0);
        assert_eq!(2.0 * FRAC_PI_2, PI);
    }

    fn unit(v: [f64; 3]) -> [f64; 3] {
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        [v[0] / n, v[1] / n, v[2] / n]
    }

    /// Rodrigues rotation of `v` by `angle` around unit axis `k`.
    fn rotate(v: [f64; 3], k: [f64; 3], angle: f64) -> [f64; 3] {
        let (s, c) = angle.sin_cos();
        let cross = [
            k[1] * v[2] - k[2] * v[1],
            k[2] * v[0] - k[0] * v[2],
            k[0] * v[1] - k[1] * v[0],
        ];
        let dot = k[0] * v[0] + k[1] * v[1] + k[2] * v[2];
        std::array::from_fn(|i| v[i] * c + cross[i] * s + k[i] * dot * (1.0 - c))
    }

    fn dirs_tensor(dirs: &[[f64; 3]]) -> Tensor {
        Tensor::new(vec![dirs.len(), 3], dirs.iter().flatten().copied().collect())
    }

    /// A target whose dense maps hold `dirs` and `depths` and whose pose is
    /// given directly.
    fn target(quat: [f64; 4], trans: [f64; 3], dirs: &[[f64; 3]], depths: &[f64]) -> FrameTarget {
        FrameTarget {
            quat,
            trans,
            dirs: dirs_tensor(dirs),
            depth: Tensor::new(vec![depths.len(), 1], depths.to_vec()),
            valid: vec![true; depths.len()],
        }
    }

    /// A prediction whose tape values equal the given target exactly.
    fn pred_equal_to(tape: &Tape, t: &FrameTarget) -> FramePrediction {
        let m = t.valid.len();
        let mut dense = Vec::with_capacity(m * 4);
        for i in 0..m {
            dense.extend_from_slice(t.dirs.row(i));
            dense.push(t.depth.at(i, 0));
        }
        FramePrediction {
            quat: tape.leaf(Tensor::new(vec![1, 4], t.quat.to_vec())),
            trans: tape.leaf(Tensor::new(vec![1, 3], t.trans.to_vec())),
            dense: tape.leaf(Tensor::new(vec![m, 4], dense)),
            valid: vec![true; m],
        }
    }

    fn base_dirs() -> Vec<[f64; 3]> {
        vec![
            unit([0.1, -0.2, 1.0]),
            unit([-0.3, 0.4, 0.9]),
            unit([0.0, 0.0, 1.0]),
            unit([0.5, 0.1, 1.2]),
        ]
    }

    #[test]
    fn equal_predictions_score_exactly_zero() {
        let tape = Tape::new();
        let q1 = {
            let (s, c) = (0.4f64 / 2.0).sin_cos();
            [c, 0.0, s, 0.0]
        };
        let t0 = target([1.0, 0.0, 0.0, 0.0], [0.2, -0.1, 0.3], &base_dirs(), &[1.0, 2.0, 3.0, 4.0]);
        let t1 = target(q1, [1.0, 2.0, 3.0], &base_dirs(), &[2.0, 2.5, 3.0, 3.5]);
        let preds = vec![pred_equal_to(&tape, &t0), pred_equal_to(&tape, &t1)];
        let terms =
            reconstruction_loss(&tape, &preds, &[t0, t1], &LossWeights::default()).unwrap();
        assert_eq!(tape.value(terms.total).item(), 0.0);
        assert_eq!(tape.value(terms.ray).item(), 0.0);
        assert_eq!(tape.value(terms.depth).item(), 0.0);
        assert_eq!(tape.value(terms.rot).item(), 0.0);
        assert_eq!(tape.value(terms.trans).item(), 0.0);
    }

    #[test]
    fn ray_term_recovers_a_known_angle() {
        let tape = Tape::new();
        let alpha = 0.137;
        let dirs = base_dirs();
        let t0 = target([1.0, 0.0, 0.0, 0.0], [0.0; 3], &dirs, &[1.0; 4]);
        // Rotate every direction by alpha around an axis orthogonal to it.
        let rotated: Vec<[f64; 3]> = dirs
            .iter()
            .map(|d| {
                let axis = if d[0] == 0.0 && d[1] == 0.0 {
                    [1.0, 0.0, 0.0]
                } else {
                    unit([-d[1], d[0], 0.0])
                };
                rotate(*d, axis, alpha)
            })
            .collect();
        let moved = target([1.0, 0.0, 0.0, 0.0], [0.0; 3], &rotated, &[1.0; 4]);
        let pred = pred_equal_to(&tape, &moved);
        let terms =
            reconstruction_loss(&tape, &[pred], &[t0], &LossWeights::default()).unwrap();
        let got = tape.value(terms.ray).item();
        assert!((got - alpha).abs() < 1e-12, "{got} vs {alpha}");
        assert_eq!(tape.value(terms.rot).item(), 0.0, "single frame has no pose terms");
    }

    #[test]
    fn depth_term_is_the_log_ratio() {
        let tape = Tape::new();
        let dirs = base_dirs();
        let t0 = target([1.0, 0.0, 0.0, 0.0], [0.0; 3], &dirs, &[1.0, 2.0, 3.0, 4.0]);
        let scaled = target(
            [1.0, 0.0, 0.0, 0.0],
            [0.0; 3],
            &dirs,
            &[1.0 * 0.3f64.exp(), 2.0 * 0.3f64.exp(), 3.0 * 0.3f64.exp(), 4.0 * 0.3f64.exp()],
        );
        let pred = pred_equal_to(&tape, &scaled);
        let terms =
            reconstruction_loss(&tape, &[pred], &[t0], &LossWeights::default()).unwrap();
        let got = tape.value(terms.depth).item();
        assert!((got - 0.3).abs() < 1e-12, "{got}");
    }

    #[test]
    fn rotation_term_recovers_a_known_relative_angle() {
        let tape = Tape::new();
        let beta = 0.41f64;
        let (s, c) = (beta / 2.0).sin_cos();
        let dirs = base_dirs();
        let id = [1.0, 0.0, 0.0, 0.0];
        let t0 = target(id, [0.0; 3], &dirs, &[2.0; 4]);
        let t1 = target(id, [0.0; 3], &dirs, &[2.0; 4]);
        let mut moved = t1.clone();
        moved.quat = [c, 0.0, 0.0, s];
        let preds = vec![pred_equal_to(&tape, &t0), pred_equal_to(&tape, &moved)];
        let terms = reconstruction_loss(&tape, &preds, &[t0, t1], &LossWeights::default()).unwrap();
        let got = tape.value(terms.rot).item();
        assert!((got - beta).abs() < 1e-12, "{got} vs {beta}");
    }

    #[test]
    fn negated_prediction_quaternion_is_the_same_rotation() {
        let tape = Tape::new();
        let dirs = base_dirs();
        let q1 = {
            let (s, c) = (0.7f64 / 2.0).sin_cos();
            [c, 0.0, s, 0.0]
        };
        let t0 = target([1.0, 0.0, 0.0, 0.0], [0.1, 0.2, 0.3], &dirs, &[2.0; 4]);
        let t1 = target(q1, [0.5, -0.2, 0.1], &dirs, &[2.0; 4]);
        let mut flipped = t1.clone();
        flipped.quat = [-q1[0], -q1[1], -q1[2], -q1[3]];
        let preds = vec![pred_equal_to(&tape, &t0), pred_equal_to(&tape, &flipped)];
        let terms = reconstruction_loss(&tape, &preds, &[t0, t1], &LossWeights::default()).unwrap();
        let rot = tape.value(terms.rot).item();
        let trans = tape.value(terms.trans).item();
        assert!(rot < 1e-12, "sign flip must not register as rotation error: {rot}");
        assert!(trans < 1e-12, "sign flip must not disturb the translation term: {trans}");
    }

    #[test]
    fn translation_term_is_scene_normalized() {
        let tape = Tape::new();
        let dirs = base_dirs();
        let id = [1.0, 0.0, 0.0, 0.0];
        let t0 = target(id, [0.2, -0.1, 0.3], &dirs, &[2.0; 4]);
        let t1 = target(id, [1.0, 2.0, 3.0], &dirs, &[2.0; 4]);
        let delta = [0.06, -0.02, 0.03];
        let mut moved = t1.clone();
        moved.trans = [1.0 + delta[0], 2.0 + delta[1], 3.0 + delta[2]];
        let preds = vec![pred_equal_to(&tape, &t0), pred_equal_to(&tape, &moved)];
        let terms = reconstruction_loss(&tape, &preds, &[t0, t1], &LossWeights::default()).unwrap();
        let got = tape.value(terms.trans).item();
        let want = (delta.iter().map(|d| d * d).sum::<f64>()).sqrt() / 2.0;
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn doubling_a_weight_adds_one_term_to_the_total() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dirs = base_dirs();
        let t0 = target([1.0, 0.0, 0.0, 0.0], [0.0; 3], &dirs, &[1.0, 2.0, 3.0, 4.0]);
        let noisy = FramePrediction {
            quat: tape.l2_normalize_rows(
                tape.leaf(Tensor::new(vec![1, 4], vec![0.9, 0.1, -0.2, 0.05])),
            ),
            trans: tape.leaf(Tensor::new(vec![1, 3], vec![0.3, -0.2, 0.15])),
            dense: tape.leaf(Tensor::randn(vec![4, 4], 1.0, &mut rng).map(|x| x.abs() + 0.4)),
            valid: vec![true; 4],
        };
        let noisy2 = FramePrediction {
            quat: noisy.quat,
            trans: noisy.trans,
            dense: noisy.dense,
            valid: vec![true; 4],
        };
        let targets = vec![t0.clone()];
        let base = reconstruction_loss(&tape, &[noisy], &targets, &LossWeights::default()).unwrap();
        let double = reconstruction_loss(
            &tape,
            &[noisy2],
            &targets,
            &LossWeights { w_depth: 2.0, ..LossWeights::default() },
        )
        .unwrap();
        let diff = tape.value(double.total).item() - tape.value(base.total).item();
        let depth = tape.value(base.depth).item();
        assert!(depth > 0.0);
        assert!((diff - depth).abs() < 1e-12, "{diff} vs {depth}");
    }

    #[test]
    fn invalid_pixels_do_not_influence_the_loss() {
        let tape = Tape::new();
        let dirs = base_dirs();
        let mut t0 = target([1.0, 0.0, 0.0, 0.0], [0.0; 3], &dirs, &[1.0, 2.0, 3.0, 4.0]);
        t0.valid[1] = false;
        let mut corrupted = t0.clone();
        corrupted.dirs.set(1, 0, 17.0);
        corrupted.depth.set(1, 0, 123.0);

        let mk_pred = |mask_pred: bool| {
            let mut p = pred_equal_to(&tape, &target([1.0; 4], [0.0; 3], &dirs, &[1.5, 9.9, 2.5, 3.5]));
            p.quat = tape.leaf(Tensor::new(vec![1, 4], vec![1.0, 0.0, 0.0, 0.0]));
            if mask_pred {
                // Same invalidity expressed on the prediction side instead.
                p.valid[1] = false;
            }
            p
        };

        let w = LossWeights::default();
        let a = reconstruction_loss(&tape, &[mk_pred(false)], &[t0.clone()], &w).unwrap();
        let b = reconstruction_loss(&tape, &[mk_pred(false)], &[corrupted.clone()], &w).unwrap();
        assert_eq!(tape.value(a.total).item(), tape.value(b.total).item());

        let mut all_valid_target = corrupted;
        all_valid_target.valid[1] = true;
        all_valid_target.dirs.set(1, 0, dirs[1][0]);
        all_valid_target.depth.set(1, 0, 2.0);
        let c = reconstruction_loss(&tape, &[mk_pred(true)], &[all_valid_target], &w).unwrap();
        assert_eq!(
            tape.value(a.total).item(),
            tape.value(c.total).item(),
            "prediction-side invalidity masks identically"
        );
    }

    #[test]
    fn fully_invalid_frame_is_an_error() {
        let tape = Tape::new();
        let dirs = base_dirs();
        let t0 = target([1.0, 0.0, 0.0, 0.0], [0.0; 3], &dirs, &[1.0; 4]);
        let mut pred = pred_equal_to(&tape, &t0);
        pred.valid = vec![false; 4];
        let err = reconstruction_loss(&tape, &[pred], &[t0], &LossWeights::default());
        assert!(matches!(err, Err(LearnError::NoValidPixels { frame: 0 })));
    }

    #[test]
    fn frame_count_mismatch_is_an_error() {
        let tape = Tape::new();
        let dirs = base_dirs();
        let t0 = target([1.0, 0.0, 0.0, 0.0], [0.0; 3], &dirs, &[1.0; 4]);
        let pred = pred_equal_to(&tape, &t0);
        let err = reconstruction_loss(&tape, &[pred], &[], &LossWeights::default());
        assert!(matches!(err, Err(LearnError::LengthMismatch { left: 1, right: 0 })));
    }

    #[test]
    fn permuting_frames_permutes_the_frame_terms() {
        let tape = Tape::new();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dirs = base_dirs();
        let mk_noisy = |rng: &mut ChaCha8Rng| FramePrediction {
            quat: tape.leaf(Tensor::new(vec![1, 4], vec![1.0, 0.0, 0.0, 0.0])),
            trans: tape.leaf(Tensor::zeros(vec![1, 3])),
            dense: tape.leaf(Tensor::randn(vec![4, 4], 1.0, rng).map(|x| x.abs() + 0.4)),
            valid: vec![true; 4],
        };
        let targets: Vec<FrameTarget> = (0..3)
            .map(|i| {
                target([1.0, 0.0, 0.0, 0.0], [0.0; 3], &dirs, &[1.0 + i as f64, 2.0, 3.0, 4.0])
            })
            .collect();
        let preds: Vec<FramePrediction> = (0..3).map(|_| mk_noisy(&mut rng)).collect();
        let re_preds: Vec<FramePrediction> = [2usize, 0, 1]
            .iter()
            .map(|&i| FramePrediction {
                quat: preds[i].quat,
                trans: preds[i].trans,
                dense: preds[i].dense,
                valid: preds[i].valid.clone(),
            })
            .collect();
        let re_targets: Vec<FrameTarget> =
            [2usize, 0, 1].iter().map(|&i| targets[i].clone()).collect();

        let w = LossWeights::default();
        let a = reconstruction_loss(&tape, &preds, &targets, &w).unwrap();
        let b = reconstruction_loss(&tape, &re_preds, &re_targets, &w).unwrap();
        for (i, &j) in [2usize, 0, 1].iter().enumerate() {
            assert_eq!(
                tape.value(b.frame_ray[i]).item(),
                tape.value(a.frame_ray[j]).item(),
                "ray term of original frame {j}"
            );
            assert_eq!(
                tape.value(b.frame_depth[i]).item(),
                tape.value(a.frame_depth[j]).item(),
                "depth term of original frame {j}"
            );
        }
        let (ra, rb) = (tape.value(a.ray).item(), tape.value(b.ray).item());
        assert!((ra - rb).abs() <= 1e-12 * ra.abs().max(1.0));
    }

    #[test]
    fn loss_gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let dirs = base_dirs();
        let t0 = target([1.0, 0.0, 0.0, 0.0], [0.2, -0.1, 0.3], &dirs, &[1.0, 2.0, 3.0, 4.0]);
        let q1 = {
            let (s, c) = (0.3f64 / 2.0).sin_cos();
            [c, 0.0, s, 0.0]
        };
        let t1 = target(q1, [1.0, 0.5, -0.2], &dirs, &[2.0, 2.0, 3.0, 3.0]);
        let w = LossWeights::default();

        // Frame 1's dense map, pose quaternion (through normalization), and
        // translation each probed independently. The dense probe stays near
        // the target so every chord remains strictly inside acos's domain.
        let mut dense0 = Vec::with_capacity(16);
        for i in 0..4 {
            dense0.extend_from_slice(t1.dirs.row(i));
            dense0.push(t1.depth.at(i, 0));
        }
        let noise = Tensor::randn(vec![4, 4], 0.05, &mut rng);
        let dense0 = Tensor::new(vec![4, 4], dense0).zip(&noise, |x, n| x + n);
        let loss_for = |tape: &Tape, quat: Var, trans: Var, dense: Var| {
            let p0 = pred_equal_to(tape, &t0);
            let p1 = FramePrediction { quat, trans, dense, valid: vec![true; 4] };
            let terms = reconstruction_loss(tape, &[p0, p1], &[t0.clone(), t1.clone()], &w).unwrap();
            terms.total
        };
        let fixed_quat = Tensor::new(vec![1, 4], vec![0.9, 0.1, 0.3, -0.1]);
        let fixed_trans = Tensor::new(vec![1, 3], vec![0.8, 0.6, -0.1]);

        let e = grad_check(
            |tape, v| {
                let q = tape.l2_normalize_rows(tape.leaf(fixed_quat.clone()));
                loss_for(tape, q, tape.leaf(fixed_trans.clone()), v)
            },
            &dense0,
            1e-5,
        );
        assert!(e < 1e-6, "dense: {e}");

        let e = grad_check(
            |tape, v| {
                let q = tape.l2_normalize_rows(v);
                loss_for(tape, q, tape.leaf(fixed_trans.clone()), tape.leaf(dense0.clone()))
            },
            &fixed_quat,
            1e-5,
        );
        assert!(e < 1e-6, "quat: {e}");

        let e = grad_check(
            |tape, v| {
                let q = tape.l2_normalize_rows(tape.leaf(fixed_quat.clone()));
                loss_for(tape, q, v, tape.leaf(dense0.clone()))
            },
            &fixed_trans,
            1e-5,
        );
        assert!(e < 1e-6, "trans: {e}");
    }
}
