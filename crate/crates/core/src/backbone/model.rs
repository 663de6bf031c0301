//! Forward passes of the reconstruction transformer.
//!
//! The pipeline is patchify → L1 encoder layers (per frame) → L2 alternating
//! attention blocks (frame-wise stage, then global stage) → pose and dense
//! heads. Every stage can optionally receive appended calibration tokens and
//! an attention mask via [`Injection`]; the tokens are appended before a
//! block, jointly attended, and dropped when the block ends, so they never
//! persist between layers.
//!
//! The driver is split into [`encode_prefix`] and [`run_suffix`] so a caller
//! can pause after a few encoder layers, inspect class tokens (for camera
//! classification), build masks, and resume — without recomputing anything.

use super::config::BackboneConfig;
use super::pose::CameraPose;
use super::weights::{BackboneVars, BlockVars};
use crate::camera::{DenseMap, GEOM_CHANNELS};
use crate::nncore::{MaskMode, Tap, Tape, Tensor, Var};
use std::rc::Rc;

/// Calibration tokens and per-frame masks for one per-frame attention stage
/// (an encoder layer or a frame-wise stage).
pub struct StageInjection {
    /// K x d token rows appended to every frame.
    pub tokens: Var,
    /// One (T+K) x (T+K) mask per frame, where T is the frame's token count.
    pub masks: Vec<Tensor>,
}

/// Calibration tokens and the single joint mask for a global stage.
pub struct GlobalInjection {
    pub tokens: Var,
    /// (S·N+K) x (S·N+K) mask over all frames' tokens.
    pub mask: Tensor,
}

/// Where and how calibration tokens enter a forward pass. Entries are `None`
/// for stages that run plain.
pub struct Injection {
    pub mode: MaskMode,
    /// Per encoder layer, length L1.
    pub encoder: Vec<Option<StageInjection>>,
    /// Per alternating-attention block, length L2.
    pub frame: Vec<Option<StageInjection>>,
    pub global: Vec<Option<GlobalInjection>>,
}

/// Token matrices after the first `layers_run` encoder layers.
pub struct EncodedPrefix {
    /// Per frame, (1+N) x d.
    pub tokens: Vec<Var>,
    /// `class_features[l][s]`: frame s's class token after encoder layer l+1.
    pub class_features: Vec<Vec<Tensor>>,
    pub layers_run: usize,
}

/// Predictions for one frame, live on the tape.
pub struct FrameOutput {
    /// Unit quaternion `[w, x, y, z]`, 1 x 4.
    pub quat: Var,
    /// Translation, 1 x 3.
    pub trans: Var,
    /// (H·W) x 4 rows in image row-major order: ray direction xyz + ray depth.
    pub dense: Var,
}

pub struct SequenceOutput {
    pub frames: Vec<FrameOutput>,
    /// Class tokens per encoder layer per frame (values, not tape nodes).
    pub class_features: Vec<Vec<Tensor>>,
}

impl FrameOutput {
    pub fn pose(&self, tape: &Tape) -> CameraPose {
        let q = tape.value(self.quat);
        let t = tape.value(self.trans);
        CameraPose::from_quaternion(
            [q.at(0, 0), q.at(0, 1), q.at(0, 2), q.at(0, 3)],
            [t.at(0, 0), t.at(0, 1), t.at(0, 2)],
        )
    }

    /// Materializes the dense prediction as an all-valid geometry map.
    pub fn dense_map(&self, tape: &Tape, cfg: &BackboneConfig) -> DenseMap {
        let v = tape.value(self.dense);
        assert_eq!(v.shape(), &[cfg.width * cfg.height, GEOM_CHANNELS]);
        DenseMap {
            width: cfg.width,
            height: cfg.height,
            channels: GEOM_CHANNELS,
            data: v.data().to_vec(),
            valid: vec![true; cfg.width * cfg.height],
        }
    }
}

/// Fixed 2-D sinusoidal position encodings over the patch grid, N x d: a
/// quarter of the channels each for sin/cos of the grid column and row.
pub fn position_encoding(cfg: &BackboneConfig) -> Tensor {
    let (gw, gh) = cfg.grid();
    let d = cfg.embed_dim;
    let quarter = d / 4;
    Tensor::from_fn(gw * gh, d, |n, c| {
        let pos = if c < d / 2 { (n % gw) as f64 } else { (n / gw) as f64 };
        let idx = c % (d / 2);
        let omega = 1.0 / 10000f64.powf((idx % quarter) as f64 / quarter as f64);
        if idx < quarter {
            (pos * omega).sin()
        } else {
            (pos * omega).cos()
        }
    })
}

/// Flattens an RGB image into its patch matrix, N x (3 P^2): patches in grid
/// row-major order, pixels row-major within the patch, channels innermost.
fn patch_matrix(cfg: &BackboneConfig, image: &DenseMap) -> Tensor {
    assert_eq!(
        (image.width, image.height, image.channels),
        (cfg.width, cfg.height, 3),
        "RGB image matching the config expected"
    );
    let p = cfg.patch_size;
    let (gw, _) = cfg.grid();
    Tensor::from_fn(cfg.n_patches(), 3 * p * p, |n, c| {
        let (py, px) = (n / gw, n % gw);
        let (pix, ch) = (c / 3, c % 3);
        let (dy, dx) = (pix / p, pix % p);
        image.pixel(px * p + dx, py * p + dy)[ch]
    })
}

/// Projects an image to its (1+N) x d token matrix: row 0 is the class
/// token, rows 1..=N are patch projections plus position encodings.
pub fn patchify(tape: &Tape, vars: &BackboneVars, cfg: &BackboneConfig, image: &DenseMap) -> Var {
    let patches = tape.leaf(patch_matrix(cfg, image));
    let projected = tape.add_row(tape.matmul(patches, vars.patch_weight), vars.patch_bias);
    let with_pe = tape.add(projected, tape.leaf(position_encoding(cfg)));
    tape.concat_rows(&[vars.class_token, with_pe])
}

/// One pre-norm transformer block. With `extra = (tokens, mask, mode)`, the
/// K token rows are appended before the block and sliced off after it, and
/// attention runs under the mask.
fn block_forward(
    tape: &Tape,
    w: &BlockVars,
    heads: usize,
    x: Var,
    extra: Option<(Var, &Tensor, MaskMode)>,
) -> Var {
    let t_img = tape.value(x).rows();
    let x = match extra {
        Some((tokens, _, _)) => tape.concat_rows(&[x, tokens]),
        None => x,
    };
    let xn = tape.layer_norm(x, w.ln1_gain, w.ln1_bias);
    let q = tape.add_row(tape.matmul(xn, w.wq), w.bq);
    let k = tape.add_row(tape.matmul(xn, w.wk), w.bk);
    let v = tape.add_row(tape.matmul(xn, w.wv), w.bv);
    let dh = tape.value(q).cols() / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut head_outs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
        let kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
        let vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
        let logits = tape.scale(tape.matmul(qh, tape.transpose(kh)), scale);
        let probs = match extra {
            Some((_, mask, mode)) => tape.masked_softmax_rows(logits, mask, mode),
            None => tape.softmax_rows(logits),
        };
        head_outs.push(tape.matmul(probs, vh));
    }
    let attn = tape.add_row(tape.matmul(tape.concat_cols(&head_outs), w.wo), w.bo);
    let x = tape.add(x, attn);
    let xn2 = tape.layer_norm(x, w.ln2_gain, w.ln2_bias);
    let hidden = tape.gelu(tape.add_row(tape.matmul(xn2, w.w_up), w.b_up));
    let x = tape.add(x, tape.add_row(tape.matmul(hidden, w.w_down), w.b_down));
    if extra.is_some() {
        tape.slice_rows(x, 0, t_img)
    } else {
        x
    }
}

/// Frame-wise attention stage: the block runs on every frame independently
/// with shared weights.
fn frame_stage(
    tape: &Tape,
    w: &BlockVars,
    heads: usize,
    frames: &[Var],
    inj: Option<&StageInjection>,
    mode: MaskMode,
) -> Vec<Var> {
    if let Some(i) = inj {
        assert_eq!(i.masks.len(), frames.len(), "one mask per frame");
    }
    frames
        .iter()
        .enumerate()
        .map(|(s, &x)| {
            let extra = inj.map(|i| (i.tokens, &i.masks[s], mode));
            block_forward(tape, w, heads, x, extra)
        })
        .collect()
}

/// Global attention stage: all frames' tokens are concatenated and attended
/// jointly, then split back per frame.
fn global_stage(
    tape: &Tape,
    w: &BlockVars,
    heads: usize,
    frames: &[Var],
    inj: Option<&GlobalInjection>,
    mode: MaskMode,
) -> Vec<Var> {
    let n = tape.value(frames[0]).rows();
    let all = tape.concat_rows(frames);
    let out = block_forward(tape, w, heads, all, inj.map(|i| (i.tokens, &i.mask, mode)));
    (0..frames.len()).map(|s| tape.slice_rows(out, s * n, (s + 1) * n)).collect()
}

/// Runs patchify and the first `upto` encoder layers, plain (no injection —
/// calibration tokens only ever enter after the classification split).
pub fn encode_prefix(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    images: &[DenseMap],
    upto: usize,
) -> EncodedPrefix {
    assert!(upto <= cfg.encoder_layers, "prefix deeper than the encoder");
    assert!(!images.is_empty(), "empty sequence");
    let mut tokens: Vec<Var> = images.iter().map(|img| patchify(tape, vars, cfg, img)).collect();
    let mut class_features = Vec::with_capacity(upto);
    for layer in 0..upto {
        let w = &vars.encoder[layer];
        tokens = tokens.iter().map(|&x| block_forward(tape, w, cfg.heads, x, None)).collect();
        class_features.push(tokens.iter().map(|&x| class_row(tape, x)).collect());
    }
    EncodedPrefix { tokens, class_features, layers_run: upto }
}

fn class_row(tape: &Tape, x: Var) -> Tensor {
    let v = tape.value(x);
    Tensor::new(vec![1, v.cols()], v.row(0).to_vec())
}

/// Completes a forward pass from an encoded prefix: remaining encoder
/// layers, all alternating-attention blocks, and the decoder heads.
pub fn run_suffix(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    prefix: EncodedPrefix,
    injection: Option<&Injection>,
) -> SequenceOutput {
    let EncodedPrefix { mut tokens, mut class_features, layers_run } = prefix;
    if let Some(inj) = injection {
        assert_eq!(inj.encoder.len(), cfg.encoder_layers, "one encoder entry per layer");
        assert_eq!(inj.frame.len(), cfg.aa_blocks, "one frame entry per block");
        assert_eq!(inj.global.len(), cfg.aa_blocks, "one global entry per block");
        assert!(
            inj.encoder[..layers_run].iter().all(Option::is_none),
            "injection into an already-run encoder layer"
        );
    }
    let mode = injection.map_or(MaskMode::PreSoftmax, |i| i.mode);
    for layer in layers_run..cfg.encoder_layers {
        let w = &vars.encoder[layer];
        let inj_layer = injection.and_then(|i| i.encoder[layer].as_ref());
        if let Some(i) = inj_layer {
            assert_eq!(i.masks.len(), tokens.len(), "one mask per frame");
        }
        tokens = tokens
            .iter()
            .enumerate()
            .map(|(s, &x)| {
                let extra = inj_layer.map(|i| (i.tokens, &i.masks[s], mode));
                block_forward(tape, w, cfg.heads, x, extra)
            })
            .collect();
        class_features.push(tokens.iter().map(|&x| class_row(tape, x)).collect());
    }

    // The class token has served its purpose; alternating attention and the
    // heads see image tokens only.
    let n = cfg.n_patches();
    let mut frames: Vec<Var> = tokens.iter().map(|&x| tape.slice_rows(x, 1, 1 + n)).collect();
    for block in 0..cfg.aa_blocks {
        frames = frame_stage(
            tape,
            &vars.frame[block],
            cfg.heads,
            &frames,
            injection.and_then(|i| i.frame[block].as_ref()),
            mode,
        );
        frames = global_stage(
            tape,
            &vars.global[block],
            cfg.heads,
            &frames,
            injection.and_then(|i| i.global[block].as_ref()),
            mode,
        );
    }

    let taps = patch_to_image_taps(cfg);
    let frames = frames
        .iter()
        .map(|&x| decode_frame(tape, vars, cfg, x, Rc::clone(&taps)))
        .collect();
    SequenceOutput { frames, class_features }
}

/// Plain forward pass over a sequence of frames.
pub fn forward(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    images: &[DenseMap],
) -> SequenceOutput {
    let prefix = encode_prefix(tape, vars, cfg, images, cfg.encoder_layers);
    run_suffix(tape, vars, cfg, prefix, None)
}

/// Pose head (mean pool → MLP → unit quaternion + translation) and dense
/// head (per-patch MLP → per-pixel direction + depth).
fn decode_frame(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    x: Var,
    taps: Rc<Vec<Tap>>,
) -> FrameOutput {
    let pose = &vars.pose_head;
    let pooled = tape.mean_rows(x);
    let ph = tape.gelu(tape.add_row(tape.matmul(pooled, pose.w1), pose.b1));
    let pout = tape.add_row(tape.matmul(ph, pose.w2), pose.b2);
    let quat = tape.l2_normalize_rows(tape.slice_cols(pout, 0, 4));
    let trans = tape.slice_cols(pout, 4, 7);

    let dense = &vars.dense_head;
    let dh = tape.gelu(tape.add_row(tape.matmul(x, dense.w1), dense.b1));
    let dout = tape.add_row(tape.matmul(dh, dense.w2), dense.b2);
    let pixels = cfg.n_patches() * cfg.patch_size * cfg.patch_size;
    let flat = tape.reshape(dout, vec![pixels, 4]);
    let dirs = tape.l2_normalize_rows(tape.slice_cols(flat, 0, 3));
    let depth = tape.exp(tape.slice_cols(flat, 3, 4));
    let patch_major = tape.concat_cols(&[dirs, depth]);
    FrameOutput { quat, trans, dense: tape.gather_blend(patch_major, taps) }
}

/// Row permutation taking the dense head's patch-major pixel order to image
/// row-major order, as single-tap blends.
fn patch_to_image_taps(cfg: &BackboneConfig) -> Rc<Vec<Tap>> {
    let p = cfg.patch_size;
    let (gw, _) = cfg.grid();
    let mut taps = Vec::with_capacity(cfg.width * cfg.height);
    for y in 0..cfg.height {
        for x in 0..cfg.width {
            let patch = (y / p) * gw + x / p;
            let within = (y % p) * p + x % p;
            taps.push([(patch * p * p + within, 1.0), (0, 0.0), (0, 0.0), (0, 0.0)]);
        }
    }
    Rc::new(taps)
}
