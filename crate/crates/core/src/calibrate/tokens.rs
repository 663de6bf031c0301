//! The trainable calibration-token banks.

use std::collections::BTreeMap;

use rand::Rng;

use crate::backbone::BackboneConfig;
use crate::nncore::{Tape, Tensor, Var};

/// Fresh tokens start essentially at zero so an untrained set barely
/// perturbs the frozen backbone.
pub const TOKEN_INIT_STD: f64 = 1e-6;

/// One K×d bank of calibration tokens per injected layer, organized by
/// module: encoder banks for layers `split_layer..encoder_layers`, and one
/// frame-stage plus one global-stage bank per alternating-attention block.
/// The banks are storage only — they carry no backbone weights and are
/// checkpointed under their own names.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTokenSet {
    /// Tokens appended per layer (K).
    pub k: usize,
    /// Encoder depth L0 that runs before classification; banks exist only
    /// for the layers after it.
    pub split_layer: usize,
    pub encoder: Vec<Tensor>,
    pub frame: Vec<Tensor>,
    pub global: Vec<Tensor>,
}

/// The same banks lifted onto a tape (as parameters for training, leaves
/// for inference).
#[derive(Debug, Clone)]
pub struct CalibrationTokenVars {
    pub encoder: Vec<Var>,
    pub frame: Vec<Var>,
    pub global: Vec<Var>,
}

impl CalibrationTokenVars {
    /// Every bank, in checkpoint-name order.
    pub fn all(&self) -> Vec<Var> {
        self.encoder.iter().chain(&self.frame).chain(&self.global).copied().collect()
    }
}

impl CalibrationTokenSet {
    pub fn init(
        cfg: &BackboneConfig,
        k: usize,
        split_layer: usize,
        rng: &mut impl Rng,
    ) -> CalibrationTokenSet {
        Self::init_with_std(cfg, k, split_layer, TOKEN_INIT_STD, rng)
    }

    /// [`init`](Self::init) with an explicit initialization scale.
    pub fn init_with_std(
        cfg: &BackboneConfig,
        k: usize,
        split_layer: usize,
        std: f64,
        rng: &mut impl Rng,
    ) -> CalibrationTokenSet {
        assert!(k >= 1, "need at least one calibration token");
        assert!(
            (1..=cfg.encoder_layers).contains(&split_layer),
            "split layer must leave at least one plain encoder layer and lie within the encoder"
        );
        assert!(std >= 0.0 && std.is_finite(), "init scale must be a finite non-negative number");
        let d = cfg.embed_dim;
        let mut bank = || Tensor::randn(vec![k, d], std, rng);
        let encoder = (split_layer..cfg.encoder_layers).map(|_| bank()).collect();
        let frame = (0..cfg.aa_blocks).map(|_| bank()).collect();
        let global = (0..cfg.aa_blocks).map(|_| bank()).collect();
        CalibrationTokenSet { k, split_layer, encoder, frame, global }
    }

    /// Total token count over all banks: (L1 − L0 + 2·L2)·K.
    pub fn token_count(&self) -> usize {
        (self.encoder.len() + self.frame.len() + self.global.len()) * self.k
    }

    /// Banks under their checkpoint names.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, t) in self.encoder.iter().enumerate() {
            out.push((format!("calib.encoder.{i}"), t.clone()));
        }
        for (i, t) in self.frame.iter().enumerate() {
            out.push((format!("calib.frame.{i}"), t.clone()));
        }
        for (i, t) in self.global.iter().enumerate() {
            out.push((format!("calib.global.{i}"), t.clone()));
        }
        out
    }

    /// Rebuilds a set from checkpointed tensors, validating counts and
    /// shapes against the backbone configuration.
    pub fn from_named(
        cfg: &BackboneConfig,
        k: usize,
        split_layer: usize,
        tensors: &BTreeMap<String, Tensor>,
    ) -> Result<CalibrationTokenSet, String> {
        assert!(k >= 1 && (1..=cfg.encoder_layers).contains(&split_layer));
        let take = |name: String| -> Result<Tensor, String> {
            let t = tensors.get(&name).ok_or_else(|| format!("missing tensor {name}"))?;
            if t.shape() != [k, cfg.embed_dim] {
                return Err(format!(
                    "{name}: expected {k}x{}, found {:?}",
                    cfg.embed_dim,
                    t.shape()
                ));
            }
            Ok(t.clone())
        };
        Ok(CalibrationTokenSet {
            k,
            split_layer,
            encoder: (0..cfg.encoder_layers - split_layer)
                .map(|i| take(format!("calib.encoder.{i}")))
                .collect::<Result<_, _>>()?,
            frame: (0..cfg.aa_blocks)
                .map(|i| take(format!("calib.frame.{i}")))
                .collect::<Result<_, _>>()?,
            global: (0..cfg.aa_blocks)
                .map(|i| take(format!("calib.global.{i}")))
                .collect::<Result<_, _>>()?,
        })
    }

    /// Lifts the banks onto a tape. Trainable vars accumulate gradients;
    /// leaves are read-only inputs.
    pub fn vars(&self, tape: &Tape, trainable: bool) -> CalibrationTokenVars {
        let lift = |t: &Tensor| if trainable { tape.param(t.clone()) } else { tape.leaf(t.clone()) };
        CalibrationTokenVars {
            encoder: self.encoder.iter().map(&lift).collect(),
            frame: self.frame.iter().map(&lift).collect(),
            global: self.global.iter().map(&lift).collect(),
        }
    }

    /// Writes updated values back from a tape (after an optimizer step).
    pub fn absorb(&mut self, tape: &Tape, vars: &CalibrationTokenVars) {
        for (t, v) in self.encoder.iter_mut().zip(&vars.encoder) {
            *t = tape.value(*v).as_ref().clone();
        }
        for (t, v) in self.frame.iter_mut().zip(&vars.frame) {
            *t = tape.value(*v).as_ref().clone();
        }
        for (t, v) in self.global.iter_mut().zip(&vars.global) {
            *t = tape.value(*v).as_ref().clone();
        }
    }
}
