//! Backbone pretraining on perspective imagery.
//!
//! The backbone learns multi-view geometry from pinhole renders only; every
//! later stage treats it as read-only. [`PretrainedBackbone`] enforces that
//! at the type level — its weights can only ever reach a tape as frozen
//! leaves, so a gradient cannot touch them no matter what a training loop
//! does downstream.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::backbone::{forward, BackboneConfig, BackboneVars, BackboneWeights};
use crate::camera::DenseMap;
use crate::nncore::{Tape, Tensor};
use crate::scenegen::SceneSample;

use super::config::{schedule, Decay, LossWeights};
use super::eval::evaluate_corpus;
use super::loss::{reconstruction_loss, FramePrediction, FrameTarget};
use super::optim::{adamw_step, AdamHyper, AdamState};
use super::LearnError;

/// A backbone that finished pretraining. The weights are private: they can
/// be read, serialized, and mirrored onto a tape as non-trainable leaves,
/// but nothing can lift them as parameters again.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainedBackbone {
    weights: BackboneWeights,
}

impl PretrainedBackbone {
    /// Wraps externally trained or deserialized weights.
    pub fn from_weights(weights: BackboneWeights) -> PretrainedBackbone {
        PretrainedBackbone { weights }
    }

    pub fn weights(&self) -> &BackboneWeights {
        &self.weights
    }

    pub fn config(&self) -> &BackboneConfig {
        &self.weights.config
    }

    /// Frozen mirror of the weights: always leaves, never parameters.
    pub fn vars(&self, tape: &Tape) -> BackboneVars {
        self.weights.vars(tape, false)
    }

    pub fn into_weights(self) -> BackboneWeights {
        self.weights
    }
}

/// Pretraining hyperparameters. The defaults run a desk-scale budget.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub iterations: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub decay: Decay,
    pub loss: LossWeights,
    pub weight_decay: f64,
    /// Held-out depth Rel the pretrained model must beat.
    pub target_rel: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> PretrainConfig {
        PretrainConfig {
            iterations: 1200,
            lr_start: 1e-2,
            lr_end: 1e-4,
            decay: Decay::Cosine,
            loss: LossWeights::default(),
            weight_decay: 0.0,
            target_rel: 0.15,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let bad = |msg: String| Err(LearnError::InvalidConfig(msg));
        if self.iterations == 0 {
            return bad("iterations must be at least 1".into());
        }
        for (name, v) in [("lr_start", self.lr_start), ("lr_end", self.lr_end)] {
            if !v.is_finite() || v <= 0.0 {
                return bad(format!("{name} = {v} must be finite and positive"));
            }
        }
        if self.lr_end > self.lr_start {
            return bad(format!(
                "lr_end = {} exceeds lr_start = {}",
                self.lr_end, self.lr_start
            ));
        }
        if !self.weight_decay.is_finite() || self.weight_decay < 0.0 {
            return bad(format!("weight_decay = {} must be finite and >= 0", self.weight_decay));
        }
        if !self.target_rel.is_finite() || self.target_rel <= 0.0 {
            return bad(format!("target_rel = {} must be finite and positive", self.target_rel));
        }
        self.loss.validate()
    }
}

/// What pretraining did: per-iteration loss and the final held-out depth Rel.
#[derive(Debug, Clone)]
pub struct PretrainReport {
    pub losses: Vec<f64>,
    pub holdout_rel: f64,
}

/// Plain forward wrapped as loss-ready predictions (full-frame validity).
fn plain_predictions(
    tape: &Tape,
    vars: &BackboneVars,
    cfg: &BackboneConfig,
    images: &[DenseMap],
) -> Vec<FramePrediction> {
    let rows = cfg.width * cfg.height;
    forward(tape, vars, cfg, images)
        .frames
        .iter()
        .map(|fo| FramePrediction {
            quat: fo.quat,
            trans: fo.trans,
            dense: fo.dense,
            valid: vec![true; rows],
        })
        .collect()
}

fn require_perspective(samples: &[SceneSample], which: &str) -> Result<(), LearnError> {
    for (i, s) in samples.iter().enumerate() {
        if s.camera_types.iter().any(|fisheye| *fisheye) {
            return Err(LearnError::InvalidConfig(format!(
                "{which} sequence {i} contains a fisheye frame; pretraining is perspective-only"
            )));
        }
    }
    Ok(())
}

/// Trains a backbone from scratch on perspective sequences and verifies it
/// on a held-out set. Fails with [`LearnError::ThresholdNotReached`] when the
/// held-out depth Rel does not beat `target_rel` — a model that cannot read
/// perspective geometry is not worth adapting.
pub fn pretrain_backbone(
    cfg: &BackboneConfig,
    corpus: &[SceneSample],
    holdout: &[SceneSample],
    pcfg: &PretrainConfig,
) -> Result<(PretrainedBackbone, PretrainReport), LearnError> {
    pcfg.validate()?;
    if corpus.is_empty() || holdout.is_empty() {
        return Err(LearnError::InvalidConfig(
            "pretraining needs a nonempty corpus and holdout".into(),
        ));
    }
    require_perspective(corpus, "corpus")?;
    require_perspective(holdout, "holdout")?;

    let mut rng = ChaCha8Rng::seed_from_u64(pcfg.seed);
    let init = BackboneWeights::init(cfg, &mut rng);
    let (names, mut params): (Vec<String>, Vec<Tensor>) =
        init.named_tensors().into_iter().unzip();
    let mut current = init;
    let mut state = AdamState::new(&params);
    let hyper = AdamHyper::with_weight_decay(pcfg.weight_decay);
    let mut losses = Vec::with_capacity(pcfg.iterations);

    for it in 0..pcfg.iterations {
        let sample = &corpus[it % corpus.len()];
        let images: Vec<DenseMap> = sample.frames.iter().map(|f| f.rgb.clone()).collect();
        let targets: Vec<FrameTarget> =
            sample.frames.iter().map(FrameTarget::from_frame).collect();

        let tape = Tape::new();
        let vars = current.vars(&tape, true);
        let preds = plain_predictions(&tape, &vars, cfg, &images);
        let terms = reconstruction_loss(&tape, &preds, &targets, &pcfg.loss)?;
        let loss = tape.value(terms.total).item();
        if !loss.is_finite() {
            return Err(LearnError::NonFinite {
                context: "pretraining loss".into(),
                iteration: it as u64,
            });
        }
        losses.push(loss);

        let grads = tape.backward(terms.total);
        let grad_tensors: Vec<Tensor> = vars
            .all()
            .iter()
            .zip(&params)
            .map(|(v, p)| grads.get_or_zeros(*v, p.shape()))
            .collect();
        let lr = schedule(it, pcfg.iterations, pcfg.lr_start, pcfg.lr_end, pcfg.decay)?;
        adamw_step(&mut params, &grad_tensors, &mut state, lr, &hyper)?;

        let map: BTreeMap<String, Tensor> =
            names.iter().cloned().zip(params.iter().cloned()).collect();
        current = BackboneWeights::from_named(cfg, &map).map_err(LearnError::InvalidConfig)?;
    }

    let holdout_rel = evaluate_corpus(&current, None, holdout)?.rel;
    if holdout_rel >= pcfg.target_rel {
        return Err(LearnError::ThresholdNotReached {
            what: "held-out depth Rel",
            achieved: holdout_rel,
            threshold: pcfg.target_rel,
        });
    }
    Ok((PretrainedBackbone { weights: current }, PretrainReport { losses, holdout_rel }))
}
