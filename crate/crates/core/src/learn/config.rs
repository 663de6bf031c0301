//! Training configuration: loss weights, schemes, schedules, and the
//! sequence camera-mix plan.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::calibrate::TOKEN_INIT_STD;
use crate::nncore::MaskMode;

use super::LearnError;

/// Iteration budget used by the full-scale recipe. The defaults below run a
/// desk-scale budget; this constant documents what a real run would use.
pub const FULL_SCALE_ITERATIONS: usize = 40_000;
/// Learning-rate endpoints of the full-scale recipe.
pub const FULL_SCALE_LR_START: f64 = 1e-5;
pub const FULL_SCALE_LR_END: f64 = 1e-7;

/// Probability that a frame of a hybrid sequence is rendered (or warped)
/// through the fisheye model rather than kept perspective.
pub const HYBRID_FRAME_FISHEYE_PROB: f64 = 0.5;

/// Which supervision source trains the tokens.
///
/// * `Ssl` — self-supervised: the frozen backbone's own perspective
///   predictions are the targets for the distorted student view.
/// * `Sl` — supervised on the same warped imagery, targets from ground truth.
/// * `SlPlus` — supervised on natively rendered fisheye imagery; no warp is
///   involved anywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Ssl,
    Sl,
    #[serde(rename = "slplus")]
    SlPlus,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Ssl => "ssl",
            Scheme::Sl => "sl",
            Scheme::SlPlus => "slplus",
        })
    }
}

impl FromStr for Scheme {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Scheme, LearnError> {
        match s {
            "ssl" => Ok(Scheme::Ssl),
            "sl" => Ok(Scheme::Sl),
            "slplus" | "sl+" => Ok(Scheme::SlPlus),
            other => Err(LearnError::InvalidConfig(format!(
                "unknown scheme {other:?} (expected ssl, sl, or slplus)"
            ))),
        }
    }
}

/// Learning-rate decay shape between `lr_start` and `lr_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decay {
    Cosine,
    Linear,
}

impl FromStr for Decay {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Decay, LearnError> {
        match s {
            "cosine" => Ok(Decay::Cosine),
            "linear" => Ok(Decay::Linear),
            other => Err(LearnError::InvalidConfig(format!(
                "unknown decay {other:?} (expected cosine or linear)"
            ))),
        }
    }
}

/// Per-term weights of the reconstruction loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_ray: f64,
    pub w_depth: f64,
    pub w_rot: f64,
    pub w_trans: f64,
}

impl Default for LossWeights {
    fn default() -> LossWeights {
        LossWeights { w_ray: 1.0, w_depth: 1.0, w_rot: 1.0, w_trans: 1.0 }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), LearnError> {
        let all = [self.w_ray, self.w_depth, self.w_rot, self.w_trans];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(LearnError::InvalidConfig(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        if all.iter().all(|w| *w == 0.0) {
            return Err(LearnError::InvalidConfig("at least one loss weight must be positive".into()));
        }
        Ok(())
    }
}

/// Probabilities of the three per-sequence camera mixes. Hybrid sequences
/// then flip a fair coin per frame ([`HYBRID_FRAME_FISHEYE_PROB`]).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixPlan {
    pub all_perspective: f64,
    pub all_fisheye: f64,
    pub hybrid: f64,
}

impl Default for MixPlan {
    fn default() -> MixPlan {
        // Fully perspective sequences give the tokens zero gradient, so the
        // training default splits between the two mixes that exercise them.
        MixPlan { all_perspective: 0.0, all_fisheye: 0.5, hybrid: 0.5 }
    }
}

impl MixPlan {
    pub fn validate(&self) -> Result<(), LearnError> {
        let ps = [self.all_perspective, self.all_fisheye, self.hybrid];
        if ps.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(LearnError::InvalidConfig(
                "mix probabilities must be finite and non-negative".into(),
            ));
        }
        let sum: f64 = ps.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(LearnError::InvalidConfig(format!(
                "mix probabilities must sum to 1 (got {sum})"
            )));
        }
        Ok(())
    }
}

/// Everything a token-training run needs beyond the frozen backbone and the
/// corpus. Serializes to JSON/TOML so runs are reproducible from a file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Optimizer steps. Desk-scale default; see [`FULL_SCALE_ITERATIONS`].
    pub iterations: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub decay: Decay,
    /// Sequences whose losses are averaged per step.
    pub batch: usize,
    /// Inclusive frame-count range used when synthesizing training sequences.
    pub seq_len: (usize, usize),
    pub scheme: Scheme,
    /// Tokens appended per injected layer.
    pub k: usize,
    /// Encoder depth run before the camera-type decision; token banks cover
    /// the layers after it.
    pub split_layer: usize,
    pub token_init_std: f64,
    pub mask_mode: MaskMode,
    pub mix: MixPlan,
    pub weights: LossWeights,
    /// Decoupled L2 shrinkage of the AdamW step.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            iterations: 2000,
            lr_start: 3e-3,
            lr_end: 3e-5,
            decay: Decay::Cosine,
            batch: 1,
            seq_len: (2, 4),
            scheme: Scheme::Ssl,
            k: 2,
            split_layer: 2,
            token_init_std: TOKEN_INIT_STD,
            mask_mode: MaskMode::PreSoftmax,
            mix: MixPlan::default(),
            weights: LossWeights::default(),
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        if self.iterations < 1 {
            return Err(LearnError::InvalidConfig("iterations must be at least 1".into()));
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end) {
            return Err(LearnError::InvalidConfig(format!(
                "learning rate must satisfy lr_start >= lr_end > 0 (got {} -> {})",
                self.lr_start, self.lr_end
            )));
        }
        if !self.lr_start.is_finite() {
            return Err(LearnError::InvalidConfig("lr_start must be finite".into()));
        }
        if self.batch < 1 {
            return Err(LearnError::InvalidConfig("batch must be at least 1".into()));
        }
        if self.seq_len.0 < 1 || self.seq_len.0 > self.seq_len.1 {
            return Err(LearnError::InvalidConfig(format!(
                "sequence length range {:?} is empty or starts at zero",
                self.seq_len
            )));
        }
        if self.k < 1 {
            return Err(LearnError::InvalidConfig("k must be at least 1".into()));
        }
        if self.split_layer < 1 {
            return Err(LearnError::InvalidConfig("split_layer must be at least 1".into()));
        }
        if !(self.token_init_std.is_finite() && self.token_init_std >= 0.0) {
            return Err(LearnError::InvalidConfig(
                "token_init_std must be finite and non-negative".into(),
            ));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(LearnError::InvalidConfig(
                "weight_decay must be finite and non-negative".into(),
            ));
        }
        self.mix.validate()?;
        self.weights.validate()
    }
}

/// Learning rate for step `iter` of `0..iterations`: a cosine (or linear)
/// interpolation from `lr_start` down to `lr_end`, exact at both endpoints.
/// A single-iteration schedule sits at `lr_start`.
pub fn schedule(
    iter: usize,
    iterations: usize,
    lr_start: f64,
    lr_end: f64,
    decay: Decay,
) -> Result<f64, LearnError> {
    if iter >= iterations {
        return Err(LearnError::ScheduleOutOfRange { iter, iterations });
    }
    let t = if iterations == 1 { 0.0 } else { iter as f64 / (iterations - 1) as f64 };
    // Blend weight of lr_start: 1 at t=0, 0 at t=1.
    let f = match decay {
        Decay::Cosine => 0.5 * (1.0 + (std::f64::consts::PI * t).cos()),
        Decay::Linear => 1.0 - t,
    };
    Ok(lr_start * f + lr_end * (1.0 - f))
}

/// [`schedule`] with a token-training config's fields.
pub fn lr_at(iter: usize, cfg: &TrainConfig) -> Result<f64, LearnError> {
    schedule(iter, cfg.iterations, cfg.lr_start, cfg.lr_end, cfg.decay)
}
