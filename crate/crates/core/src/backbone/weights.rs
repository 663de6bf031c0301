//! Parameter storage for the backbone.
//!
//! Weights persist as plain tensors between steps and are mirrored onto a
//! tape per forward pass — as trainable parameters during pretraining, as
//! frozen leaves afterwards. Every tensor has a stable name used by the
//! checkpoint container and by audits that assert the backbone stayed
//! untouched.

use super::config::BackboneConfig;
use crate::nncore::{Tape, Tensor, Var};
use rand::Rng;
use std::collections::BTreeMap;

/// Standard deviation for projection-weight initialization.
const INIT_STD: f64 = 0.02;

/// One pre-norm transformer block: attention and MLP with their layer norms.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockWeights {
    pub ln1_gain: Tensor,
    pub ln1_bias: Tensor,
    pub wq: Tensor,
    pub bq: Tensor,
    pub wk: Tensor,
    pub bk: Tensor,
    pub wv: Tensor,
    pub bv: Tensor,
    pub wo: Tensor,
    pub bo: Tensor,
    pub ln2_gain: Tensor,
    pub ln2_bias: Tensor,
    pub w_up: Tensor,
    pub b_up: Tensor,
    pub w_down: Tensor,
    pub b_down: Tensor,
}

/// Two-layer MLP head.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub b2: Tensor,
}

impl BlockWeights {
    pub(crate) fn init(dim: usize, hidden: usize, rng: &mut impl Rng) -> BlockWeights {
        BlockWeights {
            ln1_gain: Tensor::full(vec![1, dim], 1.0),
            ln1_bias: Tensor::zeros(vec![1, dim]),
            wq: Tensor::randn(vec![dim, dim], INIT_STD, rng),
            bq: Tensor::zeros(vec![1, dim]),
            wk: Tensor::randn(vec![dim, dim], INIT_STD, rng),
            bk: Tensor::zeros(vec![1, dim]),
            wv: Tensor::randn(vec![dim, dim], INIT_STD, rng),
            bv: Tensor::zeros(vec![1, dim]),
            wo: Tensor::randn(vec![dim, dim], INIT_STD, rng),
            bo: Tensor::zeros(vec![1, dim]),
            ln2_gain: Tensor::full(vec![1, dim], 1.0),
            ln2_bias: Tensor::zeros(vec![1, dim]),
            w_up: Tensor::randn(vec![dim, hidden], INIT_STD, rng),
            b_up: Tensor::zeros(vec![1, hidden]),
            w_down: Tensor::randn(vec![hidden, dim], INIT_STD, rng),
            b_down: Tensor::zeros(vec![1, dim]),
        }
    }

    fn fields(&self) -> [(&'static str, &Tensor); 16] {
        [
            ("ln1.gain", &self.ln1_gain),
            ("ln1.bias", &self.ln1_bias),
            ("attn.wq", &self.wq),
            ("attn.bq", &self.bq),
            ("attn.wk", &self.wk),
            ("attn.bk", &self.bk),
            ("attn.wv", &self.wv),
            ("attn.bv", &self.bv),
            ("attn.wo", &self.wo),
            ("attn.bo", &self.bo),
            ("ln2.gain", &self.ln2_gain),
            ("ln2.bias", &self.ln2_bias),
            ("mlp.w_up", &self.w_up),
            ("mlp.b_up", &self.b_up),
            ("mlp.w_down", &self.w_down),
            ("mlp.b_down", &self.b_down),
        ]
    }

    fn from_map(
        prefix: &str,
        dim: usize,
        hidden: usize,
        map: &BTreeMap<String, Tensor>,
    ) -> Result<BlockWeights, String> {
        let row = [1, dim];
        let mat = [dim, dim];
        Ok(BlockWeights {
            ln1_gain: take(map, &format!("{prefix}.ln1.gain"), &row)?,
            ln1_bias: take(map, &format!("{prefix}.ln1.bias"), &row)?,
            wq: take(map, &format!("{prefix}.attn.wq"), &mat)?,
            bq: take(map, &format!("{prefix}.attn.bq"), &row)?,
            wk: take(map, &format!("{prefix}.attn.wk"), &mat)?,
            bk: take(map, &format!("{prefix}.attn.bk"), &row)?,
            wv: take(map, &format!("{prefix}.attn.wv"), &mat)?,
            bv: take(map, &format!("{prefix}.attn.bv"), &row)?,
            wo: take(map, &format!("{prefix}.attn.wo"), &mat)?,
            bo: take(map, &format!("{prefix}.attn.bo"), &row)?,
            ln2_gain: take(map, &format!("{prefix}.ln2.gain"), &row)?,
            ln2_bias: take(map, &format!("{prefix}.ln2.bias"), &row)?,
            w_up: take(map, &format!("{prefix}.mlp.w_up"), &[dim, hidden])?,
            b_up: take(map, &format!("{prefix}.mlp.b_up"), &[1, hidden])?,
            w_down: take(map, &format!("{prefix}.mlp.w_down"), &[hidden, dim])?,
            b_down: take(map, &format!("{prefix}.mlp.b_down"), &row)?,
        })
    }

    pub(crate) fn vars(&self, tape: &Tape, trainable: bool) -> BlockVars {
        let lift = |t: &Tensor| lift(tape, t, trainable);
        BlockVars {
            ln1_gain: lift(&self.ln1_gain),
            ln1_bias: lift(&self.ln1_bias),
            wq: lift(&self.wq),
            bq: lift(&self.bq),
            wk: lift(&self.wk),
            bk: lift(&self.bk),
            wv: lift(&self.wv),
            bv: lift(&self.bv),
            wo: lift(&self.wo),
            bo: lift(&self.bo),
            ln2_gain: lift(&self.ln2_gain),
            ln2_bias: lift(&self.ln2_bias),
            w_up: lift(&self.w_up),
            b_up: lift(&self.b_up),
            w_down: lift(&self.w_down),
            b_down: lift(&self.b_down),
        }
    }
}

impl HeadWeights {
    fn init(dims: (usize, usize, usize), rng: &mut impl Rng) -> HeadWeights {
        let (d_in, d_hidden, d_out) = dims;
        HeadWeights {
            w1: Tensor::randn(vec![d_in, d_hidden], INIT_STD, rng),
            b1: Tensor::zeros(vec![1, d_hidden]),
            w2: Tensor::randn(vec![d_hidden, d_out], INIT_STD, rng),
            b2: Tensor::zeros(vec![1, d_out]),
        }
    }

    fn fields(&self) -> [(&'static str, &Tensor); 4] {
        [("w1", &self.w1), ("b1", &self.b1), ("w2", &self.w2), ("b2", &self.b2)]
    }

    fn from_map(
        prefix: &str,
        dims: (usize, usize, usize),
        map: &BTreeMap<String, Tensor>,
    ) -> Result<HeadWeights, String> {
        let (d_in, d_hidden, d_out) = dims;
        Ok(HeadWeights {
            w1: take(map, &format!("{prefix}.w1"), &[d_in, d_hidden])?,
            b1: take(map, &format!("{prefix}.b1"), &[1, d_hidden])?,
            w2: take(map, &format!("{prefix}.w2"), &[d_hidden, d_out])?,
            b2: take(map, &format!("{prefix}.b2"), &[1, d_out])?,
        })
    }

    fn vars(&self, tape: &Tape, trainable: bool) -> HeadVars {
        HeadVars {
            w1: lift(tape, &self.w1, trainable),
            b1: lift(tape, &self.b1, trainable),
            w2: lift(tape, &self.w2, trainable),
            b2: lift(tape, &self.b2, trainable),
        }
    }
}

/// Complete backbone parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct BackboneWeights {
    pub config: BackboneConfig,
    /// Patch projection, (3 P^2) x d.
    pub patch_weight: Tensor,
    pub patch_bias: Tensor,
    pub class_token: Tensor,
    pub encoder: Vec<BlockWeights>,
    pub frame: Vec<BlockWeights>,
    pub global: Vec<BlockWeights>,
    /// Mean-pooled tokens -> quaternion + translation (7 values).
    pub pose_head: HeadWeights,
    /// Per-patch tokens -> P^2 x 4 dense values.
    pub dense_head: HeadWeights,
}

impl BackboneWeights {
    pub fn init(config: &BackboneConfig, rng: &mut impl Rng) -> BackboneWeights {
        config.validate().expect("invalid backbone config");
        let d = config.embed_dim;
        let hidden = config.hidden_dim();
        let patch_in = 3 * config.patch_size * config.patch_size;
        BackboneWeights {
            config: config.clone(),
            patch_weight: Tensor::randn(vec![patch_in, d], INIT_STD, rng),
            patch_bias: Tensor::zeros(vec![1, d]),
            class_token: Tensor::randn(vec![1, d], INIT_STD, rng),
            encoder: (0..config.encoder_layers).map(|_| BlockWeights::init(d, hidden, rng)).collect(),
            frame: (0..config.aa_blocks).map(|_| BlockWeights::init(d, hidden, rng)).collect(),
            global: (0..config.aa_blocks).map(|_| BlockWeights::init(d, hidden, rng)).collect(),
            pose_head: HeadWeights::init((d, d, 7), rng),
            dense_head: HeadWeights::init((d, d, config.dense_out()), rng),
        }
    }

    /// Every tensor with its canonical name, in a stable order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        out.push(("patch.weight".to_string(), self.patch_weight.clone()));
        out.push(("patch.bias".to_string(), self.patch_bias.clone()));
        out.push(("class_token".to_string(), self.class_token.clone()));
        for (group, blocks) in
            [("enc", &self.encoder), ("frame", &self.frame), ("global", &self.global)]
        {
            for (i, block) in blocks.iter().enumerate() {
                for (field, tensor) in block.fields() {
                    out.push((format!("{group}.{i}.{field}"), tensor.clone()));
                }
            }
        }
        for (prefix, head) in [("pose_head", &self.pose_head), ("dense_head", &self.dense_head)] {
            for (field, tensor) in head.fields() {
                out.push((format!("{prefix}.{field}"), tensor.clone()));
            }
        }
        out
    }

    pub fn from_named(
        config: &BackboneConfig,
        map: &BTreeMap<String, Tensor>,
    ) -> Result<BackboneWeights, String> {
        config.validate()?;
        let d = config.embed_dim;
        let hidden = config.hidden_dim();
        let patch_in = 3 * config.patch_size * config.patch_size;
        let blocks = |group: &str, n: usize| -> Result<Vec<BlockWeights>, String> {
            (0..n).map(|i| BlockWeights::from_map(&format!("{group}.{i}"), d, hidden, map)).collect()
        };
        Ok(BackboneWeights {
            config: config.clone(),
            patch_weight: take(map, "patch.weight", &[patch_in, d])?,
            patch_bias: take(map, "patch.bias", &[1, d])?,
            class_token: take(map, "class_token", &[1, d])?,
            encoder: blocks("enc", config.encoder_layers)?,
            frame: blocks("frame", config.aa_blocks)?,
            global: blocks("global", config.aa_blocks)?,
            pose_head: HeadWeights::from_map("pose_head", (d, d, 7), map)?,
            dense_head: HeadWeights::from_map("dense_head", (d, d, config.dense_out()), map)?,
        })
    }

    /// Mirrors every weight onto the tape. `trainable` decides whether the
    /// backbone receives gradients (pretraining) or is frozen (adaptation).
    pub fn vars(&self, tape: &Tape, trainable: bool) -> BackboneVars {
        BackboneVars {
            patch_weight: lift(tape, &self.patch_weight, trainable),
            patch_bias: lift(tape, &self.patch_bias, trainable),
            class_token: lift(tape, &self.class_token, trainable),
            encoder: self.encoder.iter().map(|b| b.vars(tape, trainable)).collect(),
            frame: self.frame.iter().map(|b| b.vars(tape, trainable)).collect(),
            global: self.global.iter().map(|b| b.vars(tape, trainable)).collect(),
            pose_head: self.pose_head.vars(tape, trainable),
            dense_head: self.dense_head.vars(tape, trainable),
        }
    }
}

/// Tape-side mirror of [`BlockWeights`].
#[derive(Debug, Clone, Copy)]
pub struct BlockVars {
    pub ln1_gain: Var,
    pub ln1_bias: Var,
    pub wq: Var,
    pub bq: Var,
    pub wk: Var,
    pub bk: Var,
    pub wv: Var,
    pub bv: Var,
    pub wo: Var,
    pub bo: Var,
    pub ln2_gain: Var,
    pub ln2_bias: Var,
    pub w_up: Var,
    pub b_up: Var,
    pub w_down: Var,
    pub b_down: Var,
}

#[derive(Debug, Clone, Copy)]
pub struct HeadVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

/// Tape-side mirror of [`BackboneWeights`] for one forward pass.
#[derive(Debug, Clone)]
pub struct BackboneVars {
    pub patch_weight: Var,
    pub patch_bias: Var,
    pub class_token: Var,
    pub encoder: Vec<BlockVars>,
    pub frame: Vec<BlockVars>,
    pub global: Vec<BlockVars>,
    pub pose_head: HeadVars,
    pub dense_head: HeadVars,
}

impl BlockVars {
    fn fields(&self) -> [Var; 16] {
        [
            self.ln1_gain,
            self.ln1_bias,
            self.wq,
            self.bq,
            self.wk,
            self.bk,
            self.wv,
            self.bv,
            self.wo,
            self.bo,
            self.ln2_gain,
            self.ln2_bias,
            self.w_up,
            self.b_up,
            self.w_down,
            self.b_down,
        ]
    }
}

impl BackboneVars {
    /// Every var, in [`BackboneWeights::named_tensors`] order — the pairing
    /// an optimizer needs to match gradients back to parameter tensors.
    pub fn all(&self) -> Vec<Var> {
        let mut out = vec![self.patch_weight, self.patch_bias, self.class_token];
        for group in [&self.encoder, &self.frame, &self.global] {
            for block in group.iter() {
                out.extend(block.fields());
            }
        }
        for head in [&self.pose_head, &self.dense_head] {
            out.extend([head.w1, head.b1, head.w2, head.b2]);
        }
        out
    }
}

fn lift(tape: &Tape, t: &Tensor, trainable: bool) -> Var {
    if trainable {
        tape.param(t.clone())
    } else {
        tape.leaf(t.clone())
    }
}

fn take(map: &BTreeMap<String, Tensor>, name: &str, shape: &[usize]) -> Result<Tensor, String> {
    let t = map.get(name).ok_or_else(|| format!("missing tensor {name}"))?;
    if t.shape() != shape {
        return Err(format!("tensor {name} has shape {:?}, want {shape:?}", t.shape()));
    }
    Ok(t.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn init_is_deterministic() {
        let cfg = BackboneConfig::compact();
        let a = BackboneWeights::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        let b = BackboneWeights::init(&cfg, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        let c = BackboneWeights::init(&cfg, &mut ChaCha8Rng::seed_from_u64(2));
        assert_ne!(a, c);
    }

    #[test]
    fn named_round_trip_is_exact() {
        let cfg = BackboneConfig::compact();
        let w = BackboneWeights::init(&cfg, &mut ChaCha8Rng::seed_from_u64(3));
        let map: BTreeMap<String, Tensor> = w.named_tensors().into_iter().collect();
        let back = BackboneWeights::from_named(&cfg, &map).unwrap();
        assert_eq!(w, back);
    }

    #[test]
    fn names_are_unique_and_complete() {
        let cfg = BackboneConfig::compact();
        let w = BackboneWeights::init(&cfg, &mut ChaCha8Rng::seed_from_u64(4));
        let named = w.named_tensors();
        let set: std::collections::BTreeSet<&str> =
            named.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(set.len(), named.len(), "duplicate tensor name");
        // 3 embedding tensors + 16 per block + 4 per head.
        let blocks = cfg.encoder_layers + 2 * cfg.aa_blocks;
        assert_eq!(named.len(), 3 + 16 * blocks + 8);
    }

    #[test]
    fn var_order_pairs_with_named_tensors() {
        let cfg = BackboneConfig::compact();
        let w = BackboneWeights::init(&cfg, &mut ChaCha8Rng::seed_from_u64(6));
        let tape = Tape::new();
        let vars = w.vars(&tape, true).all();
        let named = w.named_tensors();
        assert_eq!(vars.len(), named.len());
        for (v, (name, t)) in vars.iter().zip(&named) {
            assert_eq!(tape.value(*v).data(), t.data(), "order broke at {name}");
        }
    }

    #[test]
    fn missing_or_misshapen_tensors_are_rejected() {
        let cfg = BackboneConfig::compact();
        let w = BackboneWeights::init(&cfg, &mut ChaCha8Rng::seed_from_u64(5));
        let mut map: BTreeMap<String, Tensor> = w.named_tensors().into_iter().collect();
        map.remove("enc.0.attn.wq");
        assert!(BackboneWeights::from_named(&cfg, &map).unwrap_err().contains("enc.0.attn.wq"));
        let mut map: BTreeMap<String, Tensor> = w.named_tensors().into_iter().collect();
        map.insert("class_token".into(), Tensor::zeros(vec![2, 2]));
        assert!(BackboneWeights::from_named(&cfg, &map).unwrap_err().contains("shape"));
    }
}
