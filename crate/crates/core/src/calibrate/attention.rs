//! Masked attention as a standalone operation.

use crate::nncore::{MaskMode, Tape, Var};

/// Scaled dot-product attention with a binary visibility mask.
///
/// `PreSoftmax` excludes masked keys from the softmax entirely (their weight
/// is exactly zero and visible weights renormalize), which is what makes
/// masked rows bit-identical to attention over the visible keys alone.
/// `Literal` multiplies the full softmax by the mask afterwards, leaving
/// visible weights unrenormalized.
pub fn masked_attention(
    tape: &Tape,
    q: Var,
    k: Var,
    v: Var,
    mask: &crate::nncore::Tensor,
    mode: MaskMode,
) -> Var {
    let dk = tape.value(k).cols();
    assert_eq!(tape.value(q).cols(), dk, "query/key width mismatch");
    assert_eq!(tape.value(v).rows(), tape.value(k).rows(), "key/value count mismatch");
    assert_eq!(
        mask.shape(),
        [tape.value(q).rows(), tape.value(k).rows()],
        "mask extent must be (queries, keys)"
    );
    let logits = tape.scale(tape.matmul(q, tape.transpose(k)), 1.0 / (dk as f64).sqrt());
    let probs = tape.masked_softmax_rows(logits, mask, mode);
    tape.matmul(probs, v)
}
