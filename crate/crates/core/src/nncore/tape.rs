//! Flat reverse-mode autodiff tape.
//!
//! Operations append nodes to the tape; each node stores its value and a
//! closure that maps the node's output gradient to gradient contributions
//! for its parents. [`Tape::backward`] walks the tape once in reverse.
//! Recording order is topological by construction (an op can only reference
//! already-recorded [`Var`]s), so a single reverse sweep suffices.
//!
//! A tape is single-threaded and lives for one forward/backward pass;
//! independent tapes may run on independent threads.

use super::tensor::{matmul_into, matmul_nt_into, matmul_tn_into, Tensor};
use serde::{Deserialize, Serialize};
use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// How an attention mask is applied to attention scores.
///
/// * `PreSoftmax` — masked entries are excluded before normalization
///   (equivalent to adding negative infinity to their logits), so the
///   remaining weights renormalize over the visible entries. Masking out
///   appended tokens reproduces token-free attention bit for bit.
/// * `Literal` — the softmax is computed over all entries and then
///   multiplied elementwise by the mask, so masked probability mass is
///   removed without renormalization.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum MaskMode {
    #[serde(rename = "presoftmax")]
    PreSoftmax,
    #[serde(rename = "literal")]
    Literal,
}

impl std::str::FromStr for MaskMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "presoftmax" => Ok(MaskMode::PreSoftmax),
            "literal" => Ok(MaskMode::Literal),
            other => Err(format!("unknown mask mode `{other}` (expected presoftmax|literal)")),
        }
    }
}

/// Bilinear resampling tap: up to four weighted source rows per output row.
pub type Tap = [(usize, f64); 4];

type BackFn = Box<dyn Fn(&Tensor) -> Vec<(usize, Tensor)>>;

struct Node {
    value: Rc<Tensor>,
    back: Option<BackFn>,
    trainable: bool,
}

/// Gradients of a scalar loss with respect to every trainable leaf.
pub struct Gradients {
    grads: HashMap<usize, Tensor>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(&v.0)
    }

    /// Gradient for `v`, or zeros of the leaf's shape when no path from the
    /// loss reached it (e.g. a token bank masked out of every frame).
    pub fn get_or_zeros(&self, v: Var, shape: &[usize]) -> Tensor {
        self.grads
            .get(&v.0)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Indices of all leaves that received a gradient (test support).
    pub fn touched(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.grads.keys().copied().collect();
        ids.sort_unstable();
        ids
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

const LAYER_NORM_EPS: f64 = 1e-5;
/// exp() inputs are clamped here so the output stays finite.
const EXP_CLAMP: f64 = 700.0;
/// Norms below this floor are treated as degenerate in l2_normalize_rows.
const NORM_FLOOR: f64 = 1e-12;
/// Caps the acos derivative near the clamp boundary at 1e6.
const ACOS_GUARD: f64 = 1e-12;
/// Caps the sqrt derivative near zero at 1e6.
const SQRT_GUARD: f64 = 5e-7;

impl Tape {
    pub fn new() -> Tape {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Current value of a recorded variable.
    pub fn value(&self, v: Var) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    fn push(&self, op: &'static str, value: Tensor, back: Option<BackFn>, trainable: bool) -> Var {
        value.assert_finite(op);
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value: Rc::new(value), back, trainable });
        Var(nodes.len() - 1)
    }

    /// Records a constant; it never receives a gradient.
    pub fn leaf(&self, value: Tensor) -> Var {
        self.push("leaf", value, None, false)
    }

    /// Records a trainable leaf; `backward` reports its gradient.
    pub fn param(&self, value: Tensor) -> Var {
        self.push("param", value, None, true)
    }

    // ---- elementwise -----------------------------------------------------

    pub fn add(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.zip(&vb, |x, y| x + y);
        self.push(
            "add",
            out,
            Some(Box::new(move |g| vec![(a.0, g.clone()), (b.0, g.clone())])),
            false,
        )
    }

    pub fn sub(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.zip(&vb, |x, y| x - y);
        self.push(
            "sub",
            out,
            Some(Box::new(move |g| vec![(a.0, g.clone()), (b.0, g.map(|x| -x))])),
            false,
        )
    }

    pub fn mul(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let out = va.zip(&vb, |x, y| x * y);
        self.push(
            "mul",
            out,
            Some(Box::new(move |g| {
                vec![(a.0, g.zip(&vb, |x, y| x * y)), (b.0, g.zip(&va, |x, y| x * y))]
            })),
            false,
        )
    }

    pub fn scale(&self, a: Var, c: f64) -> Var {
        assert!(c.is_finite(), "scale by non-finite constant");
        let va = self.value(a);
        self.push(
            "scale",
            va.map(|x| c * x),
            Some(Box::new(move |g| vec![(a.0, g.map(|x| c * x))])),
            false,
        )
    }

    /// Adds a `1 x n` row vector to every row of an `m x n` matrix.
    pub fn add_row(&self, a: Var, row: Var) -> Var {
        let (va, vr) = (self.value(a), self.value(row));
        let n = va.cols();
        assert_eq!(vr.shape(), &[1, n], "add_row: bias shape {:?} vs {n} cols", vr.shape());
        let out = Tensor::from_fn(va.rows(), n, |r, c| va.at(r, c) + vr.at(0, c));
        self.push(
            "add_row",
            out,
            Some(Box::new(move |g| {
                let mut col_sum = vec![0.0; n];
                for r in 0..g.rows() {
                    for (s, v) in col_sum.iter_mut().zip(g.row(r)) {
                        *s += v;
                    }
                }
                vec![(a.0, g.clone()), (row.0, Tensor::new(vec![1, n], col_sum))]
            })),
            false,
        )
    }

    pub fn exp(&self, a: Var) -> Var {
        let va = self.value(a);
        let out = va.map(|x| x.min(EXP_CLAMP).exp());
        let va2 = Rc::clone(&va);
        self.push(
            "exp",
            out,
            Some(Box::new(move |g| {
                let d = g.zip(&va2, |gi, x| if x < EXP_CLAMP { gi * x.exp() } else { 0.0 });
                vec![(a.0, d)]
            })),
            false,
        )
    }

    pub fn log(&self, a: Var) -> Var {
        let va = self.value(a);
        let out = va.map(|x| x.max(f64::MIN_POSITIVE).ln());
        self.push(
            "log",
            out,
            Some(Box::new(move |g| {
                vec![(a.0, g.zip(&va, |gi, x| gi / x.max(f64::MIN_POSITIVE)))]
            })),
            false,
        )
    }

    pub fn abs(&self, a: Var) -> Var {
        let va = self.value(a);
        let out = va.map(f64::abs);
        self.push(
            "abs",
            out,
            Some(Box::new(move |g| {
                vec![(a.0, g.zip(&va, |gi, x| gi * x.signum() * if x == 0.0 { 0.0 } else { 1.0 }))]
            })),
            false,
        )
    }

    /// Elementwise square root with negative inputs clamped to zero and the
    /// derivative capped near zero, so a sum of squares that lands exactly on
    /// zero (e.g. a distance between identical vectors) backpropagates a
    /// finite — and, through the zero upstream factor, exactly zero —
    /// gradient.
    pub fn sqrt(&self, a: Var) -> Var {
        let va = self.value(a);
        let out = va.map(|x| x.max(0.0).sqrt());
        self.push(
            "sqrt",
            out,
            Some(Box::new(move |g| {
                let d = g.zip(&va, |gi, x| {
                    if x > 0.0 {
                        gi * 0.5 / x.sqrt().max(SQRT_GUARD)
                    } else {
                        0.0
                    }
                });
                vec![(a.0, d)]
            })),
            false,
        )
    }

    /// arccos with the argument clamped to [-1, 1] and the derivative capped
    /// near the boundary, so unit-vector dot products a hair outside the
    /// interval stay finite.
    pub fn acos_safe(&self, a: Var) -> Var {
        let va = self.value(a);
        let out = va.map(|x| x.clamp(-1.0, 1.0).acos());
        self.push(
            "acos_safe",
            out,
            Some(Box::new(move |g| {
                let d = g.zip(&va, |gi, x| {
                    if x.abs() < 1.0 {
                        -gi / (1.0 - x * x).max(ACOS_GUARD).sqrt()
                    } else {
                        0.0
                    }
                });
                vec![(a.0, d)]
            })),
            false,
        )
    }

    /// GELU with the tanh approximation:
    /// `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`.
    pub fn gelu(&self, a: Var) -> Var {
        const C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
        const A: f64 = 0.044715;
        let va = self.value(a);
        let out = va.map(|x| 0.5 * x * (1.0 + (C * (x + A * x * x * x)).tanh()));
        self.push(
            "gelu",
            out,
            Some(Box::new(move |g| {
                let d = g.zip(&va, |gi, x| {
                    let u = C * (x + A * x * x * x);
                    let t = u.tanh();
                    let sech2 = 1.0 - t * t;
                    gi * (0.5 * (1.0 + t) + 0.5 * x * sech2 * C * (1.0 + 3.0 * A * x * x))
                });
                vec![(a.0, d)]
            })),
            false,
        )
    }

    // ---- structure -------------------------------------------------------

    pub fn transpose(&self, a: Var) -> Var {
        let va = self.value(a);
        let out = Tensor::from_fn(va.cols(), va.rows(), |r, c| va.at(c, r));
        self.push(
            "transpose",
            out,
            Some(Box::new(move |g| {
                vec![(a.0, Tensor::from_fn(g.cols(), g.rows(), |r, c| g.at(c, r)))]
            })),
            false,
        )
    }

    /// Reinterprets the value under a new shape with the same element count
    /// and row-major order.
    pub fn reshape(&self, a: Var, shape: Vec<usize>) -> Var {
        let va = self.value(a);
        let old = va.shape().to_vec();
        let out = va.as_ref().clone().reshape(shape);
        self.push(
            "reshape",
            out,
            Some(Box::new(move |g| vec![(a.0, g.clone().reshape(old.clone()))])),
            false,
        )
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let values: Vec<Rc<Tensor>> = parts.iter().map(|&p| self.value(p)).collect();
        let cols = values[0].cols();
        let mut data = Vec::new();
        let mut row_counts = Vec::with_capacity(values.len());
        for v in &values {
            assert_eq!(v.cols(), cols, "concat_rows: column mismatch");
            row_counts.push(v.rows());
            data.extend_from_slice(v.data());
        }
        let rows: usize = row_counts.iter().sum();
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(
            "concat_rows",
            Tensor::new(vec![rows, cols], data),
            Some(Box::new(move |g| {
                let mut out = Vec::with_capacity(ids.len());
                let mut r0 = 0;
                for (&id, &nr) in ids.iter().zip(&row_counts) {
                    let slice = g.data()[r0 * cols..(r0 + nr) * cols].to_vec();
                    out.push((id, Tensor::new(vec![nr, cols], slice)));
                    r0 += nr;
                }
                out
            })),
            false,
        )
    }

    /// Rows `r0..r1` of a matrix.
    pub fn slice_rows(&self, a: Var, r0: usize, r1: usize) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        assert!(r0 < r1 && r1 <= rows, "slice_rows {r0}..{r1} of {rows}");
        let out = Tensor::new(vec![r1 - r0, cols], va.data()[r0 * cols..r1 * cols].to_vec());
        self.push(
            "slice_rows",
            out,
            Some(Box::new(move |g| {
                let mut z = Tensor::zeros(vec![rows, cols]);
                z.data_mut()[r0 * cols..r1 * cols].copy_from_slice(g.data());
                vec![(a.0, z)]
            })),
            false,
        )
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let values: Vec<Rc<Tensor>> = parts.iter().map(|&p| self.value(p)).collect();
        let rows = values[0].rows();
        let col_counts: Vec<usize> = values
            .iter()
            .map(|v| {
                assert_eq!(v.rows(), rows, "concat_cols: row mismatch");
                v.cols()
            })
            .collect();
        let cols: usize = col_counts.iter().sum();
        let mut out = Tensor::zeros(vec![rows, cols]);
        let mut c0 = 0;
        for v in &values {
            for r in 0..rows {
                for c in 0..v.cols() {
                    out.set(r, c0 + c, v.at(r, c));
                }
            }
            c0 += v.cols();
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.0).collect();
        self.push(
            "concat_cols",
            out,
            Some(Box::new(move |g| {
                let mut grads = Vec::with_capacity(ids.len());
                let mut c0 = 0;
                for (&id, &nc) in ids.iter().zip(&col_counts) {
                    grads.push((id, Tensor::from_fn(rows, nc, |r, c| g.at(r, c0 + c))));
                    c0 += nc;
                }
                grads
            })),
            false,
        )
    }

    /// Columns `c0..c1` of a matrix.
    pub fn slice_cols(&self, a: Var, c0: usize, c1: usize) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        assert!(c0 < c1 && c1 <= cols, "slice_cols {c0}..{c1} of {cols}");
        let out = Tensor::from_fn(rows, c1 - c0, |r, c| va.at(r, c0 + c));
        self.push(
            "slice_cols",
            out,
            Some(Box::new(move |g| {
                let mut z = Tensor::zeros(vec![rows, cols]);
                for r in 0..rows {
                    for c in 0..(c1 - c0) {
                        z.set(r, c0 + c, g.at(r, c));
                    }
                }
                vec![(a.0, z)]
            })),
            false,
        )
    }

    // ---- linear algebra ----------------------------------------------------

    /// Matrix product of an `m x k` and a `k x n` matrix.
    pub fn matmul(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        let (m, ka) = (va.rows(), va.cols());
        let (kb, n) = (vb.rows(), vb.cols());
        assert_eq!(ka, kb, "matmul: {m}x{ka} @ {kb}x{n}");
        let mut out = Tensor::zeros(vec![m, n]);
        matmul_into(va.data(), vb.data(), m, ka, n, out.data_mut());
        let (va2, vb2) = (Rc::clone(&va), Rc::clone(&vb));
        self.push(
            "matmul",
            out,
            Some(Box::new(move |g| {
                // dA = g @ B^T, dB = A^T @ g
                let mut da = Tensor::zeros(vec![m, ka]);
                matmul_nt_into(g.data(), vb2.data(), m, n, ka, da.data_mut());
                let mut db = Tensor::zeros(vec![ka, n]);
                matmul_tn_into(va2.data(), g.data(), ka, m, n, db.data_mut());
                vec![(a.0, da), (b.0, db)]
            })),
            false,
        )
    }

    // ---- row-wise nonlinearities -------------------------------------------

    /// Row-wise softmax with shift-by-max for overflow safety.
    pub fn softmax_rows(&self, a: Var) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        let mut out = Tensor::zeros(vec![rows, cols]);
        for r in 0..rows {
            softmax_row(va.row(r), None, &mut out.data_mut()[r * cols..(r + 1) * cols]);
        }
        let s = Rc::new(out.clone());
        self.push(
            "softmax_rows",
            out,
            Some(Box::new(move |g| vec![(a.0, softmax_backward(&s, g))])),
            false,
        )
    }

    /// Row-wise softmax under a constant 0/1 mask.
    ///
    /// `PreSoftmax` excludes masked entries from the normalization entirely
    /// (their weight is exactly 0.0 and the visible entries renormalize);
    /// rows with every entry masked come out all-zero. `Literal` computes the
    /// full softmax and then multiplies by the mask, leaving the visible
    /// weights unrenormalized.
    pub fn masked_softmax_rows(&self, a: Var, mask: &Tensor, mode: MaskMode) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        assert_eq!(mask.shape(), va.shape(), "mask shape mismatch");
        assert!(
            mask.data().iter().all(|&m| m == 0.0 || m == 1.0),
            "attention mask entries must be 0 or 1"
        );
        let mut out = Tensor::zeros(vec![rows, cols]);
        match mode {
            MaskMode::PreSoftmax => {
                for r in 0..rows {
                    softmax_row(va.row(r), Some(mask.row(r)), &mut out.data_mut()[r * cols..(r + 1) * cols]);
                }
                let s = Rc::new(out.clone());
                self.push(
                    "masked_softmax_rows",
                    out,
                    // Masked entries have weight exactly zero, so the plain
                    // softmax Jacobian already routes no gradient to them.
                    Some(Box::new(move |g| vec![(a.0, softmax_backward(&s, g))])),
                    false,
                )
            }
            MaskMode::Literal => {
                let mut soft = Tensor::zeros(vec![rows, cols]);
                for r in 0..rows {
                    softmax_row(va.row(r), None, &mut soft.data_mut()[r * cols..(r + 1) * cols]);
                }
                out = soft.zip(mask, |s, m| s * m);
                let s = Rc::new(soft);
                let mask = mask.clone();
                self.push(
                    "masked_softmax_rows",
                    out,
                    Some(Box::new(move |g| {
                        let gm = g.zip(&mask, |gi, m| gi * m);
                        vec![(a.0, softmax_backward(&s, &gm))]
                    })),
                    false,
                )
            }
        }
    }

    /// Row-wise layer norm with learnable gain and bias (`1 x n` each),
    /// epsilon pinned at 1e-5.
    pub fn layer_norm(&self, a: Var, gain: Var, bias: Var) -> Var {
        let (va, vg, vb) = (self.value(a), self.value(gain), self.value(bias));
        let (rows, cols) = (va.rows(), va.cols());
        assert_eq!(vg.shape(), &[1, cols], "layer_norm gain shape");
        assert_eq!(vb.shape(), &[1, cols], "layer_norm bias shape");
        let mut xhat = Tensor::zeros(vec![rows, cols]);
        let mut inv_std = vec![0.0; rows];
        for r in 0..rows {
            let row = va.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / cols as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[r] = inv;
            for c in 0..cols {
                xhat.set(r, c, (row[c] - mean) * inv);
            }
        }
        let out = Tensor::from_fn(rows, cols, |r, c| vg.at(0, c) * xhat.at(r, c) + vb.at(0, c));
        let xhat = Rc::new(xhat);
        self.push(
            "layer_norm",
            out,
            Some(Box::new(move |g| {
                let mut da = Tensor::zeros(vec![rows, cols]);
                let mut dgain = vec![0.0; cols];
                let mut dbias = vec![0.0; cols];
                for r in 0..rows {
                    let mut mean_dxhat = 0.0;
                    let mut mean_dxhat_xhat = 0.0;
                    for c in 0..cols {
                        let dxh = g.at(r, c) * vg.at(0, c);
                        mean_dxhat += dxh;
                        mean_dxhat_xhat += dxh * xhat.at(r, c);
                        dgain[c] += g.at(r, c) * xhat.at(r, c);
                        dbias[c] += g.at(r, c);
                    }
                    mean_dxhat /= cols as f64;
                    mean_dxhat_xhat /= cols as f64;
                    for c in 0..cols {
                        let dxh = g.at(r, c) * vg.at(0, c);
                        da.set(r, c, (dxh - mean_dxhat - xhat.at(r, c) * mean_dxhat_xhat) * inv_std[r]);
                    }
                }
                vec![
                    (a.0, da),
                    (gain.0, Tensor::new(vec![1, cols], dgain)),
                    (bias.0, Tensor::new(vec![1, cols], dbias)),
                ]
            })),
            false,
        )
    }

    /// Rescales every row to unit Euclidean norm (norms below 1e-12 fall back
    /// to plain division by the floor, keeping the op finite everywhere).
    pub fn l2_normalize_rows(&self, a: Var) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        let mut norms = vec![0.0; rows];
        let mut out = Tensor::zeros(vec![rows, cols]);
        for r in 0..rows {
            let n = va.row(r).iter().map(|x| x * x).sum::<f64>().sqrt();
            norms[r] = n;
            let denom = n.max(NORM_FLOOR);
            for c in 0..cols {
                out.set(r, c, va.at(r, c) / denom);
            }
        }
        let y = Rc::new(out.clone());
        self.push(
            "l2_normalize_rows",
            out,
            Some(Box::new(move |g| {
                let mut da = Tensor::zeros(vec![rows, cols]);
                for r in 0..rows {
                    let denom = norms[r].max(NORM_FLOOR);
                    if norms[r] > NORM_FLOOR {
                        let dot: f64 = (0..cols).map(|c| y.at(r, c) * g.at(r, c)).sum();
                        for c in 0..cols {
                            da.set(r, c, (g.at(r, c) - y.at(r, c) * dot) / denom);
                        }
                    } else {
                        for c in 0..cols {
                            da.set(r, c, g.at(r, c) / denom);
                        }
                    }
                }
                vec![(a.0, da)]
            })),
            false,
        )
    }

    // ---- reductions --------------------------------------------------------

    pub fn sum_all(&self, a: Var) -> Var {
        let va = self.value(a);
        let shape = va.shape().to_vec();
        let total: f64 = va.data().iter().sum();
        self.push(
            "sum_all",
            Tensor::scalar(total),
            Some(Box::new(move |g| vec![(a.0, Tensor::full(shape.clone(), g.item()))])),
            false,
        )
    }

    pub fn mean_all(&self, a: Var) -> Var {
        let va = self.value(a);
        let n = va.numel() as f64;
        let shape = va.shape().to_vec();
        let total: f64 = va.data().iter().sum();
        self.push(
            "mean_all",
            Tensor::scalar(total / n),
            Some(Box::new(move |g| vec![(a.0, Tensor::full(shape.clone(), g.item() / n))])),
            false,
        )
    }

    /// Column means: `m x n -> 1 x n`.
    pub fn mean_rows(&self, a: Var) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        let mut mean = vec![0.0; cols];
        for r in 0..rows {
            for (m, v) in mean.iter_mut().zip(va.row(r)) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= rows as f64;
        }
        self.push(
            "mean_rows",
            Tensor::new(vec![1, cols], mean),
            Some(Box::new(move |g| {
                vec![(a.0, Tensor::from_fn(rows, cols, |_, c| g.at(0, c) / rows as f64))]
            })),
            false,
        )
    }

    // ---- special ops -------------------------------------------------------

    /// Hamilton product of two quaternions stored as `1 x 4` rows `[w,x,y,z]`.
    pub fn quat_mul(&self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), &[1, 4], "quat_mul lhs shape");
        assert_eq!(vb.shape(), &[1, 4], "quat_mul rhs shape");
        let q = quat_product(va.data(), vb.data());
        self.push(
            "quat_mul",
            Tensor::new(vec![1, 4], q.to_vec()),
            Some(Box::new(move |g| {
                let g = g.data();
                let (aw, ax, ay, az) = (va.data()[0], va.data()[1], va.data()[2], va.data()[3]);
                let (bw, bx, by, bz) = (vb.data()[0], vb.data()[1], vb.data()[2], vb.data()[3]);
                // c = R(b) a = L(a) b with the usual left/right product
                // matrices; gradients are their transposes applied to g.
                let da = [
                    g[0] * bw + g[1] * bx + g[2] * by + g[3] * bz,
                    -g[0] * bx + g[1] * bw - g[2] * bz + g[3] * by,
                    -g[0] * by + g[1] * bz + g[2] * bw - g[3] * bx,
                    -g[0] * bz - g[1] * by + g[2] * bx + g[3] * bw,
                ];
                let db = [
                    g[0] * aw + g[1] * ax + g[2] * ay + g[3] * az,
                    -g[0] * ax + g[1] * aw + g[2] * az - g[3] * ay,
                    -g[0] * ay - g[1] * az + g[2] * aw + g[3] * ax,
                    -g[0] * az + g[1] * ay - g[2] * ax + g[3] * aw,
                ];
                vec![
                    (a.0, Tensor::new(vec![1, 4], da.to_vec())),
                    (b.0, Tensor::new(vec![1, 4], db.to_vec())),
                ]
            })),
            false,
        )
    }

    /// Gathers weighted row blends: output row `r` is the weighted sum of up
    /// to four source rows given by `taps[r]`. Realizes constant bilinear
    /// resampling as a differentiable (linear) op.
    pub fn gather_blend(&self, a: Var, taps: Rc<Vec<Tap>>) -> Var {
        let va = self.value(a);
        let (rows, cols) = (va.rows(), va.cols());
        let mut out = Tensor::zeros(vec![taps.len(), cols]);
        for (r, tap) in taps.iter().enumerate() {
            for &(idx, w) in tap {
                if w != 0.0 {
                    assert!(idx < rows, "gather_blend tap {idx} out of {rows} rows");
                    for c in 0..cols {
                        let v = out.at(r, c) + w * va.at(idx, c);
                        out.set(r, c, v);
                    }
                }
            }
        }
        let taps2 = Rc::clone(&taps);
        self.push(
            "gather_blend",
            out,
            Some(Box::new(move |g| {
                let mut da = Tensor::zeros(vec![rows, cols]);
                for (r, tap) in taps2.iter().enumerate() {
                    for &(idx, w) in tap {
                        if w != 0.0 {
                            for c in 0..cols {
                                let v = da.at(idx, c) + w * g.at(r, c);
                                da.set(idx, c, v);
                            }
                        }
                    }
                }
                vec![(a.0, da)]
            })),
            false,
        )
    }

    // ---- reverse sweep -----------------------------------------------------

    /// Walks the tape backwards from a scalar loss and returns gradients for
    /// every trainable leaf reached. Non-trainable leaves receive none.
    pub fn backward(&self, loss: Var) -> Gradients {
        let nodes = self.nodes.borrow();
        assert_eq!(nodes[loss.0].value.numel(), 1, "backward from a non-scalar loss");
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::full(nodes[loss.0].value.shape().to_vec(), 1.0));
        let mut result = HashMap::new();
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            g.assert_finite("backward");
            let node = &nodes[i];
            if node.trainable {
                result.insert(i, g.clone());
            }
            if let Some(back) = &node.back {
                for (pid, contrib) in back(&g) {
                    debug_assert!(pid < i, "tape parent {pid} not before child {i}");
                    match &mut grads[pid] {
                        Some(acc) => acc.add_assign(&contrib),
                        slot => *slot = Some(contrib),
                    }
                }
            }
        }
        Gradients { grads: result }
    }
}

/// Writes softmax of `row` (restricted to `mask == 1` entries when given)
/// into `out`; fully-masked rows become all-zero.
fn softmax_row(row: &[f64], mask: Option<&[f64]>, out: &mut [f64]) {
    let visible = |i: usize| mask.map_or(true, |m| m[i] == 1.0);
    let mut max = f64::NEG_INFINITY;
    for (i, &x) in row.iter().enumerate() {
        if visible(i) && x > max {
            max = x;
        }
    }
    if max == f64::NEG_INFINITY {
        out.fill(0.0);
        return;
    }
    let mut sum = 0.0;
    for (i, &x) in row.iter().enumerate() {
        if visible(i) {
            let e = (x - max).exp();
            out[i] = e;
            sum += e;
        } else {
            out[i] = 0.0;
        }
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `dx_i = s_i (g_i - sum_j g_j s_j)` per row.
fn softmax_backward(s: &Tensor, g: &Tensor) -> Tensor {
    let (rows, cols) = (s.rows(), s.cols());
    let mut dx = Tensor::zeros(vec![rows, cols]);
    for r in 0..rows {
        let dot: f64 = s.row(r).iter().zip(g.row(r)).map(|(si, gi)| si * gi).sum();
        for c in 0..cols {
            dx.set(r, c, s.at(r, c) * (g.at(r, c) - dot));
        }
    }
    dx
}

pub(crate) fn quat_product(a: &[f64], b: &[f64]) -> [f64; 4] {
    let (aw, ax, ay, az) = (a[0], a[1], a[2], a[3]);
    let (bw, bx, by, bz) = (b[0], b[1], b[2], b[3]);
    [
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn rand_tensor(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| rng.gen_range(-1.5..1.5))
    }

    #[test]
    fn matmul_identity() {
        let t = Tape::new();
        let a = t.leaf(Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]));
        let id = t.leaf(Tensor::new(vec![2, 2], vec![1., 0., 0., 1.]));
        let c = t.matmul(a, id);
        assert_eq!(t.value(c).data(), &[1., 2., 3., 4.]);
    }

    #[test]
    fn matmul_matches_triple_loop_oracle() {
        let mut r = rng(1);
        let a = rand_tensor(5, 7, &mut r);
        let b = rand_tensor(7, 3, &mut r);
        let t = Tape::new();
        let c = t.matmul(t.leaf(a.clone()), t.leaf(b.clone()));
        // Independent i-j-k oracle.
        let mut want = Tensor::zeros(vec![5, 3]);
        for i in 0..5 {
            for j in 0..3 {
                let mut acc = 0.0;
                for k in 0..7 {
                    acc += a.at(i, k) * b.at(k, j);
                }
                want.set(i, j, acc);
            }
        }
        assert!(t.value(c).max_abs_diff(&want) < 1e-12);
    }

    #[test]
    #[should_panic(expected = "matmul")]
    fn matmul_shape_mismatch_panics() {
        let t = Tape::new();
        let a = t.leaf(Tensor::zeros(vec![2, 3]));
        let b = t.leaf(Tensor::zeros(vec![2, 3]));
        t.matmul(a, b);
    }

    #[test]
    fn softmax_uniform_and_shifted() {
        let t = Tape::new();
        let a = t.leaf(Tensor::new(vec![1, 3], vec![0., 0., 0.]));
        let s = t.softmax_rows(a);
        for &v in t.value(s).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        // Large logits must not overflow thanks to the max shift.
        let b = t.leaf(Tensor::new(vec![1, 2], vec![1000.0, 0.0]));
        let sb = t.softmax_rows(b);
        let v = t.value(sb);
        assert!(v.at(0, 0) > 1.0 - 1e-12);
        assert!(v.at(0, 1) >= 0.0);
    }

    #[test]
    fn softmax_matches_compensated_oracle() {
        // Oracle: direct exp/sum with Neumaier-compensated summation on
        // moderate inputs, no max shift.
        let mut r = rng(2);
        let x = rand_tensor(4, 9, &mut r);
        let t = Tape::new();
        let s = t.softmax_rows(t.leaf(x.clone()));
        let sv = t.value(s);
        for row in 0..4 {
            let exps: Vec<f64> = x.row(row).iter().map(|&v| v.exp()).collect();
            let mut sum = 0.0;
            let mut comp = 0.0;
            for &e in &exps {
                let t0 = sum + e;
                comp += if sum.abs() >= e.abs() { (sum - t0) + e } else { (e - t0) + sum };
                sum = t0;
            }
            let total = sum + comp;
            for (c, &e) in exps.iter().enumerate() {
                assert!((sv.at(row, c) - e / total).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut r = rng(3);
        for _ in 0..20 {
            let x = rand_tensor(3, 6, &mut r).map(|v| v * 50.0);
            let t = Tape::new();
            let s = t.softmax_rows(t.leaf(x));
            let sv = t.value(s);
            for row in 0..3 {
                let sum: f64 = sv.row(row).iter().sum();
                assert!((sum - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn masked_softmax_presoftmax_equals_token_free_bitwise() {
        let mut r = rng(4);
        let full = rand_tensor(2, 5, &mut r);
        // Mask hides the trailing two "token" columns of row 0 and keeps all
        // of row 1 (a token row attending everywhere).
        let mask = Tensor::new(vec![2, 5], vec![1., 1., 1., 0., 0., 1., 1., 1., 1., 1.]);
        let t = Tape::new();
        let masked = t.masked_softmax_rows(t.leaf(full.clone()), &mask, MaskMode::PreSoftmax);
        let mv = t.value(masked);

        let prefix = Tensor::new(vec![1, 3], full.row(0)[..3].to_vec());
        let free = t.softmax_rows(t.leaf(prefix));
        let fv = t.value(free);
        for c in 0..3 {
            assert_eq!(mv.at(0, c).to_bits(), fv.at(0, c).to_bits());
        }
        assert_eq!(mv.at(0, 3), 0.0);
        assert_eq!(mv.at(0, 4), 0.0);
        let row1_sum: f64 = mv.row(1).iter().sum();
        assert!((row1_sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn masked_softmax_literal_multiplies_after() {
        let mut r = rng(5);
        let x = rand_tensor(1, 4, &mut r);
        let mask = Tensor::new(vec![1, 4], vec![1., 0., 1., 0.]);
        let t = Tape::new();
        let lit = t.masked_softmax_rows(t.leaf(x.clone()), &mask, MaskMode::Literal);
        let plain = t.softmax_rows(t.leaf(x));
        let (lv, pv) = (t.value(lit), t.value(plain));
        for c in 0..4 {
            assert_eq!(lv.at(0, c), pv.at(0, c) * mask.at(0, c));
        }
        // Visible mass stays unrenormalized: sums to less than one.
        assert!(lv.data().iter().sum::<f64>() < 1.0);
    }

    #[test]
    fn masked_softmax_fully_masked_row_is_zero() {
        let t = Tape::new();
        let x = t.leaf(Tensor::new(vec![1, 3], vec![5., 1., 2.]));
        let mask = Tensor::zeros(vec![1, 3]);
        let s = t.masked_softmax_rows(x, &mask, MaskMode::PreSoftmax);
        assert_eq!(t.value(s).data(), &[0., 0., 0.]);
    }

    #[test]
    fn layer_norm_basics() {
        let t = Tape::new();
        let gain = t.leaf(Tensor::full(vec![1, 2], 1.0));
        let bias = t.leaf(Tensor::zeros(vec![1, 2]));
        let constant = t.leaf(Tensor::full(vec![1, 2], 3.7));
        let y = t.layer_norm(constant, gain, bias);
        assert!(t.value(y).data().iter().all(|v| v.abs() < 1e-9));

        let pm = t.leaf(Tensor::new(vec![1, 2], vec![1.0, -1.0]));
        let y2 = t.layer_norm(pm, gain, bias);
        let v = t.value(y2);
        assert!((v.at(0, 0) - 1.0).abs() < 1e-4);
        assert!((v.at(0, 1) + 1.0).abs() < 1e-4);
    }

    #[test]
    fn layer_norm_matches_direct_oracle() {
        let mut r = rng(6);
        let x = rand_tensor(3, 5, &mut r);
        let g = rand_tensor(1, 5, &mut r);
        let b = rand_tensor(1, 5, &mut r);
        let t = Tape::new();
        let y = t.layer_norm(t.leaf(x.clone()), t.leaf(g.clone()), t.leaf(b.clone()));
        let yv = t.value(y);
        for row in 0..3 {
            let vals = x.row(row);
            let mean = vals.iter().sum::<f64>() / 5.0;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 5.0;
            for c in 0..5 {
                let want = g.at(0, c) * (vals[c] - mean) / (var + 1e-5).sqrt() + b.at(0, c);
                assert!((yv.at(row, c) - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gelu_values() {
        let t = Tape::new();
        let x = t.leaf(Tensor::new(vec![1, 3], vec![0.0, 10.0, -10.0]));
        let y = t.value(t.gelu(x));
        assert_eq!(y.at(0, 0), 0.0);
        assert!((y.at(0, 1) - 10.0).abs() < 1e-3);
        assert!(y.at(0, 2).abs() < 1e-3);
        // Literal transcription of the tanh approximation on a grid.
        for i in -8..=8 {
            let v = i as f64 * 0.5;
            let xs = t.leaf(Tensor::scalar(v));
            let got = t.value(t.gelu(xs)).item();
            let want =
                0.5 * v * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (v + 0.044715 * v.powi(3))).tanh());
            assert!((got - want).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_of_sum_is_ones() {
        let t = Tape::new();
        let x = t.param(Tensor::new(vec![2, 2], vec![1., 2., 3., 4.]));
        let loss = t.sum_all(x);
        let grads = t.backward(loss);
        assert_eq!(grads.get(x).unwrap().data(), &[1., 1., 1., 1.]);
    }

    #[test]
    fn backward_quadratic_matches_closed_form() {
        // loss = ||W x||^2, grad_x = 2 W^T W x.
        let mut r = rng(7);
        let w = rand_tensor(4, 3, &mut r);
        let x = rand_tensor(3, 1, &mut r);
        let t = Tape::new();
        let wv = t.leaf(w.clone());
        let xv = t.param(x.clone());
        let y = t.matmul(wv, xv);
        let loss = t.sum_all(t.mul(y, y));
        let grads = t.backward(loss);
        let got = grads.get(xv).unwrap();

        let mut want = vec![0.0; 3];
        for i in 0..3 {
            for k in 0..4 {
                let mut wx = 0.0;
                for j in 0..3 {
                    wx += w.at(k, j) * x.at(j, 0);
                }
                want[i] += 2.0 * w.at(k, i) * wx;
            }
        }
        for i in 0..3 {
            assert!((got.at(i, 0) - want[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn backward_reports_only_trainable_leaves() {
        let t = Tape::new();
        let frozen = t.leaf(Tensor::scalar(2.0));
        let live = t.param(Tensor::scalar(3.0));
        let loss = t.mul(frozen, live);
        let grads = t.backward(loss);
        assert!(grads.get(live).is_some());
        assert!(grads.get(frozen).is_none());
        assert_eq!(grads.len(), 1);
    }

    #[test]
    #[should_panic(expected = "non-finite")]
    fn non_finite_leaf_panics() {
        let t = Tape::new();
        // map() does not revalidate, so this smuggles an Inf to the tape.
        t.leaf(Tensor::scalar(1.0).map(|_| f64::INFINITY));
    }

    #[test]
    fn quat_mul_matches_hamilton_table() {
        // i * j = k
        let t = Tape::new();
        let i = t.leaf(Tensor::new(vec![1, 4], vec![0., 1., 0., 0.]));
        let j = t.leaf(Tensor::new(vec![1, 4], vec![0., 0., 1., 0.]));
        let k = t.value(t.quat_mul(i, j));
        assert_eq!(k.data(), &[0., 0., 0., 1.]);
    }

    // ---- gradient checks for every primitive -------------------------------

    #[test]
    fn grad_check_elementwise_ops() {
        let mut r = rng(8);
        let x = rand_tensor(3, 4, &mut r);
        let e = grad_check(|t, v| t.sum_all(t.mul(v, v)), &x, 1e-4);
        assert!(e < 1e-8, "mul: {e}");
        let e = grad_check(|t, v| t.sum_all(t.gelu(v)), &x, 1e-4);
        assert!(e < 1e-6, "gelu: {e}");
        let e = grad_check(|t, v| t.sum_all(t.exp(v)), &x, 1e-4);
        assert!(e < 1e-6, "exp: {e}");
        let pos = x.map(|v| v.abs() + 0.5);
        let e = grad_check(|t, v| t.sum_all(t.log(v)), &pos, 1e-4);
        assert!(e < 1e-6, "log: {e}");
        let mid = x.map(|v| 0.6 * v.tanh());
        let e = grad_check(|t, v| t.sum_all(t.acos_safe(v)), &mid, 1e-4);
        assert!(e < 1e-6, "acos: {e}");
        let off = x.map(|v| v + 2.0 * v.signum() + if v == 0.0 { 1.0 } else { 0.0 });
        let e = grad_check(|t, v| t.sum_all(t.abs(v)), &off, 1e-4);
        assert!(e < 1e-8, "abs: {e}");
        let pos = x.map(|v| v.abs() + 0.5);
        let e = grad_check(|t, v| t.sum_all(t.sqrt(v)), &pos, 1e-4);
        assert!(e < 1e-6, "sqrt: {e}");
    }

    #[test]
    fn sqrt_values_and_negative_clamp() {
        let t = Tape::new();
        let x = t.leaf(Tensor::new(vec![1, 4], vec![4.0, 0.25, 0.0, -3.0]));
        let y = t.value(t.sqrt(x));
        assert_eq!(y.data(), &[2.0, 0.5, 0.0, 0.0]);
    }

    #[test]
    fn sqrt_of_zero_sum_of_squares_has_zero_gradient() {
        // The distance between identical vectors: loss = sqrt(sum (p - q)^2)
        // with p == q. The loss is exactly zero and so must its gradient be —
        // no NaN or capped-derivative leakage.
        let t = Tape::new();
        let p = t.param(Tensor::new(vec![1, 3], vec![0.3, -1.2, 2.0]));
        let q = t.leaf(Tensor::new(vec![1, 3], vec![0.3, -1.2, 2.0]));
        let d = t.sub(p, q);
        let loss = t.sqrt(t.sum_all(t.mul(d, d)));
        assert_eq!(t.value(loss).item(), 0.0);
        let grads = t.backward(loss);
        assert_eq!(grads.get(p).unwrap().data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn grad_check_structure_ops() {
        let mut r = rng(9);
        let x = rand_tensor(4, 3, &mut r);
        let e = grad_check(
            |t, v| {
                let tr = t.transpose(v);
                let top = t.slice_rows(v, 0, 2);
                let cols = t.slice_cols(v, 1, 3);
                let cat = t.concat_rows(&[top, t.slice_rows(v, 2, 4)]);
                let catc = t.concat_cols(&[cols, t.slice_cols(v, 0, 1)]);
                let rs = t.reshape(v, vec![2, 6]);
                let s1 = t.sum_all(t.mul(tr, tr));
                let s2 = t.sum_all(t.mul(cat, cat));
                let s3 = t.sum_all(t.mul(catc, catc));
                let s4 = t.sum_all(t.mul(rs, rs));
                t.add(t.add(t.add(s1, s2), s3), s4)
            },
            &x,
            1e-4,
        );
        assert!(e < 1e-7, "structure: {e}");
    }

    #[test]
    fn reshape_keeps_row_major_order() {
        let t = Tape::new();
        let v = t.leaf(Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]));
        let r = t.reshape(v, vec![3, 2]);
        let rv = t.value(r);
        assert_eq!(rv.shape(), &[3, 2]);
        assert_eq!(rv.at(1, 0), 3.0);
        assert_eq!(rv.at(2, 1), 6.0);
    }

    #[test]
    fn grad_check_matmul_and_bias() {
        let mut r = rng(10);
        let x = rand_tensor(3, 4, &mut r);
        let w = rand_tensor(4, 5, &mut r);
        let e = grad_check(
            |t, v| {
                let wv = t.leaf(w.clone());
                let y = t.matmul(v, wv);
                t.sum_all(t.mul(y, y))
            },
            &x,
            1e-4,
        );
        assert!(e < 1e-7, "matmul lhs: {e}");
        let b = rand_tensor(1, 4, &mut r);
        let e = grad_check(
            |t, v| {
                let bv = t.leaf(b.clone());
                let y = t.add_row(v, bv);
                t.sum_all(t.mul(y, y))
            },
            &x,
            1e-4,
        );
        assert!(e < 1e-8, "add_row lhs: {e}");
        let e = grad_check(
            |t, v| {
                let xv = t.leaf(x.clone());
                let y = t.add_row(xv, v);
                t.sum_all(t.mul(y, y))
            },
            &b,
            1e-4,
        );
        assert!(e < 1e-8, "add_row bias: {e}");
    }

    #[test]
    fn grad_check_rowwise_ops() {
        let mut r = rng(11);
        let x = rand_tensor(3, 5, &mut r);
        let g = rand_tensor(1, 5, &mut r);
        let b = rand_tensor(1, 5, &mut r);
        let mix = rand_tensor(3, 5, &mut r);
        let e = grad_check(
            |t, v| {
                let s = t.softmax_rows(v);
                t.sum_all(t.mul(s, t.leaf(mix.clone())))
            },
            &x,
            1e-4,
        );
        assert!(e < 1e-6, "softmax: {e}");
        let e = grad_check(
            |t, v| {
                let y = t.layer_norm(v, t.leaf(g.clone()), t.leaf(b.clone()));
                t.sum_all(t.mul(y, t.leaf(mix.clone())))
            },
            &x,
            1e-4,
        );
        assert!(e < 1e-6, "layer_norm x: {e}");
        let e = grad_check(
            |t, v| {
                let y = t.layer_norm(t.leaf(x.clone()), v, t.leaf(b.clone()));
                t.sum_all(t.mul(y, t.leaf(mix.clone())))
            },
            &g,
            1e-4,
        );
        assert!(e < 1e-7, "layer_norm gain: {e}");
        let e = grad_check(
            |t, v| {
                let y = t.l2_normalize_rows(v);
                t.sum_all(t.mul(y, t.leaf(mix.clone())))
            },
            &x,
            1e-4,
        );
        assert!(e < 1e-6, "l2_normalize: {e}");
        let e = grad_check(|t, v| t.scale(t.mean_all(v), 3.0), &x, 1e-4);
        assert!(e < 1e-9, "mean_all: {e}");
        let e = grad_check(
            |t, v| {
                let m = t.mean_rows(v);
                t.sum_all(t.mul(m, m))
            },
            &x,
            1e-4,
        );
        assert!(e < 1e-8, "mean_rows: {e}");
    }

    #[test]
    fn grad_check_masked_softmax_both_modes() {
        let mut r = rng(12);
        let x = rand_tensor(3, 6, &mut r);
        let mix = rand_tensor(3, 6, &mut r);
        let mask = Tensor::from_fn(3, 6, |rr, c| if (rr + c) % 3 == 0 { 0.0 } else { 1.0 });
        for mode in [MaskMode::PreSoftmax, MaskMode::Literal] {
            let e = grad_check(
                |t, v| {
                    let s = t.masked_softmax_rows(v, &mask, mode);
                    t.sum_all(t.mul(s, t.leaf(mix.clone())))
                },
                &x,
                1e-4,
            );
            assert!(e < 1e-6, "masked softmax {mode:?}: {e}");
        }
    }

    #[test]
    fn grad_check_quat_mul_and_gather() {
        let mut r = rng(13);
        let a = rand_tensor(1, 4, &mut r);
        let b = rand_tensor(1, 4, &mut r);
        let e = grad_check(
            |t, v| {
                let q = t.quat_mul(v, t.leaf(b.clone()));
                t.sum_all(t.mul(q, q))
            },
            &a,
            1e-4,
        );
        assert!(e < 1e-8, "quat lhs: {e}");
        let e = grad_check(
            |t, v| {
                let q = t.quat_mul(t.leaf(a.clone()), v);
                t.sum_all(t.mul(q, q))
            },
            &b,
            1e-4,
        );
        assert!(e < 1e-8, "quat rhs: {e}");

        let x = rand_tensor(5, 3, &mut r);
        let taps: Rc<Vec<Tap>> = Rc::new(vec![
            [(0, 0.25), (1, 0.25), (2, 0.25), (3, 0.25)],
            [(4, 1.0), (0, 0.0), (0, 0.0), (0, 0.0)],
            [(2, 0.5), (3, 0.5), (0, 0.0), (0, 0.0)],
        ]);
        let e = grad_check(
            |t, v| {
                let y = t.gather_blend(v, Rc::clone(&taps));
                t.sum_all(t.mul(y, y))
            },
            &x,
            1e-4,
        );
        assert!(e < 1e-8, "gather_blend: {e}");
    }
}
