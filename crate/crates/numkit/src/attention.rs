//! Scaled dot-product attention built from taped primitives.

use crate::error::{NumError, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Logit assigned to excluded keys. Large enough that `exp` underflows to an
/// exact zero after max subtraction.
pub const MASKED_LOGIT: f64 = -1e30;

/// `softmax(Q Kᵀ / √d) V`.
///
/// `key_mask[j] == false` excludes key row `j`. Errors with
/// [`NumError::EmptyAttentionSupport`] when every key is excluded.
pub fn scaled_dot_attention(
    tape: &mut Tape,
    q: Var,
    k: Var,
    v: Var,
    key_mask: Option<&[bool]>,
) -> Result<Var> {
    let m = tape.value(q).rows();
    let n = tape.value(k).rows();
    let bias = match key_mask {
        None => None,
        Some(mask) => {
            if mask.len() != n {
                return Err(NumError::Invalid(format!(
                    "key mask of length {} for {} keys",
                    mask.len(),
                    n
                )));
            }
            if !mask.iter().any(|&b| b) {
                return Err(NumError::EmptyAttentionSupport);
            }
            if mask.iter().all(|&b| b) {
                None
            } else {
                Some(Tensor::from_fn(m, n, |_, j| {
                    if mask[j] {
                        0.0
                    } else {
                        MASKED_LOGIT
                    }
                }))
            }
        }
    };
    attend(tape, q, k, v, bias)
}

/// Attention where query row `i` only sees key rows `0..=i`.
pub fn causal_attention(tape: &mut Tape, q: Var, k: Var, v: Var) -> Result<Var> {
    let m = tape.value(q).rows();
    let n = tape.value(k).rows();
    if m > n {
        return Err(NumError::Invalid(format!(
            "causal attention with {m} queries over {n} keys"
        )));
    }
    let bias = Tensor::from_fn(m, n, |i, j| if j <= i { 0.0 } else { MASKED_LOGIT });
    attend(tape, q, k, v, Some(bias))
}

fn attend(tape: &mut Tape, q: Var, k: Var, v: Var, bias: Option<Tensor>) -> Result<Var> {
    let (tq, tk, tv) = (tape.value(q), tape.value(k), tape.value(v));
    if tq.cols() != tk.cols() {
        return Err(NumError::Shape {
            op: "attention(q, k)",
            lhs: tq.shape(),
            rhs: tk.shape(),
        });
    }
    if tk.rows() != tv.rows() {
        return Err(NumError::Shape {
            op: "attention(k, v)",
            lhs: tk.shape(),
            rhs: tv.shape(),
        });
    }
    let d = tq.cols() as f64;
    let kt = tape.transpose(k);
    let raw = tape.matmul(q, kt)?;
    let mut logits = tape.scale(raw, 1.0 / d.sqrt());
    if let Some(bias) = bias {
        let b = tape.constant(bias);
        logits = tape.add(logits, b)?;
    }
    let weights = tape.softmax_rows(logits);
    tape.matmul(weights, v)
}
