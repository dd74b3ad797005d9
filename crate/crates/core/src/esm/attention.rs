//! Scaled-cosine single-key attention head.
//!
//! The key and value have exactly one item (the normalized label embedding),
//! so there is no softmax: the raw energy is the cosine of query and key,
//! already bounded to [-1, 1], and it multiplies the value directly.

use crate::matrix::{dot, l2_norm};

/// Norms below this are treated as degenerate: the similarity is undefined,
/// alpha is forced to 0 and the position is flagged in the diagnostics.
pub const DEGENERATE_NORM: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlphaFlag {
    Normal,
    /// Query or key norm below [`DEGENERATE_NORM`]; alpha forced to 0.
    Degenerate,
    /// Raw cosine left [-1, 1] through rounding and was clamped.
    Clamped,
}

/// Cosine strength of one head: alpha = (Q.K) / (|Q| |K|), clamped to
/// [-1, 1], with zero-norm inputs mapped to alpha = 0.
pub fn cosine_alpha(q: &[f64], k: &[f64]) -> (f64, AlphaFlag) {
    let nq = l2_norm(q);
    let nk = l2_norm(k);
    if nq < DEGENERATE_NORM || nk < DEGENERATE_NORM {
        return (0.0, AlphaFlag::Degenerate);
    }
    let raw = dot(q, k) / (nq * nk);
    if raw > 1.0 {
        (1.0, AlphaFlag::Clamped)
    } else if raw < -1.0 {
        (-1.0, AlphaFlag::Clamped)
    } else {
        (raw, AlphaFlag::Normal)
    }
}

/// One attention head: `head = alpha * V`.
pub fn cosine_head(q: &[f64], k: &[f64], v: &[f64]) -> (f64, Vec<f64>, AlphaFlag) {
    let (alpha, flag) = cosine_alpha(q, k);
    (alpha, v.iter().map(|x| alpha * x).collect(), flag)
}

/// Gradient of alpha w.r.t. q and k, accumulated into `dq`/`dk` with weight
/// `dalpha`. At degenerate or clamped points alpha is locally constant and
/// nothing flows.
#[allow(clippy::too_many_arguments)]
pub fn cosine_alpha_backward(
    q: &[f64],
    k: &[f64],
    alpha: f64,
    flag: AlphaFlag,
    dalpha: f64,
    dq: &mut [f64],
    dk: &mut [f64],
) {
    if flag != AlphaFlag::Normal {
        return;
    }
    let nq = l2_norm(q);
    let nk = l2_norm(k);
    let coeff = 1.0 / (nq * nk);
    // alpha = s / (nq nk) with s = q.k, so
    // d alpha / d q_i = (k_i - (s / nq^2) q_i) / (nq nk), and symmetrically for k.
    let s = alpha * nq * nk;
    let q_scale = s / (nq * nq);
    let k_scale = s / (nk * nk);
    for i in 0..q.len() {
        dq[i] += dalpha * coeff * (k[i] - q_scale * q[i]);
        dk[i] += dalpha * coeff * (q[i] - k_scale * k[i]);
    }
}
