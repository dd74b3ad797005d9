//! Embedding strength modulator.
//!
//! Two sub-networks with layer norm and residual connections around both:
//!
//! ```text
//! M_o = MH(E_o, LN(LP), LN(LP)) + LP
//! F_o = FFN(LN(M_o)) + M_o
//! ```
//!
//! The attention key/value is the single normalized label embedding, each
//! head's energy is the scaled cosine similarity of query and key (no
//! softmax), and the feed-forward network is two 1-D convolutions with a
//! rectifier in between. The residual term `LP` is the static component; the
//! multi-head output is the dynamic component. The mixed forward drives the
//! attention path and the residual path from two different label embeddings,
//! which is the basis of the component-replacement analysis and the control
//! operations.

pub mod attention;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::init::{fill, InitScheme};
use crate::matrix::TokenMatrix;
use crate::ops;
use crate::params::{ParamSet, Parameter};

pub use attention::{cosine_alpha, cosine_head, AlphaFlag, DEGENERATE_NORM};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct EsmConfig {
    /// Channel width of encoder output and label embeddings.
    pub d_model: usize,
    /// Attention heads; must divide `d_model`.
    pub heads: usize,
    /// Hidden width of the first FFN convolution; the second maps back to
    /// `d_model` so the residual in the second sub-network type-checks.
    pub ffn_hidden: usize,
    /// Odd convolution kernel width; 1 makes the FFN position-independent.
    pub kernel_width: usize,
    /// Layer-norm epsilon.
    pub eps: f64,
}

impl Default for EsmConfig {
    fn default() -> Self {
        EsmConfig {
            d_model: 512,
            heads: 8,
            ffn_hidden: 2048,
            kernel_width: 1,
            eps: 1e-5,
        }
    }
}

impl EsmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.ffn_hidden == 0 {
            return Err(Error::Config("sizes must be positive".into()));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::Config(format!(
                "d_model {} not divisible by heads {}",
                self.d_model, self.heads
            )));
        }
        if self.kernel_width % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel width {} must be odd",
                self.kernel_width
            )));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }
}

/// All learnable tensors of one modulator instance.
///
/// Query/key projections are bias-free so the cosine stays invariant to
/// positive rescaling of its inputs; the value projection carries a bias.
/// The two layer norms have independent affines. Per-head projections are
/// stored as one `d_model x d_model` matrix each, head `h` owning the
/// columns `h*head_dim..(h+1)*head_dim`.
#[derive(Clone, Debug)]
pub struct EsmParams {
    pub cfg: EsmConfig,
    pub w_q: Parameter,
    pub w_k: Parameter,
    pub w_v: Parameter,
    pub b_v: Parameter,
    pub w_o: Parameter,
    pub b_o: Parameter,
    pub ln_lp_gamma: Parameter,
    pub ln_lp_beta: Parameter,
    pub ln_mo_gamma: Parameter,
    pub ln_mo_beta: Parameter,
    pub ffn_w1: Parameter,
    pub ffn_b1: Parameter,
    pub ffn_w2: Parameter,
    pub ffn_b2: Parameter,
}

impl EsmParams {
    /// Seeded initialization; `prefix` namespaces the parameter names, e.g.
    /// `esm.language`.
    pub fn init(cfg: EsmConfig, prefix: &str, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d_model;
        let k = cfg.kernel_width;
        let f = cfg.ffn_hidden;
        let p = |name: &str, m: TokenMatrix| Parameter::new(format!("{prefix}.{name}"), m);
        Ok(EsmParams {
            cfg,
            w_q: p("w_q", fill(rng, InitScheme::UniformScaled, d, d)),
            w_k: p("w_k", fill(rng, InitScheme::UniformScaled, d, d)),
            w_v: p("w_v", fill(rng, InitScheme::UniformScaled, d, d)),
            b_v: p("b_v", fill(rng, InitScheme::Zeros, 1, d)),
            w_o: p("w_o", fill(rng, InitScheme::UniformScaled, d, d)),
            b_o: p("b_o", fill(rng, InitScheme::Zeros, 1, d)),
            ln_lp_gamma: p("ln_lp.gamma", fill(rng, InitScheme::Ones, 1, d)),
            ln_lp_beta: p("ln_lp.beta", fill(rng, InitScheme::Zeros, 1, d)),
            ln_mo_gamma: p("ln_mo.gamma", fill(rng, InitScheme::Ones, 1, d)),
            ln_mo_beta: p("ln_mo.beta", fill(rng, InitScheme::Zeros, 1, d)),
            ffn_w1: p("ffn.w1", fill(rng, InitScheme::UniformScaled, k * d, f)),
            ffn_b1: p("ffn.b1", fill(rng, InitScheme::Zeros, 1, f)),
            ffn_w2: p("ffn.w2", fill(rng, InitScheme::UniformScaled, k * f, d)),
            ffn_b2: p("ffn.b2", fill(rng, InitScheme::Zeros, 1, d)),
        })
    }

    fn check_input(&self, e_o: &TokenMatrix, lp: &TokenMatrix, what: &'static str) -> Result<()> {
        let d = self.cfg.d_model;
        if e_o.cols() != d {
            return Err(Error::shape(what, format!("Tx{d}"), e_o.shape_str()));
        }
        if lp.rows() != 1 || lp.cols() != d {
            return Err(Error::shape(what, format!("1x{d}"), lp.shape_str()));
        }
        Ok(())
    }

    /// Multi-head scaled-cosine attention over a single (already normalized)
    /// key/value embedding, shared across all query positions. Returns the
    /// dynamic component (after the output projection) and per-token
    /// per-head strengths.
    pub fn multi_head(&self, e_o: &TokenMatrix, lp_n: &TokenMatrix) -> Result<(TokenMatrix, TokenMatrix)> {
        let att = self.multi_head_fwd(e_o, lp_n)?;
        Ok((att.dynamic, att.alpha))
    }

    fn multi_head_fwd(&self, e_o: &TokenMatrix, lp_n: &TokenMatrix) -> Result<AttentionCache> {
        self.check_input(e_o, lp_n, "multi_head")?;
        let d = self.cfg.d_model;
        let heads = self.cfg.heads;
        let dh = self.cfg.head_dim();
        let t_len = e_o.rows();

        let q = e_o.matmul(&self.w_q.value)?;
        let k = lp_n.matmul(&self.w_k.value)?;
        let v = ops::linear(lp_n, &self.w_v.value, &self.b_v.value)?;

        let mut alpha = TokenMatrix::zeros(t_len, heads);
        let mut flags = vec![AlphaFlag::Normal; t_len * heads];
        let mut concat = TokenMatrix::zeros(t_len, d);
        for t in 0..t_len {
            for h in 0..heads {
                let block = h * dh..(h + 1) * dh;
                let (a, flag) = cosine_alpha(&q.row(t)[block.clone()], &k.row(0)[block.clone()]);
                alpha.set(t, h, a);
                flags[t * heads + h] = flag;
                let out = &mut concat.row_mut(t)[block.clone()];
                for (o, &vv) in out.iter_mut().zip(&v.row(0)[block]) {
                    *o = a * vv;
                }
            }
        }
        let dynamic = ops::linear(&concat, &self.w_o.value, &self.b_o.value)?;
        Ok(AttentionCache {
            q,
            k,
            v,
            alpha,
            flags,
            concat,
            dynamic,
        })
    }

    /// Full forward pass with key/value and residual driven by the same
    /// embedding (Eq. 1 with `LP_dynamic == LP_static`).
    pub fn forward(&self, e_o: &TokenMatrix, lp: &TokenMatrix) -> Result<EsmForward> {
        self.forward_mixed(e_o, lp, lp)
    }

    /// Forward pass with independent dynamic-source (attention key/value)
    /// and static-source (residual) embeddings. With equal sources this is
    /// exactly [`EsmParams::forward`].
    pub fn forward_mixed(
        &self,
        e_o: &TokenMatrix,
        lp_dynamic: &TokenMatrix,
        lp_static: &TokenMatrix,
    ) -> Result<EsmForward> {
        self.check_input(e_o, lp_dynamic, "esm_forward")?;
        self.check_input(e_o, lp_static, "esm_forward")?;
        let eps = self.cfg.eps;
        let kw = self.cfg.kernel_width;
        let t_len = e_o.rows();
        let d = self.cfg.d_model;

        let (lp_n, ln_lp) =
            ops::layer_norm_fwd(lp_dynamic, &self.ln_lp_gamma.value, &self.ln_lp_beta.value, eps)?;
        let att = self.multi_head_fwd(e_o, &lp_n)?;

        let mut m_o = TokenMatrix::zeros(t_len, d);
        for t in 0..t_len {
            let dyn_row = att.dynamic.row(t);
            let out = m_o.row_mut(t);
            for j in 0..d {
                out[j] = dyn_row[j] + lp_static.at(0, j);
            }
        }

        let (mn, ln_mo) = ops::layer_norm_fwd(&m_o, &self.ln_mo_gamma.value, &self.ln_mo_beta.value, eps)?;
        let h1 = ops::conv1d(&mn, &self.ffn_w1.value, &self.ffn_b1.value, kw)?;
        let act = ops::relu(&h1);
        let ffn = ops::conv1d(&act, &self.ffn_w2.value, &self.ffn_b2.value, kw)?;

        let mut f_o = ffn;
        f_o.add_assign(&m_o)?;
        if !f_o.is_finite() {
            return Err(Error::NonFiniteActivation {
                context: "esm_forward output".into(),
            });
        }

        let diag = EsmDiagnostics {
            alpha: att.alpha.clone(),
            dynamic: att.dynamic.clone(),
            static_component: lp_static.row(0).to_vec(),
            m_o: m_o.clone(),
            f_o: f_o.clone(),
            degenerate: att
                .flags
                .iter()
                .enumerate()
                .filter(|(_, f)| **f == AlphaFlag::Degenerate)
                .map(|(i, _)| (i / self.cfg.heads, i % self.cfg.heads))
                .collect(),
        };

        Ok(EsmForward {
            f_o,
            diag,
            cache: EsmCache {
                e_o: e_o.clone(),
                lp_dynamic: lp_dynamic.clone(),
                lp_n,
                ln_lp,
                att,
                m_o,
                ln_mo,
                mn,
                h1,
                act,
            },
        })
    }

    /// Backward pass: accumulates parameter gradients and returns the
    /// gradients w.r.t. the encoder output and both label embeddings.
    pub fn backward(&mut self, fwd: &EsmForward, d_f_o: &TokenMatrix) -> Result<EsmInputGrads> {
        let cache = &fwd.cache;
        let t_len = cache.e_o.rows();
        let d = self.cfg.d_model;
        let heads = self.cfg.heads;
        let dh = self.cfg.head_dim();
        let kw = self.cfg.kernel_width;
        if d_f_o.shape() != (t_len, d) {
            return Err(Error::shape("esm_backward", format!("{t_len}x{d}"), d_f_o.shape_str()));
        }

        // F_o = FFN(LN(M_o)) + M_o
        let mut d_m_o = d_f_o.clone();
        let mut d_act = TokenMatrix::zeros(t_len, self.cfg.ffn_hidden);
        ops::conv1d_backward(
            &cache.act,
            &self.ffn_w2.value,
            kw,
            d_f_o,
            &mut d_act,
            &mut self.ffn_w2.grad,
            &mut self.ffn_b2.grad,
        );
        let mut d_h1 = TokenMatrix::zeros(t_len, self.cfg.ffn_hidden);
        ops::relu_backward(&cache.h1, &d_act, &mut d_h1);
        let mut d_mn = TokenMatrix::zeros(t_len, d);
        ops::conv1d_backward(
            &cache.mn,
            &self.ffn_w1.value,
            kw,
            &d_h1,
            &mut d_mn,
            &mut self.ffn_w1.grad,
            &mut self.ffn_b1.grad,
        );
        ops::layer_norm_backward(
            &cache.m_o,
            &self.ln_mo_gamma.value,
            &cache.ln_mo,
            &d_mn,
            &mut d_m_o,
            &mut self.ln_mo_gamma.grad,
            &mut self.ln_mo_beta.grad,
        );

        // M_o = dynamic + LP_static broadcast over tokens.
        let mut d_lp_static = TokenMatrix::zeros(1, d);
        for t in 0..t_len {
            for (g, &v) in d_lp_static.row_mut(0).iter_mut().zip(d_m_o.row(t)) {
                *g += v;
            }
        }

        // dynamic = concat W_O + b_O
        let mut d_concat = TokenMatrix::zeros(t_len, d);
        ops::linear_backward(
            &cache.att.concat,
            &self.w_o.value,
            &d_m_o,
            &mut d_concat,
            &mut self.w_o.grad,
            &mut self.b_o.grad,
        )?;

        // concat[t, block_h] = alpha_th * v_h
        let mut d_q = TokenMatrix::zeros(t_len, d);
        let mut d_k = TokenMatrix::zeros(1, d);
        let mut d_v = TokenMatrix::zeros(1, d);
        for h in 0..heads {
            let block = h * dh..(h + 1) * dh;
            let k_h = &cache.att.k.row(0)[block.clone()];
            let v_h = &cache.att.v.row(0)[block.clone()];
            for t in 0..t_len {
                let d_head = &d_concat.row(t)[block.clone()];
                let alpha = cache.att.alpha.at(t, h);
                let flag = cache.att.flags[t * heads + h];
                let d_alpha: f64 = d_head.iter().zip(v_h).map(|(a, b)| a * b).sum();
                {
                    let dv_block = &mut d_v.row_mut(0)[block.clone()];
                    for (g, &dh_v) in dv_block.iter_mut().zip(d_head) {
                        *g += alpha * dh_v;
                    }
                }
                let q_th = &cache.att.q.row(t)[block.clone()];
                // Split borrows: q rows and the k row live in different matrices.
                attention::cosine_alpha_backward(
                    q_th,
                    k_h,
                    alpha,
                    flag,
                    d_alpha,
                    &mut d_q.row_mut(t)[block.clone()],
                    &mut d_k.row_mut(0)[block.clone()],
                );
            }
        }

        // Q = E_o W_Q (bias-free)
        let d_e_o = d_q.matmul(&self.w_q.value.transpose())?;
        self.w_q.grad.add_assign(&cache.e_o.transpose().matmul(&d_q)?)?;

        // V = LP_n W_V + b_V ; K = LP_n W_K
        let mut d_lp_n = TokenMatrix::zeros(1, d);
        ops::linear_backward(
            &cache.lp_n,
            &self.w_v.value,
            &d_v,
            &mut d_lp_n,
            &mut self.w_v.grad,
            &mut self.b_v.grad,
        )?;
        d_lp_n.add_assign(&d_k.matmul(&self.w_k.value.transpose())?)?;
        self.w_k.grad.add_assign(&cache.lp_n.transpose().matmul(&d_k)?)?;

        let mut d_lp_dynamic = TokenMatrix::zeros(1, d);
        ops::layer_norm_backward(
            &cache.lp_dynamic,
            &self.ln_lp_gamma.value,
            &cache.ln_lp,
            &d_lp_n,
            &mut d_lp_dynamic,
            &mut self.ln_lp_gamma.grad,
            &mut self.ln_lp_beta.grad,
        );

        // d_e_o has so far only the attention contribution; residual paths of
        // Eq. 1-2 do not touch E_o.
        if !d_e_o.is_finite() {
            return Err(Error::NonFinite {
                context: "esm backward".into(),
            });
        }
        Ok(EsmInputGrads {
            d_e_o,
            d_lp_dynamic,
            d_lp_static,
        })
    }
}

impl ParamSet for EsmParams {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        for p in [
            &self.w_q,
            &self.w_k,
            &self.w_v,
            &self.b_v,
            &self.w_o,
            &self.b_o,
            &self.ln_lp_gamma,
            &self.ln_lp_beta,
            &self.ln_mo_gamma,
            &self.ln_mo_beta,
            &self.ffn_w1,
            &self.ffn_b1,
            &self.ffn_w2,
            &self.ffn_b2,
        ] {
            f(p);
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        for p in [
            &mut self.w_q,
            &mut self.w_k,
            &mut self.w_v,
            &mut self.b_v,
            &mut self.w_o,
            &mut self.b_o,
            &mut self.ln_lp_gamma,
            &mut self.ln_lp_beta,
            &mut self.ln_mo_gamma,
            &mut self.ln_mo_beta,
            &mut self.ffn_w1,
            &mut self.ffn_b1,
            &mut self.ffn_w2,
            &mut self.ffn_b2,
        ] {
            f(p);
        }
    }
}

#[derive(Clone, Debug)]
struct AttentionCache {
    q: TokenMatrix,
    k: TokenMatrix,
    v: TokenMatrix,
    alpha: TokenMatrix,
    flags: Vec<AlphaFlag>,
    concat: TokenMatrix,
    dynamic: TokenMatrix,
}

#[derive(Clone, Debug)]
pub struct EsmCache {
    e_o: TokenMatrix,
    lp_dynamic: TokenMatrix,
    lp_n: TokenMatrix,
    ln_lp: ops::LayerNormCache,
    att: AttentionCache,
    m_o: TokenMatrix,
    ln_mo: ops::LayerNormCache,
    mn: TokenMatrix,
    h1: TokenMatrix,
    act: TokenMatrix,
}

/// Per-forward diagnostics: strengths, the two components and both sublayer
/// outputs.
#[derive(Clone, Debug)]
pub struct EsmDiagnostics {
    /// T x H strengths, each in [-1, 1].
    pub alpha: TokenMatrix,
    /// Multi-head output before the residual (T x d_model).
    pub dynamic: TokenMatrix,
    /// The residual label embedding (d_model).
    pub static_component: Vec<f64>,
    pub m_o: TokenMatrix,
    pub f_o: TokenMatrix,
    /// (token, head) pairs where a zero-norm query or key forced alpha = 0.
    pub degenerate: Vec<(usize, usize)>,
}

#[derive(Clone, Debug)]
pub struct EsmForward {
    pub f_o: TokenMatrix,
    pub diag: EsmDiagnostics,
    pub cache: EsmCache,
}

#[derive(Clone, Debug)]
pub struct EsmInputGrads {
    pub d_e_o: TokenMatrix,
    pub d_lp_dynamic: TokenMatrix,
    pub d_lp_static: TokenMatrix,
}

/// Splits diagnostics into the static and dynamic components, verifying that
/// they recompose into the first sublayer output bit-exactly.
pub fn decompose(diag: &EsmDiagnostics) -> Result<(Vec<f64>, TokenMatrix)> {
    for t in 0..diag.m_o.rows() {
        for j in 0..diag.m_o.cols() {
            let recomposed = diag.dynamic.at(t, j) + diag.static_component[j];
            if recomposed.to_bits() != diag.m_o.at(t, j).to_bits() {
                return Err(Error::ConsistencyFailure { token: t, channel: j });
            }
        }
    }
    Ok((diag.static_component.clone(), diag.dynamic.clone()))
}
