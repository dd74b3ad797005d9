//! Shared test support: an independent straight-line reimplementation of the
//! modulator forward pass (the oracle for the 1e-12 equivalence checks) and
//! random instance builders.
//!
//! The reference implementation deliberately shares no code with the crate:
//! plain nested `Vec<f64>` loops, its own layer norm, cosine, convolution and
//! rectifier. It reads parameter values through the public accessors only.

#![allow(dead_code)]

use esm_core::matrix::TokenMatrix;
use esm_core::{EsmConfig, EsmParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rows_of(m: &TokenMatrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> TokenMatrix {
    TokenMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

fn ref_layer_norm(x: &[f64], gamma: &[f64], beta: &[f64], eps: f64) -> Vec<f64> {
    let d = x.len();
    let mut mean = 0.0;
    for &v in x {
        mean += v;
    }
    mean /= d as f64;
    let mut var = 0.0;
    for &v in x {
        var += (v - mean) * (v - mean);
    }
    var /= d as f64;
    let rstd = 1.0 / (var + eps).sqrt();
    let mut out = vec![0.0; d];
    for i in 0..d {
        out[i] = (x[i] - mean) * rstd * gamma[i] + beta[i];
    }
    out
}

fn ref_matvec(v: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let cols = w[0].len();
    let mut out = vec![0.0; cols];
    for (i, &x) in v.iter().enumerate() {
        for j in 0..cols {
            out[j] += x * w[i][j];
        }
    }
    out
}

fn ref_conv1d(x: &[Vec<f64>], kernel: &[Vec<f64>], bias: &[f64], width: usize) -> Vec<Vec<f64>> {
    let t_len = x.len();
    let d_in = x[0].len();
    let d_out = bias.len();
    let half = (width as i64 - 1) / 2;
    let mut y = vec![vec![0.0; d_out]; t_len];
    for t in 0..t_len {
        for o in 0..d_out {
            let mut acc = bias[o];
            for w in 0..width {
                let src = t as i64 + w as i64 - half;
                if src < 0 || src >= t_len as i64 {
                    continue;
                }
                for i in 0..d_in {
                    acc += x[src as usize][i] * kernel[w * d_in + i][o];
                }
            }
            y[t][o] = acc;
        }
    }
    y
}

pub struct ReferenceOutput {
    pub f_o: Vec<Vec<f64>>,
    pub m_o: Vec<Vec<f64>>,
    pub dynamic: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
}

/// Straight-line forward pass over the same parameter values.
pub fn reference_forward(
    params: &EsmParams,
    e_o: &[Vec<f64>],
    lp_dynamic: &[f64],
    lp_static: &[f64],
) -> ReferenceOutput {
    let cfg = params.cfg;
    let d = cfg.d_model;
    let heads = cfg.heads;
    let dh = d / heads;
    let t_len = e_o.len();

    let w_q = rows_of(&params.w_q.value);
    let w_k = rows_of(&params.w_k.value);
    let w_v = rows_of(&params.w_v.value);
    let b_v = params.b_v.value.row(0).to_vec();
    let w_o = rows_of(&params.w_o.value);
    let b_o = params.b_o.value.row(0).to_vec();

    let lp_n = ref_layer_norm(
        lp_dynamic,
        params.ln_lp_gamma.value.row(0),
        params.ln_lp_beta.value.row(0),
        cfg.eps,
    );
    let k = ref_matvec(&lp_n, &w_k);
    let mut v = ref_matvec(&lp_n, &w_v);
    for j in 0..d {
        v[j] += b_v[j];
    }

    let mut alpha = vec![vec![0.0; heads]; t_len];
    let mut concat = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        let q = ref_matvec(&e_o[t], &w_q);
        for h in 0..heads {
            let mut dot = 0.0;
            let mut nq = 0.0;
            let mut nk = 0.0;
            for j in h * dh..(h + 1) * dh {
                dot += q[j] * k[j];
                nq += q[j] * q[j];
                nk += k[j] * k[j];
            }
            let nq = nq.sqrt();
            let nk = nk.sqrt();
            let mut a = if nq < 1e-12 || nk < 1e-12 { 0.0 } else { dot / (nq * nk) };
            if a > 1.0 {
                a = 1.0;
            }
            if a < -1.0 {
                a = -1.0;
            }
            alpha[t][h] = a;
            for j in h * dh..(h + 1) * dh {
                concat[t][j] = a * v[j];
            }
        }
    }

    let mut dynamic = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        let mut row = ref_matvec(&concat[t], &w_o);
        for j in 0..d {
            row[j] += b_o[j];
        }
        dynamic[t] = row;
    }

    let mut m_o = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        for j in 0..d {
            m_o[t][j] = dynamic[t][j] + lp_static[j];
        }
    }

    let mn: Vec<Vec<f64>> = m_o
        .iter()
        .map(|row| {
            ref_layer_norm(
                row,
                params.ln_mo_gamma.value.row(0),
                params.ln_mo_beta.value.row(0),
                cfg.eps,
            )
        })
        .collect();
    let w1 = rows_of(&params.ffn_w1.value);
    let b1 = params.ffn_b1.value.row(0).to_vec();
    let w2 = rows_of(&params.ffn_w2.value);
    let b2 = params.ffn_b2.value.row(0).to_vec();
    let mut h1 = ref_conv1d(&mn, &w1, &b1, cfg.kernel_width);
    for row in &mut h1 {
        for v in row.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    let ffn = ref_conv1d(&h1, &w2, &b2, cfg.kernel_width);

    let mut f_o = vec![vec![0.0; d]; t_len];
    for t in 0..t_len {
        for j in 0..d {
            f_o[t][j] = ffn[t][j] + m_o[t][j];
        }
    }

    ReferenceOutput {
        f_o,
        m_o,
        dynamic,
        alpha,
    }
}

/// A random small modulator instance: T <= 6, d <= 16, d divisible by heads.
pub struct RandomInstance {
    pub params: EsmParams,
    pub e_o: TokenMatrix,
    pub lp_dynamic: TokenMatrix,
    pub lp_static: TokenMatrix,
}

pub fn random_instance(seed: u64) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let heads = [1usize, 2, 4][rng.gen_range(0..3)];
    let dh = rng.gen_range(1..=(16 / heads).min(8));
    let d_model = heads * dh;
    let cfg = EsmConfig {
        d_model,
        heads,
        ffn_hidden: rng.gen_range(2..=12),
        kernel_width: if rng.gen_bool(0.5) { 1 } else { 3 },
        eps: 1e-5,
    };
    let t_len = rng.gen_range(1..=6);
    let params = EsmParams::init(cfg, "esm", &mut rng).unwrap();
    RandomInstance {
        params,
        e_o: random_matrix(&mut rng, t_len, d_model),
        lp_dynamic: random_matrix(&mut rng, 1, d_model),
        lp_static: random_matrix(&mut rng, 1, d_model),
    }
}
