//! Dense forward/backward kernels: linear maps, layer normalization, 1-D
//! convolution, rectifier and the sinusoidal positional table.
//!
//! Backward functions accumulate (`+=`) into the provided gradient buffers so
//! a caller can sum contributions from several paths.

use crate::error::{Error, Result};
use crate::matrix::TokenMatrix;

/// y = x W + b, applied row-wise. `b` is a 1 x Dout row vector.
pub fn linear(x: &TokenMatrix, w: &TokenMatrix, b: &TokenMatrix) -> Result<TokenMatrix> {
    if b.rows() != 1 || b.cols() != w.cols() {
        return Err(Error::shape("linear", format!("bias 1x{}", w.cols()), b.shape_str()));
    }
    let mut y = x.matmul(w)?;
    for r in 0..y.rows() {
        let row = y.row_mut(r);
        for (v, bv) in row.iter_mut().zip(b.row(0)) {
            *v += bv;
        }
    }
    Ok(y)
}

/// Backward of [`linear`]: given dL/dy, accumulates dL/dx, dL/dW, dL/db.
pub fn linear_backward(
    x: &TokenMatrix,
    w: &TokenMatrix,
    dy: &TokenMatrix,
    dx: &mut TokenMatrix,
    dw: &mut TokenMatrix,
    db: &mut TokenMatrix,
) -> Result<()> {
    dx.add_assign(&dy.matmul(&w.transpose())?)?;
    dw.add_assign(&x.transpose().matmul(dy)?)?;
    for r in 0..dy.rows() {
        for (g, d) in db.row_mut(0).iter_mut().zip(dy.row(r)) {
            *g += d;
        }
    }
    Ok(())
}

/// Per-row statistics saved by the forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct LayerNormCache {
    pub mean: Vec<f64>,
    pub rstd: Vec<f64>,
}

/// Row-wise layer normalization followed by the affine gamma/beta.
/// `eps` is added inside the square root of the variance term.
pub fn layer_norm(
    x: &TokenMatrix,
    gamma: &TokenMatrix,
    beta: &TokenMatrix,
    eps: f64,
) -> Result<TokenMatrix> {
    layer_norm_fwd(x, gamma, beta, eps).map(|(y, _)| y)
}

pub fn layer_norm_fwd(
    x: &TokenMatrix,
    gamma: &TokenMatrix,
    beta: &TokenMatrix,
    eps: f64,
) -> Result<(TokenMatrix, LayerNormCache)> {
    let d = x.cols();
    if gamma.cols() != d || beta.cols() != d || gamma.rows() != 1 || beta.rows() != 1 {
        return Err(Error::shape("layer_norm", format!("affine 1x{d}"), format!("{} / {}", gamma.shape_str(), beta.shape_str())));
    }
    let mut y = TokenMatrix::zeros(x.rows(), d);
    let mut cache = LayerNormCache {
        mean: Vec::with_capacity(x.rows()),
        rstd: Vec::with_capacity(x.rows()),
    };
    for r in 0..x.rows() {
        let row = x.row(r);
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rstd = 1.0 / (var + eps).sqrt();
        let out = y.row_mut(r);
        for i in 0..d {
            let norm = (row[i] - mean) * rstd;
            out[i] = norm * gamma.at(0, i) + beta.at(0, i);
        }
        cache.mean.push(mean);
        cache.rstd.push(rstd);
    }
    Ok((y, cache))
}

pub fn layer_norm_backward(
    x: &TokenMatrix,
    gamma: &TokenMatrix,
    cache: &LayerNormCache,
    dy: &TokenMatrix,
    dx: &mut TokenMatrix,
    dgamma: &mut TokenMatrix,
    dbeta: &mut TokenMatrix,
) {
    let d = x.cols();
    for r in 0..x.rows() {
        let mean = cache.mean[r];
        let rstd = cache.rstd[r];
        let xr = x.row(r);
        let dyr = dy.row(r);

        let mut dnorm_mean = 0.0;
        let mut dnorm_norm_mean = 0.0;
        for i in 0..d {
            let norm = (xr[i] - mean) * rstd;
            let dnorm = gamma.at(0, i) * dyr[i];
            dnorm_mean += dnorm;
            dnorm_norm_mean += dnorm * norm;
        }
        dnorm_mean /= d as f64;
        dnorm_norm_mean /= d as f64;

        let dxr = dx.row_mut(r);
        for i in 0..d {
            let norm = (xr[i] - mean) * rstd;
            let dnorm = gamma.at(0, i) * dyr[i];
            dxr[i] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * rstd;
            dgamma.row_mut(0)[i] += norm * dyr[i];
            dbeta.row_mut(0)[i] += dyr[i];
        }
    }
}

/// Same-length 1-D convolution over the sequence axis with zero padding.
///
/// The kernel is stored as a `(width * d_in) x d_out` matrix; row
/// `w * d_in + i` holds the tap for offset `w` (0-based, left to right) and
/// input channel `i`. The width must be odd.
pub fn conv1d(
    x: &TokenMatrix,
    kernel: &TokenMatrix,
    bias: &TokenMatrix,
    width: usize,
) -> Result<TokenMatrix> {
    let d_in = x.cols();
    if width % 2 == 0 || width == 0 {
        return Err(Error::shape("conv1d", "odd kernel width", format!("{width}")));
    }
    if kernel.rows() != width * d_in {
        return Err(Error::shape(
            "conv1d",
            format!("kernel rows {}", width * d_in),
            kernel.shape_str(),
        ));
    }
    let d_out = kernel.cols();
    if bias.rows() != 1 || bias.cols() != d_out {
        return Err(Error::shape("conv1d", format!("bias 1x{d_out}"), bias.shape_str()));
    }
    let t_len = x.rows();
    let half = (width as isize - 1) / 2;
    let mut y = TokenMatrix::zeros(t_len, d_out);
    for t in 0..t_len {
        let out = y.row_mut(t);
        out.copy_from_slice(bias.row(0));
        for w in 0..width {
            let src = t as isize + w as isize - half;
            if src < 0 || src >= t_len as isize {
                continue;
            }
            let xrow = x.row(src as usize);
            for (i, &xv) in xrow.iter().enumerate() {
                if xv == 0.0 {
                    continue;
                }
                let krow = kernel.row(w * d_in + i);
                for (o, &kv) in out.iter_mut().zip(krow) {
                    *o += xv * kv;
                }
            }
        }
    }
    Ok(y)
}

pub fn conv1d_backward(
    x: &TokenMatrix,
    kernel: &TokenMatrix,
    width: usize,
    dy: &TokenMatrix,
    dx: &mut TokenMatrix,
    dkernel: &mut TokenMatrix,
    dbias: &mut TokenMatrix,
) {
    let d_in = x.cols();
    let t_len = x.rows();
    let half = (width as isize - 1) / 2;
    for t in 0..t_len {
        let dyr = dy.row(t);
        for (g, d) in dbias.row_mut(0).iter_mut().zip(dyr) {
            *g += d;
        }
        for w in 0..width {
            let src = t as isize + w as isize - half;
            if src < 0 || src >= t_len as isize {
                continue;
            }
            let src = src as usize;
            for i in 0..d_in {
                let xv = x.at(src, i);
                let krow = kernel.row(w * d_in + i);
                let mut dxv = 0.0;
                let dkrow = dkernel.row_mut(w * d_in + i);
                for o in 0..dyr.len() {
                    dxv += dyr[o] * krow[o];
                    dkrow[o] += xv * dyr[o];
                }
                dx.row_mut(src)[i] += dxv;
            }
        }
    }
}

pub fn relu(x: &TokenMatrix) -> TokenMatrix {
    let mut y = x.clone();
    for v in y.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    y
}

pub fn relu_backward(x: &TokenMatrix, dy: &TokenMatrix, dx: &mut TokenMatrix) {
    for ((g, &pre), &d) in dx
        .data_mut()
        .iter_mut()
        .zip(x.data().iter())
        .zip(dy.data().iter())
    {
        if pre > 0.0 {
            *g += d;
        }
    }
}

/// Unscaled sinusoidal table: sin on even channels, cos on odd, wavelengths
/// geometric from 2*pi up to 10000*2*pi.
pub fn positional_table(t_len: usize, width: usize) -> Result<TokenMatrix> {
    if width % 2 != 0 {
        return Err(Error::shape("positional_table", "even width", format!("{width}")));
    }
    let mut table = TokenMatrix::zeros(t_len, width);
    for t in 0..t_len {
        let row = table.row_mut(t);
        for pair in 0..width / 2 {
            let exponent = 2.0 * pair as f64 / width as f64;
            let angle = t as f64 / 10000.0_f64.powf(exponent);
            row[2 * pair] = angle.sin();
            row[2 * pair + 1] = angle.cos();
        }
    }
    Ok(table)
}

/// Sinusoidal table multiplied by a (learned) scalar.
pub fn positional_encoding(t_len: usize, width: usize, scale: f64) -> Result<TokenMatrix> {
    let mut table = positional_table(t_len, width)?;
    for v in table.data_mut() {
        *v *= scale;
    }
    Ok(table)
}
