//! Minimal encoder: token embedding lookup plus a learned scalar times the
//! sinusoidal positional table. It produces the `E_o` consumed by the
//! modulators; everything upstream of that point is deliberately simple.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::frontend::Utterance;
use crate::init::{fill, InitScheme};
use crate::matrix::TokenMatrix;
use crate::ops;
use crate::params::{ParamSet, Parameter};

#[derive(Clone, Debug)]
pub struct ToyEncoderParams {
    /// inventory-size x d_model lookup table.
    pub embedding: Parameter,
    /// Learned scalar multiplying the positional table (1 x 1).
    pub pos_scale: Parameter,
}

impl ToyEncoderParams {
    pub fn init(vocab: usize, d_model: usize, rng: &mut ChaCha8Rng) -> Self {
        ToyEncoderParams {
            embedding: Parameter::new(
                "encoder.embedding",
                fill(rng, InitScheme::UniformScaled, vocab, d_model),
            ),
            pos_scale: Parameter::new("encoder.pos_scale", fill(rng, InitScheme::Ones, 1, 1)),
        }
    }

    pub fn d_model(&self) -> usize {
        self.embedding.value.cols()
    }

    /// E_o = embedding lookup + pos_scale * sinusoidal table.
    pub fn encode(&self, u: &Utterance) -> Result<TokenMatrix> {
        let d = self.d_model();
        let table = ops::positional_table(u.len(), d)?;
        let scale = self.pos_scale.value.at(0, 0);
        let mut e_o = TokenMatrix::zeros(u.len(), d);
        for (t, &tok) in u.tokens.iter().enumerate() {
            if tok.index() >= self.embedding.value.rows() {
                return Err(Error::UnknownToken(tok.0));
            }
            let emb = self.embedding.value.row(tok.index());
            let pos = table.row(t);
            let out = e_o.row_mut(t);
            for j in 0..d {
                out[j] = emb[j] + scale * pos[j];
            }
        }
        Ok(e_o)
    }

    /// Backward of [`ToyEncoderParams::encode`]: routes dE_o into the looked-up
    /// embedding rows and the positional scale.
    pub fn encode_backward(&mut self, u: &Utterance, d_e_o: &TokenMatrix) -> Result<()> {
        let d = self.d_model();
        let table = ops::positional_table(u.len(), d)?;
        let mut d_scale = 0.0;
        for (t, &tok) in u.tokens.iter().enumerate() {
            let grad_row = self.embedding.grad.row_mut(tok.index());
            let dy = d_e_o.row(t);
            let pos = table.row(t);
            for j in 0..d {
                grad_row[j] += dy[j];
                d_scale += pos[j] * dy[j];
            }
        }
        let g = self.pos_scale.grad.at(0, 0);
        self.pos_scale.grad.set(0, 0, g + d_scale);
        Ok(())
    }
}

impl ParamSet for ToyEncoderParams {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        f(&self.embedding);
        f(&self.pos_scale);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        f(&mut self.embedding);
        f(&mut self.pos_scale);
    }
}
