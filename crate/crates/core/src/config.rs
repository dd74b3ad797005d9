//! Run configuration shared by the trainer, the gradient checker and the
//! CLI. JSON-serializable; unspecified fields take the desk-scale defaults.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::esm::EsmConfig;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct RunConfig {
    pub d_model: usize,
    pub heads: usize,
    pub ffn_hidden: usize,
    pub kernel_width: usize,
    pub eps: f64,
    pub speakers: usize,
    pub learning_rate: f64,
    pub steps: usize,
    pub seed: u64,
    /// Optional input utterance file; CLI flags take precedence.
    pub input_path: Option<String>,
    /// Optional output directory; CLI flags take precedence.
    pub output_dir: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::desk()
    }
}

impl RunConfig {
    /// Small shapes for gradient checks and the synthetic training task.
    pub fn desk() -> Self {
        RunConfig {
            d_model: 16,
            heads: 2,
            ffn_hidden: 32,
            kernel_width: 1,
            eps: 1e-5,
            speakers: 2,
            learning_rate: 0.2,
            steps: 500,
            seed: 7,
            input_path: None,
            output_dir: None,
        }
    }

    /// Full-scale dimensions: 512-wide embeddings, 8 heads, 2048 hidden FFN
    /// units.
    pub fn paper_scale() -> Self {
        RunConfig {
            d_model: 512,
            heads: 8,
            ffn_hidden: 2048,
            ..RunConfig::desk()
        }
    }

    pub fn esm(&self) -> EsmConfig {
        EsmConfig {
            d_model: self.d_model,
            heads: self.heads,
            ffn_hidden: self.ffn_hidden,
            kernel_width: self.kernel_width,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.esm().validate()?;
        if self.d_model % 2 != 0 {
            return Err(Error::Config("d_model must be even for the positional table".into()));
        }
        if self.speakers == 0 {
            return Err(Error::Config("at least one speaker is required".into()));
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning rate must be finite and non-negative".into()));
        }
        Ok(())
    }
}
