//! The full conditioning model: toy encoder, embedding tables and two
//! independent modulator instances (one for language, one for phonology),
//! plus the version-tagged JSON checkpoint format.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditioning::EmbeddingTables;
use crate::config::RunConfig;
use crate::encoder::ToyEncoderParams;
use crate::error::{Error, Result};
use crate::esm::EsmParams;
use crate::frontend::{build_inventory, TokenInventory};
use crate::matrix::TokenMatrix;
use crate::params::{ParamSet, Parameter};

#[derive(Clone, Debug)]
pub struct Model {
    pub config: RunConfig,
    pub inventory: TokenInventory,
    pub encoder: ToyEncoderParams,
    pub tables: EmbeddingTables,
    pub lang_esm: EsmParams,
    pub phon_esm: EsmParams,
}

impl Model {
    /// Seeded construction; the same config and seed always produce the same
    /// parameters.
    pub fn new(config: &RunConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let inventory = build_inventory();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = ToyEncoderParams::init(inventory.len(), config.d_model, &mut rng);
        let tables = EmbeddingTables::init(config.d_model, config.speakers, &mut rng);
        let lang_esm = EsmParams::init(config.esm(), "esm.language", &mut rng)?;
        let phon_esm = EsmParams::init(config.esm(), "esm.phonology", &mut rng)?;
        Ok(Model {
            config: config.clone(),
            inventory,
            encoder,
            tables,
            lang_esm,
            phon_esm,
        })
    }

    pub fn d_model(&self) -> usize {
        self.config.d_model
    }
}

impl ParamSet for Model {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.encoder.visit(f);
        self.tables.visit(f);
        self.lang_esm.visit(f);
        self.phon_esm.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.encoder.visit_mut(f);
        self.tables.visit_mut(f);
        self.lang_esm.visit_mut(f);
        self.phon_esm.visit_mut(f);
    }
}

pub const CHECKPOINT_FORMAT: &str = "esm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointTensor {
    shape: [usize; 2],
    /// Row-major values.
    data: Vec<f64>,
}

/// On-disk checkpoint: `{format, version, config, params: {name -> tensor}}`
/// with row-major tensor data. Parameter names are sorted, so serialization
/// is byte-stable.
#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: RunConfig,
    params: BTreeMap<String, CheckpointTensor>,
}

impl Model {
    pub fn to_checkpoint_json(&self) -> Result<String> {
        let mut params = BTreeMap::new();
        self.visit(&mut |p| {
            params.insert(
                p.name.clone(),
                CheckpointTensor {
                    shape: [p.value.rows(), p.value.cols()],
                    data: p.value.data().to_vec(),
                },
            );
        });
        let ckpt = Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            params,
        };
        serde_json::to_string_pretty(&ckpt).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_checkpoint_json(text: &str) -> Result<Model> {
        let ckpt: Checkpoint =
            serde_json::from_str(text).map_err(|e| Error::Checkpoint(e.to_string()))?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unknown format `{}`", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {} (expected {CHECKPOINT_VERSION})",
                ckpt.version
            )));
        }
        let mut model = Model::new(&ckpt.config, ckpt.config.seed)?;
        let mut missing = Vec::new();
        let mut err: Option<Error> = None;
        model.visit_mut(&mut |p| {
            if err.is_some() {
                return;
            }
            match ckpt.params.get(&p.name) {
                None => missing.push(p.name.clone()),
                Some(t) => {
                    if t.shape != [p.value.rows(), p.value.cols()] {
                        err = Some(Error::Checkpoint(format!(
                            "parameter `{}` has shape {:?}, expected {}x{}",
                            p.name,
                            t.shape,
                            p.value.rows(),
                            p.value.cols()
                        )));
                        return;
                    }
                    match TokenMatrix::from_vec(t.shape[0], t.shape[1], t.data.clone()) {
                        Ok(m) => p.value = m,
                        Err(e) => err = Some(e),
                    }
                }
            }
        });
        if let Some(e) = err {
            return Err(e);
        }
        if !missing.is_empty() {
            return Err(Error::Checkpoint(format!(
                "missing parameters: {}",
                missing.join(", ")
            )));
        }
        Ok(model)
    }
}
