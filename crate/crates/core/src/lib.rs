//! Bilingual text-to-speech front-end conditioning.
//!
//! The crate implements the conditioning stack of a Mandarin-English
//! synthesis front end on top of a deliberately small encoder:
//!
//! - a 128-entry bilingual token inventory with an annotated line format;
//! - embedding masks gating where language and phonology conditioning may be
//!   injected (shared prosodic breaks vs. English-specific expression
//!   tokens);
//! - the embedding strength modulator: single-key multi-head attention with
//!   scaled-cosine strengths, residual/static and attention/dynamic
//!   components, and a convolutional feed-forward sub-network;
//! - label controls: six component-replacement combinations, expressiveness
//!   doubling and smooth-transition label rewriting;
//! - a gradient-checked trainable pipeline over a synthetic task.
//!
//! Everything runs in `f64`. Forward passes over frozen parameters are pure,
//! so batch entry points can fan work out over rayon (the default `parallel`
//! feature) without changing a single output bit; training and other
//! gradient accumulation stay sequential.

pub mod conditioning;
pub mod config;
pub mod encoder;
pub mod error;
pub mod esm;
pub mod frontend;
pub mod gradcheck;
pub mod init;
pub mod matrix;
pub mod model;
pub mod ops;
pub mod par;
pub mod params;
pub mod pipeline;
pub mod task;
pub mod train;

pub use conditioning::{
    apply_combination, condition_sequence, control_double, enhance_expressiveness,
    resolve_label_vectors, smooth_transition, Combination, ConditionedSequence, ControlSpec,
    ControlWarning, ControlledSpan, EmbeddingTables, SpanControl,
};
pub use config::RunConfig;
pub use encoder::ToyEncoderParams;
pub use error::{Error, Result};
pub use esm::{cosine_head, decompose, EsmConfig, EsmDiagnostics, EsmForward, EsmParams};
pub use frontend::{
    assign_labels, build_inventory, compute_language_mask, compute_phonology_mask, parse_file,
    parse_utterance, serialize_utterance, BitMask, CorpusKind, Language, LabelSpan, Phonology,
    TokenId, TokenInventory, TokenKind, Utterance,
};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use init::{InitScheme, InitSpec};
pub use matrix::TokenMatrix;
pub use model::Model;
pub use par::ExecMode;
pub use params::{ParamSet, Parameter};
pub use pipeline::{
    batch_condition, batch_loss, batch_loss_and_grad, condition_utterance,
    condition_utterance_backward, Example, SpecSource, UtteranceForward,
};
pub use task::{phonology_contrast, SyntheticTask};
pub use train::{train_toy, TrainReport};
