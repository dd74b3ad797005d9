//! Bilingual token front end: inventory, annotated-line parsing, embedding
//! masks and corpus label assignment.

pub mod inventory;
pub mod labels;
pub mod mask;
pub mod utterance;

pub use inventory::{build_inventory, BreakKind, InventoryEntry, Namespace, TokenId, TokenInventory, TokenKind};
pub use labels::{assign_labels, CorpusKind, Language, Phonology};
pub use mask::{compute_language_mask, compute_phonology_mask, language_bit, phonology_bit, BitMask};
pub use utterance::{parse_file, parse_utterance, serialize_utterance, LabelSpan, Utterance};
