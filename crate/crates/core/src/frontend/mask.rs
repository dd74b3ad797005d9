//! Embedding masks.
//!
//! Language embedding is applied only at token types shared across both
//! languages, i.e. the four prosodic breaks; all other types are
//! language-specific already. Phonology embedding is applied at the
//! English-specific expression tokens: the four stresses, the syllable
//! boundary and the liaison symbol. The two masks are disjoint by
//! construction.

use crate::error::Result;
use crate::frontend::inventory::{TokenInventory, TokenKind};
use crate::frontend::utterance::Utterance;

/// Per-position boolean gate, same length as the utterance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitMask {
    bits: Vec<bool>,
}

impl BitMask {
    pub fn new(bits: Vec<bool>) -> Self {
        BitMask { bits }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.bits.iter().any(|&b| b)
    }

    /// Positionwise AND; masks must have equal length.
    pub fn and(&self, other: &BitMask) -> BitMask {
        assert_eq!(self.len(), other.len());
        BitMask::new(
            self.bits
                .iter()
                .zip(other.bits.iter())
                .map(|(&a, &b)| a && b)
                .collect(),
        )
    }
}

/// Whether a token kind receives the language embedding.
pub fn language_bit(kind: TokenKind) -> bool {
    kind.is_break()
}

/// Whether a token kind receives the phonology embedding.
pub fn phonology_bit(kind: TokenKind) -> bool {
    kind.is_english_expressive()
}

pub fn compute_language_mask(u: &Utterance, inv: &TokenInventory) -> Result<BitMask> {
    let mut bits = Vec::with_capacity(u.len());
    for &t in &u.tokens {
        bits.push(language_bit(inv.kind_of(t)?));
    }
    Ok(BitMask::new(bits))
}

pub fn compute_phonology_mask(u: &Utterance, inv: &TokenInventory) -> Result<BitMask> {
    let mut bits = Vec::with_capacity(u.len());
    for &t in &u.tokens {
        bits.push(phonology_bit(inv.kind_of(t)?));
    }
    Ok(BitMask::new(bits))
}
