//! Language and phonology labels and the per-corpus assignment table.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Language {
    Mandarin,
    English,
}

impl Language {
    pub fn other(self) -> Language {
        match self {
            Language::Mandarin => Language::English,
            Language::English => Language::Mandarin,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Mandarin => "mandarin",
            Language::English => "english",
        }
    }
}

/// Phonology of English material: realized with Chinese-influenced phonology
/// or native-like. Utterance spans that carry no English-specific tokens have
/// no phonology label at all (represented as `Option::None`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Phonology {
    ChineseEnglish,
    StandardEnglish,
}

impl Phonology {
    pub fn other(self) -> Phonology {
        match self {
            Phonology::ChineseEnglish => Phonology::StandardEnglish,
            Phonology::StandardEnglish => Phonology::ChineseEnglish,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Phonology::ChineseEnglish => "chinese-english",
            Phonology::StandardEnglish => "standard-english",
        }
    }
}

/// The four training-corpus categories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorpusKind {
    /// Mandarin utterances from a Chinese speaker.
    ChineseMandarin,
    /// Mixed-lingual utterances from a Chinese speaker (embedded English).
    ChineseMixed,
    /// Plain-English utterances from a Chinese speaker.
    ChineseEnglish,
    /// English utterances from an American speaker.
    AmericanEnglish,
}

impl CorpusKind {
    pub const ALL: [CorpusKind; 4] = [
        CorpusKind::ChineseMandarin,
        CorpusKind::ChineseMixed,
        CorpusKind::ChineseEnglish,
        CorpusKind::AmericanEnglish,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CorpusKind::ChineseMandarin => "chinese-mandarin",
            CorpusKind::ChineseMixed => "chinese-mixed",
            CorpusKind::ChineseEnglish => "chinese-english",
            CorpusKind::AmericanEnglish => "american-english",
        }
    }

    pub fn parse(s: &str) -> Result<CorpusKind> {
        CorpusKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidLabel(format!("unknown corpus kind `{s}`")))
    }
}

/// Default (language, phonology) labels per corpus kind.
///
/// Embedded English in mixed-lingual material is labeled Mandarin with
/// Chinese-English phonology; plain English is labeled English with
/// Standard-English phonology regardless of speaker origin; pure Mandarin
/// carries no phonology label.
pub fn assign_labels(corpus: CorpusKind) -> (Language, Option<Phonology>) {
    match corpus {
        CorpusKind::ChineseMandarin => (Language::Mandarin, None),
        CorpusKind::ChineseMixed => (Language::Mandarin, Some(Phonology::ChineseEnglish)),
        CorpusKind::ChineseEnglish => (Language::English, Some(Phonology::StandardEnglish)),
        CorpusKind::AmericanEnglish => (Language::English, Some(Phonology::StandardEnglish)),
    }
}
