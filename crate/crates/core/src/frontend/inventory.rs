//! The bilingual token inventory.
//!
//! The expanded symbol set concatenates both languages' phoneme sets (no
//! phoneme is shared across) plus tone/stress tokens, boundary symbols and
//! the four shared prosodic break types. Ids are dense, assigned kind-major
//! and lexically within a kind, so the inventory is reproducible.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

const MANDARIN_PHONEMES: &str = include_str!("../../data/mandarin_phonemes.txt");
const ENGLISH_PHONEMES: &str = include_str!("../../data/english_phonemes.txt");

/// The four shared prosodic break types.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BreakKind {
    /// Prosodic word, written `#1`.
    Pw,
    /// Prosodic phrase, written `#2`.
    Pph,
    /// Intonation phrase, written `#3`.
    Iph,
    /// Silence at the beginning or end, written `/sil/`.
    Sil,
}

impl BreakKind {
    pub const ALL: [BreakKind; 4] = [BreakKind::Pw, BreakKind::Pph, BreakKind::Iph, BreakKind::Sil];

    pub fn symbol(self) -> &'static str {
        match self {
            BreakKind::Pw => "#1",
            BreakKind::Pph => "#2",
            BreakKind::Iph => "#3",
            BreakKind::Sil => "/sil/",
        }
    }

    pub fn from_symbol(s: &str) -> Option<BreakKind> {
        BreakKind::ALL.into_iter().find(|b| b.symbol() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenKind {
    MandarinPhoneme,
    EnglishPhoneme,
    MandarinTone,
    EnglishStress,
    MandarinCharBoundary,
    EnglishSyllableBoundary,
    EnglishLiaison,
    ProsodicBreak(BreakKind),
}

impl TokenKind {
    pub fn is_break(self) -> bool {
        matches!(self, TokenKind::ProsodicBreak(_))
    }

    /// True for the English-specific expression tokens: stress, syllable
    /// boundary and liaison. English phonemes are deliberately excluded.
    pub fn is_english_expressive(self) -> bool {
        matches!(
            self,
            TokenKind::EnglishStress | TokenKind::EnglishSyllableBoundary | TokenKind::EnglishLiaison
        )
    }

    /// Kind-group label used in the inventory CSV.
    pub fn group_name(self) -> &'static str {
        match self {
            TokenKind::MandarinPhoneme => "mandarin-phoneme",
            TokenKind::EnglishPhoneme => "english-phoneme",
            TokenKind::MandarinTone => "mandarin-tone",
            TokenKind::EnglishStress => "english-stress",
            TokenKind::MandarinCharBoundary => "mandarin-char-boundary",
            TokenKind::EnglishSyllableBoundary => "english-syllable-boundary",
            TokenKind::EnglishLiaison => "english-liaison",
            TokenKind::ProsodicBreak(_) => "prosodic-break",
        }
    }

    /// Namespace prefix this kind is written under in utterance files.
    pub fn namespace(self) -> Namespace {
        match self {
            TokenKind::MandarinPhoneme | TokenKind::MandarinTone | TokenKind::MandarinCharBoundary => {
                Namespace::Mandarin
            }
            TokenKind::EnglishPhoneme
            | TokenKind::EnglishStress
            | TokenKind::EnglishSyllableBoundary
            | TokenKind::EnglishLiaison => Namespace::English,
            TokenKind::ProsodicBreak(_) => Namespace::Break,
        }
    }
}

/// Written prefix of a token in the annotated format: `cn:`, `en:` or `br:`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Namespace {
    Mandarin,
    English,
    Break,
}

impl Namespace {
    pub fn prefix(self) -> &'static str {
        match self {
            Namespace::Mandarin => "cn",
            Namespace::English => "en",
            Namespace::Break => "br",
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.prefix())
    }
}

/// Dense token identifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InventoryEntry {
    pub symbol: String,
    pub kind: TokenKind,
    pub id: TokenId,
}

#[derive(Clone, Debug)]
pub struct TokenInventory {
    entries: Vec<InventoryEntry>,
    by_symbol: HashMap<String, TokenId>,
}

impl PartialEq for TokenInventory {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl TokenInventory {
    fn from_entries(entries: Vec<InventoryEntry>) -> Result<Self> {
        let mut by_symbol = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.id.index() != i {
                return Err(Error::InvalidLabel(format!(
                    "inventory ids must be dense 0..N-1; entry {} has id {}",
                    i, e.id.0
                )));
            }
            if by_symbol.insert(e.symbol.clone(), e.id).is_some() {
                return Err(Error::InvalidLabel(format!("duplicate symbol `{}`", e.symbol)));
            }
        }
        Ok(TokenInventory { entries, by_symbol })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[InventoryEntry] {
        &self.entries
    }

    pub fn get(&self, id: TokenId) -> Result<&InventoryEntry> {
        self.entries.get(id.index()).ok_or(Error::UnknownToken(id.0))
    }

    pub fn kind_of(&self, id: TokenId) -> Result<TokenKind> {
        self.get(id).map(|e| e.kind)
    }

    pub fn symbol_of(&self, id: TokenId) -> Result<&str> {
        self.get(id).map(|e| e.symbol.as_str())
    }

    pub fn lookup(&self, symbol: &str) -> Option<&InventoryEntry> {
        self.by_symbol.get(symbol).map(|id| &self.entries[id.index()])
    }

    /// Looks a symbol up and checks it is written under the right namespace.
    pub fn lookup_in(&self, ns: Namespace, symbol: &str) -> Option<&InventoryEntry> {
        self.lookup(symbol).filter(|e| e.kind.namespace() == ns)
    }

    pub fn count_where(&self, pred: impl Fn(TokenKind) -> bool) -> usize {
        self.entries.iter().filter(|e| pred(e.kind)).count()
    }

    /// Serializes as `symbol,kind,id` CSV with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("symbol,kind,id\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.symbol, e.kind.group_name(), e.id.0));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 && line == "symbol,kind,id" {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let (symbol, kind, id) = match (parts.next(), parts.next(), parts.next(), parts.next()) {
                (Some(s), Some(k), Some(i), None) => (s, k, i),
                _ => {
                    return Err(Error::InvalidLabel(format!(
                        "inventory csv line {}: expected `symbol,kind,id`",
                        i + 1
                    )))
                }
            };
            let kind = match kind {
                "mandarin-phoneme" => TokenKind::MandarinPhoneme,
                "english-phoneme" => TokenKind::EnglishPhoneme,
                "mandarin-tone" => TokenKind::MandarinTone,
                "english-stress" => TokenKind::EnglishStress,
                "mandarin-char-boundary" => TokenKind::MandarinCharBoundary,
                "english-syllable-boundary" => TokenKind::EnglishSyllableBoundary,
                "english-liaison" => TokenKind::EnglishLiaison,
                "prosodic-break" => {
                    let b = BreakKind::from_symbol(symbol).ok_or_else(|| {
                        Error::InvalidLabel(format!("`{symbol}` is not one of the four break symbols"))
                    })?;
                    TokenKind::ProsodicBreak(b)
                }
                other => return Err(Error::InvalidLabel(format!("unknown kind `{other}`"))),
            };
            let id = id
                .parse::<u32>()
                .map_err(|_| Error::InvalidLabel(format!("bad id `{id}`")))?;
            entries.push(InventoryEntry {
                symbol: symbol.to_string(),
                kind,
                id: TokenId(id),
            });
        }
        TokenInventory::from_entries(entries)
    }
}

/// Builds the default 128-entry inventory: 73 Mandarin phonemes, 39 English
/// phonemes, 5 Mandarin tones, 4 English stresses, the Mandarin character
/// boundary, the English syllable boundary, the English liaison symbol and
/// 4 shared prosodic break types.
pub fn build_inventory() -> TokenInventory {
    let mut groups: Vec<(TokenKind, Vec<String>)> = Vec::new();

    let mut mandarin: Vec<String> = MANDARIN_PHONEMES
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    mandarin.sort();
    groups.push((TokenKind::MandarinPhoneme, mandarin));

    let mut english: Vec<String> = ENGLISH_PHONEMES
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect();
    english.sort();
    groups.push((TokenKind::EnglishPhoneme, english));

    // 4 lexical tones plus the neutral tone.
    groups.push((
        TokenKind::MandarinTone,
        (1..=5).map(|i| format!("t{i}")).collect(),
    ));
    // Sentence, primary, secondary and none stress.
    groups.push((
        TokenKind::EnglishStress,
        (1..=4).map(|i| format!("stress{i}")).collect(),
    ));
    groups.push((TokenKind::MandarinCharBoundary, vec!["charb".into()]));
    groups.push((TokenKind::EnglishSyllableBoundary, vec!["sylb".into()]));
    groups.push((TokenKind::EnglishLiaison, vec!["liaison".into()]));

    let mut entries = Vec::with_capacity(128);
    let mut next = 0u32;
    for (kind, symbols) in groups {
        for symbol in symbols {
            entries.push(InventoryEntry {
                symbol,
                kind,
                id: TokenId(next),
            });
            next += 1;
        }
    }
    // Breaks carry their subtype in the kind; symbols sort like the subtypes.
    let mut breaks: Vec<BreakKind> = BreakKind::ALL.to_vec();
    breaks.sort_by_key(|b| b.symbol());
    for b in breaks {
        entries.push(InventoryEntry {
            symbol: b.symbol().to_string(),
            kind: TokenKind::ProsodicBreak(b),
            id: TokenId(next),
        });
        next += 1;
    }

    TokenInventory::from_entries(entries).expect("default inventory is well-formed")
}
