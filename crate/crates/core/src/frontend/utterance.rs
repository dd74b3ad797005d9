//! Annotated utterance lines: parsing, validation and serialization.
//!
//! One utterance per line, UTF-8:
//!
//! ```text
//! [corpus=<kind> ;;] <segment> ( | <segment> )*
//! segment := [lang=<cn|en> [phon=<none|cnen|stden>] :] <token>+
//! token   := cn:<sym> | en:<sym> | br:<#1|#2|#3|/sil/>
//! ```
//!
//! Segment markers are optional. Without them the labels come from the
//! corpus header if present, otherwise they are inferred from the tokens:
//! a segment is English when it contains English-namespace tokens and no
//! Mandarin ones, and a phonology label is attached only when the segment
//! carries English-specific expression tokens. The serializer always emits
//! the fully explicit (canonical) form, which round-trips to the identical
//! string.

use crate::error::{Error, Result};
use crate::frontend::inventory::{Namespace, TokenId, TokenInventory};
use crate::frontend::labels::{assign_labels, CorpusKind, Language, Phonology};

/// Half-open token range with its conditioning labels.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelSpan {
    pub start: usize,
    pub end: usize,
    pub language: Language,
    pub phonology: Option<Phonology>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Utterance {
    pub tokens: Vec<TokenId>,
    pub spans: Vec<LabelSpan>,
    /// 1-based source line number, 0 for synthesized utterances.
    pub line: usize,
}

impl Utterance {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Checks all structural invariants against an inventory: token ids
    /// resolve, spans are ordered, non-overlapping and jointly cover the
    /// sequence, and a missing phonology label never hides English-specific
    /// expression tokens.
    pub fn validate(&self, inv: &TokenInventory) -> Result<()> {
        for &t in &self.tokens {
            inv.get(t)?;
        }
        let mut cursor = 0usize;
        for span in &self.spans {
            if span.start != cursor || span.start >= span.end || span.end > self.tokens.len() {
                return Err(Error::MalformedSpan {
                    line: self.line,
                    col: 0,
                    message: format!(
                        "span {}..{} does not continue coverage at token {cursor}",
                        span.start, span.end
                    ),
                });
            }
            cursor = span.end;
            if span.phonology.is_none() {
                for i in span.start..span.end {
                    if inv.kind_of(self.tokens[i])?.is_english_expressive() {
                        return Err(Error::MalformedSpan {
                            line: self.line,
                            col: 0,
                            message: format!(
                                "span {}..{} has no phonology label but contains English-specific token at position {i}",
                                span.start, span.end
                            ),
                        });
                    }
                }
            }
        }
        if cursor != self.tokens.len() {
            return Err(Error::MalformedSpan {
                line: self.line,
                col: 0,
                message: format!("spans cover {cursor} of {} tokens", self.tokens.len()),
            });
        }
        Ok(())
    }

    /// True if any token of the span is English-namespaced (phoneme, stress,
    /// syllable boundary or liaison).
    pub fn span_has_english_tokens(&self, span_idx: usize, inv: &TokenInventory) -> Result<bool> {
        let span = &self.spans[span_idx];
        for i in span.start..span.end {
            if inv.kind_of(self.tokens[i])?.namespace() == Namespace::English {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

/// One whitespace-delimited item plus its 1-based column.
struct Item<'a> {
    text: &'a str,
    col: usize,
}

fn split_items(line: &str) -> Vec<Item<'_>> {
    let mut items = Vec::new();
    let mut start = None;
    for (i, ch) in line.char_indices() {
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                items.push(Item {
                    text: &line[s..i],
                    col: s + 1,
                });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        items.push(Item {
            text: &line[s..],
            col: s + 1,
        });
    }
    items
}

fn malformed(line: usize, col: usize, message: impl Into<String>) -> Error {
    Error::MalformedSpan {
        line,
        col,
        message: message.into(),
    }
}

/// Parses one annotated line against an inventory. `line_no` is 1-based and
/// is recorded in the utterance and in any error.
pub fn parse_utterance(text: &str, line_no: usize, inv: &TokenInventory) -> Result<Utterance> {
    let items = split_items(text);
    if items.is_empty() {
        return Err(Error::EmptyLine { line: line_no });
    }

    let mut idx = 0;
    let mut corpus: Option<CorpusKind> = None;
    if let Some(rest) = items[0].text.strip_prefix("corpus=") {
        corpus = Some(
            CorpusKind::parse(rest)
                .map_err(|_| malformed(line_no, items[0].col, format!("unknown corpus kind `{rest}`")))?,
        );
        idx = 1;
        match items.get(idx) {
            Some(item) if item.text == ";;" => idx += 1,
            _ => {
                return Err(malformed(
                    line_no,
                    items.get(idx).map_or(items[0].col, |i| i.col),
                    "corpus header must be followed by `;;`",
                ))
            }
        }
    }

    // Split the remaining items into segments at standalone `|`.
    let mut segments: Vec<Vec<&Item<'_>>> = vec![Vec::new()];
    for item in &items[idx..] {
        if item.text == "|" {
            segments.push(Vec::new());
        } else {
            segments.last_mut().unwrap().push(item);
        }
    }

    let mut tokens: Vec<TokenId> = Vec::new();
    let mut spans: Vec<LabelSpan> = Vec::new();

    for segment in &segments {
        let seg_col = segment.first().map_or(1, |i| i.col);
        let mut cursor = 0;
        let mut explicit_lang: Option<Language> = None;
        let mut explicit_phon: Option<Option<Phonology>> = None;

        if let Some(first) = segment.first() {
            if let Some(lang) = first.text.strip_prefix("lang=") {
                explicit_lang = Some(match lang {
                    "cn" => Language::Mandarin,
                    "en" => Language::English,
                    other => return Err(malformed(line_no, first.col, format!("unknown language `{other}`"))),
                });
                cursor = 1;
                if let Some(item) = segment.get(cursor) {
                    if let Some(phon) = item.text.strip_prefix("phon=") {
                        explicit_phon = Some(match phon {
                            "none" => None,
                            "cnen" => Some(Phonology::ChineseEnglish),
                            "stden" => Some(Phonology::StandardEnglish),
                            other => {
                                return Err(malformed(line_no, item.col, format!("unknown phonology `{other}`")))
                            }
                        });
                        cursor += 1;
                    }
                }
                match segment.get(cursor) {
                    Some(item) if item.text == ":" => cursor += 1,
                    _ => {
                        return Err(malformed(
                            line_no,
                            segment.get(cursor).map_or(first.col, |i| i.col),
                            "segment marker must end with a standalone `:`",
                        ))
                    }
                }
            }
        }

        let start = tokens.len();
        let mut has_cn = false;
        let mut has_en = false;
        let mut has_expressive = false;
        for item in &segment[cursor..] {
            let (ns, symbol) = match item.text.split_once(':') {
                Some(("cn", s)) => (Namespace::Mandarin, s),
                Some(("en", s)) => (Namespace::English, s),
                Some(("br", s)) => (Namespace::Break, s),
                _ => {
                    return Err(malformed(
                        line_no,
                        item.col,
                        format!("token `{}` must be cn:<sym>, en:<sym> or br:<sym>", item.text),
                    ))
                }
            };
            let entry = inv.lookup_in(ns, symbol).ok_or(Error::UnknownSymbol {
                line: line_no,
                col: item.col,
                symbol: item.text.to_string(),
            })?;
            match ns {
                Namespace::Mandarin => has_cn = true,
                Namespace::English => has_en = true,
                Namespace::Break => {}
            }
            if entry.kind.is_english_expressive() {
                has_expressive = true;
            }
            tokens.push(entry.id);
        }
        if tokens.len() == start {
            return Err(malformed(line_no, seg_col, "segment contains no tokens"));
        }

        let language = explicit_lang
            .or_else(|| corpus.map(|c| assign_labels(c).0))
            .unwrap_or(if has_en && !has_cn {
                Language::English
            } else {
                Language::Mandarin
            });
        let phonology = match explicit_phon {
            Some(p) => p,
            None => match corpus {
                Some(c) if explicit_lang.is_none() => assign_labels(c).1,
                _ => {
                    if has_expressive {
                        Some(match language {
                            Language::English => Phonology::StandardEnglish,
                            Language::Mandarin => Phonology::ChineseEnglish,
                        })
                    } else {
                        None
                    }
                }
            },
        };

        spans.push(LabelSpan {
            start,
            end: tokens.len(),
            language,
            phonology,
        });
    }

    let utt = Utterance {
        tokens,
        spans,
        line: line_no,
    };
    utt.validate(inv)?;
    Ok(utt)
}

/// Parses a whole file, skipping blank lines.
pub fn parse_file(text: &str, inv: &TokenInventory) -> Result<Vec<Utterance>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_utterance(line, i + 1, inv)?);
    }
    Ok(out)
}

/// Emits the canonical explicit form; parsing it reproduces the utterance.
pub fn serialize_utterance(u: &Utterance, inv: &TokenInventory) -> Result<String> {
    let mut parts = Vec::with_capacity(u.spans.len());
    for span in &u.spans {
        let lang = match span.language {
            Language::Mandarin => "cn",
            Language::English => "en",
        };
        let phon = match span.phonology {
            None => "none",
            Some(Phonology::ChineseEnglish) => "cnen",
            Some(Phonology::StandardEnglish) => "stden",
        };
        let mut words = vec![format!("lang={lang}"), format!("phon={phon}"), ":".to_string()];
        for i in span.start..span.end {
            let entry = inv.get(u.tokens[i])?;
            words.push(format!("{}:{}", entry.kind.namespace(), entry.symbol));
        }
        parts.push(words.join(" "));
    }
    Ok(parts.join(" | "))
}
