//! Embedding tables, control specifications and masked injection of
//! conditioning into encoder outputs.
//!
//! Each utterance span carries four label slots: the language and phonology
//! labels feeding the attention path (dynamic source) and the residual path
//! (static source) of the two modulators. Replacing one slot at a time
//! yields the six analysis combinations; the two control operations rewrite
//! slots (smooth transition) or extrapolate the dynamic-source vectors past
//! the reference label (expressiveness doubling).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{BitMask, Language, Phonology, TokenInventory, Utterance};
use crate::init::{fill, InitScheme};
use crate::matrix::TokenMatrix;
use crate::params::{ParamSet, Parameter};
use rand_chacha::ChaCha8Rng;

/// Width of the learned speaker embedding before projection.
pub const SPEAKER_DIM: usize = 64;

/// Learned lookup tables: per-speaker vectors with a projection to model
/// width, one vector per language and one per phonology. A missing phonology
/// label maps to no injection, not to a vector.
#[derive(Clone, Debug)]
pub struct EmbeddingTables {
    pub speakers: Vec<Parameter>,
    pub speaker_proj: Parameter,
    pub lang_mandarin: Parameter,
    pub lang_english: Parameter,
    pub phon_chinese_english: Parameter,
    pub phon_standard_english: Parameter,
}

impl EmbeddingTables {
    pub fn init(d_model: usize, n_speakers: usize, rng: &mut ChaCha8Rng) -> Self {
        let speakers = (0..n_speakers)
            .map(|i| {
                Parameter::new(
                    format!("tables.speaker.{i}"),
                    fill(rng, InitScheme::UniformScaled, 1, SPEAKER_DIM),
                )
            })
            .collect();
        EmbeddingTables {
            speakers,
            speaker_proj: Parameter::new(
                "tables.speaker_proj",
                fill(rng, InitScheme::UniformScaled, SPEAKER_DIM, d_model),
            ),
            lang_mandarin: Parameter::new(
                "tables.language.mandarin",
                fill(rng, InitScheme::UniformScaled, 1, d_model),
            ),
            lang_english: Parameter::new(
                "tables.language.english",
                fill(rng, InitScheme::UniformScaled, 1, d_model),
            ),
            phon_chinese_english: Parameter::new(
                "tables.phonology.chinese_english",
                fill(rng, InitScheme::UniformScaled, 1, d_model),
            ),
            phon_standard_english: Parameter::new(
                "tables.phonology.standard_english",
                fill(rng, InitScheme::UniformScaled, 1, d_model),
            ),
        }
    }

    pub fn language(&self, l: Language) -> &Parameter {
        match l {
            Language::Mandarin => &self.lang_mandarin,
            Language::English => &self.lang_english,
        }
    }

    pub fn language_mut(&mut self, l: Language) -> &mut Parameter {
        match l {
            Language::Mandarin => &mut self.lang_mandarin,
            Language::English => &mut self.lang_english,
        }
    }

    pub fn phonology(&self, p: Phonology) -> &Parameter {
        match p {
            Phonology::ChineseEnglish => &self.phon_chinese_english,
            Phonology::StandardEnglish => &self.phon_standard_english,
        }
    }

    pub fn phonology_mut(&mut self, p: Phonology) -> &mut Parameter {
        match p {
            Phonology::ChineseEnglish => &mut self.phon_chinese_english,
            Phonology::StandardEnglish => &mut self.phon_standard_english,
        }
    }

    pub fn speaker(&self, id: usize) -> Result<&Parameter> {
        self.speakers
            .get(id)
            .ok_or_else(|| Error::InvalidLabel(format!("unknown speaker id {id}")))
    }
}

impl ParamSet for EmbeddingTables {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        for p in &self.speakers {
            f(p);
        }
        f(&self.speaker_proj);
        f(&self.lang_mandarin);
        f(&self.lang_english);
        f(&self.phon_chinese_english);
        f(&self.phon_standard_english);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        for p in &mut self.speakers {
            f(p);
        }
        f(&mut self.speaker_proj);
        f(&mut self.lang_mandarin);
        f(&mut self.lang_english);
        f(&mut self.phon_chinese_english);
        f(&mut self.phon_standard_english);
    }
}

/// Label choices for the four slots of one span, plus the extrapolation gain
/// applied to the dynamic-source vectors (1.0 = the plain table vector).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpanControl {
    pub language_dynamic: Language,
    pub language_static: Language,
    pub phonology_dynamic: Option<Phonology>,
    pub phonology_static: Option<Phonology>,
    #[serde(default = "default_gain")]
    pub dynamic_gain: f64,
}

fn default_gain() -> f64 {
    1.0
}

impl SpanControl {
    pub fn uniform(language: Language, phonology: Option<Phonology>) -> Self {
        SpanControl {
            language_dynamic: language,
            language_static: language,
            phonology_dynamic: phonology,
            phonology_static: phonology,
            dynamic_gain: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.dynamic_gain.is_finite() {
            return Err(Error::InvalidLabel("dynamic_gain must be finite".into()));
        }
        if self.phonology_dynamic.is_some() != self.phonology_static.is_some() {
            return Err(Error::InvalidLabel(
                "phonology slots must be both present or both absent".into(),
            ));
        }
        Ok(())
    }
}

/// Control spec for one utterance: a [`SpanControl`] per label span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    /// Source line of the utterance this spec belongs to.
    pub line: usize,
    pub spans: Vec<ControlledSpan>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlledSpan {
    pub start: usize,
    pub end: usize,
    #[serde(flatten)]
    pub control: SpanControl,
}

impl ControlSpec {
    /// The spec induced by the utterance's own labels.
    pub fn from_utterance(u: &Utterance) -> Self {
        ControlSpec {
            line: u.line,
            spans: u
                .spans
                .iter()
                .map(|s| ControlledSpan {
                    start: s.start,
                    end: s.end,
                    control: SpanControl::uniform(s.language, s.phonology),
                })
                .collect(),
        }
    }

    /// Checks the spec lines up with an utterance's span structure.
    pub fn validate_against(&self, u: &Utterance) -> Result<()> {
        if self.spans.len() != u.spans.len() {
            return Err(Error::InvalidLabel(format!(
                "spec has {} spans, utterance has {}",
                self.spans.len(),
                u.spans.len()
            )));
        }
        for (c, s) in self.spans.iter().zip(&u.spans) {
            if c.start != s.start || c.end != s.end {
                return Err(Error::InvalidLabel(format!(
                    "spec span {}..{} does not match utterance span {}..{}",
                    c.start, c.end, s.start, s.end
                )));
            }
            c.control.validate()?;
        }
        Ok(())
    }
}

/// The six label combinations of the component-replacement analysis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combination {
    /// Base: Mandarin and Chinese-English phonology in both components.
    A,
    /// Reference: English and Standard-English in both components.
    B,
    /// (a) with the dynamic phonology slot moved to Standard-English.
    C,
    /// (a) with the static phonology slot moved to Standard-English.
    D,
    /// (a) with the dynamic language slot moved to English.
    E,
    /// (a) with the static language slot moved to English.
    F,
}

impl Combination {
    pub const ALL: [Combination; 6] = [
        Combination::A,
        Combination::B,
        Combination::C,
        Combination::D,
        Combination::E,
        Combination::F,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Combination::A => "a",
            Combination::B => "b",
            Combination::C => "c",
            Combination::D => "d",
            Combination::E => "e",
            Combination::F => "f",
        }
    }

    pub fn parse(s: &str) -> Result<Combination> {
        Combination::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidLabel(format!("unknown combination `{s}`")))
    }

    /// The slot assignment of this combination.
    pub fn span_control(self) -> SpanControl {
        let mut c = SpanControl {
            language_dynamic: Language::Mandarin,
            language_static: Language::Mandarin,
            phonology_dynamic: Some(Phonology::ChineseEnglish),
            phonology_static: Some(Phonology::ChineseEnglish),
            dynamic_gain: 1.0,
        };
        match self {
            Combination::A => {}
            Combination::B => {
                c.language_dynamic = Language::English;
                c.language_static = Language::English;
                c.phonology_dynamic = Some(Phonology::StandardEnglish);
                c.phonology_static = Some(Phonology::StandardEnglish);
            }
            Combination::C => c.phonology_dynamic = Some(Phonology::StandardEnglish),
            Combination::D => c.phonology_static = Some(Phonology::StandardEnglish),
            Combination::E => c.language_dynamic = Language::English,
            Combination::F => c.language_static = Language::English,
        }
        c
    }
}

/// Applies one combination's slot assignment uniformly to every span.
pub fn apply_combination(u: &Utterance, combo: Combination) -> ControlSpec {
    ControlSpec {
        line: u.line,
        spans: u
            .spans
            .iter()
            .map(|s| ControlledSpan {
                start: s.start,
                end: s.end,
                control: combo.span_control(),
            })
            .collect(),
    }
}

/// Label vectors resolved for one span, ready to feed the two modulators.
#[derive(Clone, Debug)]
pub struct ResolvedVectors {
    pub lang_dynamic: TokenMatrix,
    pub lang_static: TokenMatrix,
    pub phon_dynamic: Option<TokenMatrix>,
    pub phon_static: Option<TokenMatrix>,
}

/// Extrapolation used by the expressiveness control: the result sits at
/// `gain` times the base-to-reference distance from the base.
pub fn extrapolate(base: &[f64], reference: &[f64], gain: f64) -> Result<Vec<f64>> {
    if base.len() != reference.len() {
        return Err(Error::shape(
            "extrapolate",
            format!("{}", base.len()),
            format!("{}", reference.len()),
        ));
    }
    Ok(base
        .iter()
        .zip(reference)
        .map(|(b, r)| b + gain * (r - b))
        .collect())
}

/// The doubling control: returns `base + 2 (ref - base)`, the point at twice
/// the reference's distance from the base.
pub fn control_double(base: &[f64], reference: &[f64]) -> Result<Vec<f64>> {
    extrapolate(base, reference, 2.0)
}

fn dynamic_language_vector(tables: &EmbeddingTables, label: Language, gain: f64) -> Result<TokenMatrix> {
    if gain == 1.0 {
        return Ok(tables.language(label).value.clone());
    }
    let base = tables.language(label.other()).value.row(0);
    let reference = tables.language(label).value.row(0);
    TokenMatrix::row_vector(extrapolate(base, reference, gain)?)
}

fn dynamic_phonology_vector(tables: &EmbeddingTables, label: Phonology, gain: f64) -> Result<TokenMatrix> {
    if gain == 1.0 {
        return Ok(tables.phonology(label).value.clone());
    }
    let base = tables.phonology(label.other()).value.row(0);
    let reference = tables.phonology(label).value.row(0);
    TokenMatrix::row_vector(extrapolate(base, reference, gain)?)
}

/// Resolves one span's four slots into vectors. Static slots always take the
/// plain table vector; dynamic slots are extrapolated from the opposite
/// label toward the chosen one when the gain differs from 1.
pub fn resolve_label_vectors(control: &SpanControl, tables: &EmbeddingTables) -> Result<ResolvedVectors> {
    control.validate()?;
    let g = control.dynamic_gain;
    Ok(ResolvedVectors {
        lang_dynamic: dynamic_language_vector(tables, control.language_dynamic, g)?,
        lang_static: tables.language(control.language_static).value.clone(),
        phon_dynamic: control
            .phonology_dynamic
            .map(|p| dynamic_phonology_vector(tables, p, g))
            .transpose()?,
        phon_static: control
            .phonology_static
            .map(|p| Ok::<_, Error>(tables.phonology(p).value.clone()))
            .transpose()?,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlWarning {
    /// The utterance has no span with English tokens to rewrite.
    NoEnglishSpan,
}

/// Doubles the dynamic components of both embeddings for plain-English
/// spans, keeping their static components. Each application doubles the
/// extrapolation again, so the control is deliberately not idempotent.
pub fn enhance_expressiveness(u: &Utterance, spec: &ControlSpec) -> Result<ControlSpec> {
    spec.validate_against(u)?;
    let mut out = spec.clone();
    let mut touched = false;
    for span in &mut out.spans {
        let c = &mut span.control;
        if c.language_static == Language::English
            && c.phonology_static == Some(Phonology::StandardEnglish)
        {
            c.dynamic_gain *= 2.0;
            touched = true;
        }
    }
    if !touched {
        return Err(Error::InvalidLabel(
            "no span labeled English / Standard-English to enhance".into(),
        ));
    }
    Ok(out)
}

/// Rewrites embedded-English spans of a mixed-lingual utterance for smoother
/// transitions: language moves to English in both components, dynamic
/// phonology moves to Standard-English, and the static phonology component
/// stays Chinese-English. Mandarin spans are untouched; reapplication is a
/// no-op.
pub fn smooth_transition(
    u: &Utterance,
    spec: &ControlSpec,
    inv: &TokenInventory,
) -> Result<(ControlSpec, Vec<ControlWarning>)> {
    spec.validate_against(u)?;
    let mut out = spec.clone();
    let mut any_english = false;
    for (i, span) in out.spans.iter_mut().enumerate() {
        if !u.span_has_english_tokens(i, inv)? {
            continue;
        }
        any_english = true;
        let c = &mut span.control;
        let embedded_default = c.language_dynamic == Language::Mandarin
            && c.language_static == Language::Mandarin
            && c.phonology_dynamic == Some(Phonology::ChineseEnglish)
            && c.phonology_static == Some(Phonology::ChineseEnglish);
        if embedded_default {
            c.language_dynamic = Language::English;
            c.language_static = Language::English;
            c.phonology_dynamic = Some(Phonology::StandardEnglish);
            c.phonology_static = Some(Phonology::ChineseEnglish);
        }
    }
    let warnings = if any_english {
        vec![]
    } else {
        vec![ControlWarning::NoEnglishSpan]
    };
    Ok((out, warnings))
}

/// Where each output row got its contributions from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub speaker: bool,
    pub language: bool,
    pub phonology: bool,
    pub span: usize,
}

#[derive(Clone, Debug)]
pub struct ConditionedSequence {
    pub values: TokenMatrix,
    pub provenance: Vec<Provenance>,
}

/// Adds the conditioning to the encoder output: the projected speaker
/// embedding everywhere, the language-modulator output at language-masked
/// positions and the phonology-modulator output at phonology-masked
/// positions. `phon_f_o` may be absent when no span carries a phonology
/// label.
pub fn condition_sequence(
    e_o: &TokenMatrix,
    u: &Utterance,
    lang_mask: &BitMask,
    phon_mask: &BitMask,
    tables: &EmbeddingTables,
    lang_f_o: &TokenMatrix,
    phon_f_o: Option<&TokenMatrix>,
    speaker_id: usize,
) -> Result<ConditionedSequence> {
    let t_len = e_o.rows();
    let d = e_o.cols();
    if lang_mask.len() != t_len || phon_mask.len() != t_len {
        return Err(Error::MaskLengthMismatch {
            mask: lang_mask.len().min(phon_mask.len()),
            seq: t_len,
        });
    }
    if lang_f_o.shape() != (t_len, d) {
        return Err(Error::shape("condition_sequence", format!("{t_len}x{d}"), lang_f_o.shape_str()));
    }
    if let Some(p) = phon_f_o {
        if p.shape() != (t_len, d) {
            return Err(Error::shape("condition_sequence", format!("{t_len}x{d}"), p.shape_str()));
        }
    }

    let speaker = tables.speaker(speaker_id)?;
    let projected = speaker.value.matmul(&tables.speaker_proj.value)?;
    if projected.cols() != d {
        return Err(Error::shape("condition_sequence", format!("1x{d}"), projected.shape_str()));
    }

    let span_of = |t: usize| u.spans.iter().position(|s| t >= s.start && t < s.end).unwrap_or(0);

    let mut values = TokenMatrix::zeros(t_len, d);
    let mut provenance = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let lang_on = lang_mask.get(t);
        let phon_on = phon_mask.get(t) && phon_f_o.is_some();
        let out = values.row_mut(t);
        for j in 0..d {
            let mut v = e_o.at(t, j) + projected.at(0, j);
            if lang_on {
                v += lang_f_o.at(t, j);
            }
            if phon_on {
                v += phon_f_o.unwrap().at(t, j);
            }
            out[j] = v;
        }
        provenance.push(Provenance {
            speaker: true,
            language: lang_on,
            phonology: phon_on,
            span: span_of(t),
        });
    }
    Ok(ConditionedSequence { values, provenance })
}
