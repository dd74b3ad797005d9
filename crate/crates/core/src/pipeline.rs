//! End-to-end wiring: encode, run both modulators per span, inject through
//! the masks, and render diagnostics artifacts.
//!
//! Each span of an utterance can carry its own label slots, so the two
//! modulators run once per span over the full encoder output and the
//! injected tensors are assembled row-wise from the owning span's forward.
//! Independent utterances are processed through [`batch_condition`], which
//! parallelizes over utterances without changing any output byte: every
//! artifact is produced by exactly one utterance's computation.

use crate::conditioning::{
    condition_sequence, resolve_label_vectors, ConditionedSequence, ControlSpec, ResolvedVectors,
    SpanControl,
};
use crate::error::{Error, Result};
use crate::esm::EsmForward;
use crate::frontend::{
    compute_language_mask, compute_phonology_mask, serialize_utterance, BitMask, Language,
    Phonology, Utterance,
};
use crate::matrix::TokenMatrix;
use crate::model::Model;
use crate::par::{self, ExecMode};

/// Forward state of one span: resolved label vectors and the modulator runs.
#[derive(Clone, Debug)]
pub struct SpanForward {
    pub control: SpanControl,
    pub resolved: ResolvedVectors,
    pub lang: EsmForward,
    pub phon: Option<EsmForward>,
}

/// Everything produced by conditioning one utterance.
#[derive(Clone, Debug)]
pub struct UtteranceForward {
    pub e_o: TokenMatrix,
    pub lang_mask: BitMask,
    pub phon_mask: BitMask,
    pub lang_f_o: TokenMatrix,
    pub phon_f_o: Option<TokenMatrix>,
    pub conditioned: ConditionedSequence,
    pub spans: Vec<SpanForward>,
    pub speaker_id: usize,
}

/// Runs the full conditioning pipeline for one utterance under a control
/// spec.
pub fn condition_utterance(
    model: &Model,
    u: &Utterance,
    spec: &ControlSpec,
    speaker_id: usize,
) -> Result<UtteranceForward> {
    spec.validate_against(u)?;
    let d = model.d_model();
    let t_len = u.len();
    let e_o = model.encoder.encode(u)?;
    let lang_mask = compute_language_mask(u, &model.inventory)?;
    let phon_mask = compute_phonology_mask(u, &model.inventory)?;

    let mut spans = Vec::with_capacity(spec.spans.len());
    let mut lang_f_o = TokenMatrix::zeros(t_len, d);
    let mut phon_f_o = TokenMatrix::zeros(t_len, d);
    let mut any_phonology = false;

    for cs in &spec.spans {
        let resolved = resolve_label_vectors(&cs.control, &model.tables)?;
        let lang = model
            .lang_esm
            .forward_mixed(&e_o, &resolved.lang_dynamic, &resolved.lang_static)?;
        for t in cs.start..cs.end {
            lang_f_o.row_mut(t).copy_from_slice(lang.f_o.row(t));
        }
        let phon = match (&resolved.phon_dynamic, &resolved.phon_static) {
            (Some(dyn_v), Some(stat_v)) => {
                any_phonology = true;
                let fwd = model.phon_esm.forward_mixed(&e_o, dyn_v, stat_v)?;
                for t in cs.start..cs.end {
                    phon_f_o.row_mut(t).copy_from_slice(fwd.f_o.row(t));
                }
                Some(fwd)
            }
            _ => None,
        };
        spans.push(SpanForward {
            control: cs.control,
            resolved,
            lang,
            phon,
        });
    }

    let phon_f_o = any_phonology.then_some(phon_f_o);
    let conditioned = condition_sequence(
        &e_o,
        u,
        &lang_mask,
        &phon_mask,
        &model.tables,
        &lang_f_o,
        phon_f_o.as_ref(),
        speaker_id,
    )?;

    Ok(UtteranceForward {
        e_o,
        lang_mask,
        phon_mask,
        lang_f_o,
        phon_f_o,
        conditioned,
        spans,
        speaker_id,
    })
}

/// Routes a gradient on a resolved dynamic-source vector back into the two
/// table vectors it was extrapolated from:
/// vec = base + gain (ref - base), so d ref += gain d_vec and
/// d base += (1 - gain) d_vec.
fn route_language_grad(
    tables: &mut crate::conditioning::EmbeddingTables,
    label: Language,
    gain: f64,
    d_vec: &TokenMatrix,
) {
    for (g, &d) in tables
        .language_mut(label)
        .grad
        .row_mut(0)
        .iter_mut()
        .zip(d_vec.row(0))
    {
        *g += gain * d;
    }
    if gain != 1.0 {
        for (g, &d) in tables
            .language_mut(label.other())
            .grad
            .row_mut(0)
            .iter_mut()
            .zip(d_vec.row(0))
        {
            *g += (1.0 - gain) * d;
        }
    }
}

fn route_phonology_grad(
    tables: &mut crate::conditioning::EmbeddingTables,
    label: Phonology,
    gain: f64,
    d_vec: &TokenMatrix,
) {
    for (g, &d) in tables
        .phonology_mut(label)
        .grad
        .row_mut(0)
        .iter_mut()
        .zip(d_vec.row(0))
    {
        *g += gain * d;
    }
    if gain != 1.0 {
        for (g, &d) in tables
            .phonology_mut(label.other())
            .grad
            .row_mut(0)
            .iter_mut()
            .zip(d_vec.row(0))
        {
            *g += (1.0 - gain) * d;
        }
    }
}

/// Backward pass through [`condition_utterance`]: accumulates gradients for
/// every parameter group given dL/d(conditioned values).
pub fn condition_utterance_backward(
    model: &mut Model,
    u: &Utterance,
    fwd: &UtteranceForward,
    d_out: &TokenMatrix,
) -> Result<()> {
    let t_len = u.len();
    let d = model.d_model();
    if d_out.shape() != (t_len, d) {
        return Err(Error::shape("condition_backward", format!("{t_len}x{d}"), d_out.shape_str()));
    }

    // Direct additive path into the encoder output.
    let mut d_e_o = d_out.clone();

    // Speaker: projected = speaker_vec * W_proj, broadcast to every row.
    let mut d_proj_row = TokenMatrix::zeros(1, d);
    for t in 0..t_len {
        for (g, &v) in d_proj_row.row_mut(0).iter_mut().zip(d_out.row(t)) {
            *g += v;
        }
    }
    let speaker_value = model.tables.speaker(fwd.speaker_id)?.value.clone();
    let d_speaker = d_proj_row.matmul(&model.tables.speaker_proj.value.transpose())?;
    model
        .tables
        .speaker_proj
        .grad
        .add_assign(&speaker_value.transpose().matmul(&d_proj_row)?)?;
    model.tables.speakers[fwd.speaker_id]
        .grad
        .add_assign(&d_speaker)?;

    // Modulator paths, one backward per span restricted to the rows that
    // were actually injected from that span.
    for (span_fwd, cs) in fwd.spans.iter().zip(u.spans.iter()) {
        let gain = span_fwd.control.dynamic_gain;

        let mut d_lang = TokenMatrix::zeros(t_len, d);
        let mut lang_hit = false;
        for t in cs.start..cs.end {
            if fwd.lang_mask.get(t) {
                d_lang.row_mut(t).copy_from_slice(d_out.row(t));
                lang_hit = true;
            }
        }
        if lang_hit {
            let grads = model.lang_esm.backward(&span_fwd.lang, &d_lang)?;
            d_e_o.add_assign(&grads.d_e_o)?;
            route_language_grad(
                &mut model.tables,
                span_fwd.control.language_dynamic,
                gain,
                &grads.d_lp_dynamic,
            );
            model
                .tables
                .language_mut(span_fwd.control.language_static)
                .grad
                .add_assign(&grads.d_lp_static)?;
        }

        if let Some(phon_fwd) = &span_fwd.phon {
            let mut d_phon = TokenMatrix::zeros(t_len, d);
            let mut phon_hit = false;
            for t in cs.start..cs.end {
                if fwd.phon_mask.get(t) {
                    d_phon.row_mut(t).copy_from_slice(d_out.row(t));
                    phon_hit = true;
                }
            }
            if phon_hit {
                let grads = model.phon_esm.backward(phon_fwd, &d_phon)?;
                d_e_o.add_assign(&grads.d_e_o)?;
                let phon_dyn = span_fwd
                    .control
                    .phonology_dynamic
                    .expect("phonology forward implies labels");
                route_phonology_grad(&mut model.tables, phon_dyn, gain, &grads.d_lp_dynamic);
                let phon_stat = span_fwd.control.phonology_static.expect("checked above");
                model
                    .tables
                    .phonology_mut(phon_stat)
                    .grad
                    .add_assign(&grads.d_lp_static)?;
            }
        }
    }

    model.encoder.encode_backward(u, &d_e_o)
}

/// One supervised example for the synthetic task.
#[derive(Clone, Debug)]
pub struct Example {
    pub utterance: Utterance,
    pub spec: ControlSpec,
    pub speaker: usize,
    pub target: TokenMatrix,
}

/// Mean-squared error of one example's conditioned output against its
/// target, averaged over all positions and channels.
pub fn example_loss(model: &Model, ex: &Example) -> Result<f64> {
    let fwd = condition_utterance(model, &ex.utterance, &ex.spec, ex.speaker)?;
    let diff = fwd.conditioned.values.sub(&ex.target)?;
    let n = diff.len() as f64;
    Ok(diff.data().iter().map(|v| v * v).sum::<f64>() / n)
}

/// Mean loss over a batch; forward only.
pub fn batch_loss(model: &Model, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    for ex in examples {
        total += example_loss(model, ex)?;
    }
    let loss = total / examples.len().max(1) as f64;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(loss)
}

/// Mean loss over a batch with gradients accumulated into the model.
pub fn batch_loss_and_grad(model: &mut Model, examples: &[Example]) -> Result<f64> {
    let mut total = 0.0;
    let batch = examples.len().max(1) as f64;
    for ex in examples {
        let fwd = condition_utterance(model, &ex.utterance, &ex.spec, ex.speaker)?;
        let diff = fwd.conditioned.values.sub(&ex.target)?;
        let n = diff.len() as f64;
        total += diff.data().iter().map(|v| v * v).sum::<f64>() / n;
        let mut d_out = diff;
        for v in d_out.data_mut() {
            *v *= 2.0 / (n * batch);
        }
        condition_utterance_backward(model, &ex.utterance, &fwd, &d_out)?;
    }
    let loss = total / batch;
    if !loss.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    Ok(loss)
}

/// Rendered output files for one utterance: `(file name, contents)` pairs.
#[derive(Clone, Debug)]
pub struct UtteranceArtifacts {
    pub index: usize,
    pub line: usize,
    pub files: Vec<(String, String)>,
}

fn matrix_csv(m: &TokenMatrix) -> String {
    let mut out = String::from("token_index");
    for j in 0..m.cols() {
        out.push_str(&format!(",c{j}"));
    }
    out.push('\n');
    for t in 0..m.rows() {
        out.push_str(&t.to_string());
        for j in 0..m.cols() {
            out.push_str(&format!(",{}", m.at(t, j)));
        }
        out.push('\n');
    }
    out
}

/// `token_index,head,alpha` rows, each token reported from its owning span's
/// forward.
fn alpha_csv(u: &Utterance, fwd: &UtteranceForward, phonology: bool) -> Option<String> {
    let mut out = String::from("token_index,head,alpha\n");
    let mut any = false;
    for (span_fwd, cs) in fwd.spans.iter().zip(u.spans.iter()) {
        let esm_fwd = if phonology {
            match &span_fwd.phon {
                Some(f) => f,
                None => continue,
            }
        } else {
            &span_fwd.lang
        };
        any = true;
        for t in cs.start..cs.end {
            for h in 0..esm_fwd.diag.alpha.cols() {
                out.push_str(&format!("{t},{h},{}\n", esm_fwd.diag.alpha.at(t, h)));
            }
        }
    }
    any.then_some(out)
}

fn norms_json(u: &Utterance, fwd: &UtteranceForward, phonology: bool) -> Option<String> {
    #[derive(serde::Serialize)]
    struct TokenNorms {
        token_index: usize,
        static_norm: f64,
        dynamic_norm: f64,
        degenerate_heads: Vec<usize>,
    }
    let mut rows = Vec::new();
    let mut any = false;
    for (span_fwd, cs) in fwd.spans.iter().zip(u.spans.iter()) {
        let esm_fwd = if phonology {
            match &span_fwd.phon {
                Some(f) => f,
                None => continue,
            }
        } else {
            &span_fwd.lang
        };
        any = true;
        let static_norm = crate::matrix::l2_norm(&esm_fwd.diag.static_component);
        for t in cs.start..cs.end {
            rows.push(TokenNorms {
                token_index: t,
                static_norm,
                dynamic_norm: crate::matrix::l2_norm(esm_fwd.diag.dynamic.row(t)),
                degenerate_heads: esm_fwd
                    .diag
                    .degenerate
                    .iter()
                    .filter(|(tok, _)| *tok == t)
                    .map(|(_, h)| *h)
                    .collect(),
            });
        }
    }
    if !any {
        return None;
    }
    Some(serde_json::to_string_pretty(&serde_json::json!({ "tokens": rows })).expect("serializable"))
}

/// Renders all artifacts for one conditioned utterance. `tag` distinguishes
/// variants of the same utterance (e.g. `combo_a`); empty means the
/// utterance's own labels.
pub fn render_artifacts(
    model: &Model,
    u: &Utterance,
    spec: &ControlSpec,
    speaker_id: usize,
    index: usize,
    tag: &str,
) -> Result<Vec<(String, String)>> {
    let fwd = condition_utterance(model, u, spec, speaker_id)?;
    let suffix = if tag.is_empty() { String::new() } else { format!("_{tag}") };
    let stem = format!("utt{index:04}{suffix}");
    let mut files = vec![
        (format!("{stem}_conditioned.csv"), matrix_csv(&fwd.conditioned.values)),
        (format!("{stem}_fo_language.csv"), matrix_csv(&fwd.lang_f_o)),
    ];
    if let Some(p) = &fwd.phon_f_o {
        files.push((format!("{stem}_fo_phonology.csv"), matrix_csv(p)));
    }
    if let Some(csv) = alpha_csv(u, &fwd, false) {
        files.push((format!("{stem}_alpha_language.csv"), csv));
    }
    if let Some(csv) = alpha_csv(u, &fwd, true) {
        files.push((format!("{stem}_alpha_phonology.csv"), csv));
    }
    if let Some(json) = norms_json(u, &fwd, false) {
        files.push((format!("{stem}_diag_language.json"), json));
    }
    if let Some(json) = norms_json(u, &fwd, true) {
        files.push((format!("{stem}_diag_phonology.json"), json));
    }
    files.push((
        format!("{stem}_utterance.txt"),
        format!("{}\n", serialize_utterance(u, &model.inventory)?),
    ));
    Ok(files)
}

/// How `batch_condition` chooses the control spec per utterance.
#[derive(Clone, Debug)]
pub enum SpecSource {
    /// The utterance's own span labels.
    OwnLabels,
    /// One fixed combination applied to every span.
    Combination(crate::conditioning::Combination),
    /// Pre-built specs, one per utterance in order.
    PerUtterance(Vec<ControlSpec>),
}

impl SpecSource {
    fn spec_for(&self, index: usize, u: &Utterance) -> Result<ControlSpec> {
        match self {
            SpecSource::OwnLabels => Ok(ControlSpec::from_utterance(u)),
            SpecSource::Combination(c) => Ok(crate::conditioning::apply_combination(u, *c)),
            SpecSource::PerUtterance(specs) => specs
                .get(index)
                .cloned()
                .ok_or_else(|| Error::InvalidLabel(format!("no control spec for utterance {index}"))),
        }
    }
}

/// Conditions a batch of independent utterances, optionally in parallel.
/// Results come back in input order regardless of mode.
pub fn batch_condition(
    model: &Model,
    utterances: &[Utterance],
    source: &SpecSource,
    speaker_id: usize,
    mode: ExecMode,
) -> Result<Vec<UtteranceArtifacts>> {
    let rendered = par::map_indexed(mode, utterances, |i, u| {
        let spec = source.spec_for(i, u)?;
        let files = render_artifacts(model, u, &spec, speaker_id, i, "")?;
        Ok(UtteranceArtifacts {
            index: i,
            line: u.line,
            files,
        })
    });
    rendered.into_iter().collect()
}
