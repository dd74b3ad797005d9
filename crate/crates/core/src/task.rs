//! Synthetic regression task for exercising the conditioning pipeline
//! without speech data.
//!
//! Targets come from a hidden teacher model with the same architecture but a
//! different seed, so they are realizable. Utterances containing English
//! expression tokens appear twice, once under Chinese-English and once under
//! Standard-English phonology labels; in the phonology-sensitive task the
//! teacher sees the matching label, so the targets at phonology-masked
//! positions genuinely differ between the two variants and a model can only
//! fit both by using its phonology path. The phonology-blind task computes
//! both targets under the same label instead.

use crate::conditioning::ControlSpec;
use crate::config::RunConfig;
use crate::error::Result;
use crate::frontend::{compute_phonology_mask, parse_utterance, Phonology};
use crate::model::Model;
use crate::pipeline::{condition_utterance, Example};

const TEACHER_SEED_OFFSET: u64 = 0x7ea9;

const BASE_LINES: [&str; 4] = [
    "corpus=chinese-mixed ;; cn:ni cn:t3 br:#1 | en:HH en:AH en:stress1 en:sylb | cn:hao cn:t3 br:/sil/",
    "lang=en phon=stden : en:DH en:AH en:stress4 en:sylb en:B en:AO en:stress1 br:/sil/",
    "cn:wo cn:t3 cn:charb cn:ma cn:t1 br:#2",
    "lang=en phon=cnen : en:HH en:EH en:L en:OW en:stress2 en:sylb en:liaison br:#1",
];

/// A seeded batch of examples plus the index pairs that differ only in their
/// phonology labels.
#[derive(Clone, Debug)]
pub struct SyntheticTask {
    pub seed: u64,
    pub phonology_sensitive: bool,
    pub examples: Vec<Example>,
    /// (chinese-english variant, standard-english variant) example indices.
    pub pairs: Vec<(usize, usize)>,
}

fn with_phonology(spec: &ControlSpec, phonology: Phonology) -> ControlSpec {
    let mut out = spec.clone();
    for span in &mut out.spans {
        if span.control.phonology_dynamic.is_some() {
            span.control.phonology_dynamic = Some(phonology);
            span.control.phonology_static = Some(phonology);
        }
    }
    out
}

impl SyntheticTask {
    /// Targets depend on the phonology label at masked positions.
    pub fn phonology_sensitive(config: &RunConfig, seed: u64) -> Result<Self> {
        Self::build(config, seed, true)
    }

    /// Targets ignore the phonology label entirely.
    pub fn phonology_blind(config: &RunConfig, seed: u64) -> Result<Self> {
        Self::build(config, seed, false)
    }

    fn build(config: &RunConfig, seed: u64, sensitive: bool) -> Result<Self> {
        let teacher = Model::new(config, seed.wrapping_add(TEACHER_SEED_OFFSET))?;
        let mut examples = Vec::new();
        let mut pairs = Vec::new();
        for (i, line) in BASE_LINES.iter().enumerate() {
            let utterance = parse_utterance(line, i + 1, &teacher.inventory)?;
            let speaker = i % config.speakers;
            let base_spec = ControlSpec::from_utterance(&utterance);
            let has_phonology = base_spec.spans.iter().any(|s| s.control.phonology_dynamic.is_some());
            if !has_phonology {
                let target = condition_utterance(&teacher, &utterance, &base_spec, speaker)?
                    .conditioned
                    .values;
                examples.push(Example {
                    utterance,
                    spec: base_spec,
                    speaker,
                    target,
                });
                continue;
            }
            let spec_cn = with_phonology(&base_spec, Phonology::ChineseEnglish);
            let spec_std = with_phonology(&base_spec, Phonology::StandardEnglish);
            let target_cn = condition_utterance(&teacher, &utterance, &spec_cn, speaker)?
                .conditioned
                .values;
            let target_std = if sensitive {
                condition_utterance(&teacher, &utterance, &spec_std, speaker)?
                    .conditioned
                    .values
            } else {
                target_cn.clone()
            };
            let first = examples.len();
            examples.push(Example {
                utterance: utterance.clone(),
                spec: spec_cn,
                speaker,
                target: target_cn,
            });
            examples.push(Example {
                utterance,
                spec: spec_std,
                speaker,
                target: target_std,
            });
            pairs.push((first, first + 1));
        }
        Ok(SyntheticTask {
            seed,
            phonology_sensitive: sensitive,
            examples,
            pairs,
        })
    }

    pub fn max_tokens(&self) -> usize {
        self.examples.iter().map(|e| e.utterance.len()).max().unwrap_or(0)
    }
}

/// Mean distance, over the label pairs, between a model's outputs under the
/// two phonology labels, restricted to phonology-masked rows. Measures how
/// strongly the model's behavior depends on the phonology label.
pub fn phonology_contrast(model: &Model, task: &SyntheticTask) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for &(a, b) in &task.pairs {
        let ex_a = &task.examples[a];
        let ex_b = &task.examples[b];
        let out_a = condition_utterance(model, &ex_a.utterance, &ex_a.spec, ex_a.speaker)?;
        let out_b = condition_utterance(model, &ex_b.utterance, &ex_b.spec, ex_b.speaker)?;
        let mask = compute_phonology_mask(&ex_a.utterance, &model.inventory)?;
        let mut sq = 0.0;
        for t in 0..ex_a.utterance.len() {
            if !mask.get(t) {
                continue;
            }
            for (x, y) in out_a.conditioned.values.row(t).iter().zip(out_b.conditioned.values.row(t)) {
                sq += (x - y) * (x - y);
            }
        }
        total += sq.sqrt();
        count += 1;
    }
    Ok(total / count.max(1) as f64)
}

/// Convenience for tests: all task utterances cover at most this many tokens.
pub fn assert_desk_scale(task: &SyntheticTask) {
    assert!(task.max_tokens() <= 12, "task utterances exceed desk scale");
}
