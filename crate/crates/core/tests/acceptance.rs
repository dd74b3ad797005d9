//! Acceptance suite: one test per criterion, each printing a pass line.
//! Every tolerance is pinned here, in code. The CLI determinism criterion
//! lives in the CLI crate's own acceptance suite since it exercises the
//! binary.

mod support;

use std::time::Instant;

use esm_core::gradcheck::{grad_check, GradCheckOptions};
use esm_core::matrix::TokenMatrix;
use esm_core::{
    apply_combination, assign_labels, batch_loss, batch_loss_and_grad, build_inventory,
    compute_language_mask, compute_phonology_mask, control_double, cosine_head,
    enhance_expressiveness, frontend::language_bit, frontend::phonology_bit, parse_utterance,
    resolve_label_vectors, smooth_transition, Combination, ControlSpec, CorpusKind, Language,
    LabelSpan, Model, Phonology, RunConfig, SyntheticTask, TokenKind, Utterance,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{random_instance, reference_forward, rows_of};

/// Random token sequence with a single all-covering span; labels chosen so
/// the utterance is always structurally valid.
fn random_utterance(rng: &mut ChaCha8Rng, inv_len: usize) -> Utterance {
    let len = rng.gen_range(1..=24);
    let tokens = (0..len)
        .map(|_| esm_core::TokenId(rng.gen_range(0..inv_len as u32)))
        .collect();
    Utterance {
        tokens,
        spans: vec![LabelSpan {
            start: 0,
            end: len,
            language: Language::Mandarin,
            phonology: Some(Phonology::ChineseEnglish),
        }],
        line: 0,
    }
}

#[test]
fn acceptance_mask_suite() {
    let inv = build_inventory();

    // The full kind -> (language bit, phonology bit) table.
    for entry in inv.entries() {
        let lang = entry.kind.is_break();
        let phon = matches!(
            entry.kind,
            TokenKind::EnglishStress | TokenKind::EnglishSyllableBoundary | TokenKind::EnglishLiaison
        );
        assert_eq!(language_bit(entry.kind), lang, "{:?}", entry.kind);
        assert_eq!(phonology_bit(entry.kind), phon, "{:?}", entry.kind);
    }

    // Disjointness on 1,000 random utterances.
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for _ in 0..1000 {
        let u = random_utterance(&mut rng, inv.len());
        let lang = compute_language_mask(&u, &inv).unwrap();
        let phon = compute_phonology_mask(&u, &inv).unwrap();
        assert_eq!(lang.len(), u.len());
        assert!(!lang.and(&phon).any(), "masks intersect");
    }

    // Documented example sequences: a Mandarin phrase with breaks and an
    // English chunk with stress/boundary tokens.
    let u = parse_utterance("cn:ni cn:t3 br:#1 cn:hao cn:t3 br:/sil/", 1, &inv).unwrap();
    let lang = compute_language_mask(&u, &inv).unwrap();
    let phon = compute_phonology_mask(&u, &inv).unwrap();
    assert_eq!(lang.bits(), &[false, false, true, false, false, true]);
    assert!(!phon.any());

    let u = parse_utterance("en:HH en:EH en:L en:OW en:stress1 en:sylb en:liaison br:#2", 1, &inv).unwrap();
    let lang = compute_language_mask(&u, &inv).unwrap();
    let phon = compute_phonology_mask(&u, &inv).unwrap();
    assert_eq!(lang.bits(), &[false, false, false, false, false, false, false, true]);
    assert_eq!(phon.bits(), &[false, false, false, false, true, true, true, false]);

    println!("[PASS] mask suite: kind table, disjointness on 1000 random utterances, documented examples");
}

#[test]
fn acceptance_label_suite() {
    assert_eq!(assign_labels(CorpusKind::ChineseMandarin), (Language::Mandarin, None));
    assert_eq!(
        assign_labels(CorpusKind::ChineseMixed),
        (Language::Mandarin, Some(Phonology::ChineseEnglish))
    );
    assert_eq!(
        assign_labels(CorpusKind::ChineseEnglish),
        (Language::English, Some(Phonology::StandardEnglish))
    );
    assert_eq!(
        assign_labels(CorpusKind::AmericanEnglish),
        (Language::English, Some(Phonology::StandardEnglish))
    );
    println!("[PASS] label suite: all corpus rows reproduced");
}

#[test]
fn acceptance_eq3_suite() {
    // alpha in [-1, 1] over 1,000 random forwards.
    let mut checked = 0usize;
    for seed in 0..1000u64 {
        let inst = random_instance(seed);
        let fwd = inst
            .params
            .forward_mixed(&inst.e_o, &inst.lp_dynamic, &inst.lp_static)
            .unwrap();
        for &a in fwd.diag.alpha.data() {
            assert!((-1.0..=1.0).contains(&a), "alpha {a} out of range");
            checked += 1;
        }
    }
    assert!(checked > 1000);

    // Invariance to positive rescaling of query rows and key embeddings,
    // relative change < 1e-9.
    for seed in 0..20u64 {
        let inst = random_instance(seed);
        let lp_n = inst.lp_dynamic.clone();
        let (_, alpha) = inst.params.multi_head(&inst.e_o, &lp_n).unwrap();
        for &c in &[0.5, 2.0, 10.0] {
            let scale = |m: &TokenMatrix| {
                TokenMatrix::from_vec(m.rows(), m.cols(), m.data().iter().map(|&v| c * v).collect())
                    .unwrap()
            };
            let (_, a_key) = inst.params.multi_head(&inst.e_o, &scale(&lp_n)).unwrap();
            let (_, a_query) = inst.params.multi_head(&scale(&inst.e_o), &lp_n).unwrap();
            for (&a, &b) in alpha.data().iter().zip(a_key.data()) {
                assert!((a - b).abs() / a.abs().max(1e-12) < 1e-9);
            }
            for (&a, &b) in alpha.data().iter().zip(a_query.data()) {
                assert!((a - b).abs() / a.abs().max(1e-12) < 1e-9);
            }
        }
    }

    // Exact parallel / orthogonal / antiparallel cases.
    let (alpha, head, _) = cosine_head(&[1.0, 0.0], &[1.0, 0.0], &[3.0, -2.0]);
    assert_eq!(alpha, 1.0);
    assert_eq!(head, vec![3.0, -2.0]);
    let (alpha, head, _) = cosine_head(&[1.0, 0.0], &[0.0, 1.0], &[3.0, -2.0]);
    assert_eq!(alpha, 0.0);
    assert_eq!(head, vec![0.0, 0.0]);
    let (alpha, head, _) = cosine_head(&[1.0, 0.0], &[-2.0, 0.0], &[3.0, -2.0]);
    assert_eq!(alpha, -1.0);
    assert_eq!(head, vec![-3.0, 2.0]);

    println!("[PASS] eq3 suite: alpha range on 1000 forwards, scale invariance < 1e-9, exact special cases");
}

#[test]
fn acceptance_eq12_suite() {
    let mut max_abs_diff = 0.0_f64;
    for seed in 1000..1060u64 {
        let inst = random_instance(seed);
        let fwd = inst
            .params
            .forward_mixed(&inst.e_o, &inst.lp_dynamic, &inst.lp_static)
            .unwrap();

        // M_o == dynamic + static, bit-exact.
        for t in 0..fwd.diag.m_o.rows() {
            for j in 0..fwd.diag.m_o.cols() {
                let sum = fwd.diag.dynamic.at(t, j) + fwd.diag.static_component[j];
                assert_eq!(sum.to_bits(), fwd.diag.m_o.at(t, j).to_bits());
            }
        }

        // Equivalence with the straight-line reference to 1e-12.
        let reference = reference_forward(
            &inst.params,
            &rows_of(&inst.e_o),
            inst.lp_dynamic.row(0),
            inst.lp_static.row(0),
        );
        for t in 0..fwd.f_o.rows() {
            for j in 0..fwd.f_o.cols() {
                let diff = (fwd.f_o.at(t, j) - reference.f_o[t][j]).abs();
                max_abs_diff = max_abs_diff.max(diff);
                assert!(diff < 1e-12, "seed {seed}: f_o[{t}][{j}] differs by {diff}");
            }
            for h in 0..fwd.diag.alpha.cols() {
                assert!((fwd.diag.alpha.at(t, h) - reference.alpha[t][h]).abs() < 1e-12);
            }
        }

        // Mixed forward with equal sources bit-equals the plain forward.
        let plain = inst.params.forward(&inst.e_o, &inst.lp_dynamic).unwrap();
        let mixed = inst
            .params
            .forward_mixed(&inst.e_o, &inst.lp_dynamic, &inst.lp_dynamic)
            .unwrap();
        assert_eq!(plain.f_o, mixed.f_o);
        for (&a, &b) in plain.diag.alpha.data().iter().zip(mixed.diag.alpha.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
    println!("[PASS] eq1-2 suite: bit-exact additivity, reference equivalence on 60 instances (max |diff| {max_abs_diff:.2e}), mixed degenerate case");
}

#[test]
fn acceptance_gradient_suite() {
    let start = Instant::now();
    let cfg = RunConfig::desk();
    let task = SyntheticTask::phonology_sensitive(&cfg, cfg.seed).unwrap();
    let model = Model::new(&cfg, cfg.seed).unwrap();
    let report = grad_check(
        &model,
        |m| batch_loss_and_grad(m, &task.examples),
        |m| batch_loss(m, &task.examples),
        &GradCheckOptions {
            step: 1e-4,
            tolerance: 1e-3,
            ..Default::default()
        },
    )
    .unwrap();
    for group in &report.groups {
        assert!(
            group.max_rel_err < 1e-3,
            "group {} rel err {}",
            group.name,
            group.max_rel_err
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "gradient suite took {elapsed:?}");
    println!(
        "[PASS] gradient suite: {} entries over {} groups, max rel err {:.3e} < 1e-3, {elapsed:?}",
        report.entries_checked,
        report.groups.len(),
        report.max_rel_err
    );
}

#[test]
fn acceptance_control_suite() {
    // Exact doubling identity on a dyadic grid (all arithmetic exact, so the
    // comparison is bitwise; a wrong formula still fails wildly).
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..200 {
        let d = rng.gen_range(1..=16);
        let grid = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..d)
                .map(|_| rng.gen_range(-(1 << 20)..(1 << 20)) as f64 / (1u64 << 20) as f64)
                .collect()
        };
        let base = grid(&mut rng);
        let reference = grid(&mut rng);
        let result = control_double(&base, &reference).unwrap();
        for j in 0..d {
            let lhs = result[j] - reference[j];
            let rhs = reference[j] - base[j];
            assert_eq!(lhs.to_bits(), rhs.to_bits());
        }
    }
    assert_eq!(control_double(&[0.0, 0.0], &[1.0, 2.0]).unwrap(), vec![2.0, 4.0]);
    let same = vec![0.75, -1.25];
    assert_eq!(control_double(&same, &same).unwrap(), same);

    let inv = build_inventory();
    let cfg = RunConfig::desk();
    let model = Model::new(&cfg, 3).unwrap();

    // Expressiveness doubling: dynamic slots extrapolate past the reference,
    // static slots stay.
    let u = parse_utterance("lang=en phon=stden : en:HH en:IY en:stress1 en:sylb", 1, &inv).unwrap();
    let spec = ControlSpec::from_utterance(&u);
    let enhanced = enhance_expressiveness(&u, &spec).unwrap();
    let c = &enhanced.spans[0].control;
    assert_eq!(c.language_static, Language::English);
    assert_eq!(c.phonology_static, Some(Phonology::StandardEnglish));
    assert_eq!(c.dynamic_gain, 2.0);
    let resolved = resolve_label_vectors(c, &model.tables).unwrap();
    let expect_lang = control_double(
        model.tables.lang_mandarin.value.row(0),
        model.tables.lang_english.value.row(0),
    )
    .unwrap();
    assert_eq!(resolved.lang_dynamic.row(0), expect_lang.as_slice());
    let expect_phon = control_double(
        model.tables.phon_chinese_english.value.row(0),
        model.tables.phon_standard_english.value.row(0),
    )
    .unwrap();
    assert_eq!(resolved.phon_dynamic.unwrap().row(0), expect_phon.as_slice());
    assert_eq!(resolved.lang_static, model.tables.lang_english.value);
    assert_eq!(resolved.phon_static.unwrap(), model.tables.phon_standard_english.value);

    // Doubling twice is not the same as doubling once.
    let twice = enhance_expressiveness(&u, &enhanced).unwrap();
    assert_eq!(twice.spans[0].control.dynamic_gain, 4.0);
    let r2 = resolve_label_vectors(&twice.spans[0].control, &model.tables).unwrap();
    assert_ne!(r2.lang_dynamic, resolved.lang_dynamic);

    // Smooth transition: slot table and idempotence.
    let u = parse_utterance(
        "corpus=chinese-mixed ;; cn:ni cn:t3 br:#1 | en:HH en:stress1 en:sylb | cn:hao cn:t3",
        1,
        &inv,
    )
    .unwrap();
    let spec = ControlSpec::from_utterance(&u);
    let (once, warnings) = smooth_transition(&u, &spec, &inv).unwrap();
    assert!(warnings.is_empty());
    let c = &once.spans[1].control;
    assert_eq!(c.language_dynamic, Language::English);
    assert_eq!(c.language_static, Language::English);
    assert_eq!(c.phonology_dynamic, Some(Phonology::StandardEnglish));
    assert_eq!(c.phonology_static, Some(Phonology::ChineseEnglish));
    assert_eq!(once.spans[0], spec.spans[0]);
    assert_eq!(once.spans[2], spec.spans[2]);
    let (again, _) = smooth_transition(&u, &once, &inv).unwrap();
    assert_eq!(again, once);

    // Combination (b) equals (c)+(d)+(e)+(f) applied jointly to (a).
    let mut joined = Combination::A.span_control();
    joined.phonology_dynamic = Combination::C.span_control().phonology_dynamic;
    joined.phonology_static = Combination::D.span_control().phonology_static;
    joined.language_dynamic = Combination::E.span_control().language_dynamic;
    joined.language_static = Combination::F.span_control().language_static;
    assert_eq!(joined, Combination::B.span_control());
    let spec_b = apply_combination(&u, Combination::B);
    for span in &spec_b.spans {
        assert_eq!(span.control, Combination::B.span_control());
    }

    println!("[PASS] control suite: exact doubling identity, section-3.4 slot tables, idempotence, (b) == join(c,d,e,f)");
}

#[test]
fn acceptance_training_suite() {
    let start = Instant::now();
    let cfg = RunConfig::desk();
    assert_eq!(cfg.steps, 500);
    let task = SyntheticTask::phonology_sensitive(&cfg, cfg.seed).unwrap();
    assert!(task.max_tokens() <= 12);
    let report = esm_core::train_toy(&task, &cfg).unwrap();
    assert!(
        report.final_loss() < 0.1 * report.initial_loss(),
        "loss only fell from {} to {}",
        report.initial_loss(),
        report.final_loss()
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "training suite took {elapsed:?}");

    // Zero learning rate leaves the loss curve exactly flat.
    let mut flat_cfg = cfg.clone();
    flat_cfg.learning_rate = 0.0;
    flat_cfg.steps = 10;
    let flat = esm_core::train_toy(&task, &flat_cfg).unwrap();
    for &l in &flat.losses {
        assert_eq!(l.to_bits(), flat.losses[0].to_bits());
    }

    println!(
        "[PASS] training suite: loss {:.4} -> {:.4} (ratio {:.4} < 0.1) in 500 steps, {elapsed:?}; lr=0 run exactly flat",
        report.initial_loss(),
        report.final_loss(),
        report.reduction()
    );
}
