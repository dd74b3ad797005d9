//! Finite-difference verification of every analytic backward pass, from the
//! single kernels up through the full conditioning pipeline.

use esm_core::gradcheck::{grad_check, GradCheckOptions};
use esm_core::matrix::TokenMatrix;
use esm_core::ops;
use esm_core::params::{ParamSet, Parameter};
use esm_core::{
    batch_loss, batch_loss_and_grad, EsmConfig, EsmParams, Model, RunConfig, SyntheticTask,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A bag of parameters plus fixed (non-learned) inputs for probing one op.
#[derive(Clone)]
struct Probe {
    params: Vec<Parameter>,
}

impl ParamSet for Probe {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        for p in &self.params {
            f(p);
        }
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        for p in &mut self.params {
            f(p);
        }
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> TokenMatrix {
    TokenMatrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// loss = sum(R .* y): a fixed random weighting keeps the gradient
/// non-uniform without adding nonlinearity of its own.
fn weighted_sum(y: &TokenMatrix, weights: &TokenMatrix) -> f64 {
    y.data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
}

#[test]
fn linear_weight_gradient_has_closed_form() {
    for seed in 0..10u64 {
        // With f = sum of outputs, dW[i][j] = sum_t x[t][i] (column sums of x).
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let t_len = rng.gen_range(1..=6);
        let d_in = rng.gen_range(1..=16);
        let d_out = rng.gen_range(1..=8);
        let x = random_matrix(&mut rng, t_len, d_in);
        let w = random_matrix(&mut rng, d_in, d_out);
        let b = random_matrix(&mut rng, 1, d_out);
        let ones = TokenMatrix::from_vec(t_len, d_out, vec![1.0; t_len * d_out]).unwrap();

        let mut dw = TokenMatrix::zeros(d_in, d_out);
        let mut db = TokenMatrix::zeros(1, d_out);
        let mut dx = TokenMatrix::zeros(t_len, d_in);
        ops::linear_backward(&x, &w, &ones, &mut dx, &mut dw, &mut db).unwrap();
        for i in 0..d_in {
            let col_sum: f64 = (0..t_len).map(|t| x.at(t, i)).sum();
            for j in 0..d_out {
                assert!((dw.at(i, j) - col_sum).abs() < 1e-12);
            }
        }

        // And the same as a finite-difference check at the spec tolerance.
        let probe = Probe {
            params: vec![Parameter::new("w", w), Parameter::new("b", b)],
        };
        let report = grad_check(
            &probe,
            |p| {
                let [pw, pb] = &mut p.params[..] else { unreachable!() };
                let y = ops::linear(&x, &pw.value, &pb.value)?;
                let mut dx = TokenMatrix::zeros(t_len, d_in);
                ops::linear_backward(&x, &pw.value, &ones, &mut dx, &mut pw.grad, &mut pb.grad)?;
                Ok(y.data().iter().sum())
            },
            |p| {
                let y = ops::linear(&x, &p.params[0].value, &p.params[1].value)?;
                Ok(y.data().iter().sum())
            },
            &GradCheckOptions {
                step: 1e-4,
                tolerance: 1e-6,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed(), "seed {seed}: max rel err {}", report.max_rel_err);
    }
}

#[test]
fn non_finite_loss_is_reported() {
    let probe = Probe {
        params: vec![Parameter::new("w", TokenMatrix::from_vec(1, 1, vec![1.0]).unwrap())],
    };
    let err = grad_check(
        &probe,
        |_| Ok(f64::NAN),
        |_| Ok(f64::NAN),
        &GradCheckOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, esm_core::Error::NonFiniteLoss));
}

#[test]
fn layer_norm_gradients_match_finite_differences() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let t_len = rng.gen_range(1..=6);
        let d = rng.gen_range(2..=16);
        let x = random_matrix(&mut rng, t_len, d);
        let weights = random_matrix(&mut rng, t_len, d);
        let probe = Probe {
            params: vec![
                Parameter::new("x", x),
                Parameter::new("gamma", random_matrix(&mut rng, 1, d)),
                Parameter::new("beta", random_matrix(&mut rng, 1, d)),
            ],
        };
        let eps = 1e-5;
        let report = grad_check(
            &probe,
            |p| {
                let [px, pgamma, pbeta] = &mut p.params[..] else { unreachable!() };
                let (y, cache) = ops::layer_norm_fwd(&px.value, &pgamma.value, &pbeta.value, eps)?;
                let mut dx = TokenMatrix::zeros(px.value.rows(), px.value.cols());
                ops::layer_norm_backward(&px.value, &pgamma.value, &cache, &weights, &mut dx, &mut pgamma.grad, &mut pbeta.grad);
                px.grad.add_assign(&dx)?;
                Ok(weighted_sum(&y, &weights))
            },
            |p| {
                let y = ops::layer_norm(&p.params[0].value, &p.params[1].value, &p.params[2].value, eps)?;
                Ok(weighted_sum(&y, &weights))
            },
            &GradCheckOptions {
                step: 1e-4,
                tolerance: 1e-4,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(report.passed(), "seed {seed}: max rel err {}", report.max_rel_err);
    }
}

#[test]
fn conv1d_gradients_match_finite_differences() {
    for seed in 0..10 {
        for width in [1usize, 3] {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
            let t_len = rng.gen_range(1..=6);
            let d_in = rng.gen_range(1..=5);
            let d_out = rng.gen_range(1..=5);
            let weights = random_matrix(&mut rng, t_len, d_out);
            let probe = Probe {
                params: vec![
                    Parameter::new("x", random_matrix(&mut rng, t_len, d_in)),
                    Parameter::new("kernel", random_matrix(&mut rng, width * d_in, d_out)),
                    Parameter::new("bias", random_matrix(&mut rng, 1, d_out)),
                ],
            };
            let report = grad_check(
                &probe,
                |p| {
                    let [px, pk, pb] = &mut p.params[..] else { unreachable!() };
                    let y = ops::conv1d(&px.value, &pk.value, &pb.value, width)?;
                    let mut dx = TokenMatrix::zeros(px.value.rows(), px.value.cols());
                    ops::conv1d_backward(&px.value, &pk.value, width, &weights, &mut dx, &mut pk.grad, &mut pb.grad);
                    px.grad.add_assign(&dx)?;
                    Ok(weighted_sum(&y, &weights))
                },
                |p| {
                    let y = ops::conv1d(&p.params[0].value, &p.params[1].value, &p.params[2].value, width)?;
                    Ok(weighted_sum(&y, &weights))
                },
                &GradCheckOptions {
                    step: 1e-4,
                    tolerance: 1e-6,
                    ..Default::default()
                },
            )
            .unwrap();
            assert!(report.passed(), "seed {seed} width {width}: {}", report.max_rel_err);
        }
    }
}

/// ESM parameters plus its two embedding inputs and the encoder output, all
/// treated as checkable parameters.
#[derive(Clone)]
struct EsmProbe {
    esm: EsmParams,
    e_o: Parameter,
    lp_dyn: Parameter,
    lp_stat: Parameter,
}

impl ParamSet for EsmProbe {
    fn visit(&self, f: &mut dyn FnMut(&Parameter)) {
        self.esm.visit(f);
        f(&self.e_o);
        f(&self.lp_dyn);
        f(&self.lp_stat);
    }
    fn visit_mut(&mut self, f: &mut dyn FnMut(&mut Parameter)) {
        self.esm.visit_mut(f);
        f(&mut self.e_o);
        f(&mut self.lp_dyn);
        f(&mut self.lp_stat);
    }
}

#[test]
fn esm_gradients_match_finite_differences() {
    let cases: Vec<(u64, usize)> = (0..10u64).map(|s| (s, if s % 3 == 2 { 3 } else { 1 })).collect();
    for (seed, kernel_width) in cases {
        let cfg = EsmConfig {
            d_model: 8,
            heads: 2,
            ffn_hidden: 10,
            kernel_width,
            eps: 1e-5,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(400 + seed);
        let t_len = rng.gen_range(2..=5);
        let esm = EsmParams::init(cfg, "esm", &mut rng).unwrap();
        let weights = random_matrix(&mut rng, t_len, cfg.d_model);
        let probe = EsmProbe {
            esm,
            e_o: Parameter::new("e_o", random_matrix(&mut rng, t_len, cfg.d_model)),
            lp_dyn: Parameter::new("lp_dyn", random_matrix(&mut rng, 1, cfg.d_model)),
            lp_stat: Parameter::new("lp_stat", random_matrix(&mut rng, 1, cfg.d_model)),
        };
        let report = grad_check(
            &probe,
            |p| {
                let fwd = p.esm.forward_mixed(&p.e_o.value, &p.lp_dyn.value, &p.lp_stat.value)?;
                let grads = p.esm.backward(&fwd, &weights)?;
                p.e_o.grad.add_assign(&grads.d_e_o)?;
                p.lp_dyn.grad.add_assign(&grads.d_lp_dynamic)?;
                p.lp_stat.grad.add_assign(&grads.d_lp_static)?;
                Ok(weighted_sum(&fwd.f_o, &weights))
            },
            |p| {
                let fwd = p.esm.forward_mixed(&p.e_o.value, &p.lp_dyn.value, &p.lp_stat.value)?;
                Ok(weighted_sum(&fwd.f_o, &weights))
            },
            &GradCheckOptions {
                step: 1e-4,
                tolerance: 1e-3,
                ..Default::default()
            },
        )
        .unwrap();
        assert!(
            report.passed(),
            "seed {seed} kernel {kernel_width}: max rel err {} in {}",
            report.max_rel_err,
            report
                .groups
                .iter()
                .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
                .map(|g| g.name.clone())
                .unwrap_or_default()
        );
    }
}

#[test]
fn full_pipeline_gradients_match_finite_differences() {
    let cfg = RunConfig::desk();
    let task = SyntheticTask::phonology_sensitive(&cfg, cfg.seed).unwrap();
    let model = Model::new(&cfg, cfg.seed).unwrap();
    let report = grad_check(
        &model,
        |m| batch_loss_and_grad(m, &task.examples),
        |m| batch_loss(m, &task.examples),
        &GradCheckOptions::default(),
    )
    .unwrap();
    for group in &report.groups {
        assert!(
            group.max_rel_err < 1e-3,
            "group {} rel err {} (analytic {}, numeric {})",
            group.name,
            group.max_rel_err,
            group.analytic_at_worst,
            group.numeric_at_worst
        );
    }
}
