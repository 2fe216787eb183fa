//! Energies, the Monte-Carlo KL loss, its analytic gradient and training.

use std::f64::consts::PI;

use convflow::checks::canonical_stack;
use convflow::config::ModelConfig;
use convflow::flows::{build_model, FlowStack, Schedule};
use convflow::math::RngState;
use convflow::objectives::{gradcheck, kl_loss, kl_loss_grad, train, Energy, TrainConfig};

fn identity_stack() -> FlowStack {
    ModelConfig::preset("synthetic-k8").unwrap().zeroed_stack().unwrap()
}

/// Straightforward transcription of the U1 formula, without log-sum-exp.
fn u1_naive(z1: f64, z2: f64) -> f64 {
    let r = (z1 * z1 + z2 * z2).sqrt();
    0.5 * ((r - 2.0) / 4.0).powi(2)
        - ((-0.5 * ((z1 - 2.0) / 0.6).powi(2)).exp() + (-0.5 * ((z1 + 2.0) / 0.6).powi(2)).exp()).ln()
}

#[test]
fn energies_at_hand_computed_points() {
    let u1 = Energy::U1.eval(&[2.0, 0.0]).unwrap();
    assert!((u1 + (-200.0f64 / 9.0).exp().ln_1p()).abs() < 1e-15);
    assert!(u1.abs() < 1e-9);
    assert_eq!(Energy::U2.eval(&[0.0, 0.0]).unwrap(), 0.0);
    assert!((Energy::U2.eval(&[0.0, 0.4]).unwrap() - 0.5).abs() < 1e-15);
    assert_eq!(Energy::U2.grad(&[0.0, 0.0]).unwrap(), [0.0, 0.0]);
    for z1 in [-2.5, -1.0, 0.0, 0.5, 3.0] {
        for z2 in [-1.0, 0.0, 2.0] {
            assert!((Energy::U1.eval(&[z1, z2]).unwrap() - u1_naive(z1, z2)).abs() < 1e-12);
        }
    }
}

#[test]
fn energy_gradients_match_finite_differences() {
    let mut rng = RngState::new(31);
    for energy in [Energy::U1, Energy::U2] {
        for _ in 0..100 {
            let z = [rng.normal(0.0, 2.0), rng.normal(0.0, 2.0)];
            let g = energy.grad(&z).unwrap();
            for k in 0..2 {
                let h = 1e-6;
                let mut up = z;
                let mut down = z;
                up[k] += h;
                down[k] -= h;
                let fd = (energy.eval(&up).unwrap() - energy.eval(&down).unwrap()) / (2.0 * h);
                let scale = g[k].abs().max(fd.abs()).max(1e-3);
                assert!((g[k] - fd).abs() / scale <= 1e-6, "{energy} at {z:?}: {} vs {fd}", g[k]);
            }
        }
    }
}

#[test]
fn identity_stack_loss_at_the_origin() {
    let stack = identity_stack();
    for energy in [Energy::U1, Energy::U2] {
        let report = kl_loss(&stack, energy, &[vec![0.0, 0.0]]).unwrap();
        let expected = -(2.0 * PI).ln() + energy.eval(&[0.0, 0.0]).unwrap();
        assert!((report.loss - expected).abs() < 1e-12, "{energy}");
        assert_eq!(report.logdet_term, 0.0);
        assert_eq!(report.loss, report.entropy_term - report.logdet_term + report.energy_term);
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let mut rng = RngState::new(32);
    for trial in 0..10 {
        let mut stack = canonical_stack(2, 1, &mut rng).unwrap();
        for layer in stack.layers_mut() {
            layer.randomize(&mut rng, 0.5);
        }
        let batch: Vec<Vec<f64>> = (0..8).map(|_| rng.sample_standard_gaussian(2)).collect();
        for energy in [Energy::U1, Energy::U2] {
            let r = gradcheck(&stack, energy, &batch, 1e-5, 1e-4).unwrap();
            assert!(r.passed, "trial {trial} {energy}: worst {} at {}", r.max_rel_error, r.worst_index);
        }
    }
}

#[test]
fn symmetric_batch_gradient_is_reproducible() {
    let stack = build_model(2, 2, &Schedule::synthetic(), &mut RngState::new(33)).unwrap();
    let z = vec![0.7, -0.2];
    let batch = vec![z.clone(), z.iter().map(|x| -x).collect()];
    let (r1, g1) = kl_loss_grad(&stack, Energy::U1, &batch).unwrap();
    let (r2, g2) = kl_loss_grad(&stack, Energy::U1, &batch).unwrap();
    assert!(g1.iter().all(|g| g.is_finite()));
    assert_eq!(g1, g2);
    assert_eq!(r1, r2);
}

#[test]
fn rejects_bad_batches() {
    let stack = identity_stack();
    assert!(kl_loss(&stack, Energy::U1, &[]).is_err());
    assert!(kl_loss(&stack, Energy::U1, &[vec![0.0, 0.0, 0.0]]).is_err());
    let wide = build_model(3, 1, &Schedule::for_dim(3), &mut RngState::new(0)).unwrap();
    assert!(kl_loss(&wide, Energy::U1, &[vec![0.0, 0.0, 0.0]]).is_err());
}

#[test]
fn short_training_lowers_the_loss_and_is_deterministic() {
    let config = ModelConfig::preset("synthetic-k8").unwrap();
    let cfg = TrainConfig { steps: 1500, batch: 50, lr: 5e-3, seed: 4, log_every: 500 };
    let run = || {
        let mut stack = config.init_stack(&mut RngState::new(1)).unwrap();
        let history = train(&mut stack, Energy::U1, &cfg).unwrap();
        (stack.param_vector(), history)
    };
    let (p1, h1) = run();
    let (p2, h2) = run();
    assert_eq!(p1, p2);
    assert_eq!(h1.losses, h2.losses);
    assert!(h1.losses.iter().all(|l| l.is_finite()));
    assert_eq!(h1.records.iter().map(|r| r.step).collect::<Vec<_>>(), vec![1, 500, 1000, 1500]);
    assert!(h1.smoothed_final_loss(100) < h1.initial_loss(100) - 1.0);
}
