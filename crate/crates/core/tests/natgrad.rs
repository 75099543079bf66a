#![allow(clippy::needless_range_loop)]

use igeom::natgrad::*;
use igeom::Error;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

mod common;
use common::{block_fisher, labels, random_batch};

fn assert_close_rel(a: f64, b: f64, rel: f64, what: &str) {
    let scale = a.abs().max(b.abs());
    if scale > 1e-6 {
        assert!((a - b).abs() <= rel * scale, "{what}: {a} vs {b}");
    } else {
        assert!((a - b).abs() < 1e-10, "{what}: {a} vs {b}");
    }
}

fn finite_difference_check(net: &Network, x: &DMatrix<f64>, y: &[usize]) {
    let (_, grads) = loss_and_gradient(net, x, y).unwrap();
    let analytic = grads.flatten();
    let theta = net.flatten();
    let h = 1e-5;
    for i in 0..theta.len() {
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[i] += h;
        dn[i] -= h;
        let lu = loss_and_gradient(&net.with_flat(&up).unwrap(), x, y)
            .unwrap()
            .0;
        let ld = loss_and_gradient(&net.with_flat(&dn).unwrap(), x, y)
            .unwrap()
            .0;
        assert_close_rel(
            (lu - ld) / (2.0 * h),
            analytic[i],
            1e-5,
            &format!("parameter {i}"),
        );
    }
}

#[test]
fn gradients_match_finite_differences_binary() {
    for seed in 0..10 {
        let net =
            Network::init(&[3, 5, 1], Activation::Sigmoid, Activation::Sigmoid, seed).unwrap();
        let x = random_batch(8, 3, 100 + seed);
        finite_difference_check(&net, &x, &labels(8, 2));
    }
}

#[test]
fn gradients_match_finite_differences_softmax_relu() {
    for seed in 0..10 {
        let net =
            Network::init(&[4, 6, 3], Activation::Relu, Activation::SoftmaxFinal, seed).unwrap();
        let x = random_batch(10, 4, 200 + seed);
        finite_difference_check(&net, &x, &labels(10, 3));
    }
}

#[test]
fn forward_matches_hand_composition() {
    let net = Network::init(&[3, 4, 2], Activation::Relu, Activation::SoftmaxFinal, 5).unwrap();
    let x = random_batch(5, 3, 77);
    let out = forward(&net, &x).unwrap();
    let (l0, l1) = (&net.layers()[0], &net.layers()[1]);
    for i in 0..5 {
        let mut hidden = [0.0; 4];
        for (o, h) in hidden.iter_mut().enumerate() {
            let mut z = l0.bias[o];
            for j in 0..3 {
                z += l0.weight[(o, j)] * x[(i, j)];
            }
            *h = z.max(0.0);
        }
        let mut logits = [0.0; 2];
        for (o, z) in logits.iter_mut().enumerate() {
            *z = l1.bias[o] + (0..4).map(|j| l1.weight[(o, j)] * hidden[j]).sum::<f64>();
        }
        let norm = logits[0].exp() + logits[1].exp();
        for o in 0..2 {
            assert!((out.output()[(i, o)] - logits[o].exp() / norm).abs() < 1e-12);
        }
    }
}

#[test]
fn confident_correct_predictions_have_tiny_gradient() {
    let w = DMatrix::from_row_slice(1, 1, &[30.0]);
    let net = Network::new(vec![DenseLayer::new(
        w,
        DVector::zeros(1),
        Activation::Sigmoid,
    )
    .unwrap()])
    .unwrap();
    let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
    let (loss, grads) = loss_and_gradient(&net, &x, &[1, 0]).unwrap();
    assert!(loss < 1e-10);
    assert!(grads.norm() < 1e-8);
}

#[test]
fn duplicated_batch_has_same_gradient() {
    let net = Network::init(&[2, 3, 1], Activation::Relu, Activation::Sigmoid, 3).unwrap();
    let x = random_batch(4, 2, 9);
    let y = labels(4, 2);
    let doubled = DMatrix::from_fn(8, 2, |i, j| x[(i % 4, j)]);
    let yy: Vec<usize> = (0..8).map(|i| y[i % 4]).collect();
    let a = loss_and_gradient(&net, &x, &y).unwrap().1.flatten();
    let b = loss_and_gradient(&net, &doubled, &yy).unwrap().1.flatten();
    assert!((a - b).amax() < 1e-15);
}

#[test]
fn per_sample_gradients_average_to_batch_gradient() {
    let net = Network::init(&[3, 4, 3], Activation::Relu, Activation::SoftmaxFinal, 8).unwrap();
    let x = random_batch(6, 3, 31);
    let y = labels(6, 3);
    let trace = forward(&net, &x).unwrap();
    let scores = per_sample_gradients(&net, &trace, &y).unwrap();
    let mean = scores.row_mean().transpose();
    let batch = backward(&net, &trace, &y).unwrap().flatten();
    assert!((mean - batch).amax() < 1e-14);
}

#[test]
fn identity_fisher_is_sgd_bitwise() {
    let net = Network::init(&[2, 3, 1], Activation::Relu, Activation::Sigmoid, 4).unwrap();
    let x = random_batch(5, 2, 12);
    let (_, g) = loss_and_gradient(&net, &x, &labels(5, 2)).unwrap();
    let cfg = NgdConfig {
        lr: 0.3,
        damping: 0.0,
        mode: NgdMode::Full,
    };
    let sgd = sgd_step(&net, &g, 0.3).unwrap();
    assert_eq!(
        natural_gradient_step(&net, &g, FisherEstimate::Identity, &cfg).unwrap(),
        sgd
    );
    let eye = DMatrix::identity(net.num_params(), net.num_params());
    assert_eq!(
        natural_gradient_step(&net, &g, FisherEstimate::Explicit(&eye), &cfg).unwrap(),
        sgd
    );
}

#[test]
fn heavy_damping_reduces_to_scaled_gradient() {
    let net = Network::init(&[2, 4, 1], Activation::Relu, Activation::Sigmoid, 6).unwrap();
    let x = random_batch(6, 2, 13);
    let y = labels(6, 2);
    let trace = forward(&net, &x).unwrap();
    let g = backward(&net, &trace, &y).unwrap();
    let scores = per_sample_gradients(&net, &trace, &y).unwrap();
    let gamma = 1e8;
    let cfg = NgdConfig {
        lr: 1.0,
        damping: gamma,
        mode: NgdMode::Full,
    };
    let next = natural_gradient_step(&net, &g, FisherEstimate::FromScores(&scores), &cfg).unwrap();
    let step = (net.flatten() - next.flatten()) * gamma;
    for (a, b) in step.iter().zip(g.flatten().iter()) {
        assert!((a - b).abs() < 1e-6 * (1.0 + b.abs()), "{a} vs {b}");
    }
    let cw = componentwise_ngd_step(
        &net,
        &g,
        &NgdConfig {
            mode: NgdMode::Blockwise,
            ..cfg
        },
    )
    .unwrap();
    for (l, (a, b)) in net.layers().iter().zip(cw.layers()).enumerate() {
        let scaled = (&a.weight - &b.weight) * gamma;
        assert!((scaled - &g.weights[l]).amax() < 1e-6);
    }
}

#[test]
fn blockwise_equals_full_on_block_diagonal_fisher() {
    for sizes in [vec![3usize, 2], vec![3, 4, 2]] {
        let net = Network::init(&sizes, Activation::Relu, Activation::SoftmaxFinal, 11).unwrap();
        let x = random_batch(7, 3, 5);
        let (_, g) = loss_and_gradient(&net, &x, &labels(7, 2)).unwrap();
        let gamma = 0.1;
        let cfg = NgdConfig {
            lr: 0.05,
            damping: gamma,
            mode: NgdMode::Full,
        };
        let fisher = block_fisher(&net, &g, gamma);
        let full =
            natural_gradient_step(&net, &g, FisherEstimate::Explicit(&fisher), &cfg).unwrap();
        let cw = componentwise_ngd_step(
            &net,
            &g,
            &NgdConfig {
                mode: NgdMode::Blockwise,
                ..cfg
            },
        )
        .unwrap();
        let tol = if sizes.len() == 2 { 1e-10 } else { 1e-8 };
        assert!((full.flatten() - cw.flatten()).amax() < tol);
    }
}

#[test]
fn quadratic_loss_converges_in_one_step() {
    for c in [0.1, 1.0, 10.0] {
        let net = Network::init(&[3, 4, 2], Activation::Relu, Activation::Identity, 1).unwrap();
        let target = Network::init(&[3, 4, 2], Activation::Relu, Activation::Identity, 2).unwrap();
        let (_, g) = quadratic_loss(&net, &target, c).unwrap();
        let next = sgd_step(&net, &g, 1.0 / (2.0 * c)).unwrap();
        assert!((next.flatten() - target.flatten()).norm() < 1e-12);
    }
}

#[test]
fn two_half_steps_equal_one_full_step() {
    let net = Network::init(&[2, 3, 1], Activation::Relu, Activation::Sigmoid, 2).unwrap();
    let x = random_batch(4, 2, 3);
    let (_, g) = loss_and_gradient(&net, &x, &labels(4, 2)).unwrap();
    let twice = sgd_step(&sgd_step(&net, &g, 0.05).unwrap(), &g, 0.05).unwrap();
    let once = sgd_step(&net, &g, 0.1).unwrap();
    assert!((twice.flatten() - once.flatten()).amax() < 1e-15);
}

fn blobs_net(seed: u64) -> (Network, Dataset) {
    let data = Dataset::blobs(100, 2.0, seed).unwrap();
    let net = Network::init(&[2, 8, 1], Activation::Relu, Activation::Sigmoid, seed).unwrap();
    (net, data)
}

#[test]
fn sgd_learns_separable_blobs() {
    let (net, data) = blobs_net(1);
    let cfg = TrainConfig {
        lr: 0.5,
        epochs: 20,
        batch: 20,
        seed: 1,
        ..Default::default()
    };
    let report = train(&net, &data, &cfg).unwrap();
    assert_eq!(report.losses.len(), 201);
    assert!(
        *report.losses.last().unwrap() < 0.2,
        "{:?}",
        report.losses.last()
    );
}

#[test]
fn componentwise_ngd_descends() {
    let (net, data) = blobs_net(2);
    let cfg = TrainConfig {
        optimizer: Optimizer::CwNgd,
        epochs: 10,
        batch: 40,
        seed: 2,
        ..Default::default()
    };
    let report = train(&net, &data, &cfg).unwrap();
    assert!(report.losses[50] < report.losses[0]);
}

#[test]
fn full_ngd_descends() {
    let (net, data) = blobs_net(3);
    let cfg = TrainConfig {
        optimizer: Optimizer::Ngd,
        lr: 0.05,
        epochs: 10,
        batch: 40,
        seed: 3,
        ..Default::default()
    };
    let report = train(&net, &data, &cfg).unwrap();
    assert!(report.losses[50] < report.losses[0]);
}

#[test]
fn zero_learning_rate_gives_flat_trace() {
    let (net, data) = blobs_net(4);
    let cfg = TrainConfig {
        lr: 0.0,
        epochs: 2,
        ..Default::default()
    };
    let report = train(&net, &data, &cfg).unwrap();
    assert!(report.losses.iter().all(|&l| l == report.losses[0]));
    assert_eq!(report.network, net);
}

#[test]
fn runaway_training_is_reported() {
    let (net, data) = blobs_net(5);
    let cfg = TrainConfig {
        lr: 1e308,
        clip: None,
        epochs: 3,
        ..Default::default()
    };
    match train(&net, &data, &cfg) {
        Err(Error::Diverged { step, trace }) => {
            assert_eq!(trace.len(), step + 1);
            assert!(trace[step] > DIVERGENCE_LOSS || trace[step].is_nan());
        }
        other => panic!(
            "expected divergence, got {:?}",
            other.map(|r| r.losses.last().copied())
        ),
    }
}

#[test]
fn training_is_reproducible() {
    let (net, data) = blobs_net(6);
    let cfg = TrainConfig {
        optimizer: Optimizer::CwNgd,
        seed: 9,
        ..Default::default()
    };
    let a = train(&net, &data, &cfg).unwrap();
    let b = train(&net, &data, &cfg).unwrap();
    assert_eq!(a.losses, b.losses);
    assert_eq!(a.network, b.network);
}

#[test]
fn crlb_variance_scales_with_n() {
    let a = crlb_check(1.0, 100, 10_000, 1).unwrap();
    assert!((0.95..=1.05).contains(&a.ratio), "{a:?}");
    let b = crlb_check(1.0, 200, 10_000, 2).unwrap();
    assert!((a.variance / b.variance - 2.0).abs() < 0.12);
    // The bound direction, allowing three Monte-Carlo standard errors.
    let se = (2.0 / 9_999.0f64).sqrt();
    assert!(a.ratio >= 1.0 - 3.0 * se && b.ratio >= 1.0 - 3.0 * se);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clipping_caps_the_global_norm(values in prop::collection::vec(-100.0f64..100.0, 17), max in 0.01f64..10.0) {
        let net = Network::init(&[2, 3, 2], Activation::Relu, Activation::SoftmaxFinal, 0).unwrap();
        let mut g = GradientBundle::unflatten(&net, &DVector::from_vec(values)).unwrap();
        let before = g.norm();
        let reported = g.clip(max);
        prop_assert_eq!(reported, before);
        prop_assert!(g.norm() <= max + 1e-12);
        if before <= max {
            prop_assert_eq!(g.norm(), before);
        }
    }

    #[test]
    fn gradient_check_random_nets(seed in 0u64..1000) {
        let net = Network::init(&[2, 3, 1], Activation::Sigmoid, Activation::Sigmoid, seed).unwrap();
        let x = random_batch(4, 2, seed + 1);
        finite_difference_check(&net, &x, &labels(4, 2));
    }
}
