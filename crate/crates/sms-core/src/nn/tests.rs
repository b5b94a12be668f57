use rand::Rng as _;

use super::*;
use crate::rng::rng_from_seed;
use crate::tensor::Tensor;

fn identity_layer(dim: usize) -> DenseLayer {
    let mut w = Tensor::zeros(vec![dim, dim]);
    for i in 0..dim {
        w.data_mut()[i * dim + i] = 1.0;
    }
    DenseLayer::from_parts(w, Tensor::zeros(vec![dim]), Activation::Identity).unwrap()
}

/// Central difference of a scalar loss with respect to one tensor.
fn numeric_grad(
    mut input: Tensor,
    loss: impl Fn(&Tensor) -> f64,
    h: f64,
) -> Vec<f64> {
    let mut grad = vec![0.0; input.len()];
    for i in 0..input.len() {
        input.data_mut()[i] += h;
        let plus = loss(&input);
        input.data_mut()[i] -= 2.0 * h;
        let minus = loss(&input);
        input.data_mut()[i] += h;
        grad[i] = (plus - minus) / (2.0 * h);
    }
    grad
}

#[test]
fn forward_identity_net_is_identity() {
    let mut mlp = Mlp::from_layers(vec![identity_layer(3)]).unwrap();
    let x = Tensor::from_rows(&[vec![0.2, -0.4, 1.5], vec![3.0, 0.0, -1.0]]).unwrap();
    let y = mlp.forward(&x).unwrap();
    assert_eq!(y.data(), x.data());
}

#[test]
fn forward_scalar_relu_examples() {
    let layer = DenseLayer::from_parts(
        Tensor::new(vec![1, 1], vec![2.0]).unwrap(),
        Tensor::from_vec(vec![1.0]),
        Activation::Relu,
    )
    .unwrap();
    let mut mlp = Mlp::from_layers(vec![layer]).unwrap();
    let y = mlp.forward(&Tensor::from_rows(&[vec![3.0]]).unwrap()).unwrap();
    assert_eq!(y.data(), &[7.0]);
    // 2·(−3)+1 = −5, clamped to 0 by relu.
    let y = mlp.forward(&Tensor::from_rows(&[vec![-3.0]]).unwrap()).unwrap();
    assert_eq!(y.data(), &[0.0]);
}

#[test]
fn forward_shape_mismatch_names_layer() {
    let mut rng = rng_from_seed(1);
    let mut mlp = Mlp::new(&[4, 3], &[Activation::Relu], &mut rng).unwrap();
    let err = mlp.forward(&Tensor::from_rows(&[vec![1.0, 2.0]]).unwrap()).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("layer 0"), "unexpected message: {}", msg);
}

#[test]
fn cross_entropy_uniform_logits() {
    let logits = Tensor::from_rows(&[vec![0.3, 0.3]]).unwrap();
    let (loss, _) = cross_entropy_loss(&logits, &[0]).unwrap();
    assert!((loss - std::f64::consts::LN_2).abs() < 1e-12, "loss {}", loss);
}

#[test]
fn cross_entropy_confident_correct_is_near_zero() {
    let logits = Tensor::from_rows(&[vec![10.0, -10.0]]).unwrap();
    let (loss, _) = cross_entropy_loss(&logits, &[0]).unwrap();
    assert!(loss < 1e-8, "loss {}", loss);
}

#[test]
fn cross_entropy_rejects_out_of_range_label() {
    let logits = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
    assert!(cross_entropy_loss(&logits, &[2]).is_err());
}

#[test]
fn cross_entropy_grad_matches_central_differences() {
    let mut rng = rng_from_seed(7);
    let data: Vec<f64> = (0..12).map(|_| rng.random_range(-2.0..2.0)).collect();
    let logits = Tensor::new(vec![3, 4], data).unwrap();
    let labels = [2usize, 0, 3];
    let (_, analytic) = cross_entropy_loss(&logits, &labels).unwrap();
    let numeric = numeric_grad(
        logits.clone(),
        |t| cross_entropy_loss(t, &labels).unwrap().0,
        1e-6,
    );
    let err = max_rel_err(analytic.data(), &numeric);
    assert!(err <= 1e-5, "rel err {}", err);
}

#[test]
fn mse_zero_distortion_and_simple_value() {
    let a = Tensor::from_rows(&[vec![0.1, 0.9]]).unwrap();
    let (loss, _) = mse_loss(&a, &a).unwrap();
    assert_eq!(loss, 0.0);

    let recon = Tensor::from_rows(&[vec![1.0, 1.0]]).unwrap();
    let target = Tensor::from_rows(&[vec![0.0, 0.0]]).unwrap();
    let (loss, _) = mse_loss(&recon, &target).unwrap();
    assert!((loss - 1.0).abs() < 1e-15);
}

#[test]
fn mse_grad_matches_central_differences() {
    let mut rng = rng_from_seed(8);
    let recon =
        Tensor::new(vec![2, 5], (0..10).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let target =
        Tensor::new(vec![2, 5], (0..10).map(|_| rng.random_range(0.0..1.0)).collect()).unwrap();
    let (_, analytic) = mse_loss(&recon, &target).unwrap();
    let numeric = numeric_grad(recon.clone(), |t| mse_loss(t, &target).unwrap().0, 1e-6);
    let err = max_rel_err(analytic.data(), &numeric);
    assert!(err <= 1e-5, "rel err {}", err);
}

#[test]
fn mse_shape_mismatch_is_error() {
    let a = Tensor::zeros(vec![1, 2]);
    let b = Tensor::zeros(vec![1, 3]);
    assert!(mse_loss(&a, &b).is_err());
}

#[test]
fn backward_identity_net_weight_grad_is_outer_product() {
    let mut mlp = Mlp::from_layers(vec![identity_layer(2)]).unwrap();
    let x = Tensor::from_rows(&[vec![3.0, 5.0]]).unwrap();
    mlp.forward(&x).unwrap();
    let g = Tensor::from_rows(&[vec![0.5, -1.0]]).unwrap();
    mlp.backward(&g).unwrap();
    // dW[o][i] = g[o] · x[i]
    let wgrad = mlp.layers()[0].weights().grad().unwrap();
    assert_eq!(wgrad, &[1.5, 2.5, -3.0, -5.0]);
    let bgrad = mlp.layers()[0].bias().grad().unwrap();
    assert_eq!(bgrad, &[0.5, -1.0]);
}

#[test]
fn backward_zero_out_grad_gives_zero_param_grads() {
    let mut rng = rng_from_seed(3);
    let mut mlp = Mlp::new(&[3, 4, 2], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
    let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
    mlp.forward(&x).unwrap();
    mlp.backward(&Tensor::zeros(vec![1, 2])).unwrap();
    for layer in mlp.layers() {
        assert!(layer.weights().grad().unwrap().iter().all(|&g| g == 0.0));
        assert!(layer.bias().grad().unwrap().iter().all(|&g| g == 0.0));
    }
}

#[test]
fn backward_without_forward_is_state_error() {
    let mut rng = rng_from_seed(4);
    let mut mlp = Mlp::new(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
    let err = mlp.backward(&Tensor::zeros(vec![1, 2])).unwrap_err();
    assert!(matches!(err, crate::error::Error::State(_)));
}

#[test]
fn three_layer_grads_match_finite_differences() {
    let mut rng = rng_from_seed(11);
    let mut mlp = Mlp::new(
        &[5, 6, 4, 3],
        &[Activation::Relu, Activation::Sigmoid, Activation::Identity],
        &mut rng,
    )
    .unwrap();
    let batch = Tensor::new(
        vec![4, 5],
        (0..20).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();
    let labels = vec![0usize, 2, 1, 2];
    let report = finite_diff_check(
        &mut mlp,
        &batch,
        &|out| cross_entropy_loss(out, &labels),
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.within_tol, "max rel err {} at {}", report.max_rel_err, report.worst);
}

#[test]
fn sgd_step_examples() {
    let layer = DenseLayer::from_parts(
        Tensor::new(vec![1, 1], vec![1.0]).unwrap(),
        Tensor::from_vec(vec![0.0]),
        Activation::Identity,
    )
    .unwrap();
    let mut mlp = Mlp::from_layers(vec![layer]).unwrap();
    mlp.layers_mut()[0].weights.set_grad(vec![2.0]).unwrap();
    mlp.layers_mut()[0].bias.set_grad(vec![0.0]).unwrap();
    mlp.sgd_step(0.1).unwrap();
    assert!((mlp.layers()[0].weights().data()[0] - 0.8).abs() < 1e-15);
    // Zero grad leaves the bias untouched.
    assert_eq!(mlp.layers()[0].bias().data()[0], 0.0);
    // Gradients are cleared by the step.
    assert!(mlp.layers()[0].weights().grad().is_none());
}

#[test]
fn sgd_two_steps_minimize_quadratic() {
    // f(θ) = θ², grad 2θ, η = 0.5: 1 → 0 → 0.
    let mut theta = 1.0;
    for _ in 0..2 {
        let grad = 2.0 * theta;
        theta -= 0.5 * grad;
    }
    assert_eq!(theta, 0.0);
}

#[test]
fn finite_diff_check_passes_for_fresh_nets() {
    let mut rng = rng_from_seed(21);
    let batch = Tensor::new(
        vec![3, 4],
        (0..12).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap();

    let mut mlp = Mlp::new(&[4, 5, 3], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();
    let labels = vec![1usize, 0, 2];
    let report = finite_diff_check(
        &mut mlp,
        &batch,
        &|out| cross_entropy_loss(out, &labels),
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.within_tol, "cross-entropy: {}", report.max_rel_err);

    let mut mlp = Mlp::new(&[4, 5, 4], &[Activation::Relu, Activation::Sigmoid], &mut rng).unwrap();
    let target = Tensor::new(
        vec![3, 4],
        (0..12).map(|_| rng.random_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let report = finite_diff_check(
        &mut mlp,
        &batch,
        &|out| mse_loss(out, &target),
        1e-5,
        1e-4,
    )
    .unwrap();
    assert!(report.within_tol, "mse: {}", report.max_rel_err);
}

#[test]
fn finite_diff_check_rejects_bad_step() {
    let mut rng = rng_from_seed(5);
    let mut mlp = Mlp::new(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
    let batch = Tensor::from_rows(&[vec![0.1, 0.2]]).unwrap();
    let err = finite_diff_check(&mut mlp, &batch, &|out| mse_loss(out, &batch), 1e-2, 1e-4);
    assert!(err.is_err());
}

#[test]
fn corrupted_gradients_are_detected() {
    // A deliberately wrong analytic gradient must show up as a large error.
    let analytic = [0.5, -0.25, 1.0];
    let mut corrupted = analytic;
    corrupted[1] += 0.1;
    let err = max_rel_err(&corrupted, &analytic);
    assert!(err > 1e-2, "corruption not detected: {}", err);
}

#[test]
fn init_is_deterministic_per_seed() {
    let dims = [6, 8, 4];
    let acts = [Activation::Relu, Activation::Identity];
    let a = Mlp::new(&dims, &acts, &mut rng_from_seed(33)).unwrap();
    let b = Mlp::new(&dims, &acts, &mut rng_from_seed(33)).unwrap();
    let c = Mlp::new(&dims, &acts, &mut rng_from_seed(34)).unwrap();
    for (la, lb) in a.layers().iter().zip(b.layers()) {
        assert_eq!(la.weights().data(), lb.weights().data());
    }
    assert_ne!(a.layers()[0].weights().data(), c.layers()[0].weights().data());
}

#[test]
fn training_loss_collapses_on_separable_toy_set() {
    // Two linearly separable 2-D blobs.
    let mut rng = rng_from_seed(55);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..40 {
        let cls = i % 2;
        let center = if cls == 0 { -1.0 } else { 1.0 };
        rows.push(vec![
            center + rng.random_range(-0.3..0.3),
            center + rng.random_range(-0.3..0.3),
        ]);
        labels.push(cls);
    }
    let x = Tensor::from_rows(&rows).unwrap();
    let mut mlp = Mlp::new(&[2, 8, 2], &[Activation::Relu, Activation::Identity], &mut rng).unwrap();

    let initial = {
        let out = mlp.predict(&x).unwrap();
        cross_entropy_loss(&out, &labels).unwrap().0
    };
    for _ in 0..50 {
        let out = mlp.forward(&x).unwrap();
        let (_, grad) = cross_entropy_loss(&out, &labels).unwrap();
        mlp.backward(&grad).unwrap();
        mlp.sgd_step(0.1).unwrap();
    }
    let final_loss = {
        let out = mlp.predict(&x).unwrap();
        cross_entropy_loss(&out, &labels).unwrap().0
    };
    assert!(
        final_loss < 0.1 * initial,
        "loss {} did not fall below 10% of initial {}",
        final_loss,
        initial
    );
}

#[test]
fn non_finite_inputs_are_hard_errors() {
    let mut rng = rng_from_seed(6);
    let mut mlp = Mlp::new(&[2, 2], &[Activation::Identity], &mut rng).unwrap();
    let bad = Tensor::from_rows(&[vec![f64::INFINITY, 0.0]]).unwrap();
    assert!(mlp.forward(&bad).is_err());
}

#[test]
fn sgd_config_validates_ranges() {
    assert!(SgdConfig::new(0.05, 16, 50, 1).is_ok());
    assert!(SgdConfig::new(0.0, 16, 50, 1).is_err());
    assert!(SgdConfig::new(-0.1, 16, 50, 1).is_err());
    assert!(SgdConfig::new(0.05, 0, 50, 1).is_err());
    assert!(SgdConfig::new(0.05, 16, 0, 1).is_err());
}
