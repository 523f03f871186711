use tensoreg::losses::Loss;
use tensoreg::network::{train_with, Layer, LayerSpec, NetworkConfig, NetworkState, StopReason};
use tensoreg::ols::build_problem;
use tensoreg::optim::{Initializer, Optimizer, OptimizerState, SeededRng};
use tensoreg::{gradcheck, Activation, Matrix};

fn random_matrix(rng: &mut SeededRng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap()
}

#[test]
fn gd_converges_on_a_quadratic() {
    let target = Matrix::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
    let mut theta = Matrix::zeros(2, 2);
    let mut state = OptimizerState::for_block(&theta);
    let opt = Optimizer::Gd { gamma: 0.1 };
    for _ in 0..200 {
        let grad = theta.sub(&target).unwrap();
        opt.step(&mut state, &mut theta, &grad).unwrap();
    }
    assert!(theta.sub(&target).unwrap().frobenius_norm() < 1e-8);
    assert_eq!(state.step, 200);
}

#[test]
fn every_optimizer_descends_a_quadratic() {
    for name in Optimizer::NAMES {
        let opt = Optimizer::from_name(name, Some(0.05)).unwrap();
        let target = Matrix::new(1, 3, vec![0.3, -0.7, 0.1]).unwrap();
        let mut theta = Matrix::zeros(1, 3);
        let mut state = OptimizerState::for_block(&theta);
        let start = theta.sub(&target).unwrap().frobenius_norm();
        for _ in 0..500 {
            let grad = theta.sub(&target).unwrap();
            opt.step(&mut state, &mut theta, &grad).unwrap();
        }
        let end = theta.sub(&target).unwrap().frobenius_norm();
        assert!(end < 0.1 * start, "{name}: {start} -> {end}");
    }
}

#[test]
fn adam_first_step_is_bounded_by_the_rate() {
    let gamma = 0.01;
    let opt = Optimizer::adam(gamma);
    let mut theta = Matrix::zeros(1, 4);
    let mut state = OptimizerState::for_block(&theta);
    let grad = Matrix::new(1, 4, vec![1e-3, -5.0, 200.0, 0.2]).unwrap();
    opt.step(&mut state, &mut theta, &grad).unwrap();
    for (t, g) in theta.as_slice().iter().zip(grad.as_slice()) {
        assert!(t.abs() <= gamma * (1.0 + 1e-6));
        assert_eq!(t.signum(), -g.signum());
    }
    assert_eq!(state.step, 1);
}

#[test]
fn optimizer_rejects_non_finite_gradients() {
    let mut theta = Matrix::zeros(1, 2);
    let mut state = OptimizerState::for_block(&theta);
    let grad = Matrix::new(1, 2, vec![f64::NAN, 0.0]).unwrap();
    assert!(Optimizer::adam(0.1).step(&mut state, &mut theta, &grad).is_err());
}

#[test]
fn backprop_matches_finite_differences() {
    let summary = gradcheck::run_suite(77, 20).unwrap();
    assert!(summary.passed(), "{summary:?}");
}

#[test]
fn single_identity_layer_reproduces_the_least_squares_gradient() {
    let mut rng = SeededRng::new(31);
    let (n, m, p) = (3, 2, 9);
    let w = random_matrix(&mut rng, m, n);
    let b = random_matrix(&mut rng, m, 1);
    let features = random_matrix(&mut rng, n, p);
    let targets = random_matrix(&mut rng, m, p);
    let state = NetworkState::from_layers(n, vec![Layer::new(w.clone(), b.clone(), Activation::Identity).unwrap()]).unwrap();
    let cache = state.forward(&features).unwrap();
    let grads = state.backward(&cache, &targets, Loss::Mse).unwrap();

    // ψ(B) = (1/(p·m))‖Y − B·Xᵀ‖² with B = [W | b], so ∇ψ = (2/(p·m))(BZ − YX)
    let rows_x: Vec<Vec<f64>> = (0..p).map(|j| features.column(j)).collect();
    let rows_y: Vec<Vec<f64>> = (0..p).map(|j| targets.column(j)).collect();
    let problem = build_problem(&rows_x, &rows_y).unwrap();
    let mut stacked = Vec::new();
    for i in 0..m {
        stacked.extend_from_slice(w.row(i));
        stacked.push(b[(i, 0)]);
    }
    let big_b = Matrix::new(m, n + 1, stacked).unwrap();
    let expected = big_b
        .matmul(&problem.gram())
        .unwrap()
        .sub(&problem.target_moment())
        .unwrap()
        .scale(2.0 / (p * m) as f64);
    for i in 0..m {
        for j in 0..n {
            assert!((grads[0].weights[(i, j)] - expected[(i, j)]).abs() < 1e-13);
        }
        assert!((grads[0].biases[(i, 0)] - expected[(i, n)]).abs() < 1e-13);
    }
}

#[test]
fn training_preserves_layer_shapes_and_records_losses() {
    let mut rng = SeededRng::new(4);
    let config = NetworkConfig {
        layers: vec![
            LayerSpec::new(5, Activation::leaky_relu()),
            LayerSpec::new(3, Activation::Softmax),
        ],
        loss: Loss::Mse,
        optimizer: Optimizer::from_name("nesterov", None).unwrap(),
        initializer: Initializer::KaimingUniform,
        max_epochs: 25,
        tolerance: 1e-15,
        seed: 4,
    };
    let (tx, ty, vx, vy) = (
        random_matrix(&mut rng, 2, 10),
        random_matrix(&mut rng, 3, 10),
        random_matrix(&mut rng, 2, 4),
        random_matrix(&mut rng, 3, 4),
    );
    let state = NetworkState::init(&config, 2).unwrap();
    let shapes: Vec<_> = state.layers().iter().map(|l| (l.weights.shape(), l.biases.shape())).collect();
    let mut seen = 0;
    let (trained, report) = train_with(state, &tx, &ty, &vx, &vy, &config, |_| seen += 1).unwrap();
    let after: Vec<_> = trained.layers().iter().map(|l| (l.weights.shape(), l.biases.shape())).collect();
    assert_eq!(shapes, after);
    assert_eq!(report.epoch_losses.len(), report.epochs_run);
    assert_eq!(seen, report.epochs_run);
    if report.stop_reason == StopReason::MaxEpochs {
        assert_eq!(report.epochs_run, 25);
    }
    let out = trained.predict(&vx).unwrap();
    for j in 0..out.cols() {
        assert!((out.column(j).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn same_seed_same_network() {
    let config = NetworkConfig {
        layers: vec![LayerSpec::new(4, Activation::Swish), LayerSpec::new(1, Activation::Identity)],
        loss: Loss::Mse,
        optimizer: Optimizer::adam(0.01),
        initializer: Initializer::KaimingNormal,
        max_epochs: 10,
        tolerance: 1e-12,
        seed: 12,
    };
    let a = NetworkState::init(&config, 3).unwrap();
    let b = NetworkState::init(&config, 3).unwrap();
    assert_eq!(a, b);
    let c = NetworkState::init(&NetworkConfig { seed: 13, ..config }, 3).unwrap();
    assert_ne!(a, c);
}
