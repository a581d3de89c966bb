//! Forced-positive and forced-negative fixtures for every detector, plus the
//! trend-window contract.

use nndiag_core::detectors::*;
use nndiag_core::nn::{
    Activation, LayerSpec, Loss, Model, ModelSpec, Optimizer, OptimizerKind, RunRngs,
    Task,
};
use nndiag_core::{Dataset, Rng, Tensor};
use proptest::prelude::*;

fn cfg() -> MonitorConfig {
    MonitorConfig::default()
}

fn row(values: &[f64]) -> Tensor {
    Tensor::new(1, values.len(), values.to_vec()).unwrap()
}

// ---- S1 ---------------------------------------------------------------------

#[test]
fn s1_exploding_tensor() {
    assert!(!exploding_tensor(&row(&[0.5, -2.0, 3.0])));
    assert!(exploding_tensor(&row(&[0.5, f64::INFINITY])));
    assert!(exploding_tensor(&row(&[f64::NAN, 1.0])));
    assert!(exploding_tensor(&Tensor::zeros(3, 4)));
    // a single non-zero element is enough to escape the zero rule
    assert!(!exploding_tensor(&row(&[0.0, 0.0, 1e-300])));
}

#[test]
fn s1_one_unit_softmax_gradient_is_all_zero() {
    let spec = ModelSpec {
        layers: vec![
            LayerSpec::dense_in(3, 4),
            LayerSpec::activation(Activation::Relu),
            LayerSpec::dense(1),
            LayerSpec::activation(Activation::Softmax),
        ],
        loss: Loss::BinaryCrossentropy,
        optimizer: OptimizerKind::Rmsprop,
        learning_rate: 0.001,
        batch_size: 4,
        epochs: 1,
        seed: 0,
        task: Task::Classification,
        clip_probabilities: true,
        shuffle: false,
    };
    let mut rng = Rng::seeded(3);
    let model = Model::build(&spec, &mut rng).unwrap();
    let x = Tensor::new(4, 3, (0..12).map(|i| i as f64 / 12.0 - 0.4).collect()).unwrap();
    let y = Tensor::new(4, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
    let mut pass = model.forward(&x, nndiag_core::nn::Mode::Train, &mut rng).unwrap();
    model.backward(&mut pass, &y).unwrap();
    let dw = pass.traces[2].dw.as_ref().unwrap();
    assert!(dw.all_zero());
    assert!(exploding_tensor(dw));
}

// ---- S2 ---------------------------------------------------------------------

#[test]
fn s2_constant_tensor_fires_at_step_six() {
    let mut w = Window::new(5);
    let t = Tensor::filled(2, 2, 0.3);
    let fired: Vec<bool> = (0..6).map(|_| unchanged_weight(&t, &mut w, &cfg())).collect();
    assert_eq!(fired, vec![false, false, false, false, false, true]);
}

#[test]
fn s2_increasing_mean_never_fires() {
    let mut w = Window::new(5);
    for step in 0..30 {
        let t = Tensor::filled(2, 2, step as f64);
        assert!(!unchanged_weight(&t, &mut w, &cfg()));
    }
}

#[test]
fn s2_tolerance_is_relative_above_one() {
    let c = cfg();
    let mut w = Window::new(2);
    unchanged_weight(&row(&[1000.0]), &mut w, &c);
    unchanged_weight(&row(&[1000.0]), &mut w, &c);
    // 1e-4 change on a value of 1000 is inside 1e-6 * 1000
    assert!(unchanged_weight(&row(&[1000.0001]), &mut w, &c));
    let mut w = Window::new(2);
    unchanged_weight(&row(&[1.0]), &mut w, &c);
    unchanged_weight(&row(&[1.0]), &mut w, &c);
    assert!(!unchanged_weight(&row(&[1.00001]), &mut w, &c));
}

#[test]
fn s2_weights_under_zero_learning_rate_sgd() {
    let spec = ModelSpec {
        layers: vec![LayerSpec::dense_in(2, 3), LayerSpec::activation(Activation::Tanh)],
        loss: Loss::Mse,
        optimizer: OptimizerKind::Sgd,
        learning_rate: 0.1,
        batch_size: 4,
        epochs: 10,
        seed: 1,
        task: Task::Regression,
        clip_probabilities: false,
        shuffle: false,
    };
    let x = Tensor::new(4, 2, vec![0.1, 0.2, -0.3, 0.4, 0.5, -0.6, 0.7, 0.8]).unwrap();
    let y = Tensor::new(4, 3, vec![0.5; 12]).unwrap();
    let data = Dataset::new(x, y).unwrap();
    let mut rngs = RunRngs::from_seed(1);
    let mut model = Model::build(&spec, &mut rngs.init).unwrap();
    let before = model.params(0).unwrap().clone();
    let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.0);
    let mut window = Window::new(5);
    let mut fired = Vec::new();
    for _ in 0..10 {
        let mut pass = model.forward(&data.x, nndiag_core::nn::Mode::Train, &mut rngs.dropout).unwrap();
        model.backward(&mut pass, &data.y).unwrap();
        opt.step(&mut model, &pass);
        fired.push(unchanged_weight(model.params(0).unwrap(), &mut window, &cfg()));
    }
    assert!(fired[5]);
    assert!(fired[..5].iter().all(|f| !f));
    assert_eq!(model.params(0).unwrap(), &before);
}

// ---- S3 ---------------------------------------------------------------------

#[test]
fn s3_saturation() {
    let c = cfg();
    assert!(saturated_activation(&Tensor::filled(2, 3, 10.0), Some(Activation::Sigmoid), &c));
    assert!(!saturated_activation(&Tensor::zeros(2, 3), Some(Activation::Sigmoid), &c));
    // exactly half saturated: ratio 0.5 is not greater than 0.5
    let half = row(&[6.0, 6.0, 0.0, 0.0]);
    assert!(!saturated_activation(&half, Some(Activation::Sigmoid), &c));
    assert!(!saturated_activation(&half, Some(Activation::Tanh), &c));
    let more = row(&[6.0, 6.0, -6.0, 0.0]);
    assert!(saturated_activation(&more, Some(Activation::Tanh), &c));
    // bounds are inclusive
    assert!(saturated_activation(&row(&[5.0, -5.0, 0.0]), Some(Activation::Sigmoid), &c));
    assert!(!saturated_activation(&Tensor::filled(2, 3, 10.0), Some(Activation::Relu), &c));
}

// ---- S4 ---------------------------------------------------------------------

#[test]
fn s4_dead_nodes() {
    let c = cfg();
    let relu = Some(Activation::Relu);
    assert!(dead_node(&Tensor::zeros(2, 5), relu, &c));
    assert!(!dead_node(&Tensor::filled(2, 5, 0.1), relu, &c));
    let mut seven = vec![0.0; 7];
    seven.extend([1.0, 2.0, 3.0]);
    assert!(!dead_node(&row(&seven), relu, &c));
    let mut eight = vec![0.0; 8];
    eight.extend([1.0, 2.0]);
    assert!(dead_node(&row(&eight), relu, &c));
    assert!(!dead_node(&Tensor::zeros(2, 5), Some(Activation::Linear), &c));
}

// ---- S5 ---------------------------------------------------------------------

#[test]
fn s5_out_of_range() {
    let y = Tensor::new(4, 1, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
    let sig = Tensor::new(4, 1, vec![0.1, 0.9, 0.7, 0.2]).unwrap();
    assert!(!out_of_range(&sig, &y));
    let linear = Tensor::new(4, 1, vec![0.1, 5.3, 0.7, 0.2]).unwrap();
    assert!(out_of_range(&linear, &y));
    let tanh = Tensor::new(4, 1, vec![-0.2, 0.9, 0.7, 0.2]).unwrap();
    assert!(out_of_range(&tanh, &y));
    // touching the label bounds is still inside
    assert!(!out_of_range(&y, &y));
}

// ---- S6 / S7 ----------------------------------------------------------------

#[test]
fn s6_loss_trend() {
    let mut w = Window::new(5);
    let fired: Vec<bool> = (0..10).map(|_| loss_not_decreasing(0.7, &mut w)).collect();
    assert!(fired[5]);
    assert!(fired.iter().any(|&f| f));

    let mut w = Window::new(5);
    let mut loss = 1.0;
    for _ in 0..40 {
        assert!(!loss_not_decreasing(loss, &mut w));
        loss /= 2.0;
    }

    let mut w = Window::new(5);
    let seq = [0.5, 0.9, 0.5, 0.9, 0.5, 0.9];
    let fired: Vec<bool> = seq.iter().map(|&l| loss_not_decreasing(l, &mut w)).collect();
    assert_eq!(fired, vec![false, false, false, false, false, true]);
}

#[test]
fn s7_accuracy_trend() {
    let mut w = Window::new(5);
    let fired: Vec<bool> = (0..6).map(|_| accuracy_not_increasing(0.5, &mut w)).collect();
    assert_eq!(fired.last(), Some(&true));

    let mut w = Window::new(5);
    for i in 0..40 {
        assert!(!accuracy_not_increasing(0.1 + i as f64 * 0.01, &mut w));
    }

    let mut w = Window::new(5);
    let fired: Vec<bool> = (0..6)
        .map(|i| accuracy_not_increasing(0.9 - i as f64 * 0.08, &mut w))
        .collect();
    assert_eq!(fired.last(), Some(&true));
}

// ---- S8 ---------------------------------------------------------------------

#[test]
fn s8_vanishing_gradient() {
    let c = cfg();
    assert!(vanishing_gradient(&Tensor::filled(3, 3, 1e-9), &c));
    assert!(!vanishing_gradient(&Tensor::filled(3, 3, 1e-3), &c));
    // the threshold itself does not "drop below"
    assert!(!vanishing_gradient(&Tensor::filled(1, 1, 1e-7), &c));
    assert!(vanishing_gradient(&Tensor::filled(1, 2, -1e-8), &c));
}

// ---- window semantics -------------------------------------------------------

proptest! {
    #[test]
    fn windowed_rules_never_fire_before_step_six(
        stream in prop::collection::vec(-1e3f64..1e3, 1..=5),
    ) {
        let c = cfg();
        let (mut ws, mut wl, mut wa) = (Window::new(5), Window::new(5), Window::new(5));
        for v in stream {
            prop_assert!(!unchanged_weight(&row(&[v]), &mut ws, &c));
            prop_assert!(!loss_not_decreasing(v, &mut wl));
            prop_assert!(!accuracy_not_increasing(v, &mut wa));
        }
    }

    #[test]
    fn constant_streams_fire_at_first_evaluation(v in -1e3f64..1e3) {
        let c = cfg();
        let (mut ws, mut wl, mut wa) = (Window::new(5), Window::new(5), Window::new(5));
        for step in 1..=6 {
            let s = unchanged_weight(&row(&[v]), &mut ws, &c);
            let l = loss_not_decreasing(v, &mut wl);
            let a = accuracy_not_increasing(v, &mut wa);
            prop_assert_eq!(s, step == 6);
            prop_assert_eq!(l, step == 6);
            prop_assert_eq!(a, step == 6);
        }
    }

    #[test]
    fn window_never_exceeds_capacity(n in 2usize..9, len in 0usize..60) {
        let mut w = Window::new(n);
        for i in 0..len {
            let eval = w.observe(i as f64).is_some();
            prop_assert!(w.len() <= n);
            // evaluations at steps n+1, 2n+1, ...
            prop_assert_eq!(eval, i >= n && i % n == 0);
        }
    }

    #[test]
    fn detectors_are_permutation_invariant(
        mut values in prop::collection::vec(-10f64..10.0, 1..40),
        seed in any::<u64>(),
    ) {
        let c = cfg();
        let before = (
            saturated_activation(&row(&values), Some(Activation::Sigmoid), &c),
            dead_node(&row(&values), Some(Activation::Relu), &c),
        );
        Rng::seeded(seed).shuffle(&mut values);
        let after = (
            saturated_activation(&row(&values), Some(Activation::Sigmoid), &c),
            dead_node(&row(&values), Some(Activation::Relu), &c),
        );
        prop_assert_eq!(before, after);
    }
}

#[test]
fn history_keys_are_independent() {
    use nndiag_core::Quantity;
    let mut h = History::new(2);
    h.window(Some(1), Quantity::V1).observe(1.0);
    h.window(Some(1), Quantity::V1).observe(1.0);
    assert!(h.window(Some(2), Quantity::V1).is_empty());
    assert!(h.window(None, Quantity::LOSS).is_empty());
    assert_eq!(h.window(Some(1), Quantity::V1).observe(5.0), Some(1.0));
}
