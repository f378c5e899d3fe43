use dwa_core::nn::{ConvGeometry, ConvMode, ModelGeometry, ModelState, ParamGroup};
use dwa_core::rng::Rng;
use dwa_core::verify::{finite_diff_check, finite_diff_check_with, GradCheckOptions};
use ndarray::Array2;
use rand::Rng as _;

fn reduced(mode: ConvMode) -> ModelGeometry {
    ModelGeometry {
        input_len: 16,
        input_dim: 2,
        conv1: ConvGeometry {
            filters: 4,
            width: 4,
            stride: 2,
        },
        conv2: ConvGeometry {
            filters: 4,
            width: 4,
            stride: 2,
        },
        fc1: 16,
        fc2: 8,
        classes: 3,
        mode,
    }
}

fn batch(seed: u64) -> (Vec<Array2<f64>>, Vec<usize>) {
    let mut rng = Rng::aux(seed, 40);
    let xs = (0..4)
        .map(|_| Array2::from_shape_simple_fn((16, 2), || rng.random_range(-1.0..1.0)))
        .collect();
    (xs, vec![0, 1, 2, 1])
}

fn check(mode: ConvMode, seed: u64) -> f64 {
    let model = ModelState::init(reduced(mode), seed).unwrap();
    let (xs, labels) = batch(seed);
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let report = finite_diff_check(&model, &views, &labels, &GradCheckOptions::default()).unwrap();
    assert!(report.passed, "{mode} seed {seed}\n{}", report.to_tsv());
    report.max_relative()
}

#[test]
fn linear_gradients_match_central_differences() {
    for seed in 0..50 {
        check(ConvMode::Linear, seed);
    }
}

#[test]
fn frozen_dwa_gradients_match_central_differences() {
    for seed in 0..50 {
        check(ConvMode::Dwa, seed);
    }
}

#[test]
fn every_group_is_checked() {
    let model = ModelState::init(reduced(ConvMode::Dwa), 1).unwrap();
    let (xs, labels) = batch(1);
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let report = finite_diff_check(&model, &views, &labels, &GradCheckOptions::default()).unwrap();
    let groups: Vec<ParamGroup> = report.groups.iter().map(|g| g.group).collect();
    assert_eq!(groups, ParamGroup::ALL.to_vec());
    let total: usize = report.groups.iter().map(|g| g.parameters).sum();
    assert_eq!(total, model.parameter_count());
}

#[test]
fn corrupted_gradients_are_caught() {
    let model = ModelState::init(reduced(ConvMode::Dwa), 2).unwrap();
    let (xs, labels) = batch(2);
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let opts = GradCheckOptions::default();
    for group in [ParamGroup::Conv1Weights, ParamGroup::Fc1Weights, ParamGroup::Bn2Gamma] {
        let report = finite_diff_check_with(&model, &views, &labels, &opts, |g| {
            for v in g.group_mut(group) {
                *v *= 1.01;
            }
        })
        .unwrap();
        assert!(!report.passed, "scaling {} by 1.01 went unnoticed", group.name());
        let bad = report.groups.iter().find(|g| g.group == group).unwrap();
        assert!(bad.max_relative > opts.threshold);
    }
}

#[test]
fn step_outside_range_is_rejected() {
    let model = ModelState::init(reduced(ConvMode::Linear), 0).unwrap();
    let (xs, labels) = batch(0);
    let views: Vec<_> = xs.iter().map(|x| x.view()).collect();
    let opts = GradCheckOptions {
        h: 1e-2,
        ..GradCheckOptions::default()
    };
    assert!(finite_diff_check(&model, &views, &labels, &opts).is_err());
}
