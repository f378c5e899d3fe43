use dwa_core::data::{synth_part, SynthSpec};
use dwa_core::nn::{ConvGeometry, ConvMode, ModelGeometry, ModelState, PassOptions};
use dwa_core::rng::Rng;
use dwa_core::series::{Dataset, Series};
use dwa_core::train::{decode_checkpoint, encode_checkpoint, evaluate, sgd_step, train_loop, Checkpoint, TrainConfig};
use ndarray::{Array2, ArrayView2};
use rand::Rng as _;

fn small(mode: ConvMode, len: usize, dim: usize, classes: usize) -> ModelGeometry {
    ModelGeometry {
        input_len: len,
        input_dim: dim,
        conv1: ConvGeometry {
            filters: 6,
            width: 4,
            stride: 2,
        },
        conv2: ConvGeometry {
            filters: 6,
            width: 4,
            stride: 2,
        },
        fc1: 16,
        fc2: 8,
        classes,
        mode,
    }
}

fn warped(seed: u64, per_class: usize, part: u64) -> Dataset {
    let spec = SynthSpec {
        classes: 3,
        samples_per_class: per_class,
        length: 24,
        dim: 2,
        warp: 2.0,
        noise: 0.05,
        seed,
    };
    synth_part(&spec, part).unwrap()
}

/// Two classes separated by the sign of a constant offset.
fn separable(seed: u64, n: usize) -> Dataset {
    let mut rng = Rng::aux(seed, 50);
    let items = (0..n)
        .map(|i| {
            let label = i % 2;
            let shift = if label == 0 { 1.0 } else { -1.0 };
            let v = Array2::from_shape_simple_fn((16, 1), || shift + rng.random_range(-0.3..0.3));
            Series::labeled(v, label).unwrap()
        })
        .collect();
    Dataset::new(items, 2).unwrap()
}

fn views(data: &Dataset) -> (Vec<ArrayView2<'_, f64>>, Vec<usize>) {
    (data.items().iter().map(|s| s.values()).collect(), data.labels())
}

fn config(mode: ConvMode, seed: u64, iterations: usize, geometry: ModelGeometry) -> TrainConfig {
    TrainConfig {
        lr_conv: 0.01,
        lr_decay: 0.001,
        lr_dense: 0.01,
        batch_size: 10,
        iterations,
        eval_every: iterations / 2,
        seed,
        geometry: ModelGeometry { mode, ..geometry },
        parallel: false,
        record_time: false,
        final_eval_f32: true,
    }
}

#[test]
fn one_step_lowers_the_batch_loss() {
    let data = warped(3, 8, 0);
    let (xs, labels) = views(&data);
    for mode in [ConvMode::Dwa, ConvMode::Linear] {
        let cfg = config(mode, 3, 1, small(mode, 24, 2, 3));
        let mut model = ModelState::init(cfg.geometry.clone(), 3).unwrap();
        let trace = model.forward(&xs, PassOptions::train()).unwrap();
        let (before, grads) = model.backward(&trace, &labels).unwrap();
        sgd_step(&mut model, &grads, 0, &cfg).unwrap();
        let after = model.loss(&xs, &labels, PassOptions::train()).unwrap();
        assert!(after < before.loss, "{mode}: {} -> {after}", before.loss);
    }
}

#[test]
fn training_loss_falls_on_average_over_twenty_runs() {
    let mut first = 0.0;
    let mut last = 0.0;
    for seed in 0..20 {
        let data = separable(seed, 20);
        let cfg = TrainConfig {
            eval_every: 1,
            ..config(ConvMode::Dwa, seed, 30, small(ConvMode::Dwa, 16, 1, 2))
        };
        let out = train_loop(&cfg, &data, None, &data, |_| Ok(())).unwrap();
        first += out.log.rows[0].train_loss;
        last += out.log.last().unwrap().train_loss;
    }
    assert!(last < first, "mean loss {} -> {}", first / 20.0, last / 20.0);
}

#[test]
fn five_samples_are_memorised() {
    let items = warped(11, 2, 0).into_items().into_iter().take(5).collect();
    let data = Dataset::new(items, 3).unwrap();
    let cfg = TrainConfig {
        batch_size: 5,
        lr_conv: 0.05,
        lr_dense: 0.05,
        ..config(ConvMode::Dwa, 11, 300, small(ConvMode::Dwa, 24, 2, 3))
    };
    let out = train_loop(&cfg, &data, None, &data, |_| Ok(())).unwrap();
    assert_eq!(evaluate(&out.model, &data, false).unwrap().accuracy, 1.0);
}

#[test]
fn serial_runs_are_reproducible_and_parallel_agrees() {
    let train = warped(5, 10, 0);
    let test = warped(5, 5, 1);
    let cfg = config(ConvMode::Dwa, 5, 40, small(ConvMode::Dwa, 24, 2, 3));
    let run = |cfg: &TrainConfig| {
        let mut rows = Vec::new();
        let out = train_loop(cfg, &train, Some(&test), &test, |r| {
            rows.push(r.to_csv());
            Ok(())
        })
        .unwrap();
        let ckpt = Checkpoint {
            model: out.model,
            iteration: out.iterations as u64,
            rng: out.rng,
        };
        (out.log.to_csv(), rows, encode_checkpoint(&ckpt))
    };
    let a = run(&cfg);
    assert_eq!(a, run(&cfg));
    assert_eq!(
        a,
        run(&TrainConfig {
            parallel: true,
            ..cfg.clone()
        })
    );
    assert_ne!(a.2, run(&TrainConfig { seed: 6, ..cfg }).2);
}

#[test]
fn metrics_rows_follow_the_evaluation_schedule() {
    let train = warped(2, 6, 0);
    let cfg = TrainConfig {
        eval_every: 7,
        ..config(ConvMode::Linear, 2, 20, small(ConvMode::Linear, 24, 2, 3))
    };
    let out = train_loop(&cfg, &train, None, &train, |_| Ok(())).unwrap();
    let its: Vec<usize> = out.log.rows.iter().map(|r| r.iteration).collect();
    assert_eq!(its, vec![7, 14, 20]);
    assert!(out.log.rows.iter().all(|r| r.val_acc.is_none() && r.seconds.is_none()));
}

#[test]
fn last_row_scores_the_checkpointed_model() {
    let train = warped(8, 10, 0);
    let test = warped(8, 10, 1);
    let cfg = config(ConvMode::Dwa, 8, 30, small(ConvMode::Dwa, 24, 2, 3));
    let out = train_loop(&cfg, &train, None, &test, |_| Ok(())).unwrap();
    let ckpt = Checkpoint {
        model: out.model,
        iteration: 30,
        rng: out.rng,
    };
    let restored = decode_checkpoint(&encode_checkpoint(&ckpt)).unwrap().model;
    assert_eq!(
        evaluate(&restored, &test, false).unwrap().accuracy,
        out.log.last().unwrap().test_acc
    );
}

#[test]
fn wrong_length_or_missing_class_is_rejected() {
    let train = warped(2, 6, 0);
    let cfg = config(ConvMode::Dwa, 2, 10, small(ConvMode::Dwa, 30, 2, 3));
    assert!(train_loop(&cfg, &train, None, &train, |_| Ok(())).is_err());
    let two = Dataset::new(train.items()[..6].to_vec(), 3).unwrap();
    let cfg = config(ConvMode::Dwa, 2, 10, small(ConvMode::Dwa, 24, 2, 3));
    assert!(train_loop(&cfg, &two, None, &train, |_| Ok(())).is_err());
}
