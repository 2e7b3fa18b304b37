use std::collections::BTreeSet;

use fedhar::dataset::{GestureLabel, WindowId, WindowSample, FRAME_DIM, WINDOW_LEN};
use fedhar::models::{build_model, LstmClassifierConfig, ModelConfig};
use fedhar::training::{epoch_order, train_local, TrainConfig};
use fedhar::Error;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_lstm() -> ModelConfig {
    ModelConfig::Lstm(LstmClassifierConfig {
        hidden: 8,
        layers: 1,
        ..Default::default()
    })
}

/// Windows whose class is encoded in a per-class offset plus noise.
fn labelled_windows(seed: u64, n: usize, label_of: impl Fn(usize) -> usize) -> Vec<WindowSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = label_of(i);
            let coords = (0..WINDOW_LEN * FRAME_DIM)
                .map(|j| 0.1 * c as f64 * ((j % FRAME_DIM) as f64 / FRAME_DIM as f64) + 0.05 * rng.random::<f64>())
                .collect();
            WindowSample::new(
                WindowId {
                    client: "c1".into(),
                    recording: "r1".into(),
                    start_frame: i as u64,
                },
                GestureLabel::from_index(c).unwrap(),
                coords,
            )
            .unwrap()
        })
        .collect()
}

fn config(max_epochs: usize, patience: Option<usize>) -> TrainConfig {
    TrainConfig {
        batch_size: 16,
        lr: 5e-3,
        max_epochs,
        patience,
        seed: 11,
    }
}

#[test]
fn zero_epochs_is_a_no_op() {
    let model = small_lstm();
    let init = build_model(&model, 1).unwrap();
    let train = labelled_windows(1, 20, |i| i % 8);
    let out = train_local(&model, init.clone(), &train, &[], &config(0, None)).unwrap();
    assert!(out.final_params.bit_identical(&init));
    assert!(out.best_params.bit_identical(&init));
    assert!(out.trace.epochs.is_empty());
    assert_eq!(out.trace.best_epoch, None);
}

#[test]
fn patience_one_stops_after_first_worse_epoch() {
    // Training never sees the validation class, so every epoch pushes its
    // probability down and validation loss up.
    let model = small_lstm();
    let init = build_model(&model, 2).unwrap();
    let train = labelled_windows(2, 63, |i| i % 7);
    let val = labelled_windows(3, 16, |_| 7);
    let out = train_local(&model, init, &train, &val, &config(50, Some(1))).unwrap();
    let e = &out.trace.epochs;
    assert_eq!(e.len(), 2, "{:?}", out.trace);
    assert!(e[1].val_loss.unwrap() > e[0].val_loss.unwrap());
    assert_eq!(out.trace.best_epoch, Some(1));
    assert!(out.trace.stopped_early);
}

#[test]
fn same_seed_gives_identical_trace_and_weights() {
    let model = small_lstm();
    let train = labelled_windows(3, 40, |i| i % 8);
    let val = labelled_windows(4, 16, |i| i % 8);
    let run = || {
        let init = build_model(&model, 3).unwrap();
        train_local(&model, init, &train, &val, &config(4, Some(3))).unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.trace, b.trace);
    assert_eq!(serde_json::to_string(&a.trace).unwrap(), serde_json::to_string(&b.trace).unwrap());
    assert!(a.final_params.bit_identical(&b.final_params));
    assert!(a.best_params.bit_identical(&b.best_params));
}

#[test]
fn without_early_stopping_all_epochs_run_and_best_is_no_worse() {
    let model = small_lstm();
    let train = labelled_windows(5, 40, |i| i % 8);
    let val = labelled_windows(6, 16, |i| i % 8);
    let init = build_model(&model, 5).unwrap();
    let out = train_local(&model, init, &train, &val, &config(6, None)).unwrap();
    let t = &out.trace;
    assert_eq!(t.epochs.len(), 6);
    assert!(!t.stopped_early);
    assert!(t.epochs.iter().enumerate().all(|(i, e)| e.epoch == i + 1));
    let min = t.epochs.iter().map(|e| e.val_loss.unwrap()).fold(f64::INFINITY, f64::min);
    let best = t.best_epoch.unwrap();
    assert_eq!(t.epochs[best - 1].val_loss.unwrap(), min);
    assert!(min <= t.epochs.last().unwrap().val_loss.unwrap());
    assert!(t.to_csv().starts_with("epoch,train_loss,val_loss,val_acc\n"));
    assert_eq!(t.to_csv().lines().count(), 7);
}

#[test]
fn early_stopping_bounds_epoch_count() {
    let model = small_lstm();
    let train = labelled_windows(7, 24, |i| i % 8);
    let val = labelled_windows(8, 8, |i| (i + 3) % 8);
    let init = build_model(&model, 7).unwrap();
    let out = train_local(&model, init, &train, &val, &config(30, Some(2))).unwrap();
    assert!(out.trace.epochs.len() <= 30);
    if out.trace.stopped_early {
        assert_eq!(out.trace.epochs.len(), out.trace.best_epoch.unwrap() + 2);
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let model = small_lstm();
    let init = build_model(&model, 0).unwrap();
    let train = labelled_windows(9, 8, |i| i % 8);
    let err = train_local(&model, init.clone(), &[], &train, &config(1, None)).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let err = train_local(&model, init.clone(), &train, &[], &config(1, Some(3))).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let mut bad = config(1, None);
    bad.batch_size = 0;
    assert!(matches!(train_local(&model, init.clone(), &train, &[], &bad), Err(Error::Config(_))));
    let bad = config(1, Some(0));
    assert!(matches!(train_local(&model, init, &train, &train, &bad), Err(Error::Config(_))));
}

#[test]
fn non_finite_inputs_report_epoch_and_batch() {
    let model = small_lstm();
    let init = build_model(&model, 0).unwrap();
    let mut train = labelled_windows(10, 20, |i| i % 8);
    train[0].coords[0] = f64::NAN;
    let err = train_local(&model, init, &train, &[], &config(2, None)).unwrap_err();
    match err {
        Error::NumericHealth(m) => assert!(m.starts_with("epoch 1, batch "), "{m}"),
        other => panic!("unexpected {other}"),
    }
}

proptest! {
    #[test]
    fn epoch_order_is_a_permutation(n in 0usize..300, seed: u64, epoch in 1usize..1000) {
        let order = epoch_order(n, seed, epoch);
        prop_assert_eq!(order.len(), n);
        let set: BTreeSet<usize> = order.iter().copied().collect();
        prop_assert_eq!(set, (0..n).collect::<BTreeSet<_>>());
        prop_assert_eq!(order, epoch_order(n, seed, epoch));
    }
}
