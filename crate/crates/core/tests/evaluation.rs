mod common;

use fedhar::dataset::{ClientDataset, GestureLabel, WindowId, WindowSample, FRAME_DIM, NUM_CLASSES, WINDOW_LEN};
use fedhar::evaluation::plots::render_plots;
use fedhar::evaluation::report::AccuracySummary;
use fedhar::evaluation::{
    check_disjoint, compile_global_test, cross_client_eval, evaluate, evaluate_detailed, external_client_eval,
    ConfusionMatrix, ExperimentReport,
};
use fedhar::experiment::{run_experiment, ExperimentConfig, Paradigm};
use fedhar::models::{Classifier, ModelKind};
use fedhar::nn::Tensor;
use fedhar::{Error, Result};
use proptest::prelude::*;

fn window(client: &str, start: u64, label: usize) -> WindowSample {
    WindowSample::new(
        WindowId {
            client: client.into(),
            recording: "r1".into(),
            start_frame: start,
        },
        GestureLabel::from_index(label).unwrap(),
        vec![label as f64; WINDOW_LEN * FRAME_DIM],
    )
    .unwrap()
}

/// `per_class` windows of every class.
fn balanced(client: &str, per_class: usize) -> Vec<WindowSample> {
    (0..per_class * NUM_CLASSES)
        .map(|i| window(client, i as u64, i % NUM_CLASSES))
        .collect()
}

/// Reads the label back out of the window encoding.
struct Perfect;

impl Classifier for Perfect {
    fn logits(&self, windows: &[&WindowSample]) -> Result<Tensor> {
        let mut t = Tensor::zeros(&[windows.len(), NUM_CLASSES]);
        for (i, w) in windows.iter().enumerate() {
            t.row_mut(i)[w.coords[0] as usize] = 5.0;
        }
        Ok(t)
    }
}

struct Constant(usize);

impl Classifier for Constant {
    fn logits(&self, windows: &[&WindowSample]) -> Result<Tensor> {
        let mut t = Tensor::zeros(&[windows.len(), NUM_CLASSES]);
        for i in 0..windows.len() {
            t.row_mut(i)[self.0] = 1.0;
        }
        Ok(t)
    }
}

/// Deterministic pseudo-random logits keyed on the window identity, so the
/// prediction of a window does not depend on its position.
struct Hashed(u64);

impl Classifier for Hashed {
    fn logits(&self, windows: &[&WindowSample]) -> Result<Tensor> {
        let mut t = Tensor::zeros(&[windows.len(), NUM_CLASSES]);
        for (i, w) in windows.iter().enumerate() {
            for c in 0..NUM_CLASSES {
                let h = fedhar::seed::derive_seed(self.0, &[w.id.start_frame, c as u64]);
                t.row_mut(i)[c] = (h % 1000) as f64 / 100.0;
            }
        }
        Ok(t)
    }
}

#[test]
fn perfect_predictor_has_diagonal_confusion() {
    let set = balanced("c1", 3);
    let r = evaluate(&Perfect, &set).unwrap();
    assert_eq!(r.accuracy, 1.0);
    for i in 0..NUM_CLASSES {
        for j in 0..NUM_CLASSES {
            assert_eq!(r.confusion.counts[i][j], if i == j { 3 } else { 0 });
        }
    }
}

#[test]
fn constant_predictor_on_balanced_set_scores_one_eighth() {
    let set = balanced("c1", 5);
    let stop = GestureLabel::ALL.iter().position(|l| l.name() == "stop").unwrap();
    let r = evaluate(&Constant(stop), &set).unwrap();
    assert_eq!(r.accuracy, 0.125);
    assert_eq!(r.confusion.total(), 40);
    let per_class = r.confusion.per_class_accuracy();
    assert_eq!(per_class[stop], Some(1.0));
    assert_eq!(per_class.iter().filter(|a| **a == Some(0.0)).count(), 7);
}

#[test]
fn empty_set_is_an_evaluation_error() {
    assert!(matches!(evaluate(&Perfect, &[]), Err(Error::Evaluation(_))));
}

proptest! {
    #[test]
    fn accuracy_is_trace_over_total_and_order_invariant(
        labels in prop::collection::vec(0usize..NUM_CLASSES, 1..80),
        seed: u64,
        rotate in 0usize..80,
    ) {
        let set: Vec<WindowSample> = labels.iter().enumerate().map(|(i, &l)| window("c1", i as u64, l)).collect();
        let r = evaluate(&Hashed(seed), &set).unwrap();
        prop_assert_eq!(r.confusion.total(), set.len() as u64);
        let trace: u64 = (0..NUM_CLASSES).map(|i| r.confusion.counts[i][i]).sum();
        prop_assert!((r.accuracy - trace as f64 / set.len() as f64).abs() <= 1e-12);

        let mut permuted = set.clone();
        permuted.reverse();
        let k = rotate % permuted.len();
        permuted.rotate_left(k);
        let p = evaluate(&Hashed(seed), &permuted).unwrap();
        prop_assert_eq!(p.accuracy, r.accuracy);
        prop_assert_eq!(p.confusion, r.confusion);
    }
}

fn client(id: &str, offset: u64, train: usize, test: usize) -> ClientDataset {
    let mk = |base: u64, n: usize| (0..n).map(|i| window(id, offset + base + i as u64, i % NUM_CLASSES)).collect();
    ClientDataset {
        client_id: id.into(),
        train: mk(0, train),
        val: mk(1000, 2),
        test: mk(2000, test),
    }
}

#[test]
fn global_test_concatenates_in_client_order() {
    let clients = vec![client("c1", 0, 10, 4), client("c2", 0, 10, 0), client("c3", 0, 10, 3)];
    let (global, warnings) = compile_global_test(&clients);
    assert_eq!(global.len(), 7);
    assert_eq!(global[..4], clients[0].test[..]);
    assert_eq!(global[4..], clients[2].test[..]);
    assert_eq!(warnings.len(), 1);
    assert!(warnings[0].contains("c2"));
    let training: Vec<&WindowSample> = clients.iter().flat_map(|c| c.train.iter().chain(&c.val)).collect();
    check_disjoint(training.iter().copied(), &global).unwrap();
    let err = check_disjoint(clients[0].test.iter(), &global).unwrap_err();
    assert!(matches!(err, Error::Contamination(_)));
}

#[test]
fn cross_client_matrix_shapes_and_global_column() {
    let clients = vec![client("c1", 0, 8, 16), client("c2", 0, 8, 16), client("c3", 0, 8, 16)];
    let (global, _) = compile_global_test(&clients);
    let hashed = [Hashed(1), Hashed(2)];
    let models: Vec<&dyn Classifier> = vec![&Perfect, &hashed[0], &hashed[1]];
    let m = cross_client_eval(&models, &clients, &global).unwrap();
    assert_eq!(m.k(), 3);
    assert!(m.accuracy.iter().all(|r| r.len() == 4));
    assert!(m.accuracy[0].iter().all(|&a| a == 1.0));
    assert!(m.accuracy.iter().flatten().all(|a| (0.0..=1.0).contains(a)));
    for i in 0..3 {
        let own = evaluate(models[i], &clients[i].test).unwrap().accuracy;
        assert_eq!(m.own(i), own);
        // Equal test sizes: the global column is the plain row mean.
        let mean = (0..3).map(|j| m.accuracy[i][j]).sum::<f64>() / 3.0;
        assert!((m.global(i) - mean).abs() <= 1e-12, "{} vs {mean}", m.global(i));
    }
    let csv = m.to_csv();
    assert_eq!(csv.lines().next().unwrap(), "model,c1,c2,c3,global");
    assert_eq!(csv.lines().count(), 4);
    assert!(cross_client_eval(&models[..2], &clients, &global).is_err());
}

#[test]
fn external_client_guard_and_predictions() {
    let ext = client("c9", 0, 8, 8);
    let trained = vec!["c1".to_string(), "c9".to_string()];
    let err = external_client_eval(&Perfect, &ext, &trained).unwrap_err();
    assert!(matches!(&err, Error::Contamination(id) if id == "c9"), "{err}");

    let ok = external_client_eval(&Perfect, &ext, &trained[..1]).unwrap();
    assert_eq!(ok.result.accuracy, 1.0);
    assert_eq!(ok.predictions.len(), ext.len());
    assert!(ok.predictions.iter().all(|p| p.label == p.predicted && p.confidence > 0.5));

    let balanced_ext = ClientDataset {
        client_id: "c9".into(),
        test: balanced("c9", 4),
        ..Default::default()
    };
    let stop = GestureLabel::ALL.iter().position(|l| l.name() == "stop").unwrap();
    let r = external_client_eval(&Constant(stop), &balanced_ext, &trained[..1]).unwrap();
    assert_eq!(r.result.accuracy, 0.125);
    assert!(r.predictions.iter().all(|p| p.predicted.index() == stop));
}

#[test]
fn confusion_csv_and_merge() {
    let set = balanced("c1", 2);
    let (r, preds) = evaluate_detailed(&Constant(0), &set).unwrap();
    assert_eq!(preds.len(), set.len());
    let csv = r.confusion.to_csv();
    assert_eq!(csv.lines().count(), NUM_CLASSES + 1);
    assert!(csv.lines().nth(1).unwrap().ends_with(",2,0,0,0,0,0,0,0"));
    let mut m = ConfusionMatrix::default();
    m.merge(&r.confusion);
    m.merge(&r.confusion);
    assert_eq!(m.total(), 32);
    let merged = AccuracySummary::merged(&[r.clone(), r.clone()]);
    assert_eq!(merged.accuracy, r.accuracy);
    assert_eq!(merged.samples, 32);
}

fn tiny_report(paradigm: Paradigm) -> ExperimentReport {
    let mut cfg = ExperimentConfig::new(paradigm, ModelKind::Lstm, 3);
    cfg.synthetic = common::small_spec(3, 200);
    cfg.data.external = vec!["s3".into()];
    cfg.model.lstm.hidden = 8;
    cfg.training.max_epochs = 2;
    cfg.federation.rounds = 2;
    cfg.federation.local_epochs = 1;
    run_experiment(&cfg, 1).unwrap().report
}

#[test]
fn report_round_trip_and_consistency() {
    let report = tiny_report(Paradigm::Local);
    assert_eq!(report.schema_version, 1);
    let text = report.to_json().unwrap();
    assert!(text.contains("\"schema_version\": 1"));
    let back = ExperimentReport::from_json(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.to_json().unwrap(), text);

    let g = &report.global_test;
    assert!((g.confusion.accuracy() - g.accuracy).abs() <= 1e-12);
    assert_eq!(g.confusion.total() as usize, g.samples);
    for e in &report.external {
        assert!((e.summary.confusion.accuracy() - e.summary.accuracy).abs() <= 1e-12);
        assert_eq!(e.client_id, "s3");
    }
    assert_eq!(report.external.len(), 2);
    assert_eq!(report.cross_client.as_ref().unwrap().k(), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    report.export(&path).unwrap();
    assert_eq!(ExperimentReport::import(&path).unwrap(), report);

    let wrong = text.replacen("\"schema_version\": 1", "\"schema_version\": 99", 1);
    assert!(ExperimentReport::from_json(&wrong).is_err());
    let unwritable = dir.path().join("missing").join("r.json");
    assert!(matches!(report.export(&unwritable), Err(Error::Io { .. })));
}

#[test]
fn plots_are_written_for_federated_reports() {
    let report = tiny_report(Paradigm::Fedavg);
    let dir = tempfile::tempdir().unwrap();
    let counts = vec![("s1".to_string(), [1; NUM_CLASSES]), ("s2".to_string(), [2; NUM_CLASSES])];
    let files = render_plots(&report, &counts, dir.path()).unwrap();
    let names: Vec<String> = files
        .iter()
        .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    assert!(names.contains(&"round_accuracy.csv".to_string()));
    assert!(names.contains(&"class_distribution.svg".to_string()));
    let curve = std::fs::read_to_string(dir.path().join("round_accuracy.csv")).unwrap();
    assert_eq!(curve.lines().count(), 1 + 1 + 2);
}
