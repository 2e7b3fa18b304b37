use std::path::{Path, PathBuf};

use fedhar::experiment::{load_source_windows, prepare_data, ExperimentConfig, Paradigm};
use fedhar::models::ModelKind;
use fedhar::Error;

fn configs() -> Vec<PathBuf> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut out = Vec::new();
    for profile in ["full", "desk", "tiny"] {
        for entry in std::fs::read_dir(root.join(profile)).unwrap() {
            out.push(entry.unwrap().path());
        }
    }
    out.sort();
    out
}

#[test]
fn every_bundled_config_loads_and_round_trips() {
    let paths = configs();
    assert_eq!(paths.len(), 24);
    for path in &paths {
        let cfg = ExperimentConfig::load(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg, "{}", path.display());
        assert!(cfg.warnings().is_empty(), "{}: {:?}", path.display(), cfg.warnings());
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        assert_eq!(stem, format!("{}-{}", cfg.experiment.paradigm, cfg.experiment.model));
    }
}

#[test]
fn minimal_config_takes_defaults() {
    let cfg = ExperimentConfig::from_toml("[experiment]\nparadigm = \"fedavg\"\nmodel = \"lstm\"\n").unwrap();
    assert_eq!(cfg, ExperimentConfig::new(Paradigm::Fedavg, ModelKind::Lstm, 0));
    assert_eq!(cfg.federation.rounds * cfg.federation.local_epochs, cfg.training.max_epochs);
    assert!(cfg.warnings().is_empty());
    assert_eq!(cfg.train_config().patience, Some(15));
}

#[test]
fn budget_mismatch_warns_and_patience_zero_disables() {
    let mut cfg = ExperimentConfig::new(Paradigm::Fedensemble, ModelKind::Transformer, 1);
    cfg.federation.rounds = 3;
    let w = cfg.warnings();
    assert_eq!(w.len(), 1);
    assert!(w[0].contains("3 x 25 = 75"), "{}", w[0]);
    cfg.experiment.paradigm = Paradigm::Centralized;
    assert!(cfg.warnings().is_empty());
    cfg.training.patience = 0;
    assert_eq!(cfg.train_config().patience, None);
}

#[test]
fn unknown_keys_and_values_are_config_errors() {
    let base = "[experiment]\nparadigm = \"fedavg\"\nmodel = \"lstm\"\n";
    for bad in [
        format!("{base}[training]\nlearning_rate = 0.1\n"),
        format!("{base}[federation]\nround = 3\n"),
        format!("{base}[extra]\nx = 1\n"),
        base.replace("fedavg", "fedprox"),
        base.replace("lstm", "gru"),
        format!("{base}[federation]\nrounds = 0\n"),
        format!("{base}[data]\nwindows = \"a\"\nraw = \"b\"\n"),
    ] {
        let err = ExperimentConfig::from_toml(&bad).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{bad}: {err}");
    }
    let err = ExperimentConfig::from_toml(&base.replace("fedavg", "fedprox")).unwrap_err();
    for name in ["centralized", "local", "fedavg", "fedensemble"] {
        assert!(err.to_string().contains(name), "{err}");
    }
}

#[test]
fn paradigm_names_parse() {
    for p in Paradigm::ALL {
        assert_eq!(p.name().parse::<Paradigm>().unwrap(), p);
    }
    let err = "fedsgd".parse::<Paradigm>().unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn external_subjects_are_removed_from_training_clients() {
    let mut cfg = ExperimentConfig::new(Paradigm::Local, ModelKind::Lstm, 2);
    cfg.synthetic.subjects = 3;
    cfg.synthetic.recordings = 1;
    cfg.synthetic.frames_per_recording = 160;
    cfg.data.external = vec!["s2".into()];
    let data = prepare_data(&cfg).unwrap();
    let ids: Vec<&str> = data.clients.iter().map(|c| c.client_id.as_str()).collect();
    assert_eq!(ids, ["s1", "s3"]);
    assert_eq!(data.external.len(), 1);
    assert_eq!(data.external[0].client_id, "s2");
    let (all, _) = load_source_windows(&cfg).unwrap();
    let total: usize = data.clients.iter().map(|c| c.len()).sum::<usize>() + data.external[0].len();
    assert_eq!(total, all.len());

    cfg.data.external = vec!["s9".into()];
    assert!(matches!(prepare_data(&cfg), Err(Error::Data(_))));
}
