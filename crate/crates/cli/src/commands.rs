//! Subcommand implementations.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use fedhar::dataset::{build_windows, io, split_by_client, synthesize_dataset, ClientDataset, ImageSize, SplitFractions, SynthSpec};
use fedhar::evaluation::report::AccuracySummary;
use fedhar::evaluation::{cross_client_eval, evaluate_detailed, external_client_eval, WindowPrediction};
use fedhar::experiment::{run_experiment, write_manifest, write_outputs, ExperimentConfig};
use fedhar::models::{Checkpoint, Classifier, Model, ModelKind};
use fedhar::{Error, Result};

use crate::GlobalArgs;

fn out_file(global: &GlobalArgs, default: &str) -> PathBuf {
    global.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write(path: &Path, body: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn prepare(global: &GlobalArgs, raw: &Path, width: f64, height: f64) -> Result<()> {
    let frames = io::load_frames(raw)?;
    let windows = build_windows(&frames, ImageSize::new(width, height)?)?;
    let out = out_file(global, "windows.jsonl");
    if out == raw {
        return Err(Error::Config("output would overwrite the input file".into()));
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    io::save_windows(&out, &windows)?;
    println!("{} frames -> {} windows in {}", frames.len(), windows.len(), out.display());
    Ok(())
}

pub fn synth(global: &GlobalArgs, spec_path: Option<&Path>, subjects: Option<usize>, windows: Option<&Path>) -> Result<()> {
    let mut spec = match spec_path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<SynthSpec>(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => SynthSpec::default(),
    };
    if let Some(n) = subjects {
        spec.subjects = n;
    }
    spec.validate()?;
    let seed = global.seed.unwrap_or(0);
    let frames = synthesize_dataset(&spec, seed)?;
    let out = out_file(global, "frames.jsonl");
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    io::save_frames(&out, &frames)?;
    println!("{} frames for {} subjects in {}", frames.len(), spec.subjects, out.display());
    if let Some(wpath) = windows {
        let ws = build_windows(&frames, spec.image_size()?)?;
        io::save_windows(wpath, &ws)?;
        println!("{} windows in {}", ws.len(), wpath.display());
    }
    Ok(())
}

pub fn train(global: &GlobalArgs, config_path: &Path) -> Result<()> {
    let mut cfg = ExperimentConfig::load(config_path)?;
    if let Some(seed) = global.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &global.out {
        cfg.experiment.out_dir = out.clone();
    }
    let dir = cfg.experiment.out_dir.clone();
    let run = match run_experiment(&cfg, global.parallel_clients) {
        Ok(run) => run,
        Err(e) => {
            if let Err(m) = write_manifest(&dir, &cfg, &[], &[], &format!("failed: {e}")) {
                log::warn!("could not write manifest: {m}");
            }
            return Err(e);
        }
    };
    write_outputs(&run, &dir)?;
    let r = &run.report;
    println!(
        "{} {}: global test accuracy {:.4} on {} windows",
        r.paradigm, r.model, r.global_test.accuracy, r.global_test.samples
    );
    for e in &r.external {
        println!("external {} ({}): accuracy {:.4}", e.client_id, e.model, e.summary.accuracy);
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
    println!("report written to {}", dir.join("report.json").display());
    Ok(())
}

fn load_model(path: &Path, expected: Option<&str>) -> Result<Model> {
    let ckpt = Checkpoint::load(path)?;
    if let Some(kind) = expected {
        let kind: ModelKind = kind.parse()?;
        if kind != ckpt.kind {
            return Err(Error::Config(format!(
                "{} holds a `{}` model but `--model {kind}` was given",
                path.display(),
                ckpt.kind
            )));
        }
    }
    ckpt.into_model()
}

pub fn eval(global: &GlobalArgs, checkpoint: &Path, data: &Path, model: Option<&str>, trained_on: &[String]) -> Result<()> {
    let model = load_model(checkpoint, model)?;
    let windows = io::load_windows(data)?;
    let (summary, predictions) = if trained_on.is_empty() {
        let (r, preds) = evaluate_detailed(&model, &windows)?;
        let predictions: Vec<WindowPrediction> = windows
            .iter()
            .zip(preds)
            .map(|(w, p)| WindowPrediction {
                window: w.id.clone(),
                label: w.label,
                predicted: p.label,
                confidence: p.confidence,
            })
            .collect();
        (AccuracySummary::from_result(&r), predictions)
    } else {
        let ids: std::collections::BTreeSet<String> = windows.iter().map(|w| w.id.client.clone()).collect();
        if ids.len() != 1 {
            return Err(Error::Data(format!(
                "external evaluation needs windows of exactly one client, found {}",
                ids.len()
            )));
        }
        let ext = ClientDataset {
            client_id: ids.into_iter().next().unwrap_or_default(),
            test: windows,
            ..Default::default()
        };
        let r = external_client_eval(&model, &ext, trained_on)?;
        (AccuracySummary::from_result(&r.result), r.predictions)
    };
    let dir = out_file(global, "eval");
    write(&dir.join("eval.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    write(&dir.join("confusion.csv"), summary.confusion.to_csv())?;
    let mut lines = String::new();
    for p in &predictions {
        lines.push_str(&serde_json::to_string(p)?);
        lines.push('\n');
    }
    write(&dir.join("predictions.jsonl"), lines)?;
    println!(
        "accuracy {:.4} on {} windows (loss {:.4}); results in {}",
        summary.accuracy,
        summary.samples,
        summary.loss,
        dir.display()
    );
    Ok(())
}

pub fn matrix(global: &GlobalArgs, checkpoints: &[PathBuf], clients: &[String], data: &Path) -> Result<()> {
    if checkpoints.len() != clients.len() {
        return Err(Error::Config(format!(
            "{} checkpoints for {} clients",
            checkpoints.len(),
            clients.len()
        )));
    }
    let models = checkpoints
        .iter()
        .map(|p| load_model(p, None))
        .collect::<Result<Vec<_>>>()?;
    // The same seed and fractions as training reproduce each client's test split.
    let seed = global.seed.unwrap_or(0);
    let (split, _) = split_by_client(io::load_windows(data)?, &SplitFractions::default(), seed)?;
    let mut by_id: BTreeMap<String, ClientDataset> = split.into_iter().map(|c| (c.client_id.clone(), c)).collect();
    let selected = clients
        .iter()
        .map(|id| {
            by_id
                .remove(id)
                .ok_or_else(|| Error::Data(format!("client `{id}` not found in {}", data.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    let global_test: Vec<_> = selected.iter().flat_map(|c| c.test.iter().cloned()).collect();
    let refs: Vec<&dyn Classifier> = models.iter().map(|m| m as &dyn Classifier).collect();
    let m = cross_client_eval(&refs, &selected, &global_test)?;
    let dir = out_file(global, "matrix");
    write(&dir.join("cross_client.csv"), m.to_csv())?;
    write(&dir.join("cross_client.json"), serde_json::to_string_pretty(&m)? + "\n")?;
    print!("{}", m.to_csv());
    Ok(())
}
