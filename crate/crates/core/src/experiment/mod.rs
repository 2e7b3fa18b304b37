//! End-to-end experiment runs: load or synthesize data, dispatch to a
//! paradigm, evaluate, and write the report, artifacts and run manifest.

mod config;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use config::{
    DataSection, ExperimentConfig, ExperimentSection, FederationSection, ModelSection, Paradigm,
    TrainingSection,
};

use crate::dataset::{
    build_windows, class_histogram, io, split_by_client, synthesize_dataset, ClientDataset, ImageSize,
    WindowSample, NUM_CLASSES,
};
use crate::error::{Error, Result};
use crate::evaluation::plots::render_plots;
use crate::evaluation::report::{
    AccuracySummary, ClientSizes, ExternalSummary, FederationSummary, NamedTrace, SeedRecord,
};
use crate::evaluation::{
    check_disjoint, compile_global_test, cross_client_eval, evaluate, external_client_eval, ExperimentReport,
    ExternalEval, REPORT_SCHEMA_VERSION,
};
use crate::federation::{
    pooled_dataset, run_centralized, run_fedavg, run_fedensemble, run_local_baseline, write_round_log,
    FederatedOutcome,
};
use crate::models::{Checkpoint, Classifier, Model};

/// Training clients, held-out external subjects, and where they came from.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub clients: Vec<ClientDataset>,
    pub external: Vec<ClientDataset>,
    pub inputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Reads the configured window source into labelled windows.
pub fn load_source_windows(cfg: &ExperimentConfig) -> Result<(Vec<WindowSample>, Vec<PathBuf>)> {
    let d = &cfg.data;
    if let Some(p) = &d.windows {
        return Ok((io::load_windows(p)?, vec![p.clone()]));
    }
    if let Some(p) = &d.raw {
        let frames = io::load_frames(p)?;
        let size = ImageSize::new(d.image_width, d.image_height)?;
        return Ok((build_windows(&frames, size)?, vec![p.clone()]));
    }
    let frames = synthesize_dataset(&cfg.synthetic, cfg.experiment.seed)?;
    Ok((build_windows(&frames, cfg.synthetic.image_size()?)?, Vec::new()))
}

/// Splits windows per client and moves the external subjects aside.
pub fn prepare_data(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let (windows, inputs) = load_source_windows(cfg)?;
    if windows.is_empty() {
        return Err(Error::Data("data source produced no windows".into()));
    }
    let (all, warnings) = split_by_client(windows, &cfg.data.split, cfg.experiment.seed)?;
    let wanted: BTreeSet<&str> = cfg.data.external.iter().map(String::as_str).collect();
    let present: BTreeSet<&str> = all.iter().map(|c| c.client_id.as_str()).collect();
    if let Some(missing) = wanted.difference(&present).next() {
        return Err(Error::Data(format!("external client `{missing}` is not in the data")));
    }
    let (external, clients): (Vec<_>, Vec<_>) = all
        .into_iter()
        .partition(|c| wanted.contains(c.client_id.as_str()));
    if clients.is_empty() {
        return Err(Error::Data("no training clients left after removing external subjects".into()));
    }
    Ok(PreparedData {
        clients,
        external,
        inputs,
        warnings,
    })
}

/// Everything a run produced, before it is written to disk.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    /// Named final models (one per client for the local paradigm).
    pub models: Vec<(String, Model)>,
    pub external_predictions: Vec<(String, ExternalEval)>,
    pub class_counts: Vec<(String, [usize; NUM_CLASSES])>,
    pub inputs: Vec<PathBuf>,
}

fn federation_summary(cfg: &ExperimentConfig, out: &FederatedOutcome) -> FederationSummary {
    FederationSummary {
        rounds: cfg.federation.rounds,
        local_epochs: cfg.federation.local_epochs,
        local_epochs_per_client: out.local_epochs_per_client.clone(),
        initial_metrics: out.initial_metrics.clone(),
        records: out.records.clone(),
    }
}

pub fn run_experiment(cfg: &ExperimentConfig, parallel_clients: usize) -> Result<ExperimentRun> {
    cfg.validate()?;
    let started = Instant::now();
    let data = prepare_data(cfg)?;
    run_prepared(cfg, data, parallel_clients, started)
}

/// Runs the configured paradigm on already prepared clients.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    data: PreparedData,
    parallel_clients: usize,
    started: Instant,
) -> Result<ExperimentRun> {
    let model_cfg = cfg.model_config();
    let mut warnings = cfg.warnings();
    warnings.extend(data.warnings.iter().cloned());
    let clients = &data.clients;
    let (global_test, w) = compile_global_test(clients);
    warnings.extend(w);
    if global_test.is_empty() {
        return Err(Error::Data("global test set is empty".into()));
    }
    check_disjoint(clients.iter().flat_map(|c| c.train.iter().chain(&c.val)), &global_test)?;
    for w in &warnings {
        log::warn!("{w}");
    }

    let paradigm = cfg.experiment.paradigm;
    let mut models = Vec::new();
    let mut traces = Vec::new();
    let mut federation = None;
    let mut cross_client = None;
    let mut partition_seed = None;
    let global_summary;

    match paradigm {
        Paradigm::Centralized => {
            let pooled = pooled_dataset(clients);
            let trained = run_centralized(&model_cfg, &pooled, &cfg.train_config())?;
            global_summary = AccuracySummary::from_result(&evaluate(&trained.model, &global_test)?);
            traces.push(NamedTrace {
                name: "centralized".into(),
                trace: trained.trace,
            });
            models.push(("centralized".to_string(), trained.model));
        }
        Paradigm::Local => {
            let trained = run_local_baseline(&model_cfg, clients, &cfg.train_config(), parallel_clients)?;
            let refs: Vec<&dyn Classifier> = trained.iter().map(|t| &t.model as &dyn Classifier).collect();
            cross_client = Some(cross_client_eval(&refs, clients, &global_test)?);
            let mut results = Vec::with_capacity(trained.len());
            for t in &trained {
                results.push(evaluate(&t.model, &global_test)?);
            }
            global_summary = AccuracySummary::merged(&results);
            for (c, t) in clients.iter().zip(trained) {
                let name = format!("local-{}", c.client_id);
                traces.push(NamedTrace {
                    name: name.clone(),
                    trace: t.trace,
                });
                models.push((name, t.model));
            }
        }
        Paradigm::Fedavg => {
            let fed = cfg.federation_config(parallel_clients);
            let out = run_fedavg(&model_cfg, clients, &fed, &global_test)?;
            federation = Some(federation_summary(cfg, &out));
            let model = Model::from_parts(model_cfg, out.state.weights)?;
            global_summary = AccuracySummary::from_result(&evaluate(&model, &global_test)?);
            models.push(("fedavg".to_string(), model));
        }
        Paradigm::Fedensemble => {
            let fed = cfg.federation_config(parallel_clients);
            let pooled = pooled_dataset(clients);
            let out = run_fedensemble(
                &model_cfg,
                &pooled,
                cfg.federation.clients,
                &cfg.data.split,
                &fed,
                &global_test,
            )?;
            partition_seed = out.partition_seed;
            federation = Some(federation_summary(cfg, &out.outcome));
            let model = Model::from_parts(model_cfg, out.outcome.state.weights)?;
            global_summary = AccuracySummary::from_result(&evaluate(&model, &global_test)?);
            models.push(("fedensemble".to_string(), model));
        }
    }

    let training_ids: Vec<String> = clients.iter().map(|c| c.client_id.clone()).collect();
    let mut external = Vec::new();
    let mut external_predictions = Vec::new();
    for ext in &data.external {
        for (name, model) in &models {
            let r = external_client_eval(model, ext, &training_ids)?;
            external.push(ExternalSummary {
                client_id: ext.client_id.clone(),
                model: name.clone(),
                summary: AccuracySummary::from_result(&r.result),
            });
            external_predictions.push((name.clone(), r));
        }
    }

    let mut class_counts: Vec<(String, [usize; NUM_CLASSES])> = clients
        .iter()
        .map(|c| (c.client_id.clone(), class_histogram(c.all_windows())))
        .collect();
    class_counts.extend(
        data.external
            .iter()
            .map(|c| (c.client_id.clone(), class_histogram(c.all_windows()))),
    );

    let report = ExperimentReport {
        schema_version: REPORT_SCHEMA_VERSION,
        paradigm,
        model: cfg.experiment.model,
        clients: clients
            .iter()
            .map(|c| ClientSizes {
                client_id: c.client_id.clone(),
                train: c.train.len(),
                val: c.val.len(),
                test: c.test.len(),
            })
            .collect(),
        global_test: global_summary,
        cross_client,
        external,
        traces,
        federation,
        warnings,
        config: cfg.clone(),
        seeds: SeedRecord {
            base: cfg.experiment.seed,
            partition: partition_seed,
        },
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    };
    Ok(ExperimentRun {
        report,
        models,
        external_predictions,
        class_counts,
        inputs: data.inputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    /// `ok` or the error that stopped the run.
    pub status: String,
    pub config: ExperimentConfig,
    pub config_toml: String,
    pub seed: u64,
    pub inputs: Vec<FileHash>,
    pub artifacts: Vec<FileHash>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn hash_all(paths: &[PathBuf], base: Option<&Path>) -> Result<Vec<FileHash>> {
    paths
        .iter()
        .map(|p| {
            let shown = base.and_then(|b| p.strip_prefix(b).ok()).unwrap_or(p);
            Ok(FileHash {
                path: shown.display().to_string(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

/// Writes `manifest.json` into `dir`, hashing the listed files.
pub fn write_manifest(
    dir: &Path,
    cfg: &ExperimentConfig,
    inputs: &[PathBuf],
    artifacts: &[PathBuf],
    status: &str,
) -> Result<PathBuf> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = Manifest {
        tool: "fedhar".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        status: status.into(),
        config: cfg.clone(),
        config_toml: cfg.to_toml()?,
        seed: cfg.experiment.seed,
        inputs: hash_all(inputs, None)?,
        artifacts: hash_all(artifacts, Some(dir))?,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn write_file(path: PathBuf, body: impl AsRef<[u8]>, written: &mut Vec<PathBuf>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    written.push(path);
    Ok(())
}

/// Writes the report and every artifact under `dir`, then the manifest.
/// Returns the artifact paths (manifest excluded).
pub fn write_outputs(run: &ExperimentRun, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    let report_path = dir.join("report.json");
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    run.report.export(&report_path)?;
    written.push(report_path);
    write_file(dir.join("confusion.csv"), run.report.global_test.confusion.to_csv(), &mut written)?;
    if let Some(m) = &run.report.cross_client {
        write_file(dir.join("cross_client.csv"), m.to_csv(), &mut written)?;
    }
    for t in &run.report.traces {
        write_file(dir.join("traces").join(format!("{}.csv", t.name)), t.trace.to_csv(), &mut written)?;
    }
    if let Some(fed) = &run.report.federation {
        let mut buf = Vec::new();
        write_round_log(&mut buf, &fed.records)?;
        write_file(dir.join("rounds.jsonl"), buf, &mut written)?;
    }
    for (name, model) in &run.models {
        let provenance = serde_json::json!({
            "paradigm": run.report.paradigm,
            "model": name,
        });
        let ckpt = Checkpoint::new(model, run.report.config.experiment.seed, provenance);
        write_file(dir.join("checkpoints").join(format!("{name}.json")), ckpt.to_json()?, &mut written)?;
    }
    for (name, ext) in &run.external_predictions {
        let mut body = String::new();
        for p in &ext.predictions {
            body.push_str(&serde_json::to_string(p)?);
            body.push('\n');
        }
        write_file(
            dir.join(format!("external_{}_{name}.jsonl", ext.client_id)),
            body,
            &mut written,
        )?;
    }
    match render_plots(&run.report, &run.class_counts, &dir.join("plots")) {
        Ok(paths) => written.extend(paths),
        Err(e) => log::warn!("plot rendering failed: {e}"),
    }
    write_manifest(dir, &run.report.config, &run.inputs, &written, "ok")?;
    Ok(written)
}
