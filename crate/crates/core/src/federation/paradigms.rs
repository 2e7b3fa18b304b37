//! Centralized, local, FedAvg and FedEnsemble runs on prepared client data.

use crate::dataset::{build_fedensemble_partition, stratified_split, ClientDataset, SplitFractions, WindowSample};
use crate::error::{Error, Result};
use crate::evaluation::evaluate;
use crate::models::{build_model, Model, ModelConfig};
use crate::nn::ParameterSet;
use crate::seed::{derive_seed, stream};
use crate::training::{train_local, TrainConfig, TrainTrace};

use super::{run_federated, FederatedOutcome, FederationConfig, LocalClient, RoundMetrics};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub model: Model,
    pub trace: TrainTrace,
}

/// All clients' splits concatenated in client order under the id `pooled`.
pub fn pooled_dataset(clients: &[ClientDataset]) -> ClientDataset {
    let mut out = ClientDataset {
        client_id: "pooled".into(),
        ..Default::default()
    };
    for c in clients {
        out.train.extend(c.train.iter().cloned());
        out.val.extend(c.val.iter().cloned());
        out.test.extend(c.test.iter().cloned());
    }
    out
}

/// One model on the pooled train/val data; returns the best-validation weights.
pub fn run_centralized(model: &ModelConfig, pooled: &ClientDataset, config: &TrainConfig) -> Result<TrainedModel> {
    let init = build_model(model, config.seed)?;
    let out = train_local(model, init, &pooled.train, &pooled.val, config)?;
    Ok(TrainedModel {
        model: Model::from_parts(*model, out.best_params)?,
        trace: out.trace,
    })
}

/// One independent model per client, all from the same initial weights.
/// Each client reshuffles with its own derived seed.
pub fn run_local_baseline(
    model: &ModelConfig,
    clients: &[ClientDataset],
    config: &TrainConfig,
    parallel_clients: usize,
) -> Result<Vec<TrainedModel>> {
    let init = build_model(model, config.seed)?;
    let train_one = |(i, c): (usize, &ClientDataset)| -> Result<TrainedModel> {
        let cfg = TrainConfig {
            seed: derive_seed(config.seed, &[stream::LOCAL, i as u64]),
            ..*config
        };
        let out = train_local(model, init.clone(), &c.train, &c.val, &cfg)
            .map_err(|e| match e {
                Error::NumericHealth(m) => Error::NumericHealth(format!("client {i}: {m}")),
                other => other,
            })?;
        Ok(TrainedModel {
            model: Model::from_parts(*model, out.best_params)?,
            trace: out.trace,
        })
    };
    let results: Vec<Result<TrainedModel>> = if parallel_clients > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(parallel_clients)
            .build()
            .map_err(|e| Error::Config(format!("cannot start client thread pool: {e}")))?;
        pool.install(|| {
            use rayon::prelude::*;
            clients.par_iter().enumerate().map(train_one).collect()
        })
    } else {
        clients.iter().enumerate().map(train_one).collect()
    };
    results.into_iter().collect()
}

/// Observer that scores the global weights on the given validation and test windows.
fn metrics_observer<'a>(
    model: &'a ModelConfig,
    val: &'a [WindowSample],
    test: &'a [WindowSample],
) -> impl FnMut(&ParameterSet) -> Result<RoundMetrics> + 'a {
    move |params| {
        let m = Model {
            config: *model,
            params: params.clone(),
        };
        let mut metrics = RoundMetrics::default();
        if !val.is_empty() {
            let r = evaluate(&m, val)?;
            metrics.val_loss = Some(r.loss);
            metrics.val_acc = Some(r.accuracy);
        }
        if !test.is_empty() {
            let r = evaluate(&m, test)?;
            metrics.test_loss = Some(r.loss);
            metrics.test_acc = Some(r.accuracy);
        }
        Ok(metrics)
    }
}

/// FedAvg over the given clients' training splits. Round metrics use the
/// pooled validation splits and `global_test`.
pub fn run_fedavg(
    model: &ModelConfig,
    clients: &[ClientDataset],
    config: &FederationConfig,
    global_test: &[WindowSample],
) -> Result<FederatedOutcome> {
    let init = build_model(model, config.seed)?;
    let val: Vec<WindowSample> = clients.iter().flat_map(|c| c.val.iter().cloned()).collect();
    let locals = LocalClient::from_datasets(*model, clients, *config);
    let mut observer = metrics_observer(model, &val, global_test);
    run_federated(&locals, init, config, &mut observer)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FedEnsembleOutcome {
    /// The re-partitioned clients (`p1`..`pK`); their test splits are empty.
    pub partitions: Vec<ClientDataset>,
    /// Partition seed that satisfied the mixing constraint; `None` for K = 1.
    pub partition_seed: Option<u64>,
    pub outcome: FederatedOutcome,
}

/// FedAvg over IID re-partitions of the pooled non-test windows. Each
/// partition is split into train/val with the train:val ratio of `fractions`.
/// With `k == 1` the pooled train/val splits are used as they are.
pub fn run_fedensemble(
    model: &ModelConfig,
    pooled: &ClientDataset,
    k: usize,
    fractions: &SplitFractions,
    config: &FederationConfig,
    global_test: &[WindowSample],
) -> Result<FedEnsembleOutcome> {
    if k == 0 {
        return Err(Error::Config("fedensemble needs K >= 1".into()));
    }
    let (partitions, partition_seed) = if k == 1 {
        let single = ClientDataset {
            client_id: "p1".into(),
            train: pooled.train.clone(),
            val: pooled.val.clone(),
            test: Vec::new(),
        };
        (vec![single], None)
    } else {
        let windows: Vec<WindowSample> = pooled.train.iter().chain(&pooled.val).cloned().collect();
        let plan = build_fedensemble_partition(&windows, k, config.seed)?;
        let tv = fractions.train + fractions.val;
        if tv <= 0.0 {
            return Err(Error::Config("split fractions leave no train/val share".into()));
        }
        let frac = SplitFractions {
            train: fractions.train / tv,
            val: fractions.val / tv,
            test: 0.0,
        };
        let mut parts = Vec::with_capacity(k);
        for (j, ws) in plan.materialize(&windows)?.into_iter().enumerate() {
            let id = format!("p{}", j + 1);
            let (ds, warnings) = stratified_split(&id, ws, &frac, derive_seed(config.seed, &[stream::SPLIT, j as u64]))?;
            for w in warnings {
                log::warn!("{w}");
            }
            parts.push(ds);
        }
        (parts, plan.seed_used)
    };
    let outcome = run_fedavg(model, &partitions, config, global_test)?;
    Ok(FedEnsembleOutcome {
        partitions,
        partition_seed,
        outcome,
    })
}
