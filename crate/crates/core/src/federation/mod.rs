//! Federated rounds and the four training paradigms.
//!
//! The server loop only ever sees what a client hands back through
//! [`FederatedClient::train_round`]: new weights, a sample count and a loss
//! figure for logging. Client data stays inside [`LocalClient`].

mod aggregate;
mod paradigms;

use serde::{Deserialize, Serialize};

pub use aggregate::{fedavg_aggregate, AggregationEntry, AggregationInput};
pub use paradigms::{
    pooled_dataset, run_centralized, run_fedavg, run_fedensemble, run_local_baseline,
    FedEnsembleOutcome, TrainedModel,
};

use crate::dataset::{ClientDataset, WindowSample};
use crate::error::{Error, Result};
use crate::models::ModelConfig;
use crate::nn::ParameterSet;
use crate::seed::{derive_seed, stream};
use crate::training::{train_local, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    /// Worker threads for client training within a round; 1 runs sequentially.
    pub parallel_clients: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            rounds: 20,
            local_epochs: 25,
            batch_size: 64,
            lr: 2e-4,
            seed: 0,
            parallel_clients: 1,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.parallel_clients == 0 {
            return Err(Error::Config("parallel_clients must be >= 1".into()));
        }
        self.client_train_config(0, 1).validate()
    }

    /// Local training settings for `client` in 1-based `round`.
    pub fn client_train_config(&self, client: usize, round: usize) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            lr: self.lr,
            max_epochs: self.local_epochs,
            patience: None,
            seed: derive_seed(self.seed, &[stream::CLIENT_ROUND, client as u64, round as u64]),
        }
    }

    /// Total epochs each client trains over the whole run.
    pub fn epoch_budget(&self) -> usize {
        self.rounds * self.local_epochs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalModelState {
    pub round: usize,
    pub weights: ParameterSet,
}

/// What crosses the client boundary after a round of local training.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub weights: ParameterSet,
    pub sample_count: usize,
    /// Mean training loss of the last local epoch, for the round log.
    pub train_loss: f64,
    pub epochs: usize,
}

pub trait FederatedClient: Sync {
    fn sample_count(&self) -> usize;

    /// Trains from the broadcast weights for one round (`round` is 1-based).
    fn train_round(&self, global: &ParameterSet, round: usize) -> Result<ClientUpdate>;
}

/// A simulated client owning one subject's (or partition's) training data.
pub struct LocalClient {
    index: usize,
    model: ModelConfig,
    train: Vec<WindowSample>,
    config: FederationConfig,
}

impl LocalClient {
    pub fn new(index: usize, model: ModelConfig, train: Vec<WindowSample>, config: FederationConfig) -> Self {
        Self {
            index,
            model,
            train,
            config,
        }
    }

    pub fn from_datasets(model: ModelConfig, clients: &[ClientDataset], config: FederationConfig) -> Vec<Self> {
        clients
            .iter()
            .enumerate()
            .map(|(i, c)| Self::new(i, model, c.train.clone(), config))
            .collect()
    }
}

impl FederatedClient for LocalClient {
    fn sample_count(&self) -> usize {
        self.train.len()
    }

    fn train_round(&self, global: &ParameterSet, round: usize) -> Result<ClientUpdate> {
        let cfg = self.config.client_train_config(self.index, round);
        let out = train_local(&self.model, global.clone(), &self.train, &[], &cfg)?;
        let train_loss = out.trace.epochs.last().map_or(f64::NAN, |e| e.train_loss);
        Ok(ClientUpdate {
            epochs: out.trace.epochs.len(),
            weights: out.final_params,
            sample_count: self.train.len(),
            train_loss,
        })
    }
}

/// Global metrics observed after an aggregation; absent fields were not measured.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
    pub test_loss: Option<f64>,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundEntry {
    pub client: usize,
    pub train_loss: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// 1-based.
    pub round: usize,
    pub clients: Vec<ClientRoundEntry>,
    pub metrics: RoundMetrics,
}

pub fn write_round_log<W: std::io::Write>(mut w: W, records: &[RoundRecord]) -> Result<()> {
    for r in records {
        let line = serde_json::to_string(r)?;
        writeln!(w, "{line}").map_err(|e| Error::io("<round log>", e))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FederatedOutcome {
    pub state: GlobalModelState,
    pub records: Vec<RoundRecord>,
    /// Metrics of the initial broadcast weights.
    pub initial_metrics: RoundMetrics,
    /// Local epochs each client actually ran, summed over rounds.
    pub local_epochs_per_client: Vec<usize>,
}

/// Receives the global weights at round 0 and after every aggregation.
pub type RoundObserver<'a> = dyn FnMut(&ParameterSet) -> Result<RoundMetrics> + 'a;

/// FedAvg server loop: broadcast, local training on every client, weighted
/// aggregation. Any client failure aborts the run.
pub fn run_federated<C: FederatedClient>(
    clients: &[C],
    initial: ParameterSet,
    config: &FederationConfig,
    observer: &mut RoundObserver<'_>,
) -> Result<FederatedOutcome> {
    config.validate()?;
    if clients.is_empty() {
        return Err(Error::Config("federated run needs at least one client".into()));
    }
    if let Some(i) = clients.iter().position(|c| c.sample_count() == 0) {
        return Err(Error::Config(format!("client {i} has an empty training set")));
    }
    let pool = if config.parallel_clients > 1 {
        Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(config.parallel_clients)
                .build()
                .map_err(|e| Error::Config(format!("cannot start client thread pool: {e}")))?,
        )
    } else {
        None
    };

    let initial_metrics = observer(&initial)?;
    let mut state = GlobalModelState {
        round: 0,
        weights: initial,
    };
    let mut records = Vec::with_capacity(config.rounds);
    let mut epochs = vec![0; clients.len()];

    for round in 1..=config.rounds {
        let global = &state.weights;
        let train_one = |(i, c): (usize, &C)| {
            c.train_round(global, round)
                .map_err(|e| annotate(e, round, i))
        };
        let updates: Vec<Result<ClientUpdate>> = match &pool {
            Some(pool) => pool.install(|| {
                use rayon::prelude::*;
                clients.par_iter().enumerate().map(train_one).collect()
            }),
            None => clients.iter().enumerate().map(train_one).collect(),
        };
        let mut input = AggregationInput::default();
        let mut entries = Vec::with_capacity(clients.len());
        for (i, u) in updates.into_iter().enumerate() {
            let u = u?;
            epochs[i] += u.epochs;
            entries.push(ClientRoundEntry {
                client: i,
                train_loss: u.train_loss,
                samples: u.sample_count,
            });
            input.entries.push(AggregationEntry {
                client: i,
                weights: u.weights,
                sample_count: u.sample_count,
            });
        }
        state = GlobalModelState {
            round,
            weights: fedavg_aggregate(&input)?,
        };
        let metrics = observer(&state.weights)?;
        log::info!("round {round}/{}: {metrics:?}", config.rounds);
        records.push(RoundRecord {
            round,
            clients: entries,
            metrics,
        });
    }
    Ok(FederatedOutcome {
        state,
        records,
        initial_metrics,
        local_epochs_per_client: epochs,
    })
}

fn annotate(e: Error, round: usize, client: usize) -> Error {
    match e {
        Error::NumericHealth(m) => Error::NumericHealth(format!("round {round}, client {client}: {m}")),
        other => other,
    }
}
