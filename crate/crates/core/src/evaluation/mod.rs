//! Global test compilation, cross-client and external-client evaluation,
//! and experiment reports.

mod metrics;
pub mod plots;
pub mod report;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use metrics::{evaluate, evaluate_detailed, ConfusionMatrix, EvalResult};
pub use report::{ExperimentReport, REPORT_SCHEMA_VERSION};

use crate::dataset::{ClientDataset, GestureLabel, WindowId, WindowSample};
use crate::error::{Error, Result};
use crate::models::Classifier;

/// Concatenates every client's test split in client order. Clients with an
/// empty test split are skipped with a warning.
pub fn compile_global_test(clients: &[ClientDataset]) -> (Vec<WindowSample>, Vec<String>) {
    let mut out = Vec::new();
    let mut warnings = Vec::new();
    for c in clients {
        if c.test.is_empty() {
            warnings.push(format!("client {} has an empty test split; skipped in global test", c.client_id));
        }
        out.extend(c.test.iter().cloned());
    }
    (out, warnings)
}

/// Accuracy of model `i` on client `j`'s test split (columns `0..K`) and on
/// the global test set (column `K`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossClientMatrix {
    pub clients: Vec<String>,
    pub accuracy: Vec<Vec<f64>>,
}

impl CrossClientMatrix {
    pub fn k(&self) -> usize {
        self.clients.len()
    }

    pub fn own(&self, i: usize) -> f64 {
        self.accuracy[i][i]
    }

    pub fn global(&self, i: usize) -> f64 {
        self.accuracy[i][self.k()]
    }

    /// Mean accuracy of model `i` on the other clients' test splits.
    pub fn mean_off_diagonal(&self, i: usize) -> f64 {
        let k = self.k();
        if k < 2 {
            return f64::NAN;
        }
        (0..k).filter(|&j| j != i).map(|j| self.accuracy[i][j]).sum::<f64>() / (k - 1) as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model");
        for c in &self.clients {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",global\n");
        for (c, row) in self.clients.iter().zip(&self.accuracy) {
            out.push_str(c);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn cross_client_eval(
    models: &[&dyn Classifier],
    clients: &[ClientDataset],
    global_test: &[WindowSample],
) -> Result<CrossClientMatrix> {
    if models.len() != clients.len() {
        return Err(Error::Evaluation(format!(
            "{} models for {} clients",
            models.len(),
            clients.len()
        )));
    }
    let mut accuracy = Vec::with_capacity(models.len());
    for (i, m) in models.iter().enumerate() {
        let mut row = Vec::with_capacity(clients.len() + 1);
        for (j, c) in clients.iter().enumerate() {
            let r = evaluate(*m, &c.test).map_err(|e| Error::Evaluation(format!("model {i} on client {j}: {e}")))?;
            row.push(r.accuracy);
        }
        let g = evaluate(*m, global_test).map_err(|e| Error::Evaluation(format!("model {i} on global test: {e}")))?;
        row.push(g.accuracy);
        accuracy.push(row);
    }
    Ok(CrossClientMatrix {
        clients: clients.iter().map(|c| c.client_id.clone()).collect(),
        accuracy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowPrediction {
    pub window: WindowId,
    pub label: GestureLabel,
    pub predicted: GestureLabel,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalEval {
    pub client_id: String,
    pub result: EvalResult,
    pub predictions: Vec<WindowPrediction>,
}

/// Fails if any of `held_out` shares a window identity with `training`.
pub fn check_disjoint<'a>(
    training: impl IntoIterator<Item = &'a WindowSample>,
    held_out: &[WindowSample],
) -> Result<()> {
    let seen: BTreeSet<&WindowId> = training.into_iter().map(|w| &w.id).collect();
    if let Some(w) = held_out.iter().find(|w| seen.contains(&w.id)) {
        return Err(Error::Contamination(format!(
            "{} (window {}/{}@{} is also a training window)",
            w.id.client, w.id.client, w.id.recording, w.id.start_frame
        )));
    }
    Ok(())
}

/// Evaluates a model on every window of an unseen subject. `training_clients`
/// lists every client id that contributed training data.
pub fn external_client_eval(
    model: &dyn Classifier,
    external: &ClientDataset,
    training_clients: &[String],
) -> Result<ExternalEval> {
    if training_clients.iter().any(|c| c == &external.client_id) {
        return Err(Error::Contamination(external.client_id.clone()));
    }
    let windows: Vec<WindowSample> = external.all_windows().cloned().collect();
    if let Some(w) = windows.iter().find(|w| w.id.client != external.client_id) {
        return Err(Error::Data(format!(
            "external dataset `{}` contains a window of client `{}`",
            external.client_id, w.id.client
        )));
    }
    let (result, preds) = evaluate_detailed(model, &windows)?;
    let predictions = windows
        .iter()
        .zip(preds)
        .map(|(w, p)| WindowPrediction {
            window: w.id.clone(),
            label: w.label,
            predicted: p.label,
            confidence: p.confidence,
        })
        .collect();
    Ok(ExternalEval {
        client_id: external.client_id.clone(),
        result,
        predictions,
    })
}
