//! Schema-versioned experiment report.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ConfusionMatrix, CrossClientMatrix, EvalResult};
use crate::dataset::NUM_CLASSES;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, Paradigm};
use crate::federation::{RoundMetrics, RoundRecord};
use crate::models::ModelKind;
use crate::training::TrainTrace;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Accuracy figures derived from one confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub samples: usize,
    /// Mean cross-entropy; for the local paradigm, the sample-weighted mean
    /// over the local models.
    pub loss: f64,
    pub accuracy: f64,
    pub per_class_accuracy: [Option<f64>; NUM_CLASSES],
    pub confusion: ConfusionMatrix,
}

impl AccuracySummary {
    pub fn from_result(r: &EvalResult) -> Self {
        Self {
            samples: r.samples,
            loss: r.loss,
            accuracy: r.accuracy,
            per_class_accuracy: r.confusion.per_class_accuracy(),
            confusion: r.confusion.clone(),
        }
    }

    /// Pools several evaluations of the same kind into one summary.
    pub fn merged(results: &[EvalResult]) -> Self {
        let mut confusion = ConfusionMatrix::default();
        let mut samples = 0;
        let mut loss = 0.0;
        for r in results {
            confusion.merge(&r.confusion);
            samples += r.samples;
            loss += r.loss * r.samples as f64;
        }
        Self {
            samples,
            loss: if samples > 0 { loss / samples as f64 } else { 0.0 },
            accuracy: confusion.accuracy(),
            per_class_accuracy: confusion.per_class_accuracy(),
            confusion,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientSizes {
    pub client_id: String,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTrace {
    pub name: String,
    pub trace: TrainTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FederationSummary {
    pub rounds: usize,
    pub local_epochs: usize,
    pub local_epochs_per_client: Vec<usize>,
    pub initial_metrics: RoundMetrics,
    pub records: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSummary {
    pub client_id: String,
    /// Name of the evaluated model.
    pub model: String,
    pub summary: AccuracySummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub base: u64,
    /// Seed of the accepted FedEnsemble partition, after retries.
    pub partition: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub paradigm: Paradigm,
    pub model: ModelKind,
    pub clients: Vec<ClientSizes>,
    pub global_test: AccuracySummary,
    pub cross_client: Option<CrossClientMatrix>,
    pub external: Vec<ExternalSummary>,
    pub traces: Vec<NamedTrace>,
    pub federation: Option<FederationSummary>,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
    pub seeds: SeedRecord,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        if report.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::Data(format!(
                "report schema version {} is not supported (expected {REPORT_SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }

    /// JSON with the wall-clock field zeroed, for comparing runs.
    pub fn to_json_without_clock(&self) -> Result<String> {
        let mut r = self.clone();
        r.wall_clock_seconds = 0.0;
        r.to_json()
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn import(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
