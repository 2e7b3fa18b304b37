//! Weighted federated averaging.

use crate::error::{Error, Result};
use crate::nn::{ParameterSet, Tensor};

/// One client's contribution to an aggregation.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationEntry {
    pub client: usize,
    pub weights: ParameterSet,
    pub sample_count: usize,
}

/// Entries must be ordered by client index; that order fixes summation order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregationInput {
    pub entries: Vec<AggregationEntry>,
}

impl AggregationInput {
    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn total_samples(&self) -> usize {
        self.entries.iter().map(|e| e.sample_count).sum()
    }
}

fn agg_err(param: &str, message: String) -> Error {
    Error::Aggregation {
        param: param.to_string(),
        message,
    }
}

/// `w' = sum_i (n_i / N) * w_i`, accumulated in entry order for every element.
/// The output keeps the first client's parameter order.
pub fn fedavg_aggregate(input: &AggregationInput) -> Result<ParameterSet> {
    let first = input
        .entries
        .first()
        .ok_or_else(|| agg_err("*", "no client entries".into()))?;
    for pair in input.entries.windows(2) {
        if pair[1].client <= pair[0].client {
            return Err(agg_err(
                "*",
                format!("entries out of client order ({} after {})", pair[1].client, pair[0].client),
            ));
        }
    }
    if let Some(e) = input.entries.iter().find(|e| e.sample_count == 0) {
        return Err(agg_err("*", format!("client {} reports zero samples", e.client)));
    }
    for e in &input.entries[1..] {
        if e.weights.len() != first.weights.len() {
            return Err(agg_err(
                "*",
                format!(
                    "client {} has {} parameters, client {} has {}",
                    e.client,
                    e.weights.len(),
                    first.client,
                    first.weights.len()
                ),
            ));
        }
    }

    let n_total = input.total_samples() as f64;
    let coeffs: Vec<f64> = input
        .entries
        .iter()
        .map(|e| e.sample_count as f64 / n_total)
        .collect();

    let mut out = ParameterSet::new();
    for (pos, (name, t0)) in first.weights.iter().enumerate() {
        let mut acc: Vec<f64> = t0.data().iter().map(|v| coeffs[0] * v).collect();
        for (e, &c) in input.entries.iter().zip(&coeffs).skip(1) {
            let (other_name, t) = e
                .weights
                .iter()
                .nth(pos)
                .expect("length checked above");
            if other_name != name {
                return Err(agg_err(
                    name,
                    format!("client {} has `{other_name}` in this position", e.client),
                ));
            }
            if t.shape() != t0.shape() {
                return Err(agg_err(
                    name,
                    format!(
                        "client {} shape {:?} vs client {} shape {:?}",
                        e.client,
                        t.shape(),
                        first.client,
                        t0.shape()
                    ),
                ));
            }
            for (a, v) in acc.iter_mut().zip(t.data()) {
                *a += c * v;
            }
        }
        out.insert(name, Tensor::new(t0.shape().to_vec(), acc)?)?;
    }
    Ok(out)
}
