//! Assignment of windows to federated clients.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{WindowId, WindowSample};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng, stream};

pub const MIN_SOURCES_PER_PARTITION: usize = 3;
pub const MAX_PARTITION_ATTEMPTS: u64 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMode {
    BySubject,
    FedensembleIid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub mode: PartitionMode,
    pub k: usize,
    /// Partition index per window, in the order the windows were supplied.
    pub assignments: Vec<(WindowId, usize)>,
    /// Seed that produced the accepted assignment (fedensemble only).
    pub seed_used: Option<u64>,
}

impl PartitionPlan {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for (_, p) in &self.assignments {
            s[*p] += 1;
        }
        s
    }

    /// Splits `windows` (the same list the plan was built from) into `k` groups.
    pub fn materialize(&self, windows: &[WindowSample]) -> Result<Vec<Vec<WindowSample>>> {
        if windows.len() != self.assignments.len() {
            return Err(Error::Partition(format!(
                "plan covers {} windows, got {}",
                self.assignments.len(),
                windows.len()
            )));
        }
        let mut parts = vec![Vec::new(); self.k];
        for (w, (id, p)) in windows.iter().zip(&self.assignments) {
            if &w.id != id {
                return Err(Error::Partition(format!("window {id:?} out of plan order")));
            }
            parts[*p].push(w.clone());
        }
        Ok(parts)
    }
}

/// One partition per distinct client id, numbered in sorted id order.
pub fn by_subject_partition(windows: &[WindowSample]) -> PartitionPlan {
    let ids: BTreeSet<&str> = windows.iter().map(|w| w.client_id()).collect();
    let index: BTreeMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    PartitionPlan {
        mode: PartitionMode::BySubject,
        k: ids.len(),
        assignments: windows
            .iter()
            .map(|w| (w.id.clone(), index[w.client_id()]))
            .collect(),
        seed_used: None,
    }
}

fn min_sources(windows: &[WindowSample], assign: &[usize], k: usize) -> (usize, usize) {
    let mut sources: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); k];
    for (w, &p) in windows.iter().zip(assign) {
        sources[p].insert(w.client_id());
    }
    sources
        .iter()
        .enumerate()
        .map(|(p, s)| (s.len(), p))
        .min()
        .unwrap_or((0, 0))
}

/// IID re-partitioning of pooled training windows into `k` near-equal parts:
/// seeded global shuffle, then round-robin. Retries with `seed + 1` until
/// every part mixes at least three source clients. Parts smaller than three
/// windows only need to be all-distinct, since nothing more is possible.
pub fn build_fedensemble_partition(
    windows: &[WindowSample],
    k: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    if k < 2 {
        return Err(Error::Partition(format!("fedensemble needs K >= 2, got {k}")));
    }
    if windows.len() < k {
        return Err(Error::Partition(format!(
            "cannot split {} windows into {k} partitions",
            windows.len()
        )));
    }
    let required = MIN_SOURCES_PER_PARTITION.min(windows.len() / k);
    let mut worst = (0, 0);
    for attempt in 0..MAX_PARTITION_ATTEMPTS {
        let s = seed.wrapping_add(attempt);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        order.shuffle(&mut rng(derive_seed(s, &[stream::PARTITION])));
        let mut assign = vec![0; windows.len()];
        for (pos, &w) in order.iter().enumerate() {
            assign[w] = pos % k;
        }
        let (min, part) = min_sources(windows, &assign, k);
        if min >= required {
            return Ok(PartitionPlan {
                mode: PartitionMode::FedensembleIid,
                k,
                assignments: windows.iter().map(|w| w.id.clone()).zip(assign).collect(),
                seed_used: Some(s),
            });
        }
        worst = (min, part);
    }
    Err(Error::Partition(format!(
        "constraint `every partition draws from >= {required} source clients` \
         unsatisfiable after {MAX_PARTITION_ATTEMPTS} attempts (last: partition {} had {})",
        worst.1, worst.0
    )))
}
