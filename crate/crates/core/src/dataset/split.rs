//! Per-class stratified train/val/test split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClientDataset, GestureLabel, WindowSample};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.88,
            val: 0.06,
            test: 0.06,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !f.is_finite() || *f < 0.0) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::Config(format!(
                "split fractions must be non-negative and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    fn as_array(&self) -> [f64; 3] {
        [self.train, self.val, self.test]
    }
}

/// Counts for `n` items: floor each share, then hand the remainder out one
/// unit per split, empty splits first, otherwise train, val, test in order.
/// A positive fraction with a zero count ranks as empty; zero fractions never
/// receive remainder.
pub fn split_counts(n: usize, fractions: &SplitFractions) -> [usize; 3] {
    let f = fractions.as_array();
    // The epsilon absorbs representation error such as 0.06 * 50 = 3.0000000000000004.
    let mut counts = f.map(|x| ((x * n as f64) + 1e-9).floor() as usize);
    let assigned: usize = counts.iter().sum();
    let mut remainder = n.saturating_sub(assigned);
    let eligible: Vec<usize> = (0..3).filter(|&i| f[i] > 0.0).collect();
    let order: Vec<usize> = eligible
        .iter()
        .copied()
        .filter(|&i| counts[i] == 0)
        .chain(eligible.iter().copied().filter(|&i| counts[i] != 0))
        .collect();
    for i in order {
        if remainder == 0 {
            break;
        }
        counts[i] += 1;
        remainder -= 1;
    }
    counts
}

/// Splits one client's windows class by class after a seeded shuffle.
/// Classes with no windows are skipped with a warning.
pub fn stratified_split(
    client_id: &str,
    windows: Vec<WindowSample>,
    fractions: &SplitFractions,
    seed: u64,
) -> Result<(ClientDataset, Vec<String>)> {
    fractions.validate()?;
    let mut by_class: Vec<Vec<WindowSample>> = vec![Vec::new(); GestureLabel::ALL.len()];
    for w in windows {
        by_class[w.label.index()].push(w);
    }
    let mut rng = rng(seed);
    let mut out = ClientDataset {
        client_id: client_id.to_owned(),
        ..Default::default()
    };
    let mut warnings = Vec::new();
    for (label, mut items) in GestureLabel::ALL.into_iter().zip(by_class) {
        if items.is_empty() {
            warnings.push(format!("client {client_id}: class `{label}` has no windows; skipped"));
            continue;
        }
        items.shuffle(&mut rng);
        let [n_train, n_val, _] = split_counts(items.len(), fractions);
        let test = items.split_off(n_train + n_val);
        let val = items.split_off(n_train);
        out.train.extend(items);
        out.val.extend(val);
        out.test.extend(test);
    }
    Ok((out, warnings))
}

/// Stable per-client seed, independent of which other clients are present.
pub fn client_seed(seed: u64, client_id: &str) -> u64 {
    // FNV-1a over the id bytes.
    let h = client_id
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    derive_seed(seed, &[stream::SPLIT, h])
}

/// Groups windows by client (sorted by id) and splits each one.
pub fn split_by_client(
    windows: Vec<WindowSample>,
    fractions: &SplitFractions,
    seed: u64,
) -> Result<(Vec<ClientDataset>, Vec<String>)> {
    let mut groups: BTreeMap<String, Vec<WindowSample>> = BTreeMap::new();
    for w in windows {
        groups.entry(w.id.client.clone()).or_default().push(w);
    }
    let mut clients = Vec::with_capacity(groups.len());
    let mut warnings = Vec::new();
    for (id, ws) in groups {
        let (ds, warn) = stratified_split(&id, ws, fractions, client_seed(seed, &id))?;
        clients.push(ds);
        warnings.extend(warn);
    }
    Ok((clients, warnings))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_fractions_on_round_counts() {
        let f = SplitFractions::default();
        assert_eq!(split_counts(100, &f), [88, 6, 6]);
        assert_eq!(split_counts(50, &f), [44, 3, 3]);
    }

    #[test]
    fn remainder_fills_empty_splits_first() {
        let f = SplitFractions::default();
        // floor gives 8/0/0; the two leftover windows go to val and test.
        assert_eq!(split_counts(10, &f), [8, 1, 1]);
        assert_eq!(split_counts(1, &f), [1, 0, 0]);
        assert_eq!(split_counts(2, &f), [1, 1, 0]);
        assert_eq!(split_counts(20, &f), [18, 1, 1]);
    }

    #[test]
    fn zero_fraction_never_receives_items() {
        let f = SplitFractions {
            train: 0.9,
            val: 0.1,
            test: 0.0,
        };
        for n in 0..40 {
            let c = split_counts(n, &f);
            assert_eq!(c[2], 0);
            assert_eq!(c.iter().sum::<usize>(), n);
        }
    }

    #[test]
    fn bad_fractions_rejected() {
        let f = SplitFractions {
            train: 0.9,
            val: 0.2,
            test: 0.0,
        };
        assert!(f.validate().is_err());
    }
}
