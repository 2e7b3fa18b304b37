use crate::dataset::WindowSample;
use crate::error::{Error, Result};

/// `batch` sequences of `seq_len` steps × `features`, stored sample-major
/// (`[b][t][f]`), with optional class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    batch: usize,
    seq_len: usize,
    features: usize,
    data: Vec<f64>,
    labels: Option<Vec<usize>>,
}

impl SequenceBatch {
    pub fn new(
        batch: usize,
        seq_len: usize,
        features: usize,
        data: Vec<f64>,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        if batch == 0 || seq_len == 0 || features == 0 {
            return Err(Error::dim(format!(
                "empty batch shape [{batch}, {seq_len}, {features}]"
            )));
        }
        if data.len() != batch * seq_len * features {
            return Err(Error::dim(format!(
                "batch [{batch}, {seq_len}, {features}] needs {} values, got {}",
                batch * seq_len * features,
                data.len()
            )));
        }
        if let Some(l) = &labels {
            if l.len() != batch {
                return Err(Error::dim(format!("{batch} sequences but {} labels", l.len())));
            }
        }
        Ok(Self {
            batch,
            seq_len,
            features,
            data,
            labels,
        })
    }

    /// Stacks windows in the given order, labels included.
    pub fn from_windows<'a>(windows: impl IntoIterator<Item = &'a WindowSample>) -> Result<Self> {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for w in windows {
            data.extend_from_slice(&w.coords);
            labels.push(w.label.index());
        }
        Self::new(
            labels.len(),
            crate::dataset::WINDOW_LEN,
            crate::dataset::FRAME_DIM,
            data,
            Some(labels),
        )
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn features(&self) -> usize {
        self.features
    }

    /// Sample-major values `[b][t][f]`.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    /// Same values re-laid out time-major, `[t][b][f]`.
    pub fn time_major(&self) -> Vec<f64> {
        let (b, t, f) = (self.batch, self.seq_len, self.features);
        let mut out = vec![0.0; self.data.len()];
        for i in 0..b {
            for s in 0..t {
                let src = (i * t + s) * f;
                let dst = (s * b + i) * f;
                out[dst..dst + f].copy_from_slice(&self.data[src..src + f]);
            }
        }
        out
    }
}
