use serde::{Deserialize, Serialize};

use crate::dataset::{GestureLabel, WindowSample, NUM_CLASSES};
use crate::error::{Error, Result};
use crate::models::{prediction_from_logits, Classifier, Prediction};
use crate::nn::ops::softmax_cross_entropy;

/// Rows are true classes, columns predicted classes, both in canonical order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn record(&mut self, truth: GestureLabel, predicted: GestureLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    /// trace / total; 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.correct() as f64 / total as f64
        }
    }

    /// Recall per true class; `None` where the class has no samples.
    pub fn per_class_accuracy(&self) -> [Option<f64>; NUM_CLASSES] {
        std::array::from_fn(|i| {
            let row: u64 = self.counts[i].iter().sum();
            (row > 0).then(|| self.counts[i][i] as f64 / row as f64)
        })
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (a, b) in self.counts.iter_mut().flatten().zip(other.counts.iter().flatten()) {
            *a += b;
        }
    }

    /// CSV with a header row of predicted classes and one row per true class.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for l in GestureLabel::ALL {
            out.push(',');
            out.push_str(l.name());
        }
        out.push('\n');
        for (l, row) in GestureLabel::ALL.iter().zip(&self.counts) {
            out.push_str(l.name());
            for c in row {
                out.push_str(&format!(",{c}"));
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

/// Scores `windows` with `classifier`, keeping each window's prediction.
pub fn evaluate_detailed(
    classifier: &dyn Classifier,
    windows: &[WindowSample],
) -> Result<(EvalResult, Vec<Prediction>)> {
    if windows.is_empty() {
        return Err(Error::Evaluation("cannot evaluate on an empty dataset".into()));
    }
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let logits = classifier.logits(&refs)?;
    let mut confusion = ConfusionMatrix::default();
    let mut predictions = Vec::with_capacity(windows.len());
    let mut loss = 0.0;
    for (i, w) in windows.iter().enumerate() {
        let row = logits.row(i);
        loss += softmax_cross_entropy(row, w.label.index())?;
        let p = prediction_from_logits(row)?;
        confusion.record(w.label, p.label);
        predictions.push(p);
    }
    let result = EvalResult {
        samples: windows.len(),
        loss: loss / windows.len() as f64,
        accuracy: confusion.accuracy(),
        confusion,
    };
    Ok((result, predictions))
}

/// Mean cross-entropy, top-1 accuracy and confusion matrix.
pub fn evaluate(classifier: &dyn Classifier, windows: &[WindowSample]) -> Result<EvalResult> {
    evaluate_detailed(classifier, windows).map(|(r, _)| r)
}
