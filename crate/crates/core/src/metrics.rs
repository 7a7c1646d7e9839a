//! Confusion-matrix based precision, recall and F1.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square confusion matrix, `counts[gold][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            counts: vec![vec![0; num_classes]; num_classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<usize>>) -> Result<Self> {
        let n = counts.len();
        if counts.iter().any(|row| row.len() != n) {
            return Err(Error::InvalidConfig(
                "confusion matrix must be square".into(),
            ));
        }
        Ok(Self { counts })
    }

    pub fn from_labels(num_classes: usize, gold: &[usize], predicted: &[usize]) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::InvalidConfig(
                "gold and predicted lengths differ".into(),
            ));
        }
        let mut m = Self::new(num_classes);
        for (&g, &p) in gold.iter().zip(predicted) {
            if g >= num_classes || p >= num_classes {
                return Err(Error::InvalidConfig(format!(
                    "class index out of range ({g}, {p})"
                )));
            }
            m.record(g, p);
        }
        Ok(m)
    }

    pub fn record(&mut self, gold: usize, predicted: usize) {
        self.counts[gold][predicted] += 1;
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn class_metrics(&self, class: usize) -> ClassMetrics {
        let tp = self.counts[class][class];
        let support: usize = self.counts[class].iter().sum();
        let predicted: usize = self.counts.iter().map(|row| row[class]).sum();
        let (fp, fn_) = (predicted - tp, support - tp);
        ClassMetrics {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            support,
            predicted,
        }
    }

    pub fn per_class(&self) -> Vec<ClassMetrics> {
        (0..self.num_classes())
            .map(|c| self.class_metrics(c))
            .collect()
    }

    /// Unweighted mean F1 over classes that occur in gold or predictions.
    pub fn macro_f1(&self) -> Result<f64> {
        macro_f1(self)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Classes absent from both gold labels and predictions are left out of the
/// mean; a class with gold examples but no predictions scores F1 = 0.
pub fn macro_f1(confusion: &ConfusionMatrix) -> Result<f64> {
    if confusion.total() == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let present: Vec<f64> = confusion
        .per_class()
        .into_iter()
        .filter(|m| m.support > 0 || m.predicted > 0)
        .map(|m| m.f1)
        .collect();
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}
