use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary classification summary; class 1 is the positive (cancer) class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierMetrics {
    /// `confusion[label][prediction]`.
    pub confusion: [[usize; 2]; 2],
    pub precision: [f64; 2],
    pub recall: [f64; 2],
    pub f1: [f64; 2],
    pub support: [usize; 2],
    pub weighted_f1: f64,
    pub accuracy: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

/// Undefined ratios (no predictions or no support for a class) count as 0.
pub fn classifier_metrics(predictions: &[usize], labels: &[usize]) -> Result<ClassifierMetrics> {
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions"));
    }
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut confusion = [[0usize; 2]; 2];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p > 1 || l > 1 {
            return Err(Error::invalid("labels must be binary"));
        }
        confusion[l][p] += 1;
    }
    let mut precision = [0.0; 2];
    let mut recall = [0.0; 2];
    let mut f1 = [0.0; 2];
    let mut support = [0usize; 2];
    for c in 0..2 {
        let tp = confusion[c][c];
        let predicted = confusion[0][c] + confusion[1][c];
        support[c] = confusion[c][0] + confusion[c][1];
        precision[c] = ratio(tp, predicted);
        recall[c] = ratio(tp, support[c]);
        f1[c] = ratio(2 * tp, predicted + support[c]);
    }
    let n = predictions.len() as f64;
    Ok(ClassifierMetrics {
        confusion,
        precision,
        recall,
        f1,
        support,
        weighted_f1: (support[0] as f64 * f1[0] + support[1] as f64 * f1[1]) / n,
        accuracy: (confusion[0][0] + confusion[1][1]) as f64 / n,
    })
}

impl ClassifierMetrics {
    pub fn csv_header() -> &'static str {
        "precision_pos,recall_pos,f1_pos,precision_neg,recall_neg,f1_neg,weighted_f1,accuracy,tn,fp,fn,tp"
    }

    pub fn csv_row(&self) -> String {
        let c = &self.confusion;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.precision[1],
            self.recall[1],
            self.f1[1],
            self.precision[0],
            self.recall[0],
            self.f1[0],
            self.weighted_f1,
            self.accuracy,
            c[0][0],
            c[0][1],
            c[1][0],
            c[1][1]
        )
    }
}
