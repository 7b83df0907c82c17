use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Rmse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub n: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metric: Metric,
    pub value: f64,
    pub n_test: usize,
    /// Keyed by true label; empty for regression.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub per_class: BTreeMap<i64, ClassCounts>,
}

pub fn evaluate(predictions: &[f64], truth: &[f64], metric: Metric) -> Result<EvalReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} targets",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::InvalidInput("cannot evaluate on an empty test set".into()));
    }
    let n = truth.len();
    let mut per_class = BTreeMap::new();
    let value = match metric {
        Metric::Accuracy => {
            let mut correct = 0;
            for (p, t) in predictions.iter().zip(truth) {
                let hit = p == t;
                correct += usize::from(hit);
                let c = per_class.entry(*t as i64).or_insert(ClassCounts { n: 0, correct: 0 });
                c.n += 1;
                c.correct += usize::from(hit);
            }
            correct as f64 / n as f64
        }
        Metric::Rmse => {
            let mse = predictions.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n as f64;
            mse.sqrt()
        }
    };
    Ok(EvalReport {
        metric,
        value,
        n_test: n,
        per_class,
    })
}
