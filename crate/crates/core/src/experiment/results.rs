use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::io::fmt_f64;
use crate::models::Metric;

use super::config::SeedPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestSet {
    Confounded,
    NonConfounded,
}

impl TestSet {
    pub const ALL: [TestSet; 2] = [TestSet::Confounded, TestSet::NonConfounded];

    pub fn name(self) -> &'static str {
        match self {
            TestSet::Confounded => "confounded",
            TestSet::NonConfounded => "non_confounded",
        }
    }
}

/// One metric value of one repeat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    pub mechanism_learning: bool,
    pub test_set: TestSet,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatRecord {
    pub repeat: usize,
    pub seeds: SeedPlan,
    pub cells: Vec<CellValue>,
    /// Side measurements (fitted slopes, boundary positions, weight diagnostics).
    pub extras: BTreeMap<String, f64>,
}

impl RepeatRecord {
    pub fn value(&self, mechanism_learning: bool, test_set: TestSet) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.mechanism_learning == mechanism_learning && c.test_set == test_set)
            .map(|c| c.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub dataset: String,
    pub model: String,
    pub mechanism_learning: bool,
    pub test_set: TestSet,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    pub name: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub config_hash: String,
    pub seeds: SeedPlan,
    pub tool_version: String,
    pub repeats: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub policy: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub rows: Vec<ResultRow>,
    pub extras: Vec<SummaryStat>,
    pub metadata: Metadata,
    pub repeats: Vec<RepeatRecord>,
}

/// Mean and sample standard deviation (0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ResultsTable {
    pub fn build(dataset: &str, model: &str, metric: Metric, metadata: Metadata, repeats: Vec<RepeatRecord>) -> Self {
        let mut rows = Vec::new();
        for ml in [false, true] {
            for test_set in TestSet::ALL {
                let values: Vec<f64> = repeats.iter().filter_map(|r| r.value(ml, test_set)).collect();
                let (mean, std) = mean_std(&values);
                rows.push(ResultRow {
                    dataset: dataset.into(),
                    model: model.into(),
                    mechanism_learning: ml,
                    test_set,
                    metric,
                    mean,
                    std,
                    n: values.len(),
                });
            }
        }
        let mut names: Vec<&String> = repeats.iter().flat_map(|r| r.extras.keys()).collect();
        names.sort();
        names.dedup();
        let extras = names
            .into_iter()
            .map(|name| {
                let values: Vec<f64> = repeats.iter().filter_map(|r| r.extras.get(name).copied()).collect();
                let (mean, std) = mean_std(&values);
                SummaryStat {
                    name: name.clone(),
                    mean,
                    std,
                    n: values.len(),
                }
            })
            .collect();
        ResultsTable {
            rows,
            extras,
            metadata,
            repeats,
        }
    }

    pub fn row(&self, mechanism_learning: bool, test_set: TestSet) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.mechanism_learning == mechanism_learning && r.test_set == test_set)
    }

    pub fn extra(&self, name: &str) -> Option<&SummaryStat> {
        self.extras.iter().find(|s| s.name == name)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("results serialize");
        s.push('\n');
        s
    }

    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let mut lines = vec![[
            "dataset".to_string(),
            "model".into(),
            "training".into(),
            "test set".into(),
            "metric".into(),
            "mean".into(),
            "std".into(),
        ]];
        for r in &self.rows {
            lines.push([
                r.dataset.clone(),
                r.model.clone(),
                if r.mechanism_learning { "mechanism" } else { "classical" }.into(),
                r.test_set.name().into(),
                metric_name(r.metric).into(),
                format!("{:.4}", r.mean),
                format!("{:.4}", r.std),
            ]);
        }
        let mut widths = [0usize; 7];
        for l in &lines {
            for (w, c) in widths.iter_mut().zip(l) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        for l in &lines {
            let cells: Vec<String> = l.iter().zip(widths).map(|(c, w)| format!("{c:<w$}")).collect();
            writeln!(out, "{}", cells.join("  ").trim_end()).unwrap();
        }
        if !self.extras.is_empty() {
            writeln!(out).unwrap();
            let w = self.extras.iter().map(|s| s.name.len()).max().unwrap_or(0);
            for s in &self.extras {
                writeln!(out, "{:<w$}  {:.4}  {:.4}", s.name, s.mean, s.std).unwrap();
            }
        }
        let m = &self.metadata;
        writeln!(
            out,
            "\n{} repeats, n_train {}, n_test {}, policy {}, config {}",
            m.repeats,
            m.n_train,
            m.n_test,
            m.policy,
            &m.config_hash[..12]
        )
        .unwrap();
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("dataset,model,mechanism_learning,test_set,metric,mean,std,n\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.dataset,
                r.model,
                r.mechanism_learning,
                r.test_set.name(),
                metric_name(r.metric),
                fmt_f64(r.mean),
                fmt_f64(r.std),
                r.n
            )
            .unwrap();
        }
        out
    }

    /// One line per repeat and cell.
    pub fn per_repeat_csv(&self) -> String {
        let mut out = String::from("repeat,mechanism_learning,test_set,value\n");
        for rep in &self.repeats {
            for c in &rep.cells {
                writeln!(
                    out,
                    "{},{},{},{}",
                    rep.repeat,
                    c.mechanism_learning,
                    c.test_set.name(),
                    fmt_f64(c.value)
                )
                .unwrap();
            }
        }
        out
    }
}

fn metric_name(m: Metric) -> &'static str {
    match m {
        Metric::Accuracy => "accuracy",
        Metric::Rmse => "rmse",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    }
}
