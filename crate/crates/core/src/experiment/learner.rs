use serde_json::Value;

use crate::data::{Matrix, ObservationalDataset};
use crate::error::Result;
use crate::models::{evaluate, train_linear_svm, train_ols, EvalReport, KnnModel, LinearModel, Standardizer};

use super::config::{ModelKind, ModelSpec};

#[derive(Debug, Clone)]
pub enum Learner {
    Linear(LinearModel),
    Knn(KnnModel),
}

/// A fitted learner plus the feature scaling it was trained under.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub standardizer: Option<Standardizer>,
    pub learner: Learner,
}

impl TrainedModel {
    pub fn fit(kind: ModelKind, spec: &ModelSpec, train: &ObservationalDataset, seed: u64) -> Result<Self> {
        let standardizer = if spec.standardize {
            Some(Standardizer::fit(&train.x)?)
        } else {
            None
        };
        let scaled;
        let x = match &standardizer {
            Some(s) => {
                scaled = s.apply(&train.x)?;
                &scaled
            }
            None => &train.x,
        };
        let learner = match kind {
            ModelKind::Svm => Learner::Linear(train_linear_svm(x, &train.y, &spec.svm_params(), seed)?),
            ModelKind::Ols => Learner::Linear(train_ols(x, &train.y)?),
            ModelKind::Knn => Learner::Knn(KnnModel::new(spec.k, x.clone(), &train.y)?),
        };
        Ok(TrainedModel {
            kind,
            standardizer,
            learner,
        })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let scaled;
        let x = match &self.standardizer {
            Some(s) => {
                scaled = s.apply(x)?;
                &scaled
            }
            None => x,
        };
        match &self.learner {
            Learner::Linear(m) => m.predict(x),
            Learner::Knn(m) => m.predict(x),
        }
    }

    pub fn evaluate(&self, test: &ObservationalDataset) -> Result<EvalReport> {
        evaluate(&self.predict(&test.x)?, &test.y, self.kind.metric())
    }

    pub fn linear(&self) -> Option<&LinearModel> {
        match &self.learner {
            Learner::Linear(m) => Some(m),
            Learner::Knn(_) => None,
        }
    }

    pub fn to_json(&self) -> Result<Value> {
        let mut v = match &self.learner {
            Learner::Linear(m) => serde_json::to_value(m)?,
            Learner::Knn(m) => serde_json::to_value(m.reference())?,
        };
        if let (Some(s), Value::Object(map)) = (&self.standardizer, &mut v) {
            map.insert("standardizer".into(), serde_json::to_value(s)?);
        }
        Ok(v)
    }
}
