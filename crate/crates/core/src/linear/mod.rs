//! Linear SVM classifier over featurized users.

mod io;
mod solver;

use std::cmp::Ordering;

use crate::corpus::{Gender, UserRecord};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::features::{Featurizer, SparseVector};

pub use io::{load_model, save_model, FORMAT_VERSION};
pub use solver::{primal_objective, train, EpochStats, SvmSolution, TrainerConfig};

/// Trained weights together with the featurization they were trained on.
/// Positive decision values mean F, negative mean M.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub featurizer: Featurizer,
    pub trainer: TrainerConfig,
}

impl LinearModel {
    /// Fits a featurizer on `users`, then trains on their vectors.
    pub fn fit_users(
        spec: &crate::features::FeatureSpec,
        users: &[&UserRecord],
        cfg: &TrainerConfig,
        exec: Execution,
    ) -> Result<Self> {
        let featurizer = Featurizer::fit(spec, users, exec)?;
        let x = featurizer.transform_all(users, exec)?;
        let y: Vec<Gender> = users.iter().map(|u| u.gender).collect();
        Self::fit(featurizer, &x, &y, cfg)
    }

    pub fn fit(featurizer: Featurizer, x: &[SparseVector], y: &[Gender], cfg: &TrainerConfig) -> Result<Self> {
        let sol = train(x, y, featurizer.vocab.len(), cfg)?;
        Ok(LinearModel {
            weights: sol.weights,
            bias: sol.bias,
            featurizer,
            trainer: cfg.clone(),
        })
    }

    pub fn decision(&self, x: &SparseVector) -> Result<f64> {
        if let Some(i) = x.max_index() {
            if i >= self.weights.len() {
                return Err(Error::validation(format!(
                    "feature index {i} out of range for a model with {} features",
                    self.weights.len()
                )));
            }
        }
        Ok(x.dot(&self.weights) + self.bias)
    }

    /// F when the decision value is >= 0, so an exact tie goes to F.
    pub fn predict(&self, x: &SparseVector) -> Result<Gender> {
        Ok(if self.decision(x)? >= 0.0 { Gender::F } else { Gender::M })
    }

    pub fn predict_user(&self, user: &UserRecord) -> Result<Gender> {
        self.predict(&self.featurizer.transform(user)?)
    }

    /// The `k` most F-indicative and `k` most M-indicative features.
    pub fn top_features(&self, k: usize) -> (Vec<(String, f64)>, Vec<(String, f64)>) {
        let names = self.featurizer.vocab.features();
        let mut idx: Vec<usize> = (0..self.weights.len()).collect();
        let by = |desc: bool| {
            move |&a: &usize, &b: &usize| {
                let (wa, wb) = (self.weights[a], self.weights[b]);
                let ord = if desc { wb.total_cmp(&wa) } else { wa.total_cmp(&wb) };
                match ord {
                    Ordering::Equal => names[a].cmp(&names[b]),
                    o => o,
                }
            }
        };
        let take = |v: &[usize]| -> Vec<(String, f64)> {
            v.iter().take(k).map(|&i| (names[i].clone(), self.weights[i])).collect()
        };
        idx.sort_by(by(true));
        let female = take(&idx);
        idx.sort_by(by(false));
        let male = take(&idx);
        (female, male)
    }
}
