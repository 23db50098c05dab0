//! Dual coordinate descent for the L2-regularized squared-hinge SVM.
//!
//! Minimizes `0.5*|w|^2 + C * sum_i max(0, 1 - y_i (w.x_i + b))^2` where the
//! bias is an extra always-one feature and is regularized like any weight.
//! The dual is `max_a sum_i a_i - 0.5 * a'(Q + D)a` with `a >= 0`,
//! `Q_ij = y_i y_j x_i.x_j` and `D = I/(2C)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Gender;
use crate::error::{Error, Result};
use crate::features::SparseVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainerConfig {
    /// Misclassification penalty.
    pub c: f64,
    /// Stop once the spread of projected gradients falls below this.
    pub tolerance: f64,
    pub max_epochs: usize,
    /// Seed for the per-epoch example order.
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            c: 1.0,
            tolerance: 1e-4,
            max_epochs: 1000,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::config(format!("C must be positive, got {}", self.c)));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_epochs == 0 {
            return Err(Error::config("max_epochs must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub primal: f64,
    pub dual: f64,
    /// Max minus min projected gradient seen during the epoch.
    pub pg_spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmSolution {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
    pub trace: Vec<EpochStats>,
}

impl SvmSolution {
    pub fn decision(&self, x: &SparseVector) -> f64 {
        x.dot(&self.weights) + self.bias
    }

    pub fn epochs(&self) -> usize {
        self.trace.len()
    }
}

/// Primal objective of `(weights, bias)` on the given data.
pub fn primal_objective(weights: &[f64], bias: f64, x: &[SparseVector], y: &[f64], c: f64) -> f64 {
    let reg = 0.5 * (weights.iter().map(|w| w * w).sum::<f64>() + bias * bias);
    let loss: f64 = x
        .iter()
        .zip(y)
        .map(|(xi, &yi)| {
            let m = 1.0 - yi * (xi.dot(weights) + bias);
            if m > 0.0 {
                m * m
            } else {
                0.0
            }
        })
        .sum();
    reg + c * loss
}

/// Trains on `x` with labels `y`; `dim` is the feature-space size.
pub fn train(x: &[SparseVector], y: &[Gender], dim: usize, cfg: &TrainerConfig) -> Result<SvmSolution> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(Error::validation(format!(
            "{} feature vectors but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::validation("training needs at least two examples"));
    }
    if !(y.contains(&Gender::F) && y.contains(&Gender::M)) {
        return Err(Error::validation("training data contains a single class"));
    }
    for xi in x {
        if !xi.is_finite() {
            return Err(Error::validation("non-finite feature value"));
        }
        if xi.max_index().is_some_and(|i| i >= dim) {
            return Err(Error::validation(format!("feature index out of range for dimension {dim}")));
        }
    }

    let ys: Vec<f64> = y.iter().map(|g| g.sign()).collect();
    let n = x.len();
    let diag = 0.5 / cfg.c;
    // squared norm of the augmented example, plus the dual diagonal
    let qd: Vec<f64> = x.iter().map(|xi| xi.norm_sq() + 1.0 + diag).collect();

    let mut alpha = vec![0.0f64; n];
    let mut w = vec![0.0f64; dim];
    let mut b = 0.0f64;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut trace = Vec::new();
    let mut converged = false;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        for &i in &order {
            let xi = &x[i];
            let yi = ys[i];
            let g = yi * (xi.dot(&w) + b) - 1.0 + diag * alpha[i];
            let pg = if alpha[i] == 0.0 { g.min(0.0) } else { g };
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg != 0.0 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).max(0.0);
                let step = (alpha[i] - old) * yi;
                if step != 0.0 {
                    for &(j, v) in xi.entries() {
                        w[j as usize] += step * v;
                    }
                    b += step;
                }
            }
        }
        let spread = pg_max - pg_min;
        let primal = primal_objective(&w, b, x, &ys, cfg.c);
        let dual = alpha.iter().sum::<f64>()
            - 0.5 * (w.iter().map(|v| v * v).sum::<f64>() + b * b)
            - 0.5 * diag * alpha.iter().map(|a| a * a).sum::<f64>();
        trace.push(EpochStats {
            epoch,
            primal,
            dual,
            pg_spread: spread,
        });
        if spread <= cfg.tolerance {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("SVM solver hit max_epochs={} before reaching tolerance", cfg.max_epochs);
    }
    Ok(SvmSolution {
        weights: w,
        bias: b,
        converged,
        trace,
    })
}
