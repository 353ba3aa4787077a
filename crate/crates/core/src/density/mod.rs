//! Gaussian-mixture density classes: a marginal mixture for `Z` and a
//! neural conditional mixture for `Z | U`, both fit by likelihood
//! maximization with early stopping on held-out cross-entropy.

mod kernel;
mod marginal;
mod mixture;

pub use kernel::{conditional_loss_and_grad, fit_conditional_kernel, kernel_forward, KernelNetwork};
pub use marginal::fit_marginal_gm;
pub use mixture::{gm_log_density, GaussianMixtureParams};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Mixture components `C`.
    pub components: usize,
    /// Hidden layer widths of the conditional kernel network. `None` selects
    /// two layers of width `max(128, d_u)`.
    pub hidden_widths: Option<Vec<usize>>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub variance_floor: f64,
    pub seed: u64,
    /// Epochs without held-out improvement before stopping.
    pub patience: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            components: 8,
            hidden_widths: None,
            learning_rate: 1e-3,
            batch_size: 128,
            max_epochs: 200,
            variance_floor: 1e-6,
            seed: 0,
            patience: 10,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }

    pub fn hidden_for(&self, input_dim: usize) -> Vec<usize> {
        self.hidden_widths
            .clone()
            .unwrap_or_else(|| vec![input_dim.max(128); 2])
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("components", self.components),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::invalid(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor.is_finite()) {
            return Err(Error::invalid("variance_floor must be positive"));
        }
        if self.hidden_widths.as_ref().is_some_and(|h| h.contains(&0)) {
            return Err(Error::invalid("hidden widths must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Mean negative log-likelihood on the held-out rows, in nats, at the
    /// selected (best held-out) epoch.
    pub final_heldout_cross_entropy: f64,
    pub train_curve: Vec<f64>,
    pub heldout_curve: Vec<f64>,
    pub epochs_run: usize,
    pub seed: u64,
}

/// Minibatch loop with early stopping shared by the marginal and conditional
/// fits. `step` consumes one batch of train positions and returns the batch
/// mean loss; `eval` returns the held-out mean loss.
pub fn train_with_early_stopping<S: Clone>(
    state: &mut S,
    cfg: &TrainConfig,
    n_train: usize,
    rng: &mut Rng,
    mut step: impl FnMut(&mut S, &[usize]) -> f64,
    mut eval: impl FnMut(&S) -> f64,
) -> Result<FitReport> {
    let mut order: Vec<usize> = (0..n_train).collect();
    let mut best = eval(state);
    if !best.is_finite() {
        return Err(Error::Undefined("non-finite held-out loss at initialization"));
    }
    let mut best_state = state.clone();
    let mut since_best = 0;
    let mut train_curve = Vec::new();
    let mut heldout_curve = Vec::new();

    for _ in 0..cfg.max_epochs {
        order.shuffle(rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            total += step(state, batch) * batch.len() as f64;
        }
        let train_loss = total / n_train as f64;
        if !train_loss.is_finite() {
            return Err(Error::Undefined("non-finite training loss"));
        }
        train_curve.push(train_loss);

        let heldout = eval(state);
        heldout_curve.push(heldout);
        if heldout < best {
            best = heldout;
            best_state = state.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                break;
            }
        }
    }

    *state = best_state;
    Ok(FitReport {
        final_heldout_cross_entropy: best,
        epochs_run: train_curve.len(),
        train_curve,
        heldout_curve,
        seed: cfg.seed,
    })
}
