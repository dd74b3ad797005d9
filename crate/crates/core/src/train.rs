//! Plain gradient descent on the synthetic task.

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::Model;
use crate::params::ParamSet;
use crate::pipeline::{batch_loss, batch_loss_and_grad};
use crate::task::SyntheticTask;

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Loss before each step plus the final loss; length `steps + 1`.
    pub losses: Vec<f64>,
    pub model: Model,
}

impl TrainReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().expect("at least one loss")
    }

    pub fn reduction(&self) -> f64 {
        self.final_loss() / self.initial_loss()
    }
}

/// Full-batch gradient descent for `config.steps` steps at
/// `config.learning_rate`, diverging with an error if the loss goes
/// non-finite or exceeds ten times the initial loss.
pub fn train_toy(task: &SyntheticTask, config: &RunConfig) -> Result<TrainReport> {
    config.validate()?;
    let mut model = Model::new(config, config.seed)?;
    let mut losses = Vec::with_capacity(config.steps + 1);
    let mut initial = None;
    for step in 0..config.steps {
        model.zero_grads();
        let loss = batch_loss_and_grad(&mut model, &task.examples)?;
        let init = *initial.get_or_insert(loss);
        if !loss.is_finite() || loss > 10.0 * init {
            return Err(Error::DivergedLoss { step, loss });
        }
        losses.push(loss);
        model.sgd_step(config.learning_rate);
    }
    let final_loss = batch_loss(&model, &task.examples)?;
    if let Some(init) = initial {
        if !final_loss.is_finite() || final_loss > 10.0 * init {
            return Err(Error::DivergedLoss {
                step: config.steps,
                loss: final_loss,
            });
        }
    }
    losses.push(final_loss);
    Ok(TrainReport { losses, model })
}
