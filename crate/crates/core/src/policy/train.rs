use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::net::ConvPolicy;
use super::Example;
use crate::error::{Error, Result};

pub fn cross_entropy_loss<E: Example>(model: &ConvPolicy, batch: &[E]) -> Result<f64> {
    model.loss(batch)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Stop once validation loss has not improved for this many epochs.
    pub patience: usize,
    pub max_epochs: usize,
    /// Seeds mini-batch shuffling.
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> TrainOptions {
        TrainOptions {
            batch_size: 256,
            learning_rate: AdamState::DEFAULT_LEARNING_RATE,
            patience: 3,
            max_epochs: 100,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean mini-batch loss per epoch.
    pub train_losses: Vec<f64>,
    pub valid_losses: Vec<f64>,
    /// 1-based epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    pub fn epochs(&self) -> usize {
        self.valid_losses.len()
    }

    pub fn best_valid_loss(&self) -> f64 {
        self.valid_losses[self.best_epoch - 1]
    }
}

/// Tracks the best validation loss and decides when to stop.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    epoch: usize,
    stale: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> EarlyStopping {
        EarlyStopping {
            patience: patience.max(1),
            best: f64::INFINITY,
            best_epoch: 0,
            epoch: 0,
            stale: 0,
        }
    }

    pub fn observe(&mut self, valid_loss: f64) -> Verdict {
        self.epoch += 1;
        if valid_loss < self.best {
            self.best = valid_loss;
            self.best_epoch = self.epoch;
            self.stale = 0;
            Verdict::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

fn mean_loss<E: Example>(model: &ConvPolicy, data: &[E], chunk: usize) -> Result<f64> {
    let mut total = 0.0;
    for c in data.chunks(chunk) {
        total += model.loss(c)? * c.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Mini-batch Adam training with early stopping on validation loss. The
/// model ends up holding the parameters of its best validation epoch.
pub fn train_epochs<E: Example>(
    model: &mut ConvPolicy,
    train: &[E],
    valid: &[E],
    opts: &TrainOptions,
) -> Result<TrainHistory> {
    if train.is_empty() {
        return Err(Error::Config("empty training buffer".into()));
    }
    if valid.is_empty() {
        return Err(Error::Config("empty validation buffer".into()));
    }
    if opts.batch_size == 0 || opts.max_epochs == 0 {
        return Err(Error::Config("batch size and max epochs must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut adam = AdamState::new(model.num_params(), opts.learning_rate);
    let mut stopper = EarlyStopping::new(opts.patience);
    let mut best_params = model.params().to_vec();
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut batch: Vec<&E> = Vec::with_capacity(opts.batch_size);

    for _ in 0..opts.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| &train[i]));
            let (loss, grads) = model.loss_and_gradients(&batch)?;
            adam.apply(model.params_mut(), &grads);
            epoch_loss += loss * chunk.len() as f64;
        }
        history.train_losses.push(epoch_loss / train.len() as f64);
        let v = mean_loss(model, valid, 1024)?;
        history.valid_losses.push(v);
        match stopper.observe(v) {
            Verdict::Improved => best_params.copy_from_slice(model.params()),
            Verdict::Continue => {}
            Verdict::Stop => break,
        }
    }
    model.params_mut().copy_from_slice(&best_params);
    history.best_epoch = stopper.best_epoch();
    Ok(history)
}

impl<E: Example> Example for &E {
    fn input(&self) -> std::borrow::Cow<'_, crate::samegame::EncodedBoard> {
        (*self).input()
    }

    fn target(&self) -> usize {
        (*self).target()
    }
}
