//! Epoch loop: augmented shuffled training pass with dropout, a deterministic
//! validation pass, then one plateau-schedule update per epoch.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::datapipe::{batches, AugmentConfig, BatchPlan, ImageSet};
use crate::error::{Error, Result};
use crate::layers::{Mode, Network};
use crate::metrics::DEFAULT_THRESHOLD;
use crate::optim::{bce_loss, clamp_probability, AdamConfig, AdamState, PlateauConfig, PlateauState};
use crate::rng::{streams, Prng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub augment: AugmentConfig,
    pub adam: AdamConfig,
    pub plateau: PlateauConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 20,
            batch_size: 32,
            learning_rate: 0.001,
            seed: 0,
            augment: AugmentConfig::default(),
            adam: AdamConfig::default(),
            plateau: PlateauConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.augment.validate()?;
        self.adam.validate()?;
        self.plateau.validate()
    }

    /// Initial weights drawn from the run seed.
    pub fn init_rng(&self) -> Prng {
        Prng::derive(self.seed, &[streams::INIT])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    /// Rate used for every step of this epoch.
    pub learning_rate: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,train_acc,val_loss,val_acc,lr\n");
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.learning_rate
            )
            .expect("write to string");
        }
        out
    }
}

/// Loss and accuracy of one full pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PassStats {
    pub loss: f64,
    pub accuracy: f64,
}

fn count_correct<T: Scalar>(probs: &[T], labels: &[T]) -> usize {
    probs
        .iter()
        .zip(labels)
        .filter(|(p, y)| (p.to_f64_lossy() >= DEFAULT_THRESHOLD) == (y.to_f64_lossy() == 1.0))
        .count()
}

/// Owns the network and optimizer state across epochs.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    network: Network<T>,
    adam: AdamState<T>,
    plateau: PlateauState,
    config: TrainConfig,
    history: History,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(network: Network<T>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let adam = AdamState::new(network.params(), config.learning_rate, config.adam)?;
        let plateau = PlateauState::new(config.learning_rate, config.plateau)?;
        Ok(Trainer {
            network,
            adam,
            plateau,
            config,
            history: History::default(),
        })
    }

    pub fn network(&self) -> &Network<T> {
        &self.network
    }

    pub fn adam(&self) -> &AdamState<T> {
        &self.adam
    }

    pub fn plateau(&self) -> &PlateauState {
        &self.plateau
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    pub fn into_parts(self) -> (Network<T>, AdamState<T>, History) {
        (self.network, self.adam, self.history)
    }

    /// One optimization pass over `train` at the current learning rate.
    pub fn train_pass(&mut self, train: &ImageSet<T>) -> Result<PassStats> {
        let epoch = self.epochs_done();
        let plan = BatchPlan::training(self.config.batch_size, self.config.augment);
        self.adam.learning_rate = self.plateau.learning_rate;
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0usize, 0usize);
        for (b, batch) in batches(train, plan, self.config.seed, epoch as u64)?.enumerate() {
            let batch = batch?;
            let mut rng = Prng::derive(self.config.seed, &[streams::DROPOUT, epoch as u64, b as u64]);
            let (probs, cache) = self.network.forward(&batch.images, Mode::Train, &mut rng)?;
            let numeric = |what: &str| Error::Numeric {
                epoch: epoch + 1,
                batch: b,
                what: what.to_string(),
            };
            if !probs.is_finite() {
                return Err(numeric("network output"));
            }
            let (loss, grad) = bce_loss(&probs, &batch.labels)?;
            if !loss.is_finite() {
                return Err(numeric("training loss"));
            }
            let grads = self.network.backward(&cache, &grad)?;
            if grads.iter().any(|g| !g.is_finite()) {
                return Err(numeric("parameter gradient"));
            }
            self.adam.step(&mut self.network.params_mut(), &grads)?;
            let n = batch.indices.len();
            loss_sum += loss * n as f64;
            correct += count_correct(probs.data(), batch.labels.data());
            seen += n;
        }
        Ok(PassStats {
            loss: loss_sum / seen as f64,
            accuracy: correct as f64 / seen as f64,
        })
    }

    /// Full training epoch: train pass, validation pass, schedule update.
    pub fn run_epoch(&mut self, train: &ImageSet<T>, val: &ImageSet<T>) -> Result<EpochRecord> {
        let learning_rate = self.plateau.learning_rate;
        let t = self.train_pass(train)?;
        let v = evaluate_loss(&self.network, val, self.config.batch_size)?;
        self.plateau.update(v.loss);
        let record = EpochRecord {
            epoch: self.epochs_done() + 1,
            train_loss: t.loss,
            train_accuracy: t.accuracy,
            val_loss: v.loss,
            val_accuracy: v.accuracy,
            learning_rate,
        };
        self.history.records.push(record);
        Ok(record)
    }
}

/// Trains for `config.epochs` epochs, calling `on_epoch` after each one.
pub fn train_with<T: Scalar>(
    network: Network<T>,
    train: &ImageSet<T>,
    val: &ImageSet<T>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&Trainer<T>, &EpochRecord) -> Result<()>,
) -> Result<Trainer<T>> {
    let mut trainer = Trainer::new(network, *config)?;
    for _ in 0..config.epochs {
        let record = trainer.run_epoch(train, val)?;
        on_epoch(&trainer, &record)?;
    }
    Ok(trainer)
}

pub fn train<T: Scalar>(
    network: Network<T>,
    train: &ImageSet<T>,
    val: &ImageSet<T>,
    config: &TrainConfig,
) -> Result<(Network<T>, History)> {
    let (network, _, history) = train_with(network, train, val, config, |_, _| Ok(()))?.into_parts();
    Ok((network, history))
}

/// Per-item probabilities (clamped like the loss) in dataset order, with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Scores {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

pub fn evaluate<T: Scalar>(network: &Network<T>, set: &ImageSet<T>, batch_size: usize) -> Result<Scores> {
    let mut scores = Vec::with_capacity(set.len());
    for batch in batches(set, BatchPlan::inference(batch_size), 0, 0)? {
        let probs = network.predict(&batch?.images)?;
        scores.extend(probs.data().iter().map(|p| clamp_probability(p.to_f64_lossy())));
    }
    Ok(Scores {
        scores,
        labels: set.labels().iter().map(|l| l.as_u8()).collect(),
    })
}

/// Mean BCE and accuracy of an eval-mode pass.
pub fn evaluate_loss<T: Scalar>(network: &Network<T>, set: &ImageSet<T>, batch_size: usize) -> Result<PassStats> {
    let (mut loss_sum, mut correct) = (0.0, 0usize);
    for batch in batches(set, BatchPlan::inference(batch_size), 0, 0)? {
        let batch = batch?;
        let probs = network.predict(&batch.images)?;
        let (loss, _) = bce_loss(&probs, &batch.labels)?;
        loss_sum += loss * batch.indices.len() as f64;
        correct += count_correct(probs.data(), batch.labels.data());
    }
    Ok(PassStats {
        loss: loss_sum / set.len() as f64,
        accuracy: correct as f64 / set.len() as f64,
    })
}
