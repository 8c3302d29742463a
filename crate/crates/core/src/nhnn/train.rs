use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{zero_grads, DcnnArch, DcnnModel};
use crate::dataio::{fit_norm_stats, Corpus};
use crate::error::{Error, Result};
use crate::neural::{Adam, AdamConfig, Checkpoint, Parameterized, Tensor};
use crate::scalar::argmax;

/// RNG stream ids derived from one seed.
pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_SPLIT: u64 = 1;
pub(crate) const STREAM_SHUFFLE: u64 = 2;

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            batch_size: 64,
            learning_rate: 1e-4,
            patience: 5,
            max_epochs: 50,
            validation_fraction: 0.25,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience and max_epochs must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config("validation_fraction must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub n_train: usize,
    pub n_val: usize,
    pub epochs: Vec<EpochRecord>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// A network trainable by [`fit`]: per-example loss and gradient plus a
/// validation score.
pub(crate) trait Trainable: Parameterized<f64> + Clone {
    type Sample;

    /// Adds `scale ·` the gradient of the example's training loss to `grads`
    /// and returns that loss (unscaled).
    fn accumulate(&self, s: &Self::Sample, scale: f64, grads: &mut [Tensor<f64>]) -> Result<f64>;

    /// Validation loss and class probabilities for one example.
    fn validate_one(&self, s: &Self::Sample) -> Result<(f64, Vec<f64>)>;

    fn label(s: &Self::Sample) -> usize;

    /// Per-tensor freeze flags, in `params_mut` order.
    fn frozen(&self) -> Vec<bool> {
        vec![false; self.named_params().len()]
    }
}

/// Seeded random split of `0..n` into (train, validation), both sorted.
pub(crate) fn split_validation(n: usize, fraction: f64, seed: u64, stream: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::domain(format!("need at least 2 examples to split off validation data, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream_rng(seed, stream));
    let n_val = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Mini-batch Adam with early stopping on validation loss. Returns the
/// parameters from the epoch with the lowest validation loss.
pub(crate) fn fit<M: Trainable>(
    mut model: M,
    train: &[M::Sample],
    val: &[M::Sample],
    cfg: &TrainingConfig,
    shuffle_stream: u64,
) -> Result<(M, TrainLog)> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::domain("training and validation sets must be nonempty"));
    }
    let frozen = model.frozen();
    let mut adam = Adam::new(AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    });
    let mut rng = stream_rng(cfg.seed, shuffle_stream);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = Checkpoint::capture(&model);
    let mut log = TrainLog {
        n_train: train.len(),
        n_val: val.len(),
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
        stopped_early: false,
    };
    let mut stale = 0;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = zero_grads(&model);
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                train_loss += model.accumulate(&train[i], scale, &mut grads)?;
            }
            adam.step(&mut model.params_mut(), &grads, &frozen);
        }
        train_loss /= train.len() as f64;

        let (mut val_loss, mut correct) = (0.0, 0usize);
        for s in val {
            let (loss, probs) = model.validate_one(s)?;
            val_loss += loss;
            correct += usize::from(argmax(&probs) == M::label(s));
        }
        val_loss /= val.len() as f64;
        if !val_loss.is_finite() || !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("loss at epoch {epoch}")));
        }
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_accuracy: correct as f64 / val.len() as f64,
        });
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = Checkpoint::capture(&model);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    best.restore(&mut model)?;
    Ok((model, log))
}

/// A normalized utterance with its class and auxiliary label.
#[derive(Debug, Clone)]
pub(crate) struct FrameSample {
    pub x: Vec<f64>,
    pub len: usize,
    pub label: usize,
    pub aux: usize,
}

/// Labels of every utterance, warning when only one class is present.
pub(crate) fn corpus_labels(corpus: &Corpus, n_class: usize) -> Result<Vec<usize>> {
    if corpus.is_empty() {
        return Err(Error::domain("training corpus is empty"));
    }
    let labels: Vec<usize> = corpus.labels()?.into_iter().map(|l| l.index()).collect();
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_class) {
        return Err(Error::domain(format!("label {bad} outside 0..{n_class}")));
    }
    if labels.iter().all(|&l| l == labels[0]) {
        log::warn!("training corpus {} holds a single class", corpus.name);
    }
    Ok(labels)
}

pub(crate) fn frame_samples(model: &DcnnModel<f64>, corpus: &Corpus, labels: &[usize], aux: &[usize]) -> Result<Vec<FrameSample>> {
    corpus
        .utterances
        .iter()
        .zip(labels)
        .zip(aux)
        .map(|((u, &label), &aux)| {
            let (x, len) = model.prepare(u)?;
            Ok(FrameSample { x, len, label, aux })
        })
        .collect()
}

pub(crate) fn pick<T: Clone>(items: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| items[i].clone()).collect()
}

impl Trainable for DcnnModel<f64> {
    type Sample = FrameSample;

    fn accumulate(&self, s: &FrameSample, scale: f64, grads: &mut [Tensor<f64>]) -> Result<f64> {
        self.accumulate_grads(&s.x, s.len, s.label, scale, grads, [false, false])
    }

    fn validate_one(&self, s: &FrameSample) -> Result<(f64, Vec<f64>)> {
        let p = self.forward(&s.x, s.len)?;
        Ok((crate::neural::cross_entropy(&p, s.label)?, p))
    }

    fn label(s: &FrameSample) -> usize {
        s.label
    }
}

/// Trains the dilated CNN on every utterance of `corpus`, holding out a
/// seeded random `validation_fraction` for early stopping. Frame statistics
/// are fitted on the whole training corpus.
pub fn train_base_dcnn(corpus: &Corpus, arch: &DcnnArch, cfg: &TrainingConfig) -> Result<(DcnnModel<f64>, TrainLog)> {
    cfg.validate()?;
    arch.validate()?;
    let labels = corpus_labels(corpus, arch.n_class)?;
    let mut model = DcnnModel::new(arch, &mut stream_rng(cfg.seed, STREAM_INIT))?;
    let utts: Vec<_> = corpus.utterances.iter().collect();
    model.frame_norm = Some(fit_norm_stats(&utts)?);
    let samples = frame_samples(&model, corpus, &labels, &vec![0; labels.len()])?;
    let (tr, va) = split_validation(samples.len(), cfg.validation_fraction, cfg.seed, STREAM_SPLIT)?;
    fit(model, &pick(&samples, &tr), &pick(&samples, &va), cfg, STREAM_SHUFFLE)
}
