//! SGD training with learning-rate decay on dev stagnation and early
//! stopping by dev BLEU.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, CorpusError, Tokens, Vocabulary};
use crate::evalkit::{averaged_individual_bleu, EvalError};
use crate::par::Exec;
use crate::seq2seq::{make_example, param_gradients, Example, ModelConfig, ModelError, ModelParams, Rephraser, Translator};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training split is empty")]
    EmptyTrain,
    #[error("dev split is empty")]
    EmptyDev,
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs before stopping.
    pub patience: usize,
    pub clip_norm: f64,
    pub seed: u64,
    /// Stop as soon as dev BLEU reaches this value.
    pub stop_at: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 1.0,
            decay_factor: 0.5,
            batch_size: 64,
            max_epochs: 30,
            patience: 5,
            clip_norm: 5.0,
            seed: 0,
            stop_at: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.to_string()));
        if !(self.initial_lr > 0.0) {
            return bad("initial_lr must be positive");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return bad("decay_factor must lie in (0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 || self.max_epochs == 0 {
            return bad("batch_size and max_epochs must be positive");
        }
        if !(self.clip_norm > 0.0) {
            return bad("clip_norm must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Improved,
    Decayed,
    Stop,
}

/// Learning-rate and early-stopping bookkeeping, fed one dev score per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    lr: f64,
    decay: f64,
    patience: usize,
    best: Option<(usize, f64)>,
    bad_epochs: usize,
    epoch: usize,
}

impl Schedule {
    pub fn new(initial_lr: f64, decay: f64, patience: usize) -> Self {
        Self {
            lr: initial_lr,
            decay,
            patience,
            best: None,
            bad_epochs: 0,
            epoch: 0,
        }
    }

    /// Continues after `epoch` completed epochs with learning rate `lr`.
    /// The bad-epoch counter restarts at zero.
    pub fn resume(lr: f64, decay: f64, patience: usize, epoch: usize, best: Option<f64>) -> Self {
        Self {
            lr,
            decay,
            patience,
            best: best.map(|b| (epoch, b)),
            bad_epochs: 0,
            epoch,
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// `(epoch, score)` of the best evaluation so far, epochs counted from 1.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }

    pub fn observe(&mut self, score: f64) -> Verdict {
        self.epoch += 1;
        if self.best.is_none_or(|(_, b)| score > b) {
            self.best = Some((self.epoch, score));
            self.bad_epochs = 0;
            return Verdict::Improved;
        }
        self.lr *= self.decay;
        self.bad_epochs += 1;
        if self.bad_epochs >= self.patience {
            Verdict::Stop
        } else {
            Verdict::Decayed
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Token-weighted mean NLL over the epoch.
    pub train_loss: f64,
    pub dev_bleu: f64,
    /// Learning rate used during the epoch.
    pub lr: f64,
    pub verdict: Verdict,
    pub instances: usize,
    /// Left out of serialized logs so reruns compare byte for byte.
    #[serde(skip, default)]
    pub wall_secs: f64,
}

impl EpochRecord {
    /// Learning rate the schedule hands to the following epoch.
    pub fn next_lr(&self, decay: f64) -> f64 {
        match self.verdict {
            Verdict::Improved => self.lr,
            _ => self.lr * decay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
    TargetReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_dev_bleu: f64,
    pub stop: StopReason,
}

impl TrainLog {
    pub fn to_jsonl(&self) -> String {
        self.epochs
            .iter()
            .map(|e| serde_json::to_string(e).expect("epoch record serializes") + "\n")
            .collect()
    }

    pub fn to_table(&self) -> String {
        let mut s = format!("{:>5} {:>10} {:>8} {:>10} {:>9}\n", "epoch", "loss", "dev", "lr", "secs");
        for e in &self.epochs {
            let mark = if e.epoch == self.best_epoch { " *" } else { "" };
            s.push_str(&format!(
                "{:>5} {:>10.4} {:>8.2} {:>10.6} {:>9.1}{mark}\n",
                e.epoch, e.train_loss, e.dev_bleu, e.lr, e.wall_secs
            ));
        }
        s
    }
}

pub struct TrainOutcome {
    /// Parameters of the best dev epoch.
    pub model: Translator,
    pub log: TrainLog,
}

/// Fresh model over a vocabulary built from the training split.
pub fn new_model(train: &Corpus, mut config: ModelConfig, min_count: usize, seed: u64) -> Result<Translator, TrainError> {
    let vocab = Vocabulary::build(train, min_count)?;
    config.vocab_size = vocab.len();
    let params = ModelParams::init(&config, seed);
    Ok(Translator::new(config, params, vocab)?)
}

/// One example per (complex sentence, reference) pair.
pub fn training_examples(train: &Corpus, vocab: &Vocabulary) -> Vec<Example> {
    train.instances().map(|(c, r)| make_example(vocab, c, &r)).collect()
}

/// Shuffled, then grouped by source length inside pools of several batches;
/// the batch order is shuffled again afterwards.
pub fn epoch_batches(examples: &[Example], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    const POOL: usize = 8;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let mut batches = Vec::new();
    for pool in order.chunks(batch_size * POOL) {
        let mut pool = pool.to_vec();
        pool.sort_by_key(|&i| examples[i].source.len());
        batches.extend(pool.chunks(batch_size).map(<[usize]>::to_vec));
    }
    batches.shuffle(rng);
    batches
}

fn sgd_step(params: &mut ModelParams, mut grads: ModelParams, lr: f64, clip: f64) {
    let norm = grads.l2_norm();
    if norm > clip {
        grads.scale(clip / norm);
    }
    params.add_scaled(&grads, -lr);
}

/// Decodes every dev complex sentence and returns averaged individual
/// multi-reference BLEU.
pub fn evaluate_with(model: &dyn Rephraser, dev: &Corpus, exec: Exec) -> Result<f64, TrainError> {
    if dev.is_empty() {
        return Err(TrainError::EmptyDev);
    }
    let preds: Vec<Tokens> = exec.map(&dev.entries, |e| model.rephrase(&e.complex));
    let refs: Vec<Vec<Tokens>> = dev.entries.iter().map(|e| e.joined_references()).collect();
    Ok(averaged_individual_bleu(&preds, &refs)?)
}

pub fn evaluate_checkpoint(model: &Translator, dev: &Corpus, beam: usize) -> Result<f64, TrainError> {
    evaluate_with(&model.with_beam(beam), dev, Exec::default())
}

/// Runs SGD epochs until patience runs out, `max_epochs` is reached or the
/// dev score hits `stop_at`. `on_epoch` sees every record together with the
/// current model, after the dev evaluation.
pub fn train(
    model: Translator,
    train: &Corpus,
    dev: &Corpus,
    tcfg: &TrainConfig,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Translator),
) -> Result<TrainOutcome, TrainError> {
    train_from(model, train, dev, tcfg, None, on_epoch)
}

/// Where an interrupted run left off.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resume {
    /// Last completed epoch.
    pub epoch: usize,
    /// Learning rate for the next epoch.
    pub lr: f64,
    pub best_dev: Option<f64>,
}

/// [`train`], optionally continuing a previous run. Epoch numbering and the
/// per-epoch shuffles carry on from `resume.epoch`.
pub fn train_from(
    mut model: Translator,
    train: &Corpus,
    dev: &Corpus,
    tcfg: &TrainConfig,
    resume: Option<Resume>,
    on_epoch: &mut dyn FnMut(&EpochRecord, &Translator),
) -> Result<TrainOutcome, TrainError> {
    tcfg.validate()?;
    if train.is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if dev.is_empty() {
        return Err(TrainError::EmptyDev);
    }
    let examples = training_examples(train, &model.vocab);
    let (mut schedule, first) = match resume {
        Some(r) => (
            Schedule::resume(r.lr, tcfg.decay_factor, tcfg.patience, r.epoch, r.best_dev),
            r.epoch + 1,
        ),
        None => (Schedule::new(tcfg.initial_lr, tcfg.decay_factor, tcfg.patience), 1),
    };
    let mut best_params = model.params.clone();
    let mut epochs = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    for epoch in first..=tcfg.max_epochs {
        let started = Instant::now();
        let lr = schedule.lr();
        let mut rng = ChaCha8Rng::seed_from_u64(tcfg.seed);
        rng.set_stream(epoch as u64);
        let batches = epoch_batches(&examples, tcfg.batch_size, &mut rng);
        let (mut loss_sum, mut tokens, mut seen) = (0.0, 0usize, 0usize);
        for (b, idx) in batches.iter().enumerate() {
            let batch: Vec<Example> = idx.iter().map(|&i| examples[i].clone()).collect();
            let n_tok: usize = batch.iter().map(|e| e.target.len()).sum();
            let (loss, grads) = match param_gradients(&model.params, &model.config, &batch, rng.gen()) {
                Ok(r) => r,
                Err(ModelError::NonFiniteLoss) => return Err(TrainError::NonFiniteLoss { epoch, batch: b }),
                Err(e) => return Err(e.into()),
            };
            sgd_step(&mut model.params, grads, lr, tcfg.clip_norm);
            loss_sum += loss * n_tok as f64;
            tokens += n_tok;
            seen += batch.len();
        }
        let dev_bleu = evaluate_with(&model.with_beam(1), dev, Exec::default())?;
        let verdict = schedule.observe(dev_bleu);
        if verdict == Verdict::Improved {
            best_params.clone_from(&model.params);
        }
        let rec = EpochRecord {
            epoch,
            train_loss: loss_sum / tokens.max(1) as f64,
            dev_bleu,
            lr,
            verdict,
            instances: seen,
            wall_secs: started.elapsed().as_secs_f64(),
        };
        log::info!("epoch {epoch}: loss {:.4} dev {:.2} lr {lr}", rec.train_loss, dev_bleu);
        on_epoch(&rec, &model);
        epochs.push(rec);
        if verdict == Verdict::Stop {
            stop = StopReason::Patience;
            break;
        }
        if tcfg.stop_at.is_some_and(|t| dev_bleu >= t) {
            stop = StopReason::TargetReached;
            break;
        }
    }

    let Some((best_epoch, best_dev_bleu)) = schedule.best() else {
        return Err(TrainError::InvalidConfig(format!("nothing left to train after epoch {}", first - 1)));
    };
    model.params = best_params;
    Ok(TrainOutcome {
        model,
        log: TrainLog {
            epochs,
            best_epoch,
            best_dev_bleu,
            stop,
        },
    })
}
