//! Mini-batch training with Adam, per-epoch logging, early stopping and a
//! bit-exact checkpoint format.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{clip_global_norm, AdamConfig, AdamState, Gradients, ParamStore, Tape, Tensor};
use crate::dfs::{OneHotSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::features::ConditionVector;
use crate::model::{ConditionSpots, HyperParams, Model};
use crate::rng::{derive_seed, stream, RngState};

/// One training sequence with its condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub seq: OneHotSequence,
    pub cond: ConditionVector,
}

/// Encoded train and validation sets sharing one vocabulary.
#[derive(Debug, Clone)]
pub struct TrainingData {
    pub vocab: Vocabulary,
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    /// Decimal places conditions were rounded to.
    pub round_places: u32,
    /// Name of the conditioning feature, if known.
    pub feature: Option<String>,
}

impl TrainingData {
    /// Longest sequence (EOS row included) over both splits.
    pub fn max_seq_len(&self) -> usize {
        self.train.iter().chain(&self.val).map(|e| e.seq.len()).max().unwrap_or(0)
    }

    pub fn condition_dim(&self) -> Option<usize> {
        self.train.iter().chain(&self.val).map(|e| e.cond.dim).next()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta: f64,
    pub seed: u64,
    pub spots: ConditionSpots,
    /// Stop after this many epochs without a new best monitored loss.
    pub patience: Option<usize>,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10_000,
            batch_size: 37,
            lr: 0.001,
            beta: 3.0,
            seed: 0,
            spots: ConditionSpots::ALL,
            patience: Some(200),
            clip_norm: 5.0,
            checkpoint_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.beta >= 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::Config("lr and clip_norm must be positive, beta non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub kl: f64,
    pub recon: f64,
    /// NaN when there is no validation split.
    pub val_loss: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,train_loss,kl,recon,val_loss";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.epoch, self.train_loss, self.kl, self.recon, self.val_loss
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    MaxEpochs,
    Plateau,
}

/// Model weights plus everything needed to continue training exactly.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    pub rng: RngState,
    pub best_loss: Option<f64>,
    pub since_best: usize,
    pub max_seq_len: usize,
    pub round_places: u32,
    pub feature: Option<String>,
}

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &str = "graphdial-checkpoint";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    hyper_params: HyperParams,
    vocab: Vocabulary,
    epoch: usize,
    adam_step: u64,
    rng: RngState,
    best_loss_bits: Option<u64>,
    since_best: usize,
    max_seq_len: usize,
    round_places: u32,
    feature: Option<String>,
    tensors: Vec<TensorEntry>,
    payload_len: usize,
}

impl Checkpoint {
    /// Serialized form: an 8-byte little-endian header length, a JSON
    /// header, then little-endian f64 values at the declared offsets
    /// (counted in values). Optimizer moments are stored as
    /// `adam.m/<name>` and `adam.v/<name>`.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let store = &self.model.params;
        let mut tensors = Vec::new();
        let mut payload: Vec<f64> = Vec::with_capacity(3 * store.scalar_count());
        let mut push = |name: String, shape: Vec<usize>, data: &[f64]| {
            tensors.push(TensorEntry {
                name,
                shape,
                offset: payload.len(),
            });
            payload.extend_from_slice(data);
        };
        for (name, t) in store.iter() {
            push(name.to_string(), t.shape.clone(), &t.data);
        }
        for (prefix, bufs) in [("adam.m", &self.adam.m), ("adam.v", &self.adam.v)] {
            for ((name, t), buf) in store.iter().zip(bufs.iter()) {
                push(format!("{prefix}/{name}"), t.shape.clone(), buf);
            }
        }
        let header = Header {
            format: CHECKPOINT_MAGIC.into(),
            version: CHECKPOINT_VERSION,
            hyper_params: self.model.hp.clone(),
            vocab: self.model.hp.vocab,
            epoch: self.epoch,
            adam_step: self.adam.step,
            rng: self.rng,
            best_loss_bits: self.best_loss.map(f64::to_bits),
            since_best: self.since_best,
            max_seq_len: self.max_seq_len,
            round_places: self.round_places,
            feature: self.feature.clone(),
            tensors,
            payload_len: payload.len(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + json.len() + 8 * payload.len());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for x in payload {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let integrity = |msg: &str| Error::Integrity(msg.to_string());
        if bytes.len() < 8 {
            return Err(integrity("file shorter than its length prefix"));
        }
        let hlen = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
        let body = &bytes[8..];
        if hlen > body.len() {
            return Err(integrity("header length exceeds file size"));
        }
        let raw: serde_json::Value = serde_json::from_slice(&body[..hlen])
            .map_err(|e| Error::Integrity(format!("unreadable header: {e}")))?;
        if raw.get("format").and_then(|v| v.as_str()) != Some(CHECKPOINT_MAGIC) {
            return Err(integrity("not a checkpoint file"));
        }
        let version = raw.get("version").and_then(|v| v.as_u64());
        if version != Some(CHECKPOINT_VERSION as u64) {
            return Err(Error::Incompatible(format!(
                "checkpoint version {version:?}, this build reads {CHECKPOINT_VERSION}"
            )));
        }
        let header: Header =
            serde_json::from_value(raw).map_err(|e| Error::Integrity(format!("malformed header: {e}")))?;
        let payload = &body[hlen..];
        if payload.len() != 8 * header.payload_len {
            return Err(Error::Integrity(format!(
                "payload holds {} bytes, header declares {} values",
                payload.len(),
                header.payload_len
            )));
        }
        if header.vocab != header.hyper_params.vocab {
            return Err(integrity("vocabulary disagrees with hyperparameters"));
        }
        let values: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let mut loaded = ParamStore::new();
        let mut moments = Vec::new();
        for entry in &header.tensors {
            let len: usize = entry.shape.iter().product();
            let end = entry
                .offset
                .checked_add(len)
                .filter(|&e| e <= values.len())
                .ok_or_else(|| Error::Integrity(format!("tensor {} exceeds payload", entry.name)))?;
            let t = Tensor::new(entry.shape.clone(), values[entry.offset..end].to_vec())?;
            if entry.name.starts_with("adam.") {
                moments.push((entry.name.clone(), t));
            } else {
                loaded.add(entry.name.clone(), t);
            }
        }
        let model = Model::from_params(header.hyper_params, loaded)?;
        let mut adam = AdamState::new(&model.params);
        adam.step = header.adam_step;
        let mut filled = 0;
        for (name, t) in moments {
            let (bank, pname) = if let Some(p) = name.strip_prefix("adam.m/") {
                (&mut adam.m, p)
            } else if let Some(p) = name.strip_prefix("adam.v/") {
                (&mut adam.v, p)
            } else {
                return Err(Error::Integrity(format!("unknown tensor {name}")));
            };
            let id = model
                .params
                .find(pname)
                .ok_or_else(|| Error::Incompatible(format!("optimizer state for unknown parameter {pname}")))?;
            if bank[id.0].len() != t.len() {
                return Err(Error::Integrity(format!("optimizer state {name} has wrong size")));
            }
            bank[id.0] = t.data;
            filled += 1;
        }
        if filled != 2 * model.params.len() {
            return Err(integrity("optimizer state incomplete"));
        }
        Ok(Checkpoint {
            model,
            adam,
            epoch: header.epoch,
            rng: header.rng,
            best_loss: header.best_loss_bits.map(f64::from_bits),
            since_best: header.since_best,
            max_seq_len: header.max_seq_len,
            round_places: header.round_places,
            feature: header.feature,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    ckpt.save(path)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::load(path)
}

/// Mean losses of one example set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSummary {
    pub total: f64,
    pub kl: f64,
    pub recon: f64,
}

/// Average loss over `examples` with the latent fixed at the posterior mean.
/// Parameters are only read.
pub fn evaluate(model: &Model, examples: &[Example]) -> Result<Option<LossSummary>> {
    if examples.is_empty() {
        return Ok(None);
    }
    let (mut total, mut kl, mut recon) = (0.0, 0.0, 0.0);
    for ex in examples {
        let mut tape = Tape::new(&model.params);
        let l = model.example_loss(&mut tape, &ex.seq, &ex.cond, None)?;
        total += tape.scalar(l.total);
        kl += tape.scalar(l.kl);
        recon += tape.scalar(l.recon);
    }
    let n = examples.len() as f64;
    Ok(Some(LossSummary {
        total: total / n,
        kl: kl / n,
        recon: recon / n,
    }))
}

pub struct Trainer<'d> {
    data: &'d TrainingData,
    config: TrainConfig,
    model: Model,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
    best_loss: Option<f64>,
    since_best: usize,
}

impl<'d> Trainer<'d> {
    /// Fresh model; `config.beta` and `config.spots` override those in `hp`.
    pub fn new(data: &'d TrainingData, mut hp: HyperParams, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        check_data(data, &hp)?;
        hp.beta = config.beta;
        hp.spots = config.spots;
        let model = Model::new(hp, derive_seed(config.seed, 0))?;
        let adam = AdamState::new(&model.params);
        Ok(Trainer {
            data,
            rng: stream(derive_seed(config.seed, 1)),
            config,
            model,
            adam,
            epoch: 0,
            best_loss: None,
            since_best: 0,
        })
    }

    /// Continues from a checkpoint; the data and config must be the ones it
    /// was trained with for the continuation to be exact.
    pub fn resume(data: &'d TrainingData, ckpt: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        check_data(data, &ckpt.model.hp)?;
        if ckpt.model.hp.spots != config.spots || ckpt.model.hp.beta != config.beta {
            return Err(Error::Config("config spots/beta differ from the checkpoint".into()));
        }
        Ok(Trainer {
            data,
            config,
            rng: ckpt.rng.restore(),
            model: ckpt.model,
            adam: ckpt.adam,
            epoch: ckpt.epoch,
            best_loss: ckpt.best_loss,
            since_best: ckpt.since_best,
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.clone(),
            adam: self.adam.clone(),
            epoch: self.epoch,
            rng: RngState::capture(&self.rng),
            best_loss: self.best_loss,
            since_best: self.since_best,
            max_seq_len: self.data.max_seq_len(),
            round_places: self.data.round_places,
            feature: self.data.feature.clone(),
        }
    }

    pub fn stop_reason(&self) -> Option<StopReason> {
        if self.epoch >= self.config.epochs {
            return Some(StopReason::MaxEpochs);
        }
        match self.config.patience {
            Some(p) if self.best_loss.is_some() && self.since_best >= p => Some(StopReason::Plateau),
            _ => None,
        }
    }

    /// Whether the last completed epoch set a new best monitored loss.
    pub fn improved(&self) -> bool {
        self.since_best == 0 && self.best_loss.is_some()
    }

    /// One pass over the shuffled training split followed by validation.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let latent = self.model.hp.latent_dim;
        let mut order: Vec<usize> = (0..self.data.train.len()).collect();
        order.shuffle(&mut self.rng);
        let mut grads = Gradients::zeros_like(&self.model.params);
        let adam_cfg = AdamConfig {
            lr: self.config.lr,
            ..AdamConfig::default()
        };
        let (mut total, mut kl, mut recon) = (0.0, 0.0, 0.0);
        for batch in order.chunks(self.config.batch_size) {
            grads.zero();
            let weight = 1.0 / batch.len() as f64;
            for &i in batch {
                let ex = &self.data.train[i];
                let noise: Vec<f64> = (0..latent).map(|_| self.rng.sample(StandardNormal)).collect();
                let mut tape = Tape::new(&self.model.params);
                let l = self.model.example_loss(&mut tape, &ex.seq, &ex.cond, Some(&noise))?;
                let value = tape.scalar(l.total);
                if !value.is_finite() {
                    return Err(Error::Divergence(format!(
                        "non-finite loss at epoch {} on training example {i}",
                        self.epoch + 1
                    )));
                }
                total += value;
                kl += tape.scalar(l.kl);
                recon += tape.scalar(l.recon);
                tape.backward_scaled(l.total, weight, &mut grads)?;
            }
            clip_global_norm(&mut grads, self.config.clip_norm);
            self.adam.step(&mut self.model.params, &grads, &adam_cfg)?;
        }
        self.epoch += 1;
        let n = self.data.train.len() as f64;
        let val = evaluate(&self.model, &self.data.val)?;
        let log = EpochLog {
            epoch: self.epoch,
            train_loss: total / n,
            kl: kl / n,
            recon: recon / n,
            val_loss: val.map_or(f64::NAN, |v| v.total),
        };
        let monitored = val.map_or(log.train_loss, |v| v.total);
        if !monitored.is_finite() {
            return Err(Error::Divergence(format!("non-finite loss at epoch {}", self.epoch)));
        }
        if self.best_loss.map_or(true, |b| monitored < b) {
            self.best_loss = Some(monitored);
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Ok(log)
    }
}

fn check_data(data: &TrainingData, hp: &HyperParams) -> Result<()> {
    if data.train.is_empty() {
        return Err(Error::EmptyManifest);
    }
    if data.vocab != hp.vocab {
        return Err(Error::Config("data vocabulary differs from the model's".into()));
    }
    for ex in data.train.iter().chain(&data.val) {
        if ex.seq.vocab != hp.vocab {
            return Err(Error::Config("example encoded with a different vocabulary".into()));
        }
        if ex.cond.dim != hp.condition_dim {
            return Err(Error::Config(format!(
                "condition dim {} differs from the model's {}",
                ex.cond.dim, hp.condition_dim
            )));
        }
    }
    Ok(())
}

/// Result of a complete training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub last: Checkpoint,
    /// Snapshot at the best monitored loss (validation if present).
    pub best: Checkpoint,
    pub log: Vec<EpochLog>,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn log_csv(&self) -> String {
        log_csv(&self.log)
    }
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut out = String::from(EpochLog::CSV_HEADER);
    out.push('\n');
    for l in log {
        let _ = writeln!(out, "{}", l.csv_row());
    }
    out
}

/// Runs a trainer to completion. With `out_dir`, writes
/// `epoch_NNNNN.ckpt` every `checkpoint_every` epochs, `best.ckpt`,
/// `last.ckpt` and `train_log.csv`.
pub fn run(mut trainer: Trainer<'_>, out_dir: Option<&Path>) -> Result<TrainOutcome> {
    let mut log = Vec::new();
    let mut best = trainer.checkpoint();
    let every = trainer.config.checkpoint_every;
    let stop = loop {
        if let Some(reason) = trainer.stop_reason() {
            break reason;
        }
        log.push(trainer.run_epoch()?);
        let improved = trainer.improved();
        if improved {
            best = trainer.checkpoint();
        }
        if let Some(dir) = out_dir {
            if improved {
                best.save(dir.join("best.ckpt"))?;
            }
            if every > 0 && trainer.epoch % every == 0 {
                trainer.checkpoint().save(dir.join(format!("epoch_{:05}.ckpt", trainer.epoch)))?;
            }
        }
    };
    let last = trainer.checkpoint();
    if let Some(dir) = out_dir {
        last.save(dir.join("last.ckpt"))?;
        if !dir.join("best.ckpt").exists() {
            best.save(dir.join("best.ckpt"))?;
        }
        std::fs::write(dir.join("train_log.csv"), log_csv(&log))?;
    }
    Ok(TrainOutcome { last, best, log, stop })
}

/// Trains a fresh model on `data`.
pub fn train(data: &TrainingData, hp: HyperParams, config: TrainConfig) -> Result<TrainOutcome> {
    run(Trainer::new(data, hp, config)?, None)
}
