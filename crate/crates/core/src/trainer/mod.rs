//! Minibatch SGD with class-ratio batch sampling, flip-free augmentation, a step
//! learning-rate schedule and k-fold early stopping.

mod augment;

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use augment::{augment, reflect, rotate90, AugmentFlags};

use crate::datagen::{Sample, CANCER, NO_CANCER};
use crate::error::{Error, Result};
use crate::imaging::write_item;
use crate::nn::{backward_with, forward, BackwardOptions, Model};
use crate::rng::substream;
use crate::tensor::{Shape, Tensor};

/// Items per forward call when evaluating.
const EVAL_BATCH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// The learning rate is divided by `lr_decay` every `decay_every` epochs.
    pub lr_decay: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Share of cancer samples in every batch.
    pub ratio: f32,
    pub augment: AugmentFlags,
    /// Folds for early-stopping cross validation; below 2 disables it.
    pub folds: usize,
    /// Batches per epoch; `None` means one pass worth of samples.
    pub batches_per_epoch: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            lr_decay: 10.0,
            decay_every: 10,
            batch_size: 128,
            max_epochs: 50,
            ratio: 0.5,
            augment: AugmentFlags::default(),
            folds: 3,
            batches_per_epoch: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        let (pos, neg) = class_split(self.ratio, self.batch_size);
        if !(self.ratio > 0.0 && self.ratio < 1.0) || pos < 1 || neg < 1 {
            return Err(Error::invalid(format!(
                "ratio {} with batch {} leaves a class without samples",
                self.ratio, self.batch_size
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_decay > 0.0) || self.decay_every == 0 {
            return Err(Error::invalid("learning rate schedule must be positive"));
        }
        Ok(())
    }

    /// Learning rate during 0-based `epoch`.
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr / self.lr_decay.powi((epoch / self.decay_every) as i32)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<TrainConfig> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// `(cancer, non-cancer)` counts of a batch: `round(ratio·batch)` and the remainder.
pub fn class_split(ratio: f32, batch_size: usize) -> (usize, usize) {
    let pos = ((ratio as f64 * batch_size as f64).round() as usize).min(batch_size);
    (pos, batch_size - pos)
}

/// Indices into `labels` for one batch. Each class is drawn without replacement
/// while its pool lasts and with replacement beyond that.
pub fn sample_batch<R: Rng>(labels: &[usize], ratio: f32, batch_size: usize, rng: &mut R) -> Result<Vec<usize>> {
    let pools: [Vec<usize>; 2] = [NO_CANCER, CANCER].map(|c| (0..labels.len()).filter(|&i| labels[i] == c).collect());
    if pools.iter().any(Vec::is_empty) {
        return Err(Error::invalid("both classes need at least one sample"));
    }
    let (pos, neg) = class_split(ratio, batch_size);
    let mut batch = Vec::with_capacity(batch_size);
    for (pool, k) in [(&pools[CANCER], pos), (&pools[NO_CANCER], neg)] {
        batch.extend(pool.choose_multiple(rng, k.min(pool.len())).copied());
        for _ in pool.len()..k {
            batch.push(*pool.choose(rng).unwrap());
        }
    }
    batch.shuffle(rng);
    Ok(batch)
}

/// Training images as network-ready items.
#[derive(Debug, Clone)]
pub struct TrainSet {
    pub item: Shape,
    pub data: Vec<f32>,
    pub labels: Vec<usize>,
    /// Case of every item; cross-validation folds never split a case.
    pub groups: Vec<usize>,
}

impl TrainSet {
    pub fn from_samples(samples: &[&Sample]) -> Result<TrainSet> {
        let Some(first) = samples.first() else {
            return Err(Error::invalid("no training samples"));
        };
        let (w, h) = first.image.dimensions();
        let item = Shape::new(1, 3, h as usize, w as usize);
        let mut data = vec![0.0; samples.len() * item.item_len()];
        for (s, out) in samples.iter().zip(data.chunks_mut(item.item_len())) {
            if s.image.dimensions() != (w, h) {
                return Err(Error::invalid("training images differ in size"));
            }
            write_item(&s.image, out);
        }
        Ok(TrainSet {
            item,
            data,
            labels: samples.iter().map(|s| s.label).collect(),
            groups: samples.iter().map(|s| s.case).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f32] {
        let n = self.item.item_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn subset(&self, idx: &[usize]) -> TrainSet {
        let mut data = Vec::with_capacity(idx.len() * self.item.item_len());
        for &i in idx {
            data.extend_from_slice(self.get(i));
        }
        TrainSet {
            item: self.item,
            data,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
        }
    }

    pub fn batch(&self, idx: &[usize]) -> Tensor {
        let mut t = Tensor::zeros(self.item.with_batch(idx.len()));
        for (b, &i) in idx.iter().enumerate() {
            t.item_mut(b).copy_from_slice(self.get(i));
        }
        t
    }
}

/// Mean softmax cross-entropy of a batch and its gradient with respect to the logits.
pub fn cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let b = logits.shape().b;
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = 0.0f64;
    for (i, &y) in labels.iter().enumerate() {
        let z = logits.item(i);
        let m = z.iter().fold(f32::NEG_INFINITY, |a, &v| a.max(v)) as f64;
        let sum: f64 = z.iter().map(|&v| (v as f64 - m).exp()).sum();
        let lse = m + sum.ln();
        loss += lse - z[y] as f64;
        let g = grad.item_mut(i);
        for (k, gk) in g.iter_mut().enumerate() {
            let p = (z[k] as f64 - lse).exp();
            *gk = ((p - (k == y) as u8 as f64) / b as f64) as f32;
        }
    }
    (loss / b as f64, grad)
}

/// Mean cross-entropy and accuracy over a whole set, without augmentation.
pub fn evaluate(model: &Model, set: &TrainSet) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Err(Error::invalid("empty evaluation set"));
    }
    let (mut loss, mut correct) = (0.0f64, 0usize);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let out = forward(model, &set.batch(chunk), false)?;
        let labels: Vec<usize> = chunk.iter().map(|&i| set.labels[i]).collect();
        let (l, _) = cross_entropy(&out.logits, &labels);
        loss += l * chunk.len() as f64;
        for (b, &y) in labels.iter().enumerate() {
            if argmax(out.logits.item(b)) == y {
                correct += 1;
            }
        }
    }
    Ok((loss / set.len() as f64, correct as f64 / set.len() as f64))
}

pub fn argmax(v: &[f32]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Predicted class of every item.
pub fn predict_labels(model: &Model, set: &TrainSet) -> Result<Vec<usize>> {
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in idx.chunks(EVAL_BATCH) {
        let o = forward(model, &set.batch(chunk), false)?;
        out.extend((0..chunk.len()).map(|b| argmax(o.logits.item(b))));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    /// `None` for the final run on the full training set.
    pub fold: Option<usize>,
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub log: Vec<EpochLog>,
    /// Epoch count chosen by cross validation (or `max_epochs` without it).
    pub best_epoch: usize,
    /// Validation loss per epoch averaged over folds.
    pub mean_val_loss: Vec<f64>,
}

pub fn log_csv(log: &[EpochLog]) -> String {
    let mut s = String::from("epoch,fold,train_loss,val_loss,lr\n");
    for r in log {
        let fold = r.fold.map_or("all".to_string(), |f| f.to_string());
        let val = r.val_loss.map_or(String::new(), |v| v.to_string());
        writeln!(s, "{},{},{},{},{}", r.epoch, fold, r.train_loss, val, r.lr).unwrap();
    }
    s
}

/// Runs `epochs` epochs of SGD on `set`, evaluating on `val` after each one.
fn run(
    model: &mut Model,
    set: &TrainSet,
    val: Option<&TrainSet>,
    cfg: &TrainConfig,
    epochs: usize,
    fold: Option<usize>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochLog>> {
    let per_epoch = cfg
        .batches_per_epoch
        .unwrap_or_else(|| set.len().div_ceil(cfg.batch_size))
        .max(1);
    let item_len = set.item.item_len();
    let opts = BackwardOptions {
        params: true,
        keep_output_grads: false,
    };
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = cfg.lr_at(epoch);
        let step = lr as f32;
        let mut total = 0.0f64;
        for batch_no in 0..per_epoch {
            let idx = sample_batch(&set.labels, cfg.ratio, cfg.batch_size, rng)?;
            let mut x = Tensor::zeros(set.item.with_batch(idx.len()));
            for (b, &i) in idx.iter().enumerate() {
                augment(set.get(i), set.item, &cfg.augment, rng, &mut x.data_mut()[b * item_len..(b + 1) * item_len]);
            }
            let labels: Vec<usize> = idx.iter().map(|&i| set.labels[i]).collect();
            let out = forward(model, &x, true)?;
            let (loss, dlogits) = cross_entropy(&out.logits, &labels);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: epoch + 1,
                    batch: batch_no,
                });
            }
            total += loss;
            let grads = backward_with(model, out.trace.as_ref().expect("captured"), &dlogits, opts)?;
            for ((w, b), g) in model.params_mut().zip(&grads.params) {
                for (p, d) in w.iter_mut().zip(&g.weights) {
                    *p -= step * d;
                }
                for (p, d) in b.iter_mut().zip(&g.bias) {
                    *p -= step * d;
                }
            }
        }
        let val_loss = match val {
            Some(v) => Some(evaluate(model, v)?.0),
            None => None,
        };
        log.push(EpochLog {
            fold,
            epoch: epoch + 1,
            train_loss: total / per_epoch as f64,
            val_loss,
            lr,
        });
    }
    Ok(log)
}

/// Case-grouped folds: cases are shuffled and dealt round-robin.
pub fn case_folds(groups: &[usize], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut cases: Vec<usize> = groups.to_vec();
    cases.sort_unstable();
    cases.dedup();
    cases.shuffle(rng);
    let mut folds = vec![Vec::new(); k];
    for (i, c) in cases.iter().enumerate() {
        let f = i % k;
        folds[f].extend((0..groups.len()).filter(|&j| groups[j] == *c));
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    folds
}

/// Cross-validates the epoch count on case-disjoint folds, then retrains `model`
/// (from its current weights) on the full set for that many epochs.
pub fn train(model: &Model, set: &TrainSet, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut log = Vec::new();
    if cfg.max_epochs == 0 {
        return Ok(TrainOutcome {
            model: model.clone(),
            log,
            best_epoch: 0,
            mean_val_loss: Vec::new(),
        });
    }
    if model.input_shape() != set.item {
        return Err(Error::invalid(format!(
            "model input {} does not match training items {}",
            model.input_shape(),
            set.item
        )));
    }
    for c in [NO_CANCER, CANCER] {
        if !set.labels.contains(&c) {
            return Err(Error::invalid("training split must contain both classes"));
        }
    }
    let mut mean_val = Vec::new();
    let mut best_epoch = cfg.max_epochs;
    let n_cases = {
        let mut g = set.groups.clone();
        g.sort_unstable();
        g.dedup();
        g.len()
    };
    if cfg.folds >= 2 {
        if n_cases < cfg.folds {
            return Err(Error::invalid(format!("{n_cases} cases cannot form {} folds", cfg.folds)));
        }
        let folds = case_folds(&set.groups, cfg.folds, &mut substream(cfg.seed, "folds", 0));
        let mut sums = vec![0.0f64; cfg.max_epochs];
        for (f, val_idx) in folds.iter().enumerate() {
            let train_idx: Vec<usize> = (0..set.len()).filter(|i| val_idx.binary_search(i).is_err()).collect();
            let (tr, va) = (set.subset(&train_idx), set.subset(val_idx));
            let mut m = model.clone();
            let mut rng = substream(cfg.seed, "sampling", f as u64 + 1);
            let fold_log = run(&mut m, &tr, Some(&va), cfg, cfg.max_epochs, Some(f), &mut rng)?;
            for (s, r) in sums.iter_mut().zip(&fold_log) {
                *s += r.val_loss.unwrap_or(f64::NAN);
            }
            log.extend(fold_log);
        }
        mean_val = sums.iter().map(|s| s / cfg.folds as f64).collect();
        best_epoch = 1 + (0..mean_val.len()).fold(0, |b, i| if mean_val[i] < mean_val[b] { i } else { b });
    }
    let mut m = model.clone();
    let mut rng = substream(cfg.seed, "sampling", 0);
    log.extend(run(&mut m, set, None, cfg, best_epoch, None, &mut rng)?);
    Ok(TrainOutcome {
        model: m,
        log,
        best_epoch,
        mean_val_loss: mean_val,
    })
}
