//! Mini-batch training, validation-driven early stopping and the L2 sweep.

mod sweep;

use std::fs;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::{derive_seed, AugmentPolicy, Dataset, Split};
use crate::error::{Error, Result};
use crate::loss::{combined_masked_loss, combined_masked_loss_var, LossReport};
use crate::metrics::{mae, pr_auc, roc_auc};
use crate::model::{encode_frames, Mode, PuckNet, PuckNetConfig};
use crate::tensor::{Adam, AdamConfig, Graph};

pub use sweep::{sweep, SweepReport, SweepRow, DEFAULT_LAMBDAS};

const SHUFFLE_STREAM: u64 = 11;
const AUGMENT_STREAM: u64 = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub lr: f64,
    pub l2_lambda: f64,
    pub batch_size: usize,
    pub eval_batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without improvement before stopping.
    pub early_stop_tolerance: usize,
    /// Smallest drop in validation loss that counts as an improvement.
    pub min_improvement: f64,
    pub augment: AugmentPolicy,
    /// Use only the first `n` training ids.
    pub max_train_examples: Option<usize>,
    /// Wall-clock cap: no epoch starts unless the slowest epoch so far would still fit.
    pub time_budget_secs: Option<f64>,
    pub model: PuckNetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            lr: 1e-3,
            l2_lambda: 1e-6,
            batch_size: 32,
            eval_batch_size: 64,
            max_epochs: 100,
            early_stop_tolerance: 5,
            min_improvement: 1e-6,
            augment: AugmentPolicy::default(),
            max_train_examples: None,
            time_budget_secs: None,
            model: PuckNetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("train: {m}")));
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return bad("lr must be finite and non-negative");
        }
        if !(self.l2_lambda.is_finite() && self.l2_lambda >= 0.0) {
            return bad("l2_lambda must be finite and non-negative");
        }
        if self.batch_size == 0 || self.eval_batch_size == 0 {
            return bad("batch sizes must be positive");
        }
        if self.max_epochs == 0 || self.early_stop_tolerance == 0 {
            return bad("max_epochs and early_stop_tolerance must be positive");
        }
        if self.early_stop_tolerance >= self.max_epochs {
            return bad("early_stop_tolerance must be below max_epochs");
        }
        if self.min_improvement < 0.0 {
            return bad("min_improvement must be non-negative");
        }
        if matches!(self.max_train_examples, Some(0)) {
            return bad("max_train_examples must be positive");
        }
        self.augment.validate()?;
        self.model.validate()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            l2_lambda: self.l2_lambda,
            ..AdamConfig::default()
        }
    }
}

/// Loss and metrics of one split in eval mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub n: usize,
    pub positives: usize,
    pub loss: LossReport,
    /// `None` when the split holds a single class.
    pub roc_auc: Option<f64>,
    pub pr_auc: Option<f64>,
    /// Pixel error over positive samples; `None` without positives.
    pub mae: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: LossReport,
    pub val: EvalReport,
    pub parameter_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxEpochs,
    TimeBudget,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub config: TrainConfig,
    pub train_examples: usize,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

impl TrainHistory {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }

    pub fn markdown(&self) -> String {
        let mut s = String::from("| epoch | train loss | val loss | val ROC AUC | val PR AUC | val MAE (px) |\n");
        s.push_str("|---:|---:|---:|---:|---:|---:|\n");
        for e in &self.epochs {
            let mark = if e.epoch == self.best_epoch { " *" } else { "" };
            s.push_str(&format!(
                "| {}{} | {:.4} | {:.4} | {} | {} | {} |\n",
                e.epoch,
                mark,
                e.train.total,
                e.val.loss.total,
                fmt_opt(e.val.roc_auc, 4),
                fmt_opt(e.val.pr_auc, 4),
                fmt_opt(e.val.mae, 2)
            ));
        }
        s
    }
}

pub(crate) fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Wait,
    Stop,
}

/// Tracks the best validation loss and counts epochs since it.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    early_stop_tolerance: usize,
    min_improvement: f64,
    best: f64,
    best_epoch: Option<usize>,
}

impl EarlyStopper {
    pub fn new(early_stop_tolerance: usize, min_improvement: f64) -> Self {
        Self {
            early_stop_tolerance,
            min_improvement,
            best: f64::INFINITY,
            best_epoch: None,
        }
    }

    pub fn observe(&mut self, epoch: usize, loss: f64) -> Verdict {
        if self.best_epoch.is_none() || loss < self.best - self.min_improvement {
            self.best = loss;
            self.best_epoch = Some(epoch);
            return Verdict::Improved;
        }
        match self.best_epoch {
            Some(b) if epoch - b >= self.early_stop_tolerance => Verdict::Stop,
            _ => Verdict::Wait,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

pub struct TrainOutcome {
    /// Weights from the epoch with the lowest validation loss.
    pub model: PuckNet,
    pub history: TrainHistory,
}

impl TrainOutcome {
    /// Writes `best.ckpt`, `history.json` and `history.md` under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.model.save(&dir.join("best.ckpt"))?;
        let path = dir.join("history.json");
        fs::write(&path, serde_json::to_string_pretty(&self.history)? + "\n").map_err(|e| Error::io(&path, e))?;
        let path = dir.join("history.md");
        fs::write(&path, self.history.markdown()).map_err(|e| Error::io(&path, e))
    }
}

fn batch_targets(ds: &Dataset, ids: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let mut labels = Vec::with_capacity(ids.len());
    let mut targets = Vec::with_capacity(2 * ids.len());
    for &i in ids {
        let l = &ds.labels[i];
        labels.push(l.label as f64);
        targets.extend(l.coords().unwrap_or([0.0, 0.0]));
    }
    (labels, targets)
}

fn check_frames(ds: &Dataset, model: &PuckNetConfig) -> Result<()> {
    let (w, h) = (ds.manifest.frame_width, ds.manifest.frame_height);
    if (w, h) != (model.input_width, model.input_height) {
        return Err(Error::Config(format!(
            "dataset frames are {w}x{h} but the model expects {}x{}",
            model.input_width, model.input_height
        )));
    }
    Ok(())
}

/// Eval-mode loss and metrics over `ids`.
pub fn evaluate_ids(model: &PuckNet, ds: &Dataset, split: Split, ids: &[usize], batch: usize) -> Result<EvalReport> {
    check_frames(ds, model.config())?;
    if ids.is_empty() {
        return Err(Error::UndefinedMetric(format!("{split:?} split is empty")));
    }
    let (w, h) = (ds.manifest.frame_width, ds.manifest.frame_height);
    let mut scores = Vec::with_capacity(ids.len());
    let mut coords = Vec::with_capacity(2 * ids.len());
    for chunk in ids.chunks(batch.max(1)) {
        let frames: Vec<&[u8]> = chunk.iter().map(|&i| ds.frames[i].as_slice()).collect();
        let pred = model.predict_frames(&frames, w, h)?;
        scores.extend(pred.logits);
        coords.extend(pred.coords.iter().flatten());
    }
    let (labels, targets) = batch_targets(ds, ids);
    let loss = combined_masked_loss(&scores, &labels, &coords, &targets)?;
    let truth: Vec<bool> = labels.iter().map(|&l| l > 0.5).collect();
    let positives = truth.iter().filter(|&&t| t).count();
    let (mut pp, mut pt) = (Vec::new(), Vec::new());
    for (k, &t) in truth.iter().enumerate() {
        if t {
            pp.extend_from_slice(&coords[2 * k..2 * k + 2]);
            pt.extend_from_slice(&targets[2 * k..2 * k + 2]);
        }
    }
    Ok(EvalReport {
        split,
        n: ids.len(),
        positives,
        loss,
        roc_auc: roc_auc(&scores, &truth).ok(),
        pr_auc: pr_auc(&scores, &truth).ok(),
        mae: mae(&pp, &pt).ok(),
    })
}

pub fn evaluate(model: &PuckNet, ds: &Dataset, split: Split, batch: usize) -> Result<EvalReport> {
    evaluate_ids(model, ds, split, ds.ids(split), batch)
}

pub(crate) fn train_ids<'a>(ds: &'a Dataset, cfg: &TrainConfig) -> &'a [usize] {
    let ids = ds.ids(Split::Train);
    &ids[..cfg.max_train_examples.map_or(ids.len(), |n| n.min(ids.len()))]
}

/// Trains a fresh model; see [`train_model`].
pub fn train(ds: &Dataset, cfg: &TrainConfig, progress: impl FnMut(&EpochRecord)) -> Result<TrainOutcome> {
    cfg.validate()?;
    let model = PuckNet::build(cfg.model.clone(), cfg.seed)?;
    train_model(model, ds, cfg, progress)
}

/// Adam on the combined loss over augmented training batches, validating in
/// eval mode after every epoch. Returns the best-validation weights.
pub fn train_model(
    mut model: PuckNet,
    ds: &Dataset,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_frames(ds, model.config())?;
    let (w, h) = (ds.manifest.frame_width, ds.manifest.frame_height);
    let mut ids = train_ids(ds, cfg).to_vec();
    if ids.is_empty() || ds.ids(Split::Val).is_empty() {
        return Err(Error::Config("training needs non-empty train and val splits".into()));
    }
    let mut adam = Adam::new(cfg.adam(), model.params());
    let mut stopper = EarlyStopper::new(cfg.early_stop_tolerance, cfg.min_improvement);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;
    let start = Instant::now();
    let mut slowest = 0.0f64;

    for epoch in 0..cfg.max_epochs {
        let epoch_start = Instant::now();
        let mut shuffle = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM, epoch as u64));
        ids.shuffle(&mut shuffle);
        let mut jitter_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, AUGMENT_STREAM, epoch as u64));
        let mut reports = Vec::new();
        for (b, chunk) in ids.chunks(cfg.batch_size).enumerate() {
            let mut frames = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            let mut targets = Vec::with_capacity(2 * chunk.len());
            for &i in chunk {
                let l = &ds.labels[i];
                let (f, c) = cfg.augment.sample(&mut jitter_rng).frame(&ds.frames[i], w, l.coords());
                frames.push(f);
                labels.push(l.label as f64);
                targets.extend(c.unwrap_or([0.0, 0.0]));
            }
            let refs: Vec<&[u8]> = frames.iter().map(Vec::as_slice).collect();
            let mut g = Graph::new();
            let x = g.constant(encode_frames(&refs, w, h)?);
            let out = model.forward(&mut g, x, Mode::Train)?;
            let (loss, report) = combined_masked_loss_var(&mut g, out.logits, out.coords, &labels, &targets)?;
            if !report.total.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            g.backward(loss)?;
            let grads: Vec<_> = out.params.iter().map(|&p| g.take_grad(p)).collect();
            adam.step(model.params_mut(), &grads)?;
            if model.params().iter().any(|p| p.data().iter().any(|v| !v.is_finite())) {
                return Err(Error::Divergence { epoch, batch: b });
            }
            reports.push(report);
        }
        let train = LossReport::merge(&reports).expect("at least one batch");
        let val = evaluate(&model, ds, Split::Val, cfg.eval_batch_size)?;
        if !val.loss.total.is_finite() {
            return Err(Error::Divergence { epoch, batch: reports.len() });
        }
        let verdict = stopper.observe(epoch, val.loss.total);
        let record = EpochRecord {
            epoch,
            train,
            val,
            parameter_norm: model.parameter_norm(),
        };
        progress(&record);
        epochs.push(record);
        if verdict == Verdict::Improved {
            best = model.clone();
        }
        if verdict == Verdict::Stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
        slowest = slowest.max(epoch_start.elapsed().as_secs_f64());
        if cfg.time_budget_secs.is_some_and(|t| start.elapsed().as_secs_f64() + slowest > t) {
            stop_reason = StopReason::TimeBudget;
            break;
        }
    }

    let history = TrainHistory {
        config: cfg.clone(),
        train_examples: ids.len(),
        best_epoch: stopper.best_epoch().expect("at least one epoch"),
        best_val_loss: stopper.best(),
        epochs,
        stop_reason,
    };
    Ok(TrainOutcome { model: best, history })
}
