//! Minibatch training with per-epoch shuffling, adagrad or plain sgd, and
//! dev-set model selection with early stopping.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Progress};
use crate::error::{Error, Result};
use crate::eval::{evaluate_trees, Scope};
use crate::linalg::{GradSet, ModelDims, ParamSet};
use crate::network::{
    add_regularizer_grad, data_loss, regularizer, tree_backward, tree_forward, LabelMask,
    LeafCellMode,
};
use crate::treebank::{Corpus, Tree, Vocab};

/// Added to the adagrad accumulator under the square root.
pub const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adagrad,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adagrad => "adagrad",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adagrad" => Ok(OptimizerKind::Adagrad),
            other => Err(Error::Config(format!("unknown optimizer `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lambda: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub mask: LabelMask,
    pub leaf_cell: LeafCellMode,
    /// Epochs without a strict dev root-accuracy improvement before stopping.
    pub patience: usize,
    /// Rescale the batch gradient to this global norm when it is exceeded.
    pub clip_norm: Option<f64>,
    /// Gradient workers per batch. Results are reproducible for a fixed count.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden_dim: 100,
            batch_size: 10,
            learning_rate: 0.1,
            lambda: 1e-4,
            max_epochs: 50,
            seed: 1,
            optimizer: OptimizerKind::Adagrad,
            mask: LabelMask::AllNodes,
            leaf_cell: LeafCellMode::CopyH,
            patience: 10,
            clip_norm: None,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("hidden_dim", self.hidden_dim),
            ("batch_size", self.batch_size),
            ("max_epochs", self.max_epochs),
            ("patience", self.patience),
            ("threads", self.threads),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("lambda", self.lambda),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        if let Some(c) = self.clip_norm {
            if !c.is_finite() || c <= 0.0 {
                return Err(Error::Config(format!(
                    "clip_norm must be positive, got {c}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-coordinate squared-gradient sums for adagrad; nothing for sgd.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub accum: Option<ParamSet>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, params: &ParamSet) -> Self {
        let accum = match kind {
            OptimizerKind::Sgd => None,
            OptimizerKind::Adagrad => Some(ParamSet::zeros(params.dims())),
        };
        OptimizerState { kind, accum }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &GradSet, lr: f64) {
        match &mut self.accum {
            None => {
                for (p, g) in grads.iter() {
                    params[p].axpy(-lr, g);
                }
            }
            Some(acc) => {
                for (p, g) in grads.iter() {
                    let theta = params[p].as_mut_slice();
                    let a = acc[p].as_mut_slice();
                    for ((t, a), &g) in theta.iter_mut().zip(a).zip(g.as_slice()) {
                        *a += g * g;
                        *t -= lr * g / (*a + ADAGRAD_EPS).sqrt();
                    }
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub seconds: f64,
    pub train_loss: f64,
    pub dev_root_acc: f64,
    pub dev_all_acc: f64,
}

/// Parameters and optimizer state at the best dev epoch so far.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub epoch: usize,
    pub dev_root_acc: f64,
    pub params: ParamSet,
    pub optimizer: OptimizerState,
}

pub struct Trainer {
    cfg: TrainConfig,
    train: Vec<Tree>,
    dev: Vec<Tree>,
    vocab: Vocab,
    params: ParamSet,
    optimizer: OptimizerState,
    epoch: usize,
    epochs_since_best: usize,
    best: Option<Snapshot>,
    grads: GradSet,
    /// One private gradient buffer per worker when running multi-threaded.
    workers: Vec<GradSet>,
    pool: rayon::ThreadPool,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, train: Corpus, dev: Corpus) -> Result<Self> {
        check_corpora(&cfg, &train, &dev)?;
        let dims = ModelDims::new(cfg.hidden_dim, train.vocab.size(), train.num_classes);
        let params = ParamSet::init(dims, cfg.seed)?;
        let optimizer = OptimizerState::new(cfg.optimizer, &params);
        Trainer::assemble(
            cfg,
            train,
            dev,
            params,
            optimizer,
            Progress::default(),
            None,
        )
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`]. The
    /// corpora must be encoded with the checkpoint's vocabulary.
    pub fn resume(ckpt: Checkpoint, train: Corpus, dev: Corpus) -> Result<Self> {
        check_corpora(&ckpt.config, &train, &dev)?;
        if train.vocab != ckpt.vocab {
            return Err(Error::VocabMismatch(
                "training corpus was not encoded with the checkpoint vocabulary".into(),
            ));
        }
        let expected = ModelDims::new(ckpt.config.hidden_dim, ckpt.vocab.size(), train.num_classes);
        if ckpt.params.dims() != expected {
            return Err(Error::Config(format!(
                "checkpoint dimensions {:?} do not match configuration {expected:?}",
                ckpt.params.dims()
            )));
        }
        if ckpt.optimizer.kind != ckpt.config.optimizer {
            return Err(Error::Config(
                "checkpoint optimizer state does not match its config".into(),
            ));
        }
        let best = ckpt.best.map(|(params, optimizer)| Snapshot {
            epoch: ckpt.progress.best_epoch,
            dev_root_acc: ckpt.progress.best_dev_root_acc,
            params,
            optimizer,
        });
        Trainer::assemble(
            ckpt.config,
            train,
            dev,
            ckpt.params,
            ckpt.optimizer,
            ckpt.progress,
            best,
        )
    }

    fn assemble(
        cfg: TrainConfig,
        train: Corpus,
        dev: Corpus,
        params: ParamSet,
        optimizer: OptimizerState,
        progress: Progress,
        best: Option<Snapshot>,
    ) -> Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
        let grads = GradSet::zeros_like(&params);
        let workers = if cfg.threads > 1 {
            vec![grads.clone(); cfg.threads]
        } else {
            Vec::new()
        };
        Ok(Trainer {
            cfg,
            train: train.trees,
            dev: dev.trees,
            vocab: train.vocab,
            params,
            optimizer,
            epoch: progress.epoch,
            epochs_since_best: progress.epochs_since_best,
            best,
            grads,
            workers,
            pool,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn optimizer(&self) -> &OptimizerState {
        &self.optimizer
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn best(&self) -> Option<&Snapshot> {
        self.best.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.epoch >= self.cfg.max_epochs
            || (self.best.is_some() && self.epochs_since_best >= self.cfg.patience)
    }

    /// One pass over the shuffled training set followed by dev evaluation.
    pub fn run_epoch(&mut self) -> Result<EpochLog> {
        let start = Instant::now();
        let epoch = self.epoch + 1;
        let n = self.train.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(
            self.cfg.seed.wrapping_add(epoch as u64),
        ));

        let mut loss_sum = 0.0;
        for (batch_idx, batch) in order.chunks(self.cfg.batch_size).enumerate() {
            let loss = self.accumulate(batch)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    epoch,
                    batch: batch_idx,
                });
            }
            loss_sum += loss;
            // Mean data gradient plus this batch's 1/N share of the penalty,
            // so one epoch applies the regularizer once in total.
            self.grads.scale(1.0 / batch.len() as f64);
            add_regularizer_grad(
                &self.params,
                &mut self.grads,
                self.cfg.lambda,
                1.0 / n as f64,
            );
            if !self.grads.is_finite() {
                return Err(Error::NonFinite {
                    what: "gradient",
                    epoch,
                    batch: batch_idx,
                });
            }
            if let Some(max) = self.cfg.clip_norm {
                let norm = self.grads.squared_norm().sqrt();
                if norm > max {
                    self.grads.scale(max / norm);
                }
            }
            self.optimizer
                .step(&mut self.params, &self.grads, self.cfg.learning_rate);
        }

        let (params, dev, leaf) = (&self.params, &self.dev, self.cfg.leaf_cell);
        let metrics = self
            .pool
            .install(|| evaluate_trees(params, dev, Scope::AllNodes, leaf))?;
        let dev_root_acc = metrics.root_acc();
        self.epoch = epoch;
        if self
            .best
            .as_ref()
            .is_none_or(|b| dev_root_acc > b.dev_root_acc)
        {
            self.best = Some(Snapshot {
                epoch,
                dev_root_acc,
                params: self.params.clone(),
                optimizer: self.optimizer.clone(),
            });
            self.epochs_since_best = 0;
        } else {
            self.epochs_since_best += 1;
        }
        Ok(EpochLog {
            epoch,
            seconds: start.elapsed().as_secs_f64(),
            train_loss: (loss_sum + regularizer(&self.params, self.cfg.lambda)) / n as f64,
            dev_root_acc,
            dev_all_acc: metrics.phrase_acc(),
        })
    }

    /// Fills `self.grads` with the summed data gradient of `batch` and returns
    /// the summed data loss.
    fn accumulate(&mut self, batch: &[usize]) -> Result<f64> {
        let Trainer {
            cfg,
            train,
            params,
            grads,
            workers,
            pool,
            ..
        } = self;
        grads.zero();
        if workers.is_empty() {
            let mut loss = 0.0;
            for &i in batch {
                loss += tree_step(params, &train[i], cfg, grads)?;
            }
            return Ok(loss);
        }
        // Contiguous chunks, merged in worker order: the sum depends only on
        // the worker count, never on scheduling.
        let chunk = batch.len().div_ceil(workers.len());
        let used = batch.len().div_ceil(chunk);
        let params = &*params;
        let losses: Vec<Result<f64>> = pool.install(|| {
            workers[..used]
                .par_iter_mut()
                .zip(batch.par_chunks(chunk))
                .map(|(g, ids)| {
                    g.zero();
                    ids.iter().try_fold(0.0, |acc, &i| {
                        Ok(acc + tree_step(params, &train[i], cfg, g)?)
                    })
                })
                .collect()
        });
        let mut loss = 0.0;
        for (g, l) in workers[..used].iter().zip(losses) {
            loss += l?;
            grads.merge_scaled(g, 1.0);
        }
        Ok(loss)
    }

    /// Runs epochs until the stopping rule fires, reporting each one.
    pub fn run<F>(&mut self, mut on_epoch: F) -> Result<()>
    where
        F: FnMut(&EpochLog, &Trainer) -> Result<()>,
    {
        while !self.is_finished() {
            let log = self.run_epoch()?;
            on_epoch(&log, self)?;
        }
        Ok(())
    }

    /// Full resumable state.
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            vocab: self.vocab.clone(),
            params: self.params.clone(),
            optimizer: self.optimizer.clone(),
            progress: self.progress(),
            best: self
                .best
                .as_ref()
                .map(|b| (b.params.clone(), b.optimizer.clone())),
        }
    }

    /// The dev-selected model as a standalone checkpoint.
    pub fn best_checkpoint(&self) -> Option<Checkpoint> {
        let b = self.best.as_ref()?;
        Some(Checkpoint {
            config: self.cfg.clone(),
            vocab: self.vocab.clone(),
            params: b.params.clone(),
            optimizer: b.optimizer.clone(),
            progress: Progress {
                epoch: b.epoch,
                best_epoch: b.epoch,
                best_dev_root_acc: b.dev_root_acc,
                epochs_since_best: 0,
            },
            best: None,
        })
    }

    fn progress(&self) -> Progress {
        Progress {
            epoch: self.epoch,
            best_epoch: self.best.as_ref().map_or(0, |b| b.epoch),
            best_dev_root_acc: self.best.as_ref().map_or(0.0, |b| b.dev_root_acc),
            epochs_since_best: self.epochs_since_best,
        }
    }
}

fn tree_step(
    params: &ParamSet,
    tree: &Tree,
    cfg: &TrainConfig,
    grads: &mut GradSet,
) -> Result<f64> {
    let states = tree_forward(params, tree, cfg.leaf_cell)?;
    let (loss, _) = data_loss(&states, tree, cfg.mask);
    tree_backward(params, tree, &states, cfg.mask, grads);
    Ok(loss)
}

fn check_corpora(cfg: &TrainConfig, train: &Corpus, dev: &Corpus) -> Result<()> {
    cfg.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::Config(
            "training and dev corpora must be non-empty".into(),
        ));
    }
    if train.num_classes != dev.num_classes {
        return Err(Error::Config(format!(
            "train has {} classes but dev has {}",
            train.num_classes, dev.num_classes
        )));
    }
    if train.vocab != dev.vocab {
        return Err(Error::VocabMismatch(
            "dev corpus must be encoded with the training vocabulary".into(),
        ));
    }
    Ok(())
}

/// Trains to completion and returns the dev-selected parameters with the log.
pub fn train(cfg: TrainConfig, train: Corpus, dev: Corpus) -> Result<(ParamSet, Vec<EpochLog>)> {
    let mut t = Trainer::new(cfg, train, dev)?;
    let mut log = Vec::new();
    t.run(|e, _| {
        log.push(e.clone());
        Ok(())
    })?;
    let best = t.best.take().expect("at least one epoch ran").params;
    Ok((best, log))
}
