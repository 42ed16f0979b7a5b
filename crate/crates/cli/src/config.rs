//! Effective run configuration: command-line flags over an optional JSON
//! file over built-in defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use slstm::trainer::OptimizerKind;
use slstm::{LabelMask, LeafCellMode, Structure, TrainConfig};

use crate::Failure;

pub const DEFAULT_CLASSES: usize = 5;

/// What a `train` run actually used. Written to `config.json` in the output
/// directory and accepted back through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub dev: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub structure: Structure,
    pub classes: usize,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            dev: None,
            resume: None,
            structure: Structure::Parse,
            classes: DEFAULT_CLASSES,
            training: TrainConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Training treebank, one s-expression per line.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Development treebank used for model selection.
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a `last.ckpt` written by an earlier run.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// parse, chain_lr or chain_rr.
    #[arg(long)]
    pub structure: Option<Structure>,
    /// all, root or root_leaf.
    #[arg(long)]
    pub mask: Option<LabelMask>,
    /// copy_h, zero or tanh.
    #[arg(long)]
    pub leaf_cell: Option<LeafCellMode>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// sgd or adagrad.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub clip_norm: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn read_config_file(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Failure::Usage(format!("bad config {}: {e}", path.display())))
}

impl TrainFlags {
    /// Layers these flags over `base`.
    pub fn apply(&self, mut base: RunConfig) -> RunConfig {
        fn set<T: Clone>(slot: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *slot = v.clone();
            }
        }
        if self.train.is_some() {
            base.train.clone_from(&self.train);
        }
        if self.dev.is_some() {
            base.dev.clone_from(&self.dev);
        }
        if self.resume.is_some() {
            base.resume.clone_from(&self.resume);
        }
        set(&mut base.structure, &self.structure);
        set(&mut base.classes, &self.classes);
        let t = &mut base.training;
        set(&mut t.mask, &self.mask);
        set(&mut t.leaf_cell, &self.leaf_cell);
        set(&mut t.hidden_dim, &self.hidden);
        set(&mut t.batch_size, &self.batch);
        set(&mut t.learning_rate, &self.lr);
        set(&mut t.lambda, &self.lambda);
        set(&mut t.max_epochs, &self.epochs);
        set(&mut t.seed, &self.seed);
        set(&mut t.optimizer, &self.optimizer);
        set(&mut t.patience, &self.patience);
        set(&mut t.threads, &self.threads);
        if self.clip_norm.is_some() {
            t.clip_norm = self.clip_norm;
        }
        base
    }

    pub fn resolve(&self) -> Result<RunConfig, Failure> {
        let base = match &self.config {
            Some(p) => read_config_file(p)?,
            None => RunConfig::default(),
        };
        let cfg = self.apply(base);
        cfg.training
            .validate()
            .map_err(|e| Failure::Usage(e.to_string()))?;
        if cfg.classes < 2 {
            return Err(Failure::Usage("--classes must be at least 2".into()));
        }
        Ok(cfg)
    }
}
