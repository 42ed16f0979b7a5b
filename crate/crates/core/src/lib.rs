//! Long short-term memory over binary trees.
//!
//! Each internal node of a parse tree holds a memory block with one input
//! gate, one forget gate per child and an output gate; leaves hold word
//! embeddings. Forward and backward passes are written out by hand and
//! validated against finite differences in [`gradcheck`].

pub mod block;
pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod linalg;
pub mod network;
pub mod synth;
pub mod trainer;
pub mod treebank;

pub use checkpoint::Checkpoint;
pub use error::{Error, Result};
pub use eval::{Metrics, Scope};
pub use linalg::{GradSet, Matrix, ModelDims, Param, ParamSet, Vector};
pub use network::{LabelMask, LeafCellMode, TreeStates};
pub use trainer::{EpochLog, OptimizerKind, TrainConfig, Trainer};
pub use treebank::{ChainDirection, Corpus, Split, Structure, Tree, Vocab};
