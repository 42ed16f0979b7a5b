//! Resumable training state on disk.
//!
//! Layout: magic, version, a length-prefixed JSON header holding the config,
//! vocabulary and progress counters, then parameter dumps for the current
//! parameters, the adagrad accumulators when present, and optionally the
//! dev-selected parameters with their accumulators.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::params::{read_exact, read_u64};
use crate::linalg::ParamSet;
use crate::trainer::{OptimizerKind, OptimizerState, TrainConfig};
use crate::treebank::Vocab;

pub const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_MAGIC: &[u8; 8] = b"SLSTMCKP";
/// Refuses absurd header lengths from a corrupted file before allocating.
const MAX_HEADER: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    /// Completed epochs.
    pub epoch: usize,
    pub best_epoch: usize,
    pub best_dev_root_acc: f64,
    pub epochs_since_best: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub vocab: Vocab,
    pub params: ParamSet,
    pub optimizer: OptimizerState,
    pub progress: Progress,
    pub best: Option<(ParamSet, OptimizerState)>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    vocab: Vocab,
    progress: Progress,
    has_best: bool,
}

fn write_optimizer<W: Write>(w: &mut W, opt: &OptimizerState) -> Result<()> {
    match &opt.accum {
        None => w.write_all(&[0])?,
        Some(acc) => {
            w.write_all(&[1])?;
            acc.write_to(w)?;
        }
    }
    Ok(())
}

fn read_optimizer<R: Read>(r: &mut R, params: &ParamSet) -> Result<OptimizerState> {
    let mut tag = [0u8];
    read_exact(r, &mut tag)?;
    match tag[0] {
        0 => Ok(OptimizerState {
            kind: OptimizerKind::Sgd,
            accum: None,
        }),
        1 => {
            let acc = ParamSet::read_from(r)?;
            if acc.dims() != params.dims() {
                return Err(Error::Format(
                    "optimizer accumulators do not match parameters".into(),
                ));
            }
            if !acc
                .iter()
                .all(|(_, m)| m.as_slice().iter().all(|&a| a >= 0.0))
            {
                return Err(Error::Format("negative adagrad accumulator".into()));
            }
            Ok(OptimizerState {
                kind: OptimizerKind::Adagrad,
                accum: Some(acc),
            })
        }
        t => Err(Error::Format(format!("unknown optimizer tag {t}"))),
    }
}

impl Checkpoint {
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = serde_json::to_vec(&Header {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            progress: self.progress,
            has_best: self.best.is_some(),
        })?;
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        w.write_all(&(header.len() as u64).to_le_bytes())?;
        w.write_all(&header)?;
        self.params.write_to(w)?;
        write_optimizer(w, &self.optimizer)?;
        if let Some((p, o)) = &self.best {
            p.write_to(w)?;
            write_optimizer(w, o)?;
        }
        Ok(())
    }

    /// Reads a complete checkpoint; anything short of that is an error.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let mut v = [0u8; 4];
        read_exact(r, &mut v)?;
        let version = u32::from_le_bytes(v);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let len = read_u64(r)?;
        if len > MAX_HEADER {
            return Err(Error::Format(format!("header length {len} is implausible")));
        }
        let mut raw = vec![0u8; len as usize];
        read_exact(r, &mut raw)?;
        let mut header: Header = serde_json::from_slice(&raw)
            .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
        header.vocab.rebuild_index();

        let params = ParamSet::read_from(r)?;
        if params.vocab_size() != header.vocab.size()
            || params.hidden_dim() != header.config.hidden_dim
        {
            return Err(Error::Format(
                "parameter shapes disagree with the header".into(),
            ));
        }
        let optimizer = read_optimizer(r, &params)?;
        let best = if header.has_best {
            let p = ParamSet::read_from(r)?;
            if p.dims() != params.dims() {
                return Err(Error::Format(
                    "best parameters have different shapes".into(),
                ));
            }
            let o = read_optimizer(r, &p)?;
            Some((p, o))
        } else {
            None
        };
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(Checkpoint {
            config: header.config,
            vocab: header.vocab,
            params,
            optimizer,
            progress: header.progress,
            best,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out)
            .expect("writing to a Vec cannot fail");
        out
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{random_trees, toy_vocab};
    use crate::trainer::Trainer;
    use crate::treebank::{Corpus, Split};

    fn corpus(seed: u64, n: usize) -> Corpus {
        Corpus::from_trees(
            random_trees(seed, n, 3, 5),
            Split::Train,
            Some(&toy_vocab()),
            5,
        )
        .unwrap()
    }

    fn cfg(max_epochs: usize) -> TrainConfig {
        TrainConfig {
            hidden_dim: 3,
            batch_size: 4,
            max_epochs,
            patience: 100,
            ..TrainConfig::default()
        }
    }

    fn trained(epochs: usize) -> Trainer {
        let mut t = Trainer::new(cfg(epochs), corpus(1, 12), corpus(2, 6)).unwrap();
        t.run(|_, _| Ok(())).unwrap();
        t
    }

    #[test]
    fn round_trip_is_exact() {
        let ckpt = trained(2).checkpoint();
        let back = Checkpoint::read_from(&mut ckpt.to_bytes().as_slice()).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_bytes(), ckpt.to_bytes());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ckpt");
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
    }

    #[test]
    fn rejects_damage() {
        let bytes = trained(1).checkpoint().to_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            Checkpoint::read_from(&mut bad.as_slice()),
            Err(Error::Format(_))
        ));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            Checkpoint::read_from(&mut bad.as_slice()),
            Err(Error::Version { found: 9, .. })
        ));
        for cut in [3, 20, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                Checkpoint::read_from(&mut &bytes[..cut]).is_err(),
                "cut at {cut}"
            );
        }
        let mut long = bytes.clone();
        long.push(0);
        assert!(Checkpoint::read_from(&mut long.as_slice()).is_err());
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let straight = trained(4).checkpoint();

        let mut first = Trainer::new(cfg(4), corpus(1, 12), corpus(2, 6)).unwrap();
        first.run_epoch().unwrap();
        first.run_epoch().unwrap();
        let saved = Checkpoint::read_from(&mut first.checkpoint().to_bytes().as_slice()).unwrap();
        let mut resumed = Trainer::resume(saved, corpus(1, 12), corpus(2, 6)).unwrap();
        resumed.run(|_, _| Ok(())).unwrap();
        assert_eq!(resumed.epoch(), 4);
        assert_eq!(resumed.checkpoint().to_bytes(), straight.to_bytes());
    }

    #[test]
    fn identical_runs_write_identical_bytes() {
        assert_eq!(
            trained(3).checkpoint().to_bytes(),
            trained(3).checkpoint().to_bytes()
        );
    }
}
