//! Accuracy at the roots and over all labeled phrases, with exact-integer
//! depth and length buckets.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ParamSet;
use crate::network::{argmax, tree_forward, LeafCellMode};
use crate::treebank::{Corpus, Tree};

pub const DEPTH_REPORT: &str = "report_depth.csv";
pub const LENGTH_REPORT: &str = "report_length.csv";
pub const SUMMARY_REPORT: &str = "report_summary.json";

/// Which nodes fill the stratified buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Roots,
    AllNodes,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bucket {
    pub correct: usize,
    pub total: usize,
}

impl Bucket {
    fn record(&mut self, hit: bool) {
        self.correct += usize::from(hit);
        self.total += 1;
    }

    fn merge(&mut self, other: Bucket) {
        self.correct += other.correct;
        self.total += other.total;
    }

    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Metrics {
    pub roots: Bucket,
    /// Every labeled node, roots included.
    pub phrases: Bucket,
    pub by_depth: BTreeMap<usize, Bucket>,
    pub by_length: BTreeMap<usize, Bucket>,
    pub n_trees: usize,
}

impl Metrics {
    pub fn root_acc(&self) -> f64 {
        self.roots.accuracy()
    }

    pub fn phrase_acc(&self) -> f64 {
        self.phrases.accuracy()
    }

    /// Total of the stratified buckets.
    pub fn bucket_total(&self) -> usize {
        self.by_depth.values().map(|b| b.total).sum()
    }

    fn merge(mut self, other: Metrics) -> Metrics {
        self.roots.merge(other.roots);
        self.phrases.merge(other.phrases);
        for (k, b) in other.by_depth {
            self.by_depth.entry(k).or_default().merge(b);
        }
        for (k, b) in other.by_length {
            self.by_length.entry(k).or_default().merge(b);
        }
        self.n_trees += other.n_trees;
        self
    }
}

fn evaluate_tree(
    params: &ParamSet,
    tree: &Tree,
    scope: Scope,
    leaf_cell: LeafCellMode,
) -> Result<Metrics> {
    let states = tree_forward(params, tree, leaf_cell)?;
    let mut m = Metrics {
        n_trees: 1,
        ..Metrics::default()
    };
    let root = tree.root_id();
    for (id, node) in tree.nodes().iter().enumerate() {
        let Some(gold) = node.label else { continue };
        let hit = argmax(&states.probs[id]) == gold;
        m.phrases.record(hit);
        if id == root {
            m.roots.record(hit);
        }
        if scope == Scope::AllNodes || id == root {
            m.by_depth.entry(node.depth()).or_default().record(hit);
            m.by_length
                .entry(node.span_length())
                .or_default()
                .record(hit);
        }
    }
    Ok(m)
}

/// Scores every tree; runs on the current rayon pool. Counts are integers, so
/// the result does not depend on the number of threads.
pub fn evaluate_trees(
    params: &ParamSet,
    trees: &[Tree],
    scope: Scope,
    leaf_cell: LeafCellMode,
) -> Result<Metrics> {
    let per_tree: Vec<Metrics> = trees
        .par_iter()
        .map(|t| evaluate_tree(params, t, scope, leaf_cell))
        .collect::<Result<_>>()?;
    Ok(per_tree
        .into_iter()
        .fold(Metrics::default(), Metrics::merge))
}

pub fn evaluate(
    params: &ParamSet,
    corpus: &Corpus,
    scope: Scope,
    leaf_cell: LeafCellMode,
) -> Result<Metrics> {
    evaluate_trees(params, &corpus.trees, scope, leaf_cell)
}

/// Confirms that `corpus` was encoded with the vocabulary `params` were
/// trained on and that its labels fit the classifier.
pub fn check_compatible(params: &ParamSet, corpus: &Corpus) -> Result<()> {
    if params.vocab_size() != corpus.vocab.size() {
        return Err(Error::VocabMismatch(format!(
            "embedding table has {} rows but the vocabulary has {} entries",
            params.vocab_size(),
            corpus.vocab.size()
        )));
    }
    if params.num_classes() != corpus.num_classes {
        return Err(Error::VocabMismatch(format!(
            "model predicts {} classes but the corpus declares {}",
            params.num_classes(),
            corpus.num_classes
        )));
    }
    let leaves: usize = corpus.trees.iter().map(Tree::num_leaves).sum();
    if leaves > 0 && corpus.unknown_tokens == leaves {
        return Err(Error::VocabMismatch(format!(
            "none of the corpus's {leaves} tokens are in the model vocabulary"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub root_acc: f64,
    pub phrase_acc: f64,
    pub n_trees: usize,
    pub n_nodes: usize,
}

pub fn summary(m: &Metrics) -> Summary {
    Summary {
        root_acc: m.root_acc(),
        phrase_acc: m.phrase_acc(),
        n_trees: m.n_trees,
        n_nodes: m.phrases.total,
    }
}

pub fn bucket_csv(key: &str, buckets: &BTreeMap<usize, Bucket>) -> String {
    let mut out = format!("{key},correct,total,accuracy\n");
    for (k, b) in buckets {
        let _ = writeln!(out, "{k},{},{},{}", b.correct, b.total, b.accuracy());
    }
    out
}

/// Writes the depth and length CSVs and the JSON summary into `dir`.
pub fn emit_report(m: &Metrics, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(DEPTH_REPORT), bucket_csv("depth", &m.by_depth))?;
    std::fs::write(dir.join(LENGTH_REPORT), bucket_csv("length", &m.by_length))?;
    let json = serde_json::to_string_pretty(&summary(m))?;
    std::fs::write(dir.join(SUMMARY_REPORT), json + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{random_params, random_trees, TOY_VOCAB};
    use crate::linalg::{ModelDims, Param};
    use crate::treebank::Split;

    #[test]
    fn correct_root_scores_one() {
        let c = Corpus::parse("(2 (1 a) (0 b))", Split::Test, None, 5).unwrap();
        let mut p = ParamSet::zeros(ModelDims::new(2, c.vocab.size(), 5));
        p[Param::Bs].set(2, 0, 1.0);
        let m = evaluate(&p, &c, Scope::Roots, LeafCellMode::CopyH).unwrap();
        assert_eq!(m.root_acc(), 1.0);
        assert_eq!(m.bucket_total(), 1);
        assert_eq!(m.phrase_acc(), 1.0 / 3.0);
    }

    #[test]
    fn uniform_predictions_score_class_zero_frequency() {
        let trees = random_trees(4, 30, 4, 5);
        let c =
            Corpus::from_trees(trees, Split::Dev, Some(&crate::gradcheck::toy_vocab()), 5).unwrap();
        let p = ParamSet::zeros(ModelDims::new(3, TOY_VOCAB + 1, 5));
        let m = evaluate(&p, &c, Scope::AllNodes, LeafCellMode::CopyH).unwrap();
        let (zeros, labeled) =
            c.trees
                .iter()
                .flat_map(|t| t.nodes())
                .fold((0, 0), |(z, n), node| match node.label {
                    Some(l) => (z + usize::from(l == 0), n + 1),
                    None => (z, n),
                });
        assert_eq!(m.phrases.total, labeled);
        assert_eq!(m.phrases.correct, zeros);
    }

    #[test]
    fn bucket_totals_agree() {
        let trees = random_trees(9, 40, 4, 5);
        let p = random_params(ModelDims::new(3, TOY_VOCAB + 1, 5), 1, 0.5);
        let all = evaluate_trees(&p, &trees, Scope::AllNodes, LeafCellMode::CopyH).unwrap();
        let labeled: usize = trees.iter().map(Tree::labeled_count).sum();
        assert_eq!(all.bucket_total(), labeled);
        assert_eq!(
            all.by_length.values().map(|b| b.total).sum::<usize>(),
            labeled
        );
        assert_eq!(all.phrases.total, labeled);
        let roots = evaluate_trees(&p, &trees, Scope::Roots, LeafCellMode::CopyH).unwrap();
        let labeled_roots = trees.iter().filter(|t| t.root().label.is_some()).count();
        assert_eq!(roots.bucket_total(), labeled_roots);
        assert_eq!(roots.roots.total, labeled_roots);
        assert_eq!(
            all,
            evaluate_trees(&p, &trees, Scope::AllNodes, LeafCellMode::CopyH).unwrap()
        );
    }

    #[test]
    fn detects_foreign_corpus() {
        let train = Corpus::parse("(2 (1 a) (0 b))", Split::Train, None, 5).unwrap();
        let p = ParamSet::zeros(ModelDims::new(2, train.vocab.size(), 5));
        check_compatible(&p, &train).unwrap();
        let partly = Corpus::parse("(2 (1 a) (0 zz))", Split::Test, Some(&train.vocab), 5).unwrap();
        check_compatible(&p, &partly).unwrap();
        let foreign = Corpus::parse("(2 (1 x) (0 y))", Split::Test, Some(&train.vocab), 5).unwrap();
        assert!(matches!(
            check_compatible(&p, &foreign),
            Err(Error::VocabMismatch(_))
        ));
        let own_vocab = Corpus::parse("(2 (1 x) (0 y) )", Split::Test, None, 5).unwrap();
        let wide = ParamSet::zeros(ModelDims::new(2, 50, 5));
        assert!(check_compatible(&wide, &own_vocab).is_err());
    }

    #[test]
    fn report_files() {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&Metrics::default(), dir.path()).unwrap();
        assert_eq!(
            std::fs::read_to_string(dir.path().join(DEPTH_REPORT)).unwrap(),
            "depth,correct,total,accuracy\n"
        );
        assert_eq!(
            std::fs::read_to_string(dir.path().join(LENGTH_REPORT)).unwrap(),
            "length,correct,total,accuracy\n"
        );

        let mut m = Metrics::default();
        m.by_depth.insert(
            0,
            Bucket {
                correct: 5,
                total: 10,
            },
        );
        m.phrases = Bucket {
            correct: 5,
            total: 10,
        };
        m.n_trees = 2;
        emit_report(&m, dir.path()).unwrap();
        let depth = std::fs::read_to_string(dir.path().join(DEPTH_REPORT)).unwrap();
        assert_eq!(depth.lines().nth(1), Some("0,5,10,0.5"));
        let json: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join(SUMMARY_REPORT)).unwrap(),
        )
        .unwrap();
        assert_eq!(json["phrase_acc"], 0.5);
        assert_eq!(json["n_trees"], 2);
        assert_eq!(json["n_nodes"], 10);
    }
}
