//! Sentiment treebank ingestion: s-expression trees, vocabularies, corpora,
//! chain restructuring and per-node depth/length strata.

mod sexpr;
mod tree;

pub use sexpr::{parse_sexpr, serialize, ABSENT_LABEL};
pub use tree::{NodeId, Side, Tree, TreeBuilder, TreeNode};

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK_TOKEN: &str = "<unk>";
pub const UNK_ID: usize = 0;

/// Word order used when flattening a tree into a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainDirection {
    /// Left-branching: words combined left to right, `((a b) c)`.
    Left,
    /// Right-branching: words combined right to left, `(a (b c))`.
    Right,
}

/// Tree shape fed to the model: the given parse or one of the two chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Structure {
    #[default]
    Parse,
    ChainLr,
    ChainRr,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Parse, Structure::ChainLr, Structure::ChainRr];

    pub fn chain(self) -> Option<ChainDirection> {
        match self {
            Structure::Parse => None,
            Structure::ChainLr => Some(ChainDirection::Left),
            Structure::ChainRr => Some(ChainDirection::Right),
        }
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Parse => "parse",
            Structure::ChainLr => "chain_lr",
            Structure::ChainRr => "chain_rr",
        })
    }
}

impl FromStr for Structure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Structure::ALL
            .into_iter()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown structure `{s}` (parse, chain_lr, chain_rr)"
                ))
            })
    }
}

/// Replaces the tree's structure by a chain over the same leaves.
///
/// The root keeps its label and the leaves keep theirs; new internal nodes
/// are unlabeled because they have no counterpart in the original tree.
pub fn restructure_chain(tree: &Tree, direction: ChainDirection) -> Tree {
    let leaves: Vec<&TreeNode> = tree
        .leaf_ids()
        .into_iter()
        .map(|id| tree.node(id))
        .collect();
    if leaves.len() == 1 {
        return tree.clone();
    }
    let root_label = tree.root().label;
    let mut b = TreeBuilder::new();
    let add_leaf = |b: &mut TreeBuilder, n: &TreeNode| {
        b.leaf_with_id(n.label, n.token.clone().unwrap_or_default(), n.word_id)
    };
    let last = leaves.len() - 1;
    match direction {
        ChainDirection::Left => {
            let mut acc = add_leaf(&mut b, leaves[0]);
            for (k, leaf) in leaves.iter().enumerate().skip(1) {
                let next = add_leaf(&mut b, leaf);
                let label = if k == last { root_label } else { None };
                acc = b.internal(label, acc, next);
            }
        }
        ChainDirection::Right => {
            let mut acc = add_leaf(&mut b, leaves[last]);
            for k in (0..last).rev() {
                let next = add_leaf(&mut b, leaves[k]);
                let label = if k == 0 { root_label } else { None };
                acc = b.internal(label, next, acc);
            }
        }
    }
    b.finish()
        .expect("chain over existing leaves is a valid tree")
}

/// Depth and length of one node, for stratified evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeStratum {
    pub node: NodeId,
    pub depth: usize,
    pub length: usize,
}

pub fn stratify(tree: &Tree) -> Vec<NodeStratum> {
    tree.nodes()
        .iter()
        .enumerate()
        .map(|(node, n)| NodeStratum {
            node,
            depth: n.depth(),
            length: n.span_length(),
        })
        .collect()
}

/// Dense word ↔ id map. Id 0 is reserved for unknown words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Default for Vocab {
    fn default() -> Self {
        Vocab::new()
    }
}

impl Vocab {
    pub fn new() -> Self {
        Vocab::from_words(std::iter::empty::<String>())
    }

    /// Builds a vocabulary from words in first-appearance order; duplicates
    /// and the UNK token itself are ignored.
    pub fn from_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            words: vec![UNK_TOKEN.to_string()],
            index: HashMap::from([(UNK_TOKEN.to_string(), UNK_ID)]),
        };
        for w in words {
            v.insert(w.into());
        }
        v
    }

    fn insert(&mut self, word: String) -> usize {
        if let Some(&id) = self.index.get(&word) {
            return id;
        }
        let id = self.words.len();
        self.index.insert(word.clone(), id);
        self.words.push(word);
        id
    }

    /// Embedding table rows, UNK included.
    pub fn size(&self) -> usize {
        self.words.len()
    }

    /// Known words, UNK excluded.
    pub fn num_words(&self) -> usize {
        self.words.len() - 1
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn id_or_unk(&self, word: &str) -> usize {
        self.id(word).unwrap_or(UNK_ID)
    }

    pub fn word(&self, id: usize) -> Option<&str> {
        self.words.get(id).map(String::as_str)
    }

    /// Words in id order, UNK first.
    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Restores the lookup table after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }

    /// Assigns word ids to every leaf; unknown tokens map to UNK.
    /// Returns the number of leaves that fell back to UNK.
    pub fn encode(&self, tree: &mut Tree) -> usize {
        let mut unknown = 0;
        for node in tree.nodes_mut() {
            if let Some(tok) = node.token.as_deref() {
                let id = self.id(tok);
                unknown += usize::from(id.is_none());
                node.word_id = Some(id.unwrap_or(UNK_ID));
            }
        }
        unknown
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

/// Trees of one split with every leaf mapped to a vocabulary id.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub trees: Vec<Tree>,
    pub vocab: Vocab,
    pub num_classes: usize,
    pub split: Split,
    /// Leaves whose token was not in a supplied vocabulary.
    pub unknown_tokens: usize,
}

impl Corpus {
    /// Assembles a corpus from already-parsed trees. Without a vocabulary, one
    /// is built from the trees' tokens.
    pub fn from_trees(
        mut trees: Vec<Tree>,
        split: Split,
        vocab: Option<&Vocab>,
        num_classes: usize,
    ) -> Result<Self> {
        for (i, t) in trees.iter().enumerate() {
            check_labels(t, num_classes).map_err(|e| e.at_line(i + 1))?;
        }
        let vocab = match vocab {
            Some(v) => v.clone(),
            None => Vocab::from_words(trees.iter().flat_map(|t| {
                t.tokens()
                    .into_iter()
                    .map(str::to_owned)
                    .collect::<Vec<_>>()
            })),
        };
        let unknown_tokens = trees.iter_mut().map(|t| vocab.encode(t)).sum();
        Ok(Corpus {
            trees,
            vocab,
            num_classes,
            split,
            unknown_tokens,
        })
    }

    /// Parses one tree per non-blank line.
    pub fn parse(
        text: &str,
        split: Split,
        vocab: Option<&Vocab>,
        num_classes: usize,
    ) -> Result<Self> {
        let mut trees = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let tree = parse_sexpr(line).map_err(|e| e.at_line(i + 1))?;
            check_labels(&tree, num_classes).map_err(|e| e.at_line(i + 1))?;
            trees.push(tree);
        }
        Corpus::from_trees(trees, split, vocab, num_classes)
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn restructured(&self, direction: ChainDirection) -> Corpus {
        Corpus {
            trees: self
                .trees
                .iter()
                .map(|t| restructure_chain(t, direction))
                .collect(),
            ..self.clone()
        }
    }

    pub fn with_structure(self, structure: Structure) -> Corpus {
        match structure.chain() {
            None => self,
            Some(d) => self.restructured(d),
        }
    }

    pub fn stats(&self) -> CorpusStats {
        let mut classes = BTreeSet::new();
        let mut s = CorpusStats {
            split: self.split,
            trees: self.trees.len(),
            ..CorpusStats::default()
        };
        for t in &self.trees {
            s.nodes += t.len();
            s.leaves += t.num_leaves();
            s.labeled += t.labeled_count();
            s.max_depth = s.max_depth.max(t.root().depth());
            classes.extend(t.nodes().iter().filter_map(|n| n.label));
        }
        s.classes = classes.len();
        s
    }
}

/// Reads a treebank file with one s-expression per line.
pub fn load_corpus(
    path: impl AsRef<Path>,
    split: Split,
    vocab: Option<&Vocab>,
    num_classes: usize,
) -> Result<Corpus> {
    let text = std::fs::read_to_string(path)?;
    Corpus::parse(&text, split, vocab, num_classes)
}

fn check_labels(tree: &Tree, num_classes: usize) -> Result<()> {
    match tree
        .nodes()
        .iter()
        .filter_map(|n| n.label)
        .find(|&l| l >= num_classes)
    {
        Some(label) => Err(Error::LabelRange { label, num_classes }),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub split: Split,
    pub trees: usize,
    pub nodes: usize,
    pub leaves: usize,
    pub labeled: usize,
    pub max_depth: usize,
    /// Distinct labels observed.
    pub classes: usize,
}

impl Default for CorpusStats {
    fn default() -> Self {
        CorpusStats {
            split: Split::Train,
            trees: 0,
            nodes: 0,
            leaves: 0,
            labeled: 0,
            max_depth: 0,
            classes: 0,
        }
    }
}

impl CorpusStats {
    pub const CSV_HEADER: &'static str = "split,nodes,leaves,max_depth,classes";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.split, self.nodes, self.leaves, self.max_depth, self.classes
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn structure_names() {
        for s in Structure::ALL {
            assert_eq!(s.to_string().parse::<Structure>().unwrap(), s);
        }
        assert!("chain".parse::<Structure>().is_err());
        let c = Corpus::parse("(3 (1 a) (2 (0 b) (4 c)))", Split::Train, None, 5).unwrap();
        let lr = c.clone().with_structure(Structure::ChainLr);
        assert_eq!(serialize(&lr.trees[0]), "(3 (_ (1 a) (0 b)) (4 c))");
        assert_eq!(c.clone().with_structure(Structure::Parse).trees, c.trees);
    }

    #[test]
    fn parses_two_leaf_tree() {
        let t = parse_sexpr("(3 (2 good) (2 movie))").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.root().label, Some(3));
        assert_eq!(t.root().depth(), 1);
        assert_eq!(t.root().span_length(), 2);
        assert_eq!(t.tokens(), vec!["good", "movie"]);
        assert_eq!(t.side_of(0), Some(Side::Left));
        assert_eq!(t.side_of(1), Some(Side::Right));
        assert_eq!(t.side_of(2), None);
    }

    #[test]
    fn parses_single_leaf() {
        let t = parse_sexpr("(1 ok)").unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.root().is_leaf());
        assert_eq!(t.root().depth(), 0);
        assert_eq!(t.root().span_length(), 1);
        assert_eq!(serialize(&t), "(1 ok)");
    }

    #[test]
    fn parse_errors() {
        let cases = [
            "(2 (2 a) (2 (2 b) (2 c)",
            "(x (2 a) (2 b))",
            "(-1 a)",
            "(2 (2 a))",
            "(2 (2 a) (2 b) (2 c))",
            "(2 )",
            "(2 a) (2 b)",
            "",
            "(2 a (2 b))",
        ];
        for c in cases {
            assert!(
                matches!(parse_sexpr(c), Err(Error::Parse { .. })),
                "accepted {c:?}"
            );
        }
        match parse_sexpr("(2 (2 a) (2 (2 b) (2 c)") {
            Err(Error::Parse { message, .. }) => assert!(message.contains("unbalanced")),
            other => panic!("{other:?}"),
        }
        match parse_sexpr("(2 (q a) (2 b))") {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn serialize_canonicalizes_whitespace() {
        let t = parse_sexpr("  (3\t(2  good )\n (2 movie) ) ").unwrap();
        assert_eq!(serialize(&t), "(3 (2 good) (2 movie))");
    }

    #[test]
    fn chain_shapes() {
        let t = parse_sexpr("(4 (1 a) (3 (2 b) (0 c)))").unwrap();
        let left = restructure_chain(&t, ChainDirection::Left);
        assert_eq!(serialize(&left), "(4 (_ (1 a) (2 b)) (0 c))");
        let right = restructure_chain(&t, ChainDirection::Right);
        assert_eq!(serialize(&right), "(4 (1 a) (_ (2 b) (0 c)))");

        let leaf = parse_sexpr("(1 ok)").unwrap();
        assert_eq!(restructure_chain(&leaf, ChainDirection::Left), leaf);
    }

    #[test]
    fn chain_depth_is_forced() {
        let balanced = parse_sexpr("(2 (2 (2 a) (2 b)) (2 (2 c) (2 d)))").unwrap();
        assert_eq!(balanced.root().depth(), 2);
        let chain = restructure_chain(&balanced, ChainDirection::Left);
        assert_eq!(chain.root().depth(), 3);
        assert_eq!(stratify(&chain).last().unwrap().depth, 3);
    }

    #[test]
    fn stratify_examples() {
        let t = parse_sexpr("(3 (2 good) (2 movie))").unwrap();
        let s = stratify(&t);
        assert_eq!((s[0].depth, s[0].length), (0, 1));
        assert_eq!((s[2].depth, s[2].length), (1, 2));
    }

    #[test]
    fn corpus_loading() {
        let text = "(3 (2 good) (2 movie))\n\n(1 (2 bad) (2 movie))\n";
        let c = Corpus::parse(text, Split::Train, None, 5).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.vocab.num_words(), 3);
        assert_eq!(c.vocab.id("good"), Some(1));
        assert_eq!(c.vocab.id("movie"), Some(2));
        assert_eq!(c.trees[1].node(0).word_id, Some(3));

        let test =
            Corpus::parse("(2 (2 great) (2 movie))", Split::Test, Some(&c.vocab), 5).unwrap();
        assert_eq!(test.trees[0].node(0).word_id, Some(UNK_ID));
        assert_eq!(test.trees[0].node(1).word_id, Some(2));
        assert_eq!(test.unknown_tokens, 1);
        assert_eq!(test.vocab, c.vocab);

        let stats = c.stats();
        assert_eq!(stats.csv_row(), "train,6,4,1,3");
    }

    #[test]
    fn corpus_errors_carry_line_numbers() {
        match Corpus::parse("(1 a)\n(2 (2 b)\n", Split::Train, None, 5) {
            Err(Error::Line { line: 2, source }) => {
                assert!(matches!(*source, Error::Parse { .. }))
            }
            other => panic!("{other:?}"),
        }
        match Corpus::parse("(1 a)\n\n(7 b)", Split::Train, None, 5) {
            Err(Error::Line { line: 3, source }) => {
                assert!(matches!(*source, Error::LabelRange { label: 7, .. }))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_empty_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.txt");
        std::fs::write(&path, "").unwrap();
        let c = load_corpus(&path, Split::Train, None, 5).unwrap();
        assert!(c.is_empty());
        assert_eq!(c.vocab.num_words(), 0);
    }

    #[test]
    fn vocab_ids_are_stable() {
        let text = "(1 (2 b) (2 a))\n(1 (2 c) (2 a))";
        let a = Corpus::parse(text, Split::Train, None, 5).unwrap();
        let b = Corpus::parse(text, Split::Train, None, 5).unwrap();
        assert_eq!(a.vocab, b.vocab);
        let ids: Vec<_> = a
            .vocab
            .words()
            .iter()
            .map(|w| a.vocab.id(w).unwrap())
            .collect();
        assert_eq!(ids, (0..a.vocab.size()).collect::<Vec<_>>());
    }

    fn arb_tree() -> impl Strategy<Value = Tree> {
        let leaf =
            (proptest::option::of(0usize..5), "[a-z]{1,6}").prop_map(|(l, w)| vec![(l, Some(w))]);
        // A tree is encoded as a prefix list; children follow their parent.
        let nested = leaf.prop_recursive(5, 32, 2, |inner| {
            (proptest::option::of(0usize..5), inner.clone(), inner).prop_map(|(l, a, b)| {
                let mut v = vec![(l, None)];
                v.extend(a);
                v.extend(b);
                v
            })
        });
        nested.prop_map(|prefix| {
            fn build(
                it: &mut std::slice::Iter<(Option<usize>, Option<String>)>,
                b: &mut TreeBuilder,
            ) -> NodeId {
                let (label, tok) = it.next().unwrap();
                match tok {
                    Some(w) => b.leaf(*label, w.clone()),
                    None => {
                        let l = build(it, b);
                        let r = build(it, b);
                        b.internal(*label, l, r)
                    }
                }
            }
            let mut b = TreeBuilder::new();
            build(&mut prefix.iter(), &mut b);
            b.finish().unwrap()
        })
    }

    proptest! {
        #[test]
        fn parse_serialize_round_trip(t in arb_tree()) {
            let text = serialize(&t);
            let back = parse_sexpr(&text).unwrap();
            prop_assert_eq!(&back, &t);
            prop_assert_eq!(serialize(&back), text);
        }

        #[test]
        fn structural_invariants(t in arb_tree()) {
            let leaves = t.num_leaves();
            prop_assert_eq!(t.leaf_ids().len(), leaves);
            prop_assert!(t.root().depth() < leaves.max(1));
            for (id, n) in t.nodes().iter().enumerate() {
                if let Some([l, r]) = n.children() {
                    prop_assert!(l < id && r < id);
                    prop_assert_eq!(n.depth(), 1 + t.node(l).depth().max(t.node(r).depth()));
                    prop_assert_eq!(n.span_length(), t.node(l).span_length() + t.node(r).span_length());
                } else {
                    prop_assert_eq!(n.depth(), 0);
                    prop_assert!(n.token.is_some());
                }
            }
        }

        #[test]
        fn chains_preserve_leaves_and_root(t in arb_tree()) {
            for dir in [ChainDirection::Left, ChainDirection::Right] {
                let c = restructure_chain(&t, dir);
                prop_assert_eq!(c.tokens(), t.tokens());
                prop_assert_eq!(c.root().label, t.root().label);
                let labels = |tr: &Tree| tr.leaf_ids().iter().map(|&i| tr.node(i).label).collect::<Vec<_>>();
                prop_assert_eq!(labels(&c), labels(&t));
                let n = t.num_leaves();
                prop_assert_eq!(c.root().depth(), n - 1);
                if n > 1 {
                    let internal_labeled = c.nodes().iter().enumerate()
                        .filter(|(id, node)| !node.is_leaf() && *id != c.root_id() && node.label.is_some())
                        .count();
                    prop_assert_eq!(internal_labeled, 0);
                }
            }
        }
    }
}
