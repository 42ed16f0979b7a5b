//! Whole-tree model: embedding lookup at the leaves, memory blocks bottom-up,
//! a shared softmax classifier at every node, the masked cross-entropy
//! objective and top-down backpropagation.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::block::{self, BlockActivations, BlockInput, ParentFeedback};
use crate::error::{Error, Result};
use crate::linalg::{matvec_acc, matvec_t_acc, outer_acc, GradSet, Param, ParamSet, Vector};
use crate::treebank::{NodeId, Tree};

/// Floor applied to predicted probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Which labeled nodes contribute to the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelMask {
    #[default]
    AllNodes,
    RootOnly,
    RootAndLeaves,
}

impl LabelMask {
    pub const ALL: [LabelMask; 3] = [
        LabelMask::AllNodes,
        LabelMask::RootOnly,
        LabelMask::RootAndLeaves,
    ];

    pub fn admits(self, tree: &Tree, id: NodeId) -> bool {
        match self {
            LabelMask::AllNodes => true,
            LabelMask::RootOnly => id == tree.root_id(),
            LabelMask::RootAndLeaves => id == tree.root_id() || tree.node(id).is_leaf(),
        }
    }

    /// Gold label of `id` if it is supervised under this mask.
    pub fn target(self, tree: &Tree, id: NodeId) -> Option<usize> {
        if self.admits(tree, id) {
            tree.node(id).label
        } else {
            None
        }
    }
}

impl fmt::Display for LabelMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMask::AllNodes => "all",
            LabelMask::RootOnly => "root",
            LabelMask::RootAndLeaves => "root_leaf",
        })
    }
}

impl FromStr for LabelMask {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" | "all_nodes" => Ok(LabelMask::AllNodes),
            "root" | "root_only" => Ok(LabelMask::RootOnly),
            "root_leaf" | "root_and_leaves" => Ok(LabelMask::RootAndLeaves),
            other => Err(Error::Config(format!("unknown label mask `{other}`"))),
        }
    }
}

/// How a leaf's cell vector is derived from its embedding `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafCellMode {
    /// `c = e`
    #[default]
    CopyH,
    /// `c = 0`
    Zero,
    /// `c = tanh(e)`
    Tanh,
}

impl LeafCellMode {
    pub const ALL: [LeafCellMode; 3] =
        [LeafCellMode::CopyH, LeafCellMode::Zero, LeafCellMode::Tanh];
}

impl fmt::Display for LeafCellMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LeafCellMode::CopyH => "copy_h",
            LeafCellMode::Zero => "zero",
            LeafCellMode::Tanh => "tanh",
        })
    }
}

impl FromStr for LeafCellMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy_h" => Ok(LeafCellMode::CopyH),
            "zero" => Ok(LeafCellMode::Zero),
            "tanh" => Ok(LeafCellMode::Tanh),
            other => Err(Error::Config(format!("unknown leaf cell mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeState {
    Leaf {
        word_id: usize,
        h: Vector,
        c: Vector,
    },
    Internal(BlockActivations),
}

impl NodeState {
    pub fn h(&self) -> &[f64] {
        match self {
            NodeState::Leaf { h, .. } => h,
            NodeState::Internal(a) => &a.h,
        }
    }

    pub fn c(&self) -> &[f64] {
        match self {
            NodeState::Leaf { c, .. } => c,
            NodeState::Internal(a) => &a.c,
        }
    }
}

/// Result of a forward pass over one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeStates {
    pub nodes: Vec<NodeState>,
    /// Class distribution at every node.
    pub probs: Vec<Vector>,
    pub leaf_cell: LeafCellMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub total_loss: f64,
    pub data_loss: f64,
    pub num_supervised_nodes: usize,
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Vector {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect::<Vec<_>>().into()
}

fn classify(params: &ParamSet, h: &[f64]) -> Vector {
    let mut z = params[Param::Bs].as_slice().to_vec();
    matvec_acc(&params[Param::Ws], h, &mut z);
    softmax(&z)
}

pub fn tree_forward(params: &ParamSet, tree: &Tree, leaf_cell: LeafCellMode) -> Result<TreeStates> {
    let mut nodes: Vec<NodeState> = Vec::with_capacity(tree.len());
    let emb = &params[Param::Embedding];
    for (id, node) in tree.nodes().iter().enumerate() {
        let state = match node.children() {
            None => {
                let word_id = node.word_id.ok_or(Error::MissingWordId(id))?;
                if word_id >= emb.rows() {
                    return Err(Error::EmbeddingRow {
                        id: word_id,
                        rows: emb.rows(),
                    });
                }
                let h = Vector::from_vec(emb.row(word_id).to_vec());
                let c = match leaf_cell {
                    LeafCellMode::CopyH => h.clone(),
                    LeafCellMode::Zero => Vector::zeros(h.len()),
                    LeafCellMode::Tanh => h.iter().map(|x| x.tanh()).collect::<Vec<_>>().into(),
                };
                NodeState::Leaf { word_id, h, c }
            }
            Some([l, r]) => {
                let input = BlockInput {
                    h_l: nodes[l].h(),
                    h_r: nodes[r].h(),
                    c_l: nodes[l].c(),
                    c_r: nodes[r].c(),
                };
                NodeState::Internal(block::forward(params, &input)?)
            }
        };
        nodes.push(state);
    }
    let probs = nodes.iter().map(|s| classify(params, s.h())).collect();
    Ok(TreeStates {
        nodes,
        probs,
        leaf_cell,
    })
}

/// `λ‖θ‖²` over every parameter, embeddings and classifier included.
pub fn regularizer(params: &ParamSet, lambda: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        lambda * params.squared_norm()
    }
}

/// Adds `scale · ∂(λ‖θ‖²)/∂θ = 2·scale·λ·θ` to every gradient entry.
pub fn add_regularizer_grad(params: &ParamSet, grads: &mut GradSet, lambda: f64, scale: f64) {
    if lambda == 0.0 || scale == 0.0 {
        return;
    }
    let k = 2.0 * lambda * scale;
    for (p, m) in params.iter() {
        grads.tensor_mut(p).axpy(k, m);
    }
}

/// Sum of `-log p(gold)` over supervised nodes of one tree.
pub fn data_loss(states: &TreeStates, tree: &Tree, mask: LabelMask) -> (f64, usize) {
    let mut loss = 0.0;
    let mut count = 0;
    for id in 0..tree.len() {
        if let Some(gold) = mask.target(tree, id) {
            loss -= states.probs[id][gold].max(PROB_FLOOR).ln();
            count += 1;
        }
    }
    (loss, count)
}

/// Data loss of one tree plus the regularizer, counted once.
pub fn tree_loss(
    states: &TreeStates,
    tree: &Tree,
    mask: LabelMask,
    params: &ParamSet,
    lambda: f64,
) -> LossReport {
    let (data_loss, n) = data_loss(states, tree, mask);
    LossReport {
        total_loss: data_loss + regularizer(params, lambda),
        data_loss,
        num_supervised_nodes: n,
    }
}

/// Backpropagates the data loss of one tree, adding into `grads`. The
/// regularizer is handled separately by [`add_regularizer_grad`] so that it
/// is applied once per objective rather than once per tree.
pub fn tree_backward(
    params: &ParamSet,
    tree: &Tree,
    states: &TreeStates,
    mask: LabelMask,
    grads: &mut GradSet,
) {
    let d = params.hidden_dim();
    let n = tree.len();
    let mut from_parent: Vec<Vector> = vec![Vector::zeros(d); n];
    let mut errors: Vec<Option<block::BlockErrors>> = vec![None; n];

    for id in (0..n).rev() {
        let h = states.nodes[id].h();
        let mut eps_h = std::mem::take(&mut from_parent[id]);
        if let Some(gold) = mask.target(tree, id) {
            let mut dz = states.probs[id].clone();
            dz[gold] -= 1.0;
            outer_acc(grads.tensor_mut(Param::Ws), &dz, h, 1.0);
            for (g, x) in grads
                .tensor_mut(Param::Bs)
                .as_mut_slice()
                .iter_mut()
                .zip(dz.iter())
            {
                *g += x;
            }
            matvec_t_acc(&params[Param::Ws], &dz, &mut eps_h);
        }

        let parent = tree.node(id).parent();
        let feedback = parent.map(|p| {
            let NodeState::Internal(act) = &states.nodes[p] else {
                unreachable!("parents are internal nodes")
            };
            let side = tree.side_of(id).expect("non-root has a side");
            ParentFeedback::from_parent(
                side,
                act,
                errors[p].as_ref().expect("parent visited first"),
            )
        });

        match &states.nodes[id] {
            NodeState::Internal(act) => {
                let [l, r] = tree.node(id).children().expect("internal node");
                let input = BlockInput {
                    h_l: states.nodes[l].h(),
                    h_r: states.nodes[r].h(),
                    c_l: states.nodes[l].c(),
                    c_r: states.nodes[r].c(),
                };
                let errs = block::backward(params, &input, act, &eps_h, feedback.as_ref(), grads);
                from_parent[l].axpy(1.0, &errs.child_eps_h_l);
                from_parent[r].axpy(1.0, &errs.child_eps_h_r);
                errors[id] = Some(errs);
            }
            NodeState::Leaf { word_id, c, .. } => {
                let mut eps_c = vec![0.0; d];
                if let Some(fb) = &feedback {
                    block::parent_cell_error(params, fb, &mut eps_c);
                }
                let row = grads.embedding_row_mut(*word_id);
                for k in 0..d {
                    let dc_de = match states.leaf_cell {
                        LeafCellMode::CopyH => 1.0,
                        LeafCellMode::Zero => 0.0,
                        LeafCellMode::Tanh => 1.0 - c[k] * c[k],
                    };
                    row[k] += eps_h[k] + eps_c[k] * dc_de;
                }
            }
        }
    }
}

/// Argmax class at every node, ties broken toward the lower class index.
pub fn predict_node_classes(states: &TreeStates) -> Vec<(NodeId, usize)> {
    states
        .probs
        .iter()
        .enumerate()
        .map(|(id, p)| (id, argmax(p)))
        .collect()
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = k;
        }
    }
    best
}

/// Full objective `Σ_trees data_loss + λ‖θ‖²`.
pub fn corpus_objective(
    params: &ParamSet,
    trees: &[Tree],
    mask: LabelMask,
    lambda: f64,
    leaf_cell: LeafCellMode,
) -> Result<f64> {
    let mut total = regularizer(params, lambda);
    for t in trees {
        let states = tree_forward(params, t, leaf_cell)?;
        total += data_loss(&states, t, mask).0;
    }
    Ok(total)
}

/// Analytic gradient of [`corpus_objective`].
pub fn corpus_gradient(
    params: &ParamSet,
    trees: &[Tree],
    mask: LabelMask,
    lambda: f64,
    leaf_cell: LeafCellMode,
) -> Result<GradSet> {
    let mut grads = GradSet::zeros_like(params);
    for t in trees {
        let states = tree_forward(params, t, leaf_cell)?;
        tree_backward(params, t, &states, mask, &mut grads);
    }
    add_regularizer_grad(params, &mut grads, lambda, 1.0);
    Ok(grads)
}

pub const PREDICTION_CSV_HEADER: &str = "tree_id,node_id,depth,length,gold,pred";

/// Writes one CSV row per node; `gold` is empty for unlabeled nodes.
pub fn write_predictions<W: Write>(
    out: &mut W,
    tree_id: usize,
    tree: &Tree,
    states: &TreeStates,
) -> std::io::Result<()> {
    for (id, pred) in predict_node_classes(states) {
        let node = tree.node(id);
        let gold = node.label.map(|g| g.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{tree_id},{id},{},{},{gold},{pred}",
            node.depth(),
            node.span_length()
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{random_params, random_trees, TOY_VOCAB};
    use crate::linalg::ModelDims;
    use crate::treebank::{parse_sexpr, Corpus, Split, Vocab};
    use proptest::prelude::*;

    fn encoded(text: &str, vocab: &Vocab) -> Tree {
        let mut t = parse_sexpr(text).unwrap();
        vocab.encode(&mut t);
        t
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn single_leaf_is_embedding_plus_classifier() {
        let vocab = Vocab::from_words(["ok"]);
        let t = encoded("(1 ok)", &vocab);
        let p = random_params(ModelDims::new(3, 2, 4), 1, 0.7);
        let s = tree_forward(&p, &t, LeafCellMode::CopyH).unwrap();
        assert_eq!(s.nodes[0].h(), p[Param::Embedding].row(1));
        let mut z = p[Param::Bs].as_slice().to_vec();
        for (k, zk) in z.iter_mut().enumerate() {
            *zk += crate::linalg::dot(p[Param::Ws].row(k), p[Param::Embedding].row(1));
        }
        let expected = softmax(&z);
        for (a, b) in s.probs[0].iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_params_give_uniform_predictions() {
        let vocab = Vocab::from_words(["a", "b", "c"]);
        let t = encoded("(3 (2 a) (1 (2 b) (0 c)))", &vocab);
        let p = ParamSet::zeros(ModelDims::new(4, 4, 5));
        let s = tree_forward(&p, &t, LeafCellMode::CopyH).unwrap();
        for probs in &s.probs {
            assert!(probs.iter().all(|&x| x == 0.2));
        }
        for n in &s.nodes {
            if let NodeState::Internal(a) = n {
                for g in [&a.i, &a.f_l, &a.f_r, &a.o] {
                    assert!(g.iter().all(|&x| x == 0.5));
                }
            }
        }
    }

    #[test]
    fn two_leaf_tree_matches_scalar_oracle() {
        let vocab = Vocab::from_words(["x", "y"]);
        let t = encoded("(1 (0 x) (1 y))", &vocab);
        let mut p = ParamSet::zeros(ModelDims::new(1, 3, 2));
        let (el, er) = (0.4, -0.3);
        p[Param::Embedding].set(1, 0, el);
        p[Param::Embedding].set(2, 0, er);
        let vals = [
            (Param::WhiL, 0.5),
            (Param::WhiR, -0.2),
            (Param::WciL, 0.3),
            (Param::WciR, 0.1),
            (Param::Bi, 0.05),
            (Param::WhflL, -0.4),
            (Param::WhflR, 0.2),
            (Param::WcflL, 0.6),
            (Param::WcflR, -0.1),
            (Param::Bfl, 0.1),
            (Param::WhfrL, 0.3),
            (Param::WhfrR, 0.7),
            (Param::WcfrL, -0.2),
            (Param::WcfrR, 0.4),
            (Param::Bfr, -0.2),
            (Param::WhxL, 0.9),
            (Param::WhxR, -0.6),
            (Param::Bx, 0.15),
            (Param::WhoL, -0.3),
            (Param::WhoR, 0.5),
            (Param::Wco, 0.8),
            (Param::Bo, 0.0),
        ];
        for (q, v) in vals {
            p[q].set(0, 0, v);
        }
        let w = |q: Param| vals.iter().find(|(r, _)| *r == q).unwrap().1;
        // Leaves: h = c = embedding.
        let (hl, hr, cl, cr) = (el, er, el, er);
        let i = sig(w(Param::WhiL) * hl
            + w(Param::WhiR) * hr
            + w(Param::WciL) * cl
            + w(Param::WciR) * cr
            + w(Param::Bi));
        let fl = sig(w(Param::WhflL) * hl
            + w(Param::WhflR) * hr
            + w(Param::WcflL) * cl
            + w(Param::WcflR) * cr
            + w(Param::Bfl));
        let fr = sig(w(Param::WhfrL) * hl
            + w(Param::WhfrR) * hr
            + w(Param::WcfrL) * cl
            + w(Param::WcfrR) * cr
            + w(Param::Bfr));
        let x = w(Param::WhxL) * hl + w(Param::WhxR) * hr + w(Param::Bx);
        let c = fl * cl + fr * cr + i * x.tanh();
        let o = sig(w(Param::WhoL) * hl + w(Param::WhoR) * hr + w(Param::Wco) * c + w(Param::Bo));
        let h = o * c.tanh();

        let s = tree_forward(&p, &t, LeafCellMode::CopyH).unwrap();
        assert!((s.nodes[2].h()[0] - h).abs() < 1e-12);
        assert!((s.nodes[2].c()[0] - c).abs() < 1e-12);
    }

    #[test]
    fn root_only_uniform_loss_is_log_c() {
        let vocab = Vocab::from_words(["a", "b"]);
        let t = encoded("(3 (2 a) (1 b))", &vocab);
        let p = ParamSet::zeros(ModelDims::new(2, 3, 5));
        let s = tree_forward(&p, &t, LeafCellMode::CopyH).unwrap();
        let r = tree_loss(&s, &t, LabelMask::RootOnly, &p, 0.0);
        assert!((r.data_loss - 1.609_437_912_434_100_4).abs() < 1e-12);
        assert_eq!(r.num_supervised_nodes, 1);
        assert_eq!(r.total_loss, r.data_loss);

        let all = tree_loss(&s, &t, LabelMask::AllNodes, &p, 0.0);
        assert_eq!(all.num_supervised_nodes, 3);
        let leafy = tree_loss(&s, &t, LabelMask::RootAndLeaves, &p, 0.0);
        assert_eq!(leafy.num_supervised_nodes, 3);
    }

    #[test]
    fn regularizer_counts_every_entry() {
        let p = random_params(ModelDims::new(2, 3, 2), 4, 1.0);
        let vocab = Vocab::from_words(["a"]);
        let t = encoded("(1 a)", &vocab);
        let s = tree_forward(&p, &t, LeafCellMode::CopyH).unwrap();
        let r = tree_loss(&s, &t, LabelMask::AllNodes, &p, 0.01);
        let norm: f64 = p
            .iter()
            .map(|(_, m)| m.as_slice().iter().map(|x| x * x).sum::<f64>())
            .sum();
        assert!((r.total_loss - r.data_loss - 0.01 * norm).abs() < 1e-12);
    }

    #[test]
    fn confident_correct_predictions_have_no_loss() {
        let vocab = Vocab::from_words(["a", "b"]);
        let t = encoded("(2 (2 a) (2 b))", &vocab);
        let mut p = ParamSet::zeros(ModelDims::new(2, 3, 5));
        p[Param::Bs].set(2, 0, 1000.0);
        let s = tree_forward(&p, &t, LeafCellMode::CopyH).unwrap();
        let r = tree_loss(&s, &t, LabelMask::AllNodes, &p, 0.0);
        assert!(r.data_loss <= 1e-9);

        let mut g = GradSet::zeros_like(&p);
        tree_backward(&p, &t, &s, LabelMask::RootOnly, &mut g);
        assert_eq!(g, GradSet::zeros_like(&p));
    }

    #[test]
    fn unlabeled_nodes_are_skipped() {
        let vocab = Vocab::from_words(["a", "b", "c"]);
        let t = encoded("(4 (_ (1 a) (2 b)) (0 c))", &vocab);
        let p = ParamSet::zeros(ModelDims::new(2, 4, 5));
        let s = tree_forward(&p, &t, LeafCellMode::CopyH).unwrap();
        assert_eq!(
            tree_loss(&s, &t, LabelMask::AllNodes, &p, 0.0).num_supervised_nodes,
            4
        );
    }

    #[test]
    fn missing_word_id_is_an_error() {
        let t = parse_sexpr("(1 ok)").unwrap();
        let p = ParamSet::zeros(ModelDims::new(2, 3, 2));
        assert!(matches!(
            tree_forward(&p, &t, LeafCellMode::CopyH),
            Err(Error::MissingWordId(0))
        ));
        let mut t = t;
        Vocab::from_words(["x", "y", "ok"]).encode(&mut t);
        assert!(matches!(
            tree_forward(&p, &t, LeafCellMode::CopyH),
            Err(Error::EmbeddingRow { id: 3, .. })
        ));
    }

    #[test]
    fn gradients_add_across_identical_trees() {
        let trees = random_trees(5, 1, 4, 5);
        let p = random_params(ModelDims::new(3, TOY_VOCAB + 1, 5), 2, 0.5);
        let s = tree_forward(&p, &trees[0], LeafCellMode::CopyH).unwrap();
        let mut once = GradSet::zeros_like(&p);
        tree_backward(&p, &trees[0], &s, LabelMask::AllNodes, &mut once);
        let mut twice = GradSet::zeros_like(&p);
        tree_backward(&p, &trees[0], &s, LabelMask::AllNodes, &mut twice);
        tree_backward(&p, &trees[0], &s, LabelMask::AllNodes, &mut twice);
        for ((_, a), (_, b)) in once.iter().zip(twice.iter()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((2.0 * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
            }
        }
    }

    #[test]
    fn root_only_gradient_ignores_internal_labels() {
        let vocab = Vocab::from_words(["a", "b", "c"]);
        let t1 = encoded("(4 (1 (1 a) (2 b)) (0 c))", &vocab);
        let t2 = encoded("(4 (3 (1 a) (2 b)) (0 c))", &vocab);
        let p = random_params(ModelDims::new(3, 4, 5), 8, 0.5);
        let g = |t: &Tree| {
            let s = tree_forward(&p, t, LeafCellMode::CopyH).unwrap();
            let mut g = GradSet::zeros_like(&p);
            tree_backward(&p, t, &s, LabelMask::RootOnly, &mut g);
            g
        };
        assert_eq!(g(&t1), g(&t2));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.1, 0.7, 0.2, 0.0, 0.0]), 1);
        assert_eq!(argmax(&[0.2; 5]), 0);
        let s = TreeStates {
            nodes: vec![],
            probs: vec![vec![0.2; 5].into(), vec![0.1, 0.7, 0.2, 0.0, 0.0].into()],
            leaf_cell: LeafCellMode::CopyH,
        };
        assert_eq!(predict_node_classes(&s), vec![(0, 0), (1, 1)]);
    }

    #[test]
    fn prediction_csv_rows() {
        let c = Corpus::parse("(3 (_ good) (2 movie))", Split::Test, None, 5).unwrap();
        let p = ParamSet::zeros(ModelDims::new(2, c.vocab.size(), 5));
        let s = tree_forward(&p, &c.trees[0], LeafCellMode::CopyH).unwrap();
        let mut out = Vec::new();
        write_predictions(&mut out, 7, &c.trees[0], &s).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "7,0,0,1,,0\n7,1,0,1,2,0\n7,2,1,2,3,0\n"
        );
    }

    #[test]
    fn mask_and_leaf_mode_parse() {
        for m in LabelMask::ALL {
            assert_eq!(m.to_string().parse::<LabelMask>().unwrap(), m);
        }
        for m in LeafCellMode::ALL {
            assert_eq!(m.to_string().parse::<LeafCellMode>().unwrap(), m);
        }
        assert!("bogus".parse::<LabelMask>().is_err());
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(z in proptest::collection::vec(-500.0f64..500.0, 1..8)) {
            let p = softmax(&z);
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
        }

        #[test]
        fn argmax_ignores_logit_shift(z in proptest::collection::vec(-5.0f64..5.0, 5), shift in -50.0f64..50.0) {
            let shifted: Vec<f64> = z.iter().map(|x| x + shift).collect();
            prop_assert_eq!(argmax(&softmax(&z)), argmax(&softmax(&shifted)));
        }
    }
}
