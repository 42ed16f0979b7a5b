//! Central finite-difference validation of the analytic gradients.
//!
//! Every scalar of every non-embedding parameter and every embedding row used
//! by the trees is perturbed by ±ε on a private copy of the parameters, and
//! the full masked objective (regularizer included) is re-evaluated.

use std::collections::BTreeSet;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{GradSet, ModelDims, Param, ParamSet};
use crate::network::{
    corpus_gradient, regularizer, tree_forward, LabelMask, LeafCellMode, PROB_FLOOR,
};
use crate::treebank::{NodeId, Tree, TreeBuilder, Vocab};

/// Number of words in the toy vocabulary used by [`random_trees`].
pub const TOY_VOCAB: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckConfig {
    pub mask: LabelMask,
    pub leaf_cell: LeafCellMode,
    pub lambda: f64,
    pub epsilon: f64,
    pub tol: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            mask: LabelMask::AllNodes,
            leaf_cell: LeafCellMode::CopyH,
            lambda: 1e-4,
            epsilon: 1e-5,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Offender {
    pub name: String,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    /// Maximum relative error per parameter, in registry order.
    pub per_param: Vec<(String, f64)>,
    pub worst: Option<Offender>,
    pub checked: usize,
    pub tol: f64,
    pub pass: bool,
}

/// `|a − n| / max(1e−8, |a| + |n|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Checks the network's own analytic gradient.
pub fn check(params: &ParamSet, trees: &[Tree], cfg: &GradCheckConfig) -> Result<GradCheckReport> {
    check_with(params, trees, cfg, |p| {
        corpus_gradient(p, trees, cfg.mask, cfg.lambda, cfg.leaf_cell)
    })
}

/// Checks an arbitrary analytic gradient function against finite differences
/// of the network objective.
pub fn check_with<F>(
    params: &ParamSet,
    trees: &[Tree],
    cfg: &GradCheckConfig,
    analytic: F,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<GradSet>,
{
    if trees.is_empty() {
        return Ok(GradCheckReport {
            per_param: Vec::new(),
            worst: None,
            checked: 0,
            tol: cfg.tol,
            pass: true,
        });
    }
    let grads = analytic(params)?;
    let rows: BTreeSet<usize> = trees
        .iter()
        .flat_map(|t| t.nodes().iter().filter_map(|n| n.word_id))
        .collect();

    let mut work = params.clone();
    let mut per_param = Vec::new();
    let mut worst: Option<Offender> = None;
    let mut checked = 0;
    for &p in Param::ALL {
        let indices: Vec<usize> = if p == Param::Embedding {
            let cols = params[p].cols();
            rows.iter()
                .flat_map(|&r| r * cols..(r + 1) * cols)
                .collect()
        } else {
            (0..params[p].as_slice().len()).collect()
        };
        let mut max_err: f64 = 0.0;
        for k in indices {
            let numeric = central_difference(&mut work, trees, cfg, p, k, cfg.epsilon)?;
            let ana = grads[p].as_slice()[k];
            let err = relative_error(ana, numeric);
            checked += 1;
            max_err = max_err.max(err);
            if worst.as_ref().is_none_or(|w| err > w.rel_error) {
                worst = Some(Offender {
                    name: p.name().to_string(),
                    index: k,
                    analytic: ana,
                    numeric,
                    rel_error: err,
                });
            }
        }
        per_param.push((p.name().to_string(), max_err));
    }
    let pass = per_param.iter().all(|(_, e)| *e <= cfg.tol);
    Ok(GradCheckReport {
        per_param,
        worst,
        checked,
        tol: cfg.tol,
        pass,
    })
}

/// The objective as separate terms: one per supervised node, then the
/// regularizer. Summing them gives [`corpus_objective`].
fn objective_terms(params: &ParamSet, trees: &[Tree], cfg: &GradCheckConfig) -> Result<Vec<f64>> {
    let mut terms = Vec::new();
    for t in trees {
        let states = tree_forward(params, t, cfg.leaf_cell)?;
        for id in 0..t.len() {
            if let Some(gold) = cfg.mask.target(t, id) {
                terms.push(-states.probs[id][gold].max(PROB_FLOOR).ln());
            }
        }
    }
    terms.push(regularizer(params, cfg.lambda));
    Ok(terms)
}

/// `(L(θ+ε) − L(θ−ε)) / 2ε`, differenced term by term before summing so that
/// rounding of the O(1)-sized total does not swamp small partials.
fn central_difference(
    work: &mut ParamSet,
    trees: &[Tree],
    cfg: &GradCheckConfig,
    param: Param,
    index: usize,
    epsilon: f64,
) -> Result<f64> {
    let original = work[param].as_slice()[index];
    work[param].as_mut_slice()[index] = original + epsilon;
    let plus = objective_terms(work, trees, cfg);
    work[param].as_mut_slice()[index] = original - epsilon;
    let minus = objective_terms(work, trees, cfg);
    work[param].as_mut_slice()[index] = original;
    let diff: f64 = plus?.iter().zip(&minus?).map(|(a, b)| a - b).sum();
    Ok(diff / (2.0 * epsilon))
}

/// Central difference of the objective along one coordinate.
pub fn numeric_partial(
    params: &ParamSet,
    trees: &[Tree],
    cfg: &GradCheckConfig,
    param: Param,
    index: usize,
    epsilon: f64,
) -> Result<f64> {
    central_difference(&mut params.clone(), trees, cfg, param, index, epsilon)
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.per_param.iter().map(|(_, e)| *e).fold(0.0, f64::max)
    }

    pub fn error_of(&self, name: &str) -> Option<f64> {
        self.per_param
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, e)| *e)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>14}  status", "parameter", "max rel err")?;
        for (name, err) in &self.per_param {
            let status = if *err <= self.tol { "ok" } else { "FAIL" };
            writeln!(f, "{name:<12} {err:>14.3e}  {status}")?;
        }
        if let Some(w) = &self.worst {
            writeln!(
                f,
                "worst: {}[{}] analytic={:.6e} numeric={:.6e} rel={:.3e}",
                w.name, w.index, w.analytic, w.numeric, w.rel_error
            )?;
        }
        write!(
            f,
            "{} coordinates checked, tolerance {:.0e}: {}",
            self.checked,
            self.tol,
            if self.pass { "PASS" } else { "FAIL" }
        )
    }
}

/// The toy vocabulary `w0..w9` used by [`random_trees`].
pub fn toy_vocab() -> Vocab {
    Vocab::from_words((0..TOY_VOCAB).map(|k| format!("w{k}")))
}

/// Seeded random binary trees over [`toy_vocab`]. Each node below
/// `max_depth` splits with probability 0.5; the root always splits. About one
/// label in ten is left absent.
pub fn random_trees(seed: u64, n: usize, max_depth: usize, num_classes: usize) -> Vec<Tree> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = toy_vocab();
    (0..n)
        .map(|_| {
            let mut b = TreeBuilder::new();
            grow(&mut rng, &mut b, &vocab, 0, max_depth, num_classes);
            b.finish().expect("generated tree is valid")
        })
        .collect()
}

fn grow(
    rng: &mut ChaCha8Rng,
    b: &mut TreeBuilder,
    vocab: &Vocab,
    level: usize,
    max_depth: usize,
    num_classes: usize,
) -> NodeId {
    let label = if rng.gen_bool(0.1) {
        None
    } else {
        Some(rng.gen_range(0..num_classes))
    };
    let split = level < max_depth && (level == 0 || rng.gen_bool(0.5));
    if split {
        let l = grow(rng, b, vocab, level + 1, max_depth, num_classes);
        let r = grow(rng, b, vocab, level + 1, max_depth, num_classes);
        b.internal(label, l, r)
    } else {
        let w = format!("w{}", rng.gen_range(0..TOY_VOCAB));
        let id = vocab.id(&w);
        b.leaf_with_id(label, w, id)
    }
}

/// Parameters with every entry, biases included, uniform in ±`scale`.
pub fn random_params(dims: ModelDims, seed: u64, scale: f64) -> ParamSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ParamSet::zeros(dims);
    for (_, m) in p.iter_mut() {
        for x in m.as_mut_slice() {
            *x = rng.gen_range(-scale..=scale);
        }
    }
    p
}
