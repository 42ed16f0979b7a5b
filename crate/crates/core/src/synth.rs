//! Seeded synthetic sentiment treebank whose labels depend on bracketing.
//!
//! Every word carries a polarity in −2..=2. A node's value is the clipped sum
//! of its children's values, except that a negator leaf on the left flips the
//! sign of its sibling. The same word sequence therefore gets different labels
//! under different bracketings, which a model that sees only word order cannot
//! resolve.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::treebank::{NodeId, Tree, TreeBuilder};

pub const NUM_CLASSES: usize = 5;

const NEGATORS: &[&str] = &["not", "never", "hardly"];
const BY_POLARITY: [&[&str]; 5] = [
    &["awful", "dreadful", "horrid"],
    &["bad", "dull", "weak"],
    &["movie", "plot", "scene", "actor", "the", "film"],
    &["good", "fine", "nice"],
    &["great", "superb", "brilliant"],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub sentences: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            sentences: 1000,
            min_len: 3,
            max_len: 8,
            seed: 1,
        }
    }
}

/// Every word the generator can emit.
pub fn lexicon() -> Vec<&'static str> {
    BY_POLARITY
        .iter()
        .flat_map(|g| g.iter().copied())
        .chain(NEGATORS.iter().copied())
        .collect()
}

#[derive(Clone, Copy)]
struct Built {
    id: NodeId,
    value: i32,
    negator: bool,
}

/// Generates fully labeled trees with leaves left unencoded.
pub fn generate(cfg: &SynthConfig) -> Vec<Tree> {
    assert!(cfg.min_len >= 1 && cfg.min_len <= cfg.max_len);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.sentences)
        .map(|_| {
            let len = rng.gen_range(cfg.min_len..=cfg.max_len);
            let mut b = TreeBuilder::new();
            build(&mut rng, &mut b, len);
            b.finish().expect("generated tree is valid")
        })
        .collect()
}

fn label(value: i32) -> Option<usize> {
    Some((value + 2) as usize)
}

fn compose(l: Built, r: Built) -> i32 {
    if l.negator {
        -r.value
    } else {
        (l.value + r.value).clamp(-2, 2)
    }
}

fn build(rng: &mut ChaCha8Rng, b: &mut TreeBuilder, len: usize) -> Built {
    if len == 1 {
        let roll: f64 = rng.gen();
        let (word, value, negator) = if roll < 0.2 {
            (*NEGATORS.choose(rng).unwrap(), 0, true)
        } else {
            let pol = if roll < 0.55 {
                2
            } else {
                [0, 1, 3, 4][rng.gen_range(0..4)]
            };
            (
                *BY_POLARITY[pol].choose(rng).unwrap(),
                pol as i32 - 2,
                false,
            )
        };
        let id = b.leaf(label(value), word.to_string());
        return Built { id, value, negator };
    }
    let split = rng.gen_range(1..len);
    let l = build(rng, b, split);
    let r = build(rng, b, len - split);
    let value = compose(l, r);
    let id = b.internal(label(value), l.id, r.id);
    Built {
        id,
        value,
        negator: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_labeled() {
        let cfg = SynthConfig {
            sentences: 50,
            ..SynthConfig::default()
        };
        let a = generate(&cfg);
        assert_eq!(a, generate(&cfg));
        for t in &a {
            assert!((3..=8).contains(&t.num_leaves()));
            assert_eq!(t.labeled_count(), t.len());
            assert!(t.nodes().iter().all(|n| n.label.unwrap() < NUM_CLASSES));
        }
    }

    #[test]
    fn bracketing_changes_the_label() {
        let word = |value, negator| Built {
            id: 0,
            value,
            negator,
        };
        let (not, good, bad) = (word(0, true), word(1, false), word(-1, false));
        let not_good = word(compose(not, good), false);
        assert_eq!(compose(not_good, bad), -2);
        let good_bad = word(compose(good, bad), false);
        assert_eq!(compose(not, good_bad), 0);
    }
}
