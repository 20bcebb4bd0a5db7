//! Brute-force count of primitive hyperbolic classes of the modular group.
//!
//! Every hyperbolic class with positive trace is represented by a cyclic word
//! `R^{a1} L^{b1} ... R^{ar} L^{br}` with all exponents positive, unique up to
//! rotation by whole `(a, b)` pairs. This module uses nothing but integer
//! matrices, so it is independent of the class-number pipeline.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;

use crate::error::{Error, Result};

pub type Matrix = [[i128; 2]; 2];

pub const IDENTITY: Matrix = [[1, 0], [0, 1]];
pub const R: Matrix = [[1, 1], [0, 1]];
pub const L: Matrix = [[1, 0], [1, 1]];

pub fn mat_mul(x: &Matrix, y: &Matrix) -> Matrix {
    [
        [x[0][0] * y[0][0] + x[0][1] * y[1][0], x[0][0] * y[0][1] + x[0][1] * y[1][1]],
        [x[1][0] * y[0][0] + x[1][1] * y[1][0], x[1][0] * y[0][1] + x[1][1] * y[1][1]],
    ]
}

pub fn det(m: &Matrix) -> i128 {
    m[0][0] * m[1][1] - m[0][1] * m[1][0]
}

pub fn trace(m: &Matrix) -> i128 {
    m[0][0] + m[1][1]
}

/// `R^a L^b = [[1 + ab, a], [b, 1]]`
fn pair_matrix(a: u32, b: u32) -> Matrix {
    let (a, b) = (a as i128, b as i128);
    [[1 + a * b, a], [b, 1]]
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RLWord {
    exponents: Vec<u32>,
}

impl RLWord {
    /// `exponents = (a1, b1, ..., ar, br)`, all positive.
    pub fn new(exponents: Vec<u32>) -> Result<Self> {
        if exponents.is_empty() || !exponents.len().is_multiple_of(2) || exponents.contains(&0) {
            return Err(Error::Parse(format!(
                "RL word needs a nonempty even-length list of positive exponents, got {exponents:?}"
            )));
        }
        Ok(Self { exponents })
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn pairs(&self) -> usize {
        self.exponents.len() / 2
    }

    /// Rotation by `k` whole pairs.
    pub fn rotate(&self, k: usize) -> RLWord {
        let mut e = self.exponents.clone();
        e.rotate_left(2 * (k % self.pairs()));
        RLWord { exponents: e }
    }

    /// Lexicographically minimal pair rotation.
    pub fn canonical(&self) -> RLWord {
        (0..self.pairs()).map(|k| self.rotate(k)).min().unwrap()
    }

    /// Smallest `p` (in pairs) such that the word is `(first p pairs)^{r/p}`.
    fn period(&self) -> usize {
        let r = self.pairs();
        (1..=r)
            .find(|&p| r.is_multiple_of(p) && (0..self.exponents.len()).all(|i| self.exponents[i] == self.exponents[i % (2 * p)]))
            .unwrap()
    }

    pub fn is_primitive(&self) -> bool {
        self.period() == self.pairs()
    }

    /// `(v, l)` with `self = v^l` and `v` primitive.
    pub fn primitive_root(&self) -> (RLWord, u32) {
        let p = self.period();
        (
            RLWord {
                exponents: self.exponents[..2 * p].to_vec(),
            },
            (self.pairs() / p) as u32,
        )
    }

    pub fn trace(&self) -> u64 {
        trace(&word_matrix(self)) as u64
    }
}

pub fn word_matrix(w: &RLWord) -> Matrix {
    w.exponents
        .chunks(2)
        .fold(IDENTITY, |m, ab| mat_mul(&m, &pair_matrix(ab[0], ab[1])))
}

/// Census of all cyclic words with trace at most `trace_max`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Census {
    pub trace_max: u64,
    /// primitive class count per trace
    pub primitive: BTreeMap<u64, u64>,
    /// per trace: `(root trace, l) → number of classes v^l`
    pub repeated: BTreeMap<u64, BTreeMap<(u64, u32), u64>>,
}

fn collect_words(prefix: &mut Vec<u32>, m: Matrix, trace_max: i128, out: &mut HashSet<RLWord>) {
    let mut a = 1u32;
    loop {
        let ma = mat_mul(&m, &pair_matrix(a, 1));
        if trace(&ma) > trace_max {
            break;
        }
        let mut b = 1u32;
        loop {
            let mab = mat_mul(&m, &pair_matrix(a, b));
            if trace(&mab) > trace_max {
                break;
            }
            prefix.extend([a, b]);
            out.insert(RLWord { exponents: prefix.clone() }.canonical());
            collect_words(prefix, mab, trace_max, out);
            prefix.truncate(prefix.len() - 2);
            b += 1;
        }
        a += 1;
    }
}

/// Appending `R^a L^b` never lowers the trace of a product of nonnegative
/// matrices, so a prefix over the bound prunes its whole subtree.
pub fn census(trace_max: u64) -> Result<Census> {
    if trace_max < 3 {
        return Err(Error::OracleRange(trace_max));
    }
    let bound = trace_max as i128;
    let first_max = (trace_max - 2) as u32;
    let parts: Vec<HashSet<RLWord>> = (1..=first_max)
        .into_par_iter()
        .map(|a| {
            let mut out = HashSet::new();
            let mut b = 1u32;
            loop {
                let m = pair_matrix(a, b);
                if trace(&m) > bound {
                    break;
                }
                let mut prefix = vec![a, b];
                out.insert(RLWord { exponents: prefix.clone() }.canonical());
                collect_words(&mut prefix, m, bound, &mut out);
                b += 1;
            }
            out
        })
        .collect();
    let mut words = HashSet::new();
    for p in parts {
        words.extend(p);
    }

    let mut primitive = BTreeMap::new();
    let mut repeated: BTreeMap<u64, BTreeMap<(u64, u32), u64>> = BTreeMap::new();
    for w in &words {
        let t = w.trace();
        let (root, l) = w.primitive_root();
        if l == 1 {
            *primitive.entry(t).or_insert(0) += 1;
        } else {
            *repeated.entry(t).or_default().entry((root.trace(), l)).or_insert(0) += 1;
        }
    }
    for t in 3..=trace_max {
        primitive.entry(t).or_insert(0);
    }
    Ok(Census {
        trace_max,
        primitive,
        repeated,
    })
}

/// Primitive class count per trace for all traces `3..=trace_max`.
pub fn enumerate_classes(trace_max: u64) -> Result<BTreeMap<u64, u64>> {
    Ok(census(trace_max)?.primitive)
}

pub fn oracle_multiplicity(t: u64) -> Result<u64> {
    Ok(enumerate_classes(t)?[&t])
}
