//! Pattern coverage and exhaustive minimality search.
//!
//! A pattern `(z₁, {(i, z₂), (j, z₃)})` is covered by a head whose output
//! weight has sign `z₁` and whose diagonal has signs `z₂, z₃` at `i, j`.
//! The population loss only involves patterns with `z₁ = z₂ z₃` (the label
//! of the query cell), so completeness is checked on those.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::{ParityConfig, Task, CELLS};
use super::model::DiagonalParityModel;
use super::ParityError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pattern {
    pub z1: i8,
    pub i: usize,
    pub z2: i8,
    pub j: usize,
    pub z3: i8,
}

impl Pattern {
    /// Canonical form with `i < j`.
    pub fn new(z1: i8, (i, z2): (usize, i8), (j, z3): (usize, i8)) -> Self {
        if i <= j {
            Self { z1, i, z2, j, z3 }
        } else {
            Self { z1, i: j, z2: z3, j: i, z3: z2 }
        }
    }

    pub fn is_relevant(&self) -> bool {
        self.z1 == self.z2 * self.z3
    }
}

/// Strict sign: zero matches neither `+1` nor `−1`.
fn sign(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Every pattern covered by some head, over all coordinate pairs of the model.
pub fn pattern_coverage(diag: &DiagonalParityModel) -> BTreeSet<Pattern> {
    let d = diag.dim();
    let mut out = BTreeSet::new();
    for (a, v) in diag.a().iter().zip(diag.vdiags()) {
        let z1 = sign(*a);
        if z1 == 0 {
            continue;
        }
        for i in 0..d {
            let z2 = sign(v[i]);
            if z2 == 0 {
                continue;
            }
            for j in i + 1..d {
                let z3 = sign(v[j]);
                if z3 != 0 {
                    out.insert(Pattern { z1, i, z2, j, z3 });
                }
            }
        }
    }
    out
}

/// Unordered pairs `i < j` touched by `tasks`.
pub fn unordered_pairs(tasks: &[Task]) -> BTreeSet<(usize, usize)> {
    tasks.iter().map(|t| (t.i.min(t.j), t.i.max(t.j))).collect()
}

/// The four label-consistent patterns on each pair.
pub fn relevant_patterns(pairs: &BTreeSet<(usize, usize)>) -> Vec<Pattern> {
    let mut out = Vec::with_capacity(4 * pairs.len());
    for &(i, j) in pairs {
        for (a, b) in CELLS {
            let (z2, z3) = (a as i8, b as i8);
            out.push(Pattern { z1: z2 * z3, i, z2, j, z3 });
        }
    }
    out
}

/// Label-consistent patterns on the pairs of `tasks` that no head covers.
pub fn uncovered_patterns(diag: &DiagonalParityModel, tasks: &[Task]) -> Vec<Pattern> {
    let covered = pattern_coverage(diag);
    relevant_patterns(&unordered_pairs(tasks))
        .into_iter()
        .filter(|p| !covered.contains(p))
        .collect()
}

/// For each head, whether some task and query cell activates it and
/// yields margin `y·g = 1` exactly (to `1e-12`). This pins the head
/// magnitudes: any smaller scale leaves that case with positive hinge loss.
pub fn margin_tight_heads(diag: &DiagonalParityModel, cfg: &ParityConfig) -> Vec<bool> {
    let d = diag.dim();
    let gamma = cfg.gamma();
    let mut tight = vec![false; diag.heads()];
    for i in 0..d {
        for j in i + 1..d {
            for (a, b) in CELLS {
                let task = Task::new(i, j);
                let margin = a * b * diag.forward_infinite_n(task, a, b, gamma);
                if (margin - 1.0).abs() > 1e-12 {
                    continue;
                }
                for (h, v) in diag.vdiags().iter().enumerate() {
                    if 2.0 * gamma * (v[i] * a + v[j] * b) > 0.0 {
                        tight[h] = true;
                    }
                }
            }
        }
    }
    tight
}

/// Outcome of the exhaustive head-count search at `d = 4`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MinHeadsReport {
    pub min_heads: usize,
    /// `(size, multisets checked, multisets with complete coverage)`.
    pub by_size: Vec<(usize, u64, u64)>,
}

const BRUTE_D: usize = 4;

/// All 24 label-consistent patterns at `d = 4`, indexed for bitmasks.
fn brute_patterns() -> Vec<Pattern> {
    let pairs: BTreeSet<(usize, usize)> = (0..BRUTE_D)
        .flat_map(|i| (i + 1..BRUTE_D).map(move |j| (i, j)))
        .collect();
    relevant_patterns(&pairs)
}

/// Coverage bitmask of each of the 32 head sign configurations.
fn config_masks(patterns: &[Pattern]) -> Vec<u32> {
    (0..32u32)
        .map(|cfg| {
            let a: i8 = if cfg & 1 == 0 { 1 } else { -1 };
            let s = |c: usize| -> i8 { if cfg >> (c + 1) & 1 == 0 { 1 } else { -1 } };
            patterns
                .iter()
                .enumerate()
                .filter(|(_, p)| p.z1 == a && p.z2 == s(p.i) && p.z3 == s(p.j))
                .fold(0u32, |m, (k, _)| m | 1 << k)
        })
        .collect()
}

fn count_multisets(masks: &[u32], full: u32, size: usize, start: usize, acc: u32, stats: &mut (u64, u64)) {
    if size == 0 {
        stats.0 += 1;
        if acc == full {
            stats.1 += 1;
        }
        return;
    }
    for c in start..masks.len() {
        count_multisets(masks, full, size - 1, c, acc | masks[c], stats);
    }
}

/// Smallest number of heads whose sign configurations cover all
/// label-consistent patterns at `d = 4`, by enumerating every multiset of
/// the 32 nonzero sign configurations of increasing size. Head magnitudes
/// do not affect coverage, so only signs are searched.
pub fn bruteforce_min_heads(d: usize) -> Result<MinHeadsReport, ParityError> {
    if d != BRUTE_D {
        return Err(ParityError::InvalidArgument(format!("exhaustive search is fixed at d = 4, got {d}")));
    }
    let patterns = brute_patterns();
    let masks = config_masks(&patterns);
    let full = (1u32 << patterns.len()) - 1;
    let mut by_size = Vec::new();
    for size in 1..=patterns.len() {
        let mut stats = (0u64, 0u64);
        count_multisets(&masks, full, size, 0, 0, &mut stats);
        by_size.push((size, stats.0, stats.1));
        if stats.1 > 0 {
            return Ok(MinHeadsReport { min_heads: size, by_size });
        }
    }
    unreachable!("the 32 configurations together cover every pattern")
}

/// Whether the heads of `diag` (by sign) cover all 24 patterns at `d = 4`.
pub fn covers_all_at_d4(diag: &DiagonalParityModel) -> bool {
    diag.dim() == BRUTE_D && uncovered_patterns(diag, &all_tasks(BRUTE_D)).is_empty()
}

pub fn all_tasks(d: usize) -> Vec<Task> {
    (0..d)
        .flat_map(|i| (0..d).filter(move |&j| j != i).map(move |j| Task::new(i, j)))
        .collect()
}
