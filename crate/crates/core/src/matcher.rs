//! Gestalt (Ratcliff/Obershelp) similarity and ordered step matching.

use serde::{Deserialize, Serialize};

use crate::segmenter::StepSequence;

pub const DEFAULT_TAU: f64 = 0.6;

/// Longest common substring of `a[a_lo..a_hi]` and `b[b_lo..b_hi]`, as
/// `(start_a, start_b, len)`. Ties go to the smallest start in `a`, then in `b`.
fn longest_common_block(
    a: &[char],
    b: &[char],
    (a_lo, a_hi): (usize, usize),
    (b_lo, b_hi): (usize, usize),
    row: &mut Vec<usize>,
) -> (usize, usize, usize) {
    let width = b_hi - b_lo;
    row.clear();
    row.resize(width + 1, 0);
    let mut best = (a_lo, b_lo, 0);
    for (i, &ai) in a.iter().enumerate().take(a_hi).skip(a_lo) {
        // Walk right to left so row[j] still holds the previous row's value.
        for j in (0..width).rev() {
            if ai == b[b_lo + j] {
                let len = row[j] + 1;
                row[j + 1] = len;
                let start = (i + 1 - len, b_lo + j + 1 - len);
                if len > best.2 || (len == best.2 && start < (best.0, best.1)) {
                    best = (start.0, start.1, len);
                }
            } else {
                row[j + 1] = 0;
            }
        }
    }
    best
}

/// Total characters matched by recursive longest-common-substring
/// decomposition.
pub fn matched_chars(a: &[char], b: &[char]) -> usize {
    let mut total = 0;
    let mut row = Vec::new();
    let mut stack = vec![((0, a.len()), (0, b.len()))];
    while let Some((ra, rb)) = stack.pop() {
        if ra.0 >= ra.1 || rb.0 >= rb.1 {
            continue;
        }
        let (sa, sb, len) = longest_common_block(a, b, ra, rb, &mut row);
        if len == 0 {
            continue;
        }
        total += len;
        stack.push(((ra.0, sa), (rb.0, sb)));
        stack.push(((sa + len, ra.1), (sb + len, rb.1)));
    }
    total
}

/// `2M / (|a| + |b|)` over Unicode scalar values, with `M` from
/// [`matched_chars`]. Two empty strings are identical (1.0).
pub fn gestalt_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    2.0 * matched_chars(&a, &b) as f64 / total as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlignedStep {
    pub coarse_index: usize,
    pub origin_index: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchOutcome {
    pub valid: bool,
    pub alignment: Vec<AlignedStep>,
    pub first_failure: Option<usize>,
}

/// Check that every coarse step matches some origin step at similarity
/// `>= tau`, in order, with a single forward cursor that never revisits an
/// origin step. Origin steps skipped over while searching are consumed.
pub fn pattern_match(origin: &StepSequence, coarse: &StepSequence, tau: f64) -> MatchOutcome {
    let mut cursor = 0;
    let mut alignment = Vec::with_capacity(coarse.len());
    for (ci, step) in coarse.iter().enumerate() {
        let mut matched = None;
        while cursor < origin.len() {
            let score = gestalt_similarity(&origin[cursor], step);
            cursor += 1;
            if score >= tau {
                matched = Some(AlignedStep {
                    coarse_index: ci,
                    origin_index: cursor - 1,
                    score,
                });
                break;
            }
        }
        match matched {
            Some(a) => alignment.push(a),
            None => {
                return MatchOutcome {
                    valid: false,
                    alignment,
                    first_failure: Some(ci),
                }
            }
        }
    }
    MatchOutcome {
        valid: true,
        alignment,
        first_failure: None,
    }
}
