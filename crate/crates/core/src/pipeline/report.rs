//! Corpus-level token and status accounting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sample::{Flag, Sample, Status};
use crate::tokenizer::Tokenizer;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PruneReport {
    pub samples_total: usize,
    /// Samples whose stage 1 produced a validated coarse CoT.
    pub stage1_ok: usize,
    /// Samples whose stage 1 fell back to the original CoT.
    pub stage1_fallback: usize,
    pub stage2_ok: usize,
    pub failed: usize,
    pub tokens_before: u64,
    pub tokens_after_stage1: u64,
    pub tokens_after_stage2: u64,
    pub mean_tokens_before: f64,
    pub mean_tokens_after: f64,
    /// Percentage of tokens removed overall, `100 * (1 - after / before)`.
    pub reduction_pct: f64,
    /// Stage-1 attempts used, keyed by attempt count.
    pub retries_histogram: BTreeMap<u32, usize>,
    pub budget_violations: usize,
    /// Samples where a step boundary cut through a fenced code block.
    pub fence_caveats: usize,
    /// Input lines skipped as malformed when the corpus was loaded.
    pub malformed_lines: usize,
}

/// Percentage reduction from `before` to `after`; zero when `before` is zero.
pub fn reduction_pct(before: u64, after: u64) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (1.0 - after as f64 / before as f64)
    }
}

/// Build a report from finished samples.
///
/// Token columns use the most processed text each sample has at that stage,
/// so a sample that stopped early contributes its last available CoT.
pub fn compute_report<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    tokenizer: &dyn Tokenizer,
) -> PruneReport {
    let mut r = PruneReport::default();
    for s in samples {
        r.samples_total += 1;
        let fallback = s.status == Status::Stage1Fallback || s.has_flag(Flag::Stage1Fallback);
        if fallback {
            r.stage1_fallback += 1;
        } else if s.cot_coarse.is_some() {
            r.stage1_ok += 1;
        }
        match s.status {
            Status::Stage2Ok => r.stage2_ok += 1,
            Status::Failed => r.failed += 1,
            _ => {}
        }
        if s.cot_coarse.is_some() {
            *r.retries_histogram.entry(s.retries_used).or_insert(0) += 1;
        }
        if s.has_flag(Flag::BudgetViolation) {
            r.budget_violations += 1;
        }
        if s.has_flag(Flag::FenceSplit) {
            r.fence_caveats += 1;
        }
        let before = tokenizer.count(&s.cot_original) as u64;
        let stage1 = s
            .cot_coarse
            .as_deref()
            .map_or(before, |c| tokenizer.count(c) as u64);
        let stage2 = s
            .cot_final
            .as_deref()
            .map_or(stage1, |c| tokenizer.count(c) as u64);
        r.tokens_before += before;
        r.tokens_after_stage1 += stage1;
        r.tokens_after_stage2 += stage2;
    }
    if r.samples_total > 0 {
        r.mean_tokens_before = r.tokens_before as f64 / r.samples_total as f64;
        r.mean_tokens_after = r.tokens_after_stage2 as f64 / r.samples_total as f64;
    }
    r.reduction_pct = reduction_pct(r.tokens_before, r.tokens_after_stage2);
    r
}
