//! Post-hoc checks over an output corpus.

use serde::Serialize;

use crate::matcher::pattern_match;
use crate::sample::{Flag, Sample, Status};
use crate::segmenter::split_steps;
use crate::tokenizer::Tokenizer;

use super::report::PruneReport;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditCheck {
    /// Sample fields contradict its status.
    Invariant,
    /// Final steps are not an ordered subsequence of the coarse steps.
    Subsequence,
    /// Coarse steps do not pattern-match the original.
    PatternMatch,
    /// Final CoT is over budget without a violation flag.
    Budget,
    /// Stored report disagrees with the corpus.
    Report,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditFinding {
    pub id: String,
    pub check: AuditCheck,
    pub detail: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct AuditSummary {
    pub samples: usize,
    pub findings: Vec<AuditFinding>,
}

impl AuditSummary {
    pub fn passed(&self) -> bool {
        self.findings.is_empty()
    }
}

fn is_ordered_subsequence(sub: &[String], of: &[String]) -> bool {
    let mut it = of.iter();
    sub.iter().all(|s| it.any(|o| o == s))
}

/// Check one sample. Non-fallback samples with a coarse CoT must match the
/// original at `tau`; finished samples must have final steps drawn in order
/// from the coarse steps and fit `budget` unless flagged.
pub fn audit_sample(
    sample: &Sample,
    tau: f64,
    budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Vec<AuditFinding> {
    let mut out = Vec::new();
    let mut find = |check, detail: String| {
        out.push(AuditFinding {
            id: sample.id.clone(),
            check,
            detail,
        })
    };
    if let Err(e) = sample.check_invariants() {
        find(AuditCheck::Invariant, e.to_string());
    }
    let Some(coarse_text) = sample.cot_coarse.as_deref() else {
        return out;
    };
    let coarse = split_steps(coarse_text);
    if !sample.has_flag(Flag::Stage1Fallback) {
        let m = pattern_match(&split_steps(&sample.cot_original), &coarse, tau);
        if !m.valid {
            find(
                AuditCheck::PatternMatch,
                format!(
                    "coarse step {:?} has no match at tau {tau}",
                    m.first_failure
                ),
            );
        }
    }
    if sample.status == Status::Stage2Ok {
        if let Some(final_text) = sample.cot_final.as_deref() {
            let fin = split_steps(final_text);
            if !is_ordered_subsequence(&fin, &coarse) {
                find(
                    AuditCheck::Subsequence,
                    "final steps not drawn in order from coarse".into(),
                );
            }
            let n = tokenizer.count(final_text);
            if n > budget && !sample.has_flag(Flag::BudgetViolation) {
                find(
                    AuditCheck::Budget,
                    format!("{n} tokens over budget {budget}"),
                );
            }
        }
    }
    out
}

pub fn audit_corpus<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    tau: f64,
    budget: usize,
    tokenizer: &dyn Tokenizer,
) -> AuditSummary {
    let mut summary = AuditSummary::default();
    for s in samples {
        summary.samples += 1;
        summary
            .findings
            .extend(audit_sample(s, tau, budget, tokenizer));
    }
    summary
}

/// Compare a stored report with one recomputed from the corpus. The
/// malformed-line count comes from the input and is not compared.
pub fn audit_report(stored: &PruneReport, recomputed: &PruneReport) -> Option<AuditFinding> {
    let mut r = recomputed.clone();
    r.malformed_lines = stored.malformed_lines;
    (r != *stored).then(|| AuditFinding {
        id: String::new(),
        check: AuditCheck::Report,
        detail: format!(
            "stored report differs: tokens {}->{} vs recomputed {}->{}",
            stored.tokens_before,
            stored.tokens_after_stage2,
            r.tokens_before,
            r.tokens_after_stage2
        ),
    })
}
