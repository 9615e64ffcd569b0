//! Budgeted removal of low-surprisal steps.

use thiserror::Error;

use crate::sample::{Flag, Sample, SampleError, Status, SurprisalTrace};
use crate::scorer::ScoredStep;
use crate::segmenter::{join_steps, StepSequence};
use crate::tokenizer::Tokenizer;

pub const DEFAULT_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RefineError {
    #[error("no scored steps")]
    Empty,
    #[error("token budget must be at least 1")]
    ZeroBudget,
    #[error("scored steps are not indexed 0..n in order")]
    BadIndices,
    #[error(transparent)]
    State(#[from] SampleError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub steps: StepSequence,
    /// Removed step indices, in removal order.
    pub removed: Vec<usize>,
    /// The single surviving step is still over budget.
    pub budget_violation: bool,
}

/// Step indices by ascending surprisal, ties broken by smaller index first.
pub fn removal_order(scored: &[ScoredStep]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| {
        scored[a]
            .surprisal
            .total_cmp(&scored[b].surprisal)
            .then(a.cmp(&b))
    });
    order
}

fn joined_count(scored: &[ScoredStep], alive: &[bool], tokenizer: &dyn Tokenizer) -> usize {
    let kept: Vec<&str> = scored
        .iter()
        .zip(alive)
        .filter(|(_, a)| **a)
        .map(|(s, _)| s.text.as_str())
        .collect();
    tokenizer.count(&kept.join(crate::segmenter::STEP_DELIMITER))
}

/// Drop steps in [`removal_order`] until the joined text fits `budget`.
///
/// Scores are taken as given; nothing is rescored between removals. Within
/// budget input comes back untouched. The last remaining step is never
/// removed; if it alone exceeds the budget the result is flagged.
pub fn fine_prune(
    scored: &[ScoredStep],
    budget: usize,
    tokenizer: &dyn Tokenizer,
) -> Result<Refinement, RefineError> {
    if scored.is_empty() {
        return Err(RefineError::Empty);
    }
    if budget == 0 {
        return Err(RefineError::ZeroBudget);
    }
    if scored.iter().enumerate().any(|(i, s)| s.step_index != i) {
        return Err(RefineError::BadIndices);
    }
    let all = StepSequence::new(scored.iter().map(|s| s.text.clone()).collect())
        .map_err(|e| SampleError::Malformed(e.to_string()))?;
    if tokenizer.count(&join_steps(&all)) <= budget {
        return Ok(Refinement {
            steps: all,
            removed: Vec::new(),
            budget_violation: false,
        });
    }

    let mut alive = vec![true; scored.len()];
    let mut left = scored.len();
    let mut removed = Vec::new();
    let mut fits = false;
    for idx in removal_order(scored) {
        if left == 1 {
            break;
        }
        alive[idx] = false;
        left -= 1;
        removed.push(idx);
        if joined_count(scored, &alive, tokenizer) <= budget {
            fits = true;
            break;
        }
    }
    Ok(Refinement {
        steps: all.retain_indices(|i| alive[i]),
        removed,
        budget_violation: !fits,
    })
}

/// Record the refined CoT on a sample that finished stage 1.
pub fn assemble_final(mut sample: Sample, refined: &Refinement) -> Result<Sample, RefineError> {
    if !matches!(sample.status, Status::Stage1Ok | Status::Stage1Fallback) {
        return Err(SampleError::Transition {
            id: sample.id.clone(),
            from: sample.status,
            to: Status::Stage2Ok,
        }
        .into());
    }
    sample.cot_final = Some(join_steps(&refined.steps));
    if refined.budget_violation {
        sample.set_flag(Flag::BudgetViolation);
    }
    match &mut sample.surprisal_trace {
        Some(trace) => trace.removed = refined.removed.clone(),
        None if refined.removed.is_empty() => {}
        None => {
            sample.surprisal_trace = Some(SurprisalTrace {
                scores: Vec::new(),
                removed: refined.removed.clone(),
            })
        }
    }
    sample.transition(Status::Stage2Ok)?;
    Ok(sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmenter::split_steps;
    use crate::tokenizer::{ReferenceTokenizer, TokenSpan};
    use proptest::prelude::*;

    fn step(i: usize, score: f64, text: String) -> ScoredStep {
        ScoredStep {
            step_index: i,
            text,
            first_token: TokenSpan {
                index: 0,
                byte_start: 0,
                byte_end: 1,
                logprob: -score,
            },
            surprisal: score,
            entropy_topk: None,
            step_ppl: None,
        }
    }

    /// `n` distinct single-character-word tokens.
    fn words(tag: char, n: usize) -> String {
        (0..n)
            .map(|i| format!("{tag}{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    fn scored(specs: &[(f64, usize)]) -> Vec<ScoredStep> {
        specs
            .iter()
            .enumerate()
            .map(|(i, &(s, n))| step(i, s, words((b'a' + i as u8) as char, n)))
            .collect()
    }

    #[test]
    fn removes_lowest_until_within_budget() {
        let steps = scored(&[(2.0, 10), (0.5, 10), (3.0, 10)]);
        let r = fine_prune(&steps, 25, &ReferenceTokenizer).unwrap();
        assert_eq!(r.removed, [1]);
        assert_eq!(
            r.steps.steps(),
            [steps[0].text.clone(), steps[2].text.clone()]
        );
        assert!(!r.budget_violation);
    }

    #[test]
    fn within_budget_is_untouched() {
        let steps = scored(&[(2.0, 10), (0.5, 10), (3.0, 10)]);
        let r = fine_prune(&steps, 30, &ReferenceTokenizer).unwrap();
        assert!(r.removed.is_empty());
        assert_eq!(r.steps.len(), 3);
    }

    #[test]
    fn tiny_budget_keeps_highest_and_flags() {
        let steps = scored(&[(1.0, 4), (5.0, 4), (2.0, 4)]);
        let r = fine_prune(&steps, 1, &ReferenceTokenizer).unwrap();
        assert_eq!(r.removed, [0, 2]);
        assert_eq!(r.steps.steps(), [steps[1].text.clone()]);
        assert!(r.budget_violation);
    }

    #[test]
    fn ties_remove_smaller_index_first() {
        let steps = scored(&[(1.0, 4), (1.0, 4), (1.0, 4)]);
        assert_eq!(removal_order(&steps), [0, 1, 2]);
        let r = fine_prune(&steps, 1, &ReferenceTokenizer).unwrap();
        assert_eq!(r.steps.steps(), [steps[2].text.clone()]);
    }

    #[test]
    fn last_step_that_fits_is_not_a_violation() {
        let steps = scored(&[(1.0, 4), (5.0, 2)]);
        let r = fine_prune(&steps, 2, &ReferenceTokenizer).unwrap();
        assert_eq!(r.removed, [0]);
        assert!(!r.budget_violation);
    }

    #[test]
    fn rejects_empty_and_zero_budget() {
        assert_eq!(
            fine_prune(&[], 5, &ReferenceTokenizer),
            Err(RefineError::Empty)
        );
        assert_eq!(
            fine_prune(&scored(&[(1.0, 1)]), 0, &ReferenceTokenizer),
            Err(RefineError::ZeroBudget)
        );
    }

    #[test]
    fn assemble_joins_with_blank_line() {
        let mut s = Sample::new("a", "q", "x\n\ny\n\nz", "ans");
        s.cot_coarse = Some("x\n\ny\n\nz".into());
        s.transition(Status::Stage1Ok).unwrap();
        let r = Refinement {
            steps: split_steps("x\n\nz"),
            removed: vec![1],
            budget_violation: false,
        };
        let out = assemble_final(s, &r).unwrap();
        assert_eq!(out.cot_final.as_deref(), Some("x\n\nz"));
        assert_eq!(out.status, Status::Stage2Ok);
        assert_eq!(out.surprisal_trace.unwrap().removed, [1]);
    }

    #[test]
    fn assemble_with_all_steps_matches_normalized_coarse() {
        let coarse = "x\n\n\n\ny  \n\nz";
        let mut s = Sample::new("a", "q", coarse, "ans");
        s.cot_coarse = Some(coarse.into());
        s.transition(Status::Stage1Ok).unwrap();
        let r = Refinement {
            steps: split_steps(coarse),
            removed: vec![],
            budget_violation: false,
        };
        let out = assemble_final(s, &r).unwrap();
        assert_eq!(out.cot_final.unwrap(), join_steps(&split_steps(coarse)));
    }

    #[test]
    fn assemble_propagates_violation_flag() {
        let mut s = Sample::new("a", "q", "x", "ans");
        s.cot_coarse = Some("x".into());
        s.transition(Status::Stage1Fallback).unwrap();
        let r = Refinement {
            steps: split_steps("x"),
            removed: vec![],
            budget_violation: true,
        };
        let out = assemble_final(s, &r).unwrap();
        assert!(out.has_flag(Flag::BudgetViolation));
    }

    #[test]
    fn assemble_rejects_pending() {
        let s = Sample::new("a", "q", "x", "ans");
        let r = Refinement {
            steps: split_steps("x"),
            removed: vec![],
            budget_violation: false,
        };
        assert!(matches!(assemble_final(s, &r), Err(RefineError::State(_))));
    }

    proptest! {
        #[test]
        fn output_is_ordered_subsequence_and_deterministic(
            specs in proptest::collection::vec((0u8..5, 1usize..8), 1..10),
            budget in 1usize..40,
        ) {
            let steps = scored(&specs.iter().map(|&(s, n)| (f64::from(s), n)).collect::<Vec<_>>());
            let r = fine_prune(&steps, budget, &ReferenceTokenizer).unwrap();
            prop_assert_eq!(&r, &fine_prune(&steps, budget, &ReferenceTokenizer).unwrap());
            prop_assert!(!r.steps.is_empty());
            let mut it = steps.iter().map(|s| &s.text);
            for kept in r.steps.iter() {
                prop_assert!(it.any(|t| t == kept));
            }
            let count = ReferenceTokenizer.count(&join_steps(&r.steps));
            prop_assert!(count <= budget || (r.budget_violation && r.steps.len() == 1));
            // Removed set is a prefix of the removal order.
            let order = removal_order(&steps);
            prop_assert_eq!(&order[..r.removed.len()], &r.removed[..]);
        }
    }
}
