//! Blank-line segmentation of a CoT into reasoning steps.
//!
//! A blank line is a line that is empty after trimming horizontal whitespace.
//! Runs of blank lines separate steps; single newlines inside a step are kept.
//! Line endings are normalized by dropping carriage returns at the end of a
//! line. Fenced code blocks get no special treatment: a blank line inside a
//! fence still splits, and [`has_fence_split`] reports when that happened.

use std::fmt;
use std::ops::Deref;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const STEP_DELIMITER: &str = "\n\n";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("step {0} is empty or whitespace-only")]
    Blank(usize),
    #[error("step {0} contains a blank line")]
    InternalBlankLine(usize),
    #[error("step {0} has a line ending in a carriage return")]
    CarriageReturn(usize),
}

/// An ordered list of reasoning steps that survives a join/split round trip.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct StepSequence(Vec<String>);

fn is_blank_line(line: &str) -> bool {
    line.chars().all(|c| c.is_whitespace() && c != '\n')
}

impl StepSequence {
    pub fn new(steps: Vec<String>) -> Result<Self, StepError> {
        for (i, step) in steps.iter().enumerate() {
            if step.trim().is_empty() {
                return Err(StepError::Blank(i));
            }
            for line in step.split('\n') {
                if is_blank_line(line) {
                    return Err(StepError::InternalBlankLine(i));
                }
                if line.ends_with('\r') {
                    return Err(StepError::CarriageReturn(i));
                }
            }
        }
        Ok(StepSequence(steps))
    }

    pub fn empty() -> Self {
        StepSequence(Vec::new())
    }

    pub fn steps(&self) -> &[String] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }

    /// Keep the steps whose indices satisfy `keep`, in order.
    pub fn retain_indices(&self, mut keep: impl FnMut(usize) -> bool) -> StepSequence {
        StepSequence(
            self.0
                .iter()
                .enumerate()
                .filter(|(i, _)| keep(*i))
                .map(|(_, s)| s.clone())
                .collect(),
        )
    }

    /// Byte offset of each step's first byte within `join_steps(self)`.
    pub fn offsets(&self) -> Vec<usize> {
        let mut at = 0;
        self.0
            .iter()
            .map(|s| {
                let start = at;
                at += s.len() + STEP_DELIMITER.len();
                start
            })
            .collect()
    }
}

impl Deref for StepSequence {
    type Target = [String];
    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl TryFrom<Vec<String>> for StepSequence {
    type Error = StepError;
    fn try_from(v: Vec<String>) -> Result<Self, StepError> {
        StepSequence::new(v)
    }
}

impl From<StepSequence> for Vec<String> {
    fn from(s: StepSequence) -> Vec<String> {
        s.0
    }
}

impl fmt::Display for StepSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&join_steps(self))
    }
}

pub fn split_steps(cot: &str) -> StepSequence {
    let mut steps = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for raw in cot.split('\n') {
        let line = raw.trim_end_matches('\r');
        if is_blank_line(line) {
            if !current.is_empty() {
                steps.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        steps.push(current.join("\n"));
    }
    StepSequence(steps)
}

pub fn join_steps(seq: &StepSequence) -> String {
    seq.0.join(STEP_DELIMITER)
}

fn is_fence_line(line: &str) -> bool {
    let t = line.trim_start();
    t.starts_with("```") || t.starts_with("~~~")
}

/// True when some step has an odd number of code-fence lines, meaning a step
/// boundary cut through a fenced block.
pub fn has_fence_split(seq: &StepSequence) -> bool {
    seq.iter()
        .any(|s| s.lines().filter(|l| is_fence_line(l)).count() % 2 == 1)
}
