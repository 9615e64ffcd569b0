//! The per-sample record that flows through both pruning stages.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// Lifecycle of a sample. Transitions only move forward:
/// `pending -> {stage1_ok, stage1_fallback, failed} -> {stage2_ok, failed}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Stage1Ok,
    Stage1Fallback,
    Stage2Ok,
    Failed,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Pending => "pending",
            Status::Stage1Ok => "stage1_ok",
            Status::Stage1Fallback => "stage1_fallback",
            Status::Stage2Ok => "stage2_ok",
            Status::Failed => "failed",
        }
    }

    /// Whether `self -> next` is an edge of the lifecycle DAG.
    pub fn can_transition_to(self, next: Status) -> bool {
        use Status::*;
        matches!(
            (self, next),
            (Pending, Stage1Ok)
                | (Pending, Stage1Fallback)
                | (Pending, Failed)
                | (Stage1Ok, Stage2Ok)
                | (Stage1Ok, Failed)
                | (Stage1Fallback, Stage2Ok)
                | (Stage1Fallback, Failed)
        )
    }

    /// True once stage 1 has produced a coarse CoT (or a later stage ran on one).
    pub fn has_coarse(self) -> bool {
        matches!(
            self,
            Status::Stage1Ok | Status::Stage1Fallback | Status::Stage2Ok
        )
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Conditions attached to a sample for later audit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Stage 1 never produced a valid candidate; the coarse CoT is the original.
    Stage1Fallback,
    /// The original CoT had a single step, so stage 1 skipped generation.
    SingleStep,
    /// Even the last surviving step exceeds the token budget.
    BudgetViolation,
    /// A step boundary fell inside an unclosed markdown code fence.
    FenceSplit,
    /// A generation hit its output-token cap.
    TruncatedGeneration,
}

/// Audit trail of the surprisal-driven stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalTrace {
    /// First-token surprisal (nats) for each coarse step, in step order.
    pub scores: Vec<f64>,
    /// Indices of removed coarse steps, in removal order.
    pub removed: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub question: String,
    #[serde(rename = "cot")]
    pub cot_original: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cot_direct: Option<String>,
    #[serde(default)]
    pub cot_coarse: Option<String>,
    #[serde(default)]
    pub cot_final: Option<String>,
    #[serde(default = "pending")]
    pub status: Status,
    #[serde(default)]
    pub retries_used: u32,
    #[serde(default)]
    pub flags: Vec<Flag>,
    #[serde(default)]
    pub surprisal_trace: Option<SurprisalTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn pending() -> Status {
    Status::Pending
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SampleError {
    #[error("missing field: {0}")]
    MissingField(&'static str),
    #[error("empty {0}")]
    EmptyField(&'static str),
    #[error("field {0} is not text")]
    NotText(&'static str),
    #[error("record is not a JSON object")]
    NotAnObject,
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("sample {id}: invalid transition {from} -> {to}")]
    Transition {
        id: String,
        from: Status,
        to: Status,
    },
    #[error("sample {id}: {reason}")]
    Invariant { id: String, reason: String },
}

fn required_text(obj: &Map<String, Value>, field: &'static str) -> Result<String, SampleError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(SampleError::MissingField(field)),
        Some(Value::String(s)) => {
            let trimmed = s.trim_end();
            if trimmed.trim_start().is_empty() {
                Err(SampleError::EmptyField(field))
            } else {
                Ok(trimmed.to_owned())
            }
        }
        Some(_) => Err(SampleError::NotText(field)),
    }
}

/// Validate a raw corpus record into a pending [`Sample`].
///
/// Requires non-empty text fields `question`, `cot` and `answer`; trailing
/// whitespace is trimmed from each. `id` may be a string or integer; when
/// absent, `fallback_id` is used.
pub fn validate_sample(raw: &Value, fallback_id: &str) -> Result<Sample, SampleError> {
    let obj = raw.as_object().ok_or(SampleError::NotAnObject)?;
    let question = required_text(obj, "question")?;
    let cot = required_text(obj, "cot")?;
    let answer = required_text(obj, "answer")?;
    let id = match obj.get("id") {
        None | Some(Value::Null) => fallback_id.to_owned(),
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(_) => return Err(SampleError::NotText("id")),
    };
    Ok(Sample::new(id, question, cot, answer))
}

impl Sample {
    pub fn new(
        id: impl Into<String>,
        question: impl Into<String>,
        cot: impl Into<String>,
        answer: impl Into<String>,
    ) -> Self {
        Sample {
            id: id.into(),
            question: question.into(),
            cot_original: cot.into(),
            answer: answer.into(),
            cot_direct: None,
            cot_coarse: None,
            cot_final: None,
            status: Status::Pending,
            retries_used: 0,
            flags: Vec::new(),
            surprisal_trace: None,
            error: None,
        }
    }

    /// Parse a record that may already carry stage outputs (the pipeline's
    /// own output format). Raw records come back as pending samples.
    pub fn from_record(raw: &Value, fallback_id: &str) -> Result<Sample, SampleError> {
        let base = validate_sample(raw, fallback_id)?;
        let obj = raw.as_object().ok_or(SampleError::NotAnObject)?;
        if !obj.contains_key("status") {
            return Ok(base);
        }
        let mut full: Sample = serde_json::from_value(raw.clone())
            .map_err(|e| SampleError::Malformed(e.to_string()))?;
        full.id = base.id;
        full.question = base.question;
        full.cot_original = base.cot_original;
        full.answer = base.answer;
        full.check_invariants()?;
        Ok(full)
    }

    pub fn has_flag(&self, flag: Flag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn set_flag(&mut self, flag: Flag) {
        if !self.has_flag(flag) {
            self.flags.push(flag);
            self.flags.sort();
        }
    }

    pub fn transition(&mut self, next: Status) -> Result<(), SampleError> {
        if !self.status.can_transition_to(next) {
            return Err(SampleError::Transition {
                id: self.id.clone(),
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        Ok(())
    }

    /// Mark the sample failed, recording why. Allowed from any non-terminal state.
    pub fn fail(&mut self, reason: impl Into<String>) {
        if self.status.can_transition_to(Status::Failed) {
            self.status = Status::Failed;
        }
        self.error = Some(reason.into());
    }

    /// The most processed CoT text available.
    pub fn latest_cot(&self) -> &str {
        self.cot_final
            .as_deref()
            .or(self.cot_coarse.as_deref())
            .unwrap_or(&self.cot_original)
    }

    pub fn check_invariants(&self) -> Result<(), SampleError> {
        let bad = |reason: &str| {
            Err(SampleError::Invariant {
                id: self.id.clone(),
                reason: reason.to_owned(),
            })
        };
        // A sample that failed during stage 2 keeps its coarse CoT; one that
        // failed in stage 1 has none. Both are legal for `failed`.
        if self.status != Status::Failed && self.status.has_coarse() != self.cot_coarse.is_some() {
            return bad("cot_coarse presence does not match status");
        }
        if self.cot_final.is_some() && self.cot_coarse.is_none() {
            return bad("cot_final present without cot_coarse");
        }
        if (self.status == Status::Stage1Fallback || self.has_flag(Flag::Stage1Fallback))
            && self.cot_coarse.as_deref() != Some(self.cot_original.as_str())
        {
            return bad("stage1 fallback must keep the original CoT byte-for-byte");
        }
        if self.status == Status::Stage2Ok && self.cot_final.is_none() {
            return bad("stage2_ok without cot_final");
        }
        Ok(())
    }
}
