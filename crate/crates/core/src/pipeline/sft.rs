//! Turning finished samples into supervised fine-tuning records.

use serde::{Deserialize, Serialize};

use crate::sample::{Flag, Sample, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub prompt: String,
    pub response: String,
    /// Set when the CoT came from a stage-1 fallback.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub fallback: bool,
}

/// Shapes the `response` text of a record.
pub trait SftFormatter: Send + Sync {
    fn response(&self, cot: &str, answer: &str) -> String;
}

/// `cot`, blank line, `answer`.
#[derive(Debug, Clone, Copy, Default)]
pub struct PlainFormatter;

impl SftFormatter for PlainFormatter {
    fn response(&self, cot: &str, answer: &str) -> String {
        format!("{cot}\n\n{answer}")
    }
}

/// CoT wrapped in `<think>` tags, as reasoning models emit it.
#[derive(Debug, Clone, Copy, Default)]
pub struct ThinkTagFormatter;

impl SftFormatter for ThinkTagFormatter {
    fn response(&self, cot: &str, answer: &str) -> String {
        format!("<think>\n{cot}\n</think>\n\n{answer}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SftFormat {
    #[default]
    Plain,
    ThinkTags,
}

impl SftFormat {
    pub fn formatter(self) -> Box<dyn SftFormatter> {
        match self {
            SftFormat::Plain => Box::new(PlainFormatter),
            SftFormat::ThinkTags => Box::new(ThinkTagFormatter),
        }
    }
}

impl std::str::FromStr for SftFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(SftFormat::Plain),
            "think-tags" => Ok(SftFormat::ThinkTags),
            other => Err(format!("unknown SFT format {other:?} (plain, think-tags)")),
        }
    }
}

/// Record for one sample, or `None` if it is not eligible.
///
/// Only `stage2_ok` samples qualify. Fallback samples are left out unless
/// `include_fallback` is set, in which case they carry `fallback: true`.
pub fn sft_record(
    sample: &Sample,
    include_fallback: bool,
    fmt: &dyn SftFormatter,
) -> Option<SftRecord> {
    if sample.status != Status::Stage2Ok {
        return None;
    }
    let fallback = sample.has_flag(Flag::Stage1Fallback);
    if fallback && !include_fallback {
        return None;
    }
    let cot = sample.cot_final.as_deref()?;
    Some(SftRecord {
        id: sample.id.clone(),
        prompt: sample.question.clone(),
        response: fmt.response(cot, &sample.answer),
        fallback,
    })
}

pub fn sft_records<'a>(
    samples: impl IntoIterator<Item = &'a Sample>,
    include_fallback: bool,
    fmt: &dyn SftFormatter,
) -> Vec<SftRecord> {
    samples
        .into_iter()
        .filter_map(|s| sft_record(s, include_fallback, fmt))
        .collect()
}
