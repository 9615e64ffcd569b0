//! OpenAI-compatible request bodies and response parsing.

use serde_json::{json, Value};

use super::limiter::Guarded;
use super::{
    GatewayError, Generation, GenerationRequest, ScoredSequence, SequenceScorer, TextGenerator,
};
use crate::tokenizer::TokenSpan;

pub const CHAT_PATH: &str = "chat/completions";
pub const COMPLETIONS_PATH: &str = "completions";

/// Logprob recorded for a leading token the endpoint scored without context.
pub const UNCONDITIONED_LOGPROB: f64 = 0.0;

pub struct OpenAiGenerator {
    transport: Guarded,
}

impl OpenAiGenerator {
    pub fn new(transport: Guarded) -> Self {
        OpenAiGenerator { transport }
    }
}

pub fn chat_body(req: &GenerationRequest) -> Value {
    json!({
        "model": req.model_name,
        "messages": [{"role": "user", "content": req.prompt}],
        "temperature": req.temperature,
        "top_p": req.top_p,
        "max_tokens": req.max_output_tokens,
        "stream": false,
    })
}

pub fn parse_chat(resp: &Value) -> Result<Generation, GatewayError> {
    let choice = resp
        .pointer("/choices/0")
        .ok_or_else(|| GatewayError::Malformed("response has no choices".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| GatewayError::Malformed("choice has no message content".into()))?;
    let truncated = choice.get("finish_reason").and_then(Value::as_str) == Some("length");
    Ok(Generation {
        text: text.to_owned(),
        truncated,
    })
}

impl TextGenerator for OpenAiGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<Generation, GatewayError> {
        req.validate()?;
        let resp = self.transport.send(CHAT_PATH, &chat_body(req))?;
        parse_chat(&resp)
    }
}

pub struct OpenAiScorer {
    transport: Guarded,
    top_k: u32,
}

impl OpenAiScorer {
    pub fn new(transport: Guarded, top_k: u32) -> Self {
        OpenAiScorer { transport, top_k }
    }
}

pub fn completions_body(text: &str, model: &str, top_k: u32) -> Value {
    json!({
        "model": model,
        "prompt": text,
        "max_tokens": 1,
        "temperature": 0.0,
        "echo": true,
        "logprobs": top_k,
    })
}

/// Align echoed prompt tokens to `text`.
///
/// Token strings must tile `text` exactly. Leading tokens that do not occur
/// in the text (BOS markers) are skipped, zero-length tokens are dropped,
/// and tokens past the end of `text` (the one generated token) are ignored.
/// When `text_offset` is present it must agree with the tiling, in either
/// character or byte units.
pub fn parse_echo_logprobs(text: &str, resp: &Value) -> Result<ScoredSequence, GatewayError> {
    let lp = resp
        .pointer("/choices/0/logprobs")
        .filter(|v| !v.is_null())
        .ok_or_else(|| {
            GatewayError::Capability(
                "scoring endpoint returned no logprobs for the echoed prompt".into(),
            )
        })?;
    let tokens = lp
        .get("tokens")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::Capability("logprobs carry no token list".into()))?;
    let logprobs = lp
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| GatewayError::Capability("logprobs carry no token_logprobs".into()))?;
    if logprobs.len() != tokens.len() {
        return Err(GatewayError::Integrity(
            "token and logprob lists differ in length".into(),
        ));
    }
    let offsets = lp.get("text_offset").and_then(Value::as_array);
    let tops = lp.get("top_logprobs").and_then(Value::as_array);

    let mut spans = Vec::new();
    let mut alternatives = Vec::new();
    let mut cursor = 0usize;
    let mut chars_seen = 0usize;
    for (i, tok) in tokens.iter().enumerate() {
        if cursor == text.len() && !spans.is_empty() {
            break;
        }
        let tok = tok
            .as_str()
            .ok_or_else(|| GatewayError::Malformed(format!("token {i} is not a string")))?;
        if tok.is_empty() {
            continue;
        }
        if !text[cursor..].starts_with(tok) {
            if spans.is_empty() && cursor == 0 {
                continue;
            }
            return Err(GatewayError::Integrity(format!(
                "token {i} ({tok:?}) does not match the text at byte {cursor}"
            )));
        }
        if let Some(off) = offsets.and_then(|o| o.get(i)).and_then(Value::as_u64) {
            let off = off as usize;
            if off != chars_seen && off != cursor {
                return Err(GatewayError::Integrity(format!(
                    "token {i} reported at offset {off}, expected {chars_seen}"
                )));
            }
        }
        let logprob = match logprobs[i].as_f64() {
            Some(v) if v > 0.0 && v < 1e-6 => 0.0,
            Some(v) if v <= 0.0 => v,
            Some(v) => {
                return Err(GatewayError::Integrity(format!(
                    "token {i} has logprob {v} > 0"
                )))
            }
            None if spans.is_empty() => UNCONDITIONED_LOGPROB,
            None => return Err(GatewayError::Integrity(format!("token {i} has no logprob"))),
        };
        spans.push(TokenSpan {
            index: spans.len(),
            byte_start: cursor,
            byte_end: cursor + tok.len(),
            logprob,
        });
        if let Some(tops) = tops {
            let mut alts: Vec<(String, f64)> = tops
                .get(i)
                .and_then(Value::as_object)
                .map(|m| {
                    m.iter()
                        .filter_map(|(k, v)| v.as_f64().map(|lp| (k.clone(), lp.min(0.0))))
                        .collect()
                })
                .unwrap_or_default();
            alts.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            alternatives.push(alts);
        }
        cursor += tok.len();
        chars_seen += tok.chars().count();
    }
    if cursor != text.len() {
        return Err(GatewayError::Integrity(format!(
            "echoed tokens cover {cursor} of {} bytes",
            text.len()
        )));
    }
    let seq = ScoredSequence {
        text: text.to_owned(),
        tokens: spans,
        top_alternatives: tops.map(|_| alternatives),
    };
    seq.check()?;
    Ok(seq)
}

impl SequenceScorer for OpenAiScorer {
    fn score_sequence(
        &self,
        full_text: &str,
        model_name: &str,
    ) -> Result<ScoredSequence, GatewayError> {
        if full_text.is_empty() {
            return Ok(ScoredSequence {
                text: String::new(),
                tokens: Vec::new(),
                top_alternatives: None,
            });
        }
        let resp = self.transport.send(
            COMPLETIONS_PATH,
            &completions_body(full_text, model_name, self.top_k),
        )?;
        parse_echo_logprobs(full_text, &resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo(tokens: &[&str], lps: &[Option<f64>], offsets: Option<&[u64]>) -> Value {
        let mut lp = json!({
            "tokens": tokens,
            "token_logprobs": lps,
        });
        if let Some(o) = offsets {
            lp["text_offset"] = json!(o);
        }
        json!({"choices": [{"text": tokens.concat(), "logprobs": lp}]})
    }

    #[test]
    fn parses_chat_completion() {
        let resp = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}, "finish_reason": "length"}]});
        assert_eq!(
            parse_chat(&resp).unwrap(),
            Generation {
                text: "hi".into(),
                truncated: true
            }
        );
        assert!(matches!(
            parse_chat(&json!({})),
            Err(GatewayError::Malformed(_))
        ));
    }

    #[test]
    fn aligns_echoed_tokens_and_drops_generated_tail() {
        let text = "Hi there";
        let resp = echo(
            &["Hi", " there", "!"],
            &[None, Some(-1.25), Some(-0.5)],
            Some(&[0, 2, 8]),
        );
        let seq = parse_echo_logprobs(text, &resp).unwrap();
        assert_eq!(seq.tokens.len(), 2);
        assert_eq!(seq.tokens[0].logprob, UNCONDITIONED_LOGPROB);
        assert_eq!(seq.tokens[1].range(), 2..8);
        assert_eq!(seq.tokens[1].logprob, -1.25);
    }

    #[test]
    fn skips_leading_bos_and_accepts_char_offsets() {
        let text = "é x";
        let resp = echo(
            &["<s>", "é", " x"],
            &[None, Some(-2.0), Some(-1.0)],
            Some(&[0, 0, 1]),
        );
        let seq = parse_echo_logprobs(text, &resp).unwrap();
        assert_eq!(seq.tokens.len(), 2);
        assert_eq!(seq.tokens[1].range(), 2..4);
    }

    #[test]
    fn mismatched_token_is_integrity_error() {
        let resp = echo(&["Hi", " thar"], &[None, Some(-1.0)], None);
        assert!(matches!(
            parse_echo_logprobs("Hi there", &resp),
            Err(GatewayError::Integrity(_))
        ));
    }

    #[test]
    fn bad_offset_is_integrity_error() {
        let resp = echo(&["Hi", " there"], &[None, Some(-1.0)], Some(&[0, 5]));
        assert!(matches!(
            parse_echo_logprobs("Hi there", &resp),
            Err(GatewayError::Integrity(_))
        ));
    }

    #[test]
    fn missing_logprobs_is_capability_error() {
        let resp = json!({"choices": [{"text": "Hi", "logprobs": null}]});
        assert!(matches!(
            parse_echo_logprobs("Hi", &resp),
            Err(GatewayError::Capability(_))
        ));
    }

    #[test]
    fn top_alternatives_are_sorted() {
        let mut resp = echo(&["a", "b"], &[None, Some(-0.1)], None);
        resp["choices"][0]["logprobs"]["top_logprobs"] = json!([null, {"c": -3.0, "b": -0.1}]);
        let seq = parse_echo_logprobs("ab", &resp).unwrap();
        let alts = seq.top_alternatives.unwrap();
        assert!(alts[0].is_empty());
        assert_eq!(
            alts[1],
            vec![("b".to_string(), -0.1), ("c".to_string(), -3.0)]
        );
    }
}
