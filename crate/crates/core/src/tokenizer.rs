//! Token counting and token/byte alignment.

use std::ops::Range;

use serde::{Deserialize, Serialize};

/// One token of a scored sequence: its byte range in the source text and its
/// natural-log probability given everything before it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TokenSpan {
    pub index: usize,
    pub byte_start: usize,
    pub byte_end: usize,
    pub logprob: f64,
}

impl TokenSpan {
    pub fn range(&self) -> Range<usize> {
        self.byte_start..self.byte_end
    }

    pub fn text<'a>(&self, source: &'a str) -> &'a str {
        &source[self.range()]
    }
}

/// Budget-counting contract. Implementations must be deterministic and safe
/// to share between worker threads.
pub trait Tokenizer: Send + Sync {
    /// Byte ranges of each token, ordered and non-overlapping.
    fn spans(&self, text: &str) -> Vec<Range<usize>>;

    fn count(&self, text: &str) -> usize {
        self.spans(text).len()
    }
}

impl<T: Tokenizer + ?Sized> Tokenizer for &T {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        (**self).spans(text)
    }
    fn count(&self, text: &str) -> usize {
        (**self).count(text)
    }
}

impl<T: Tokenizer + ?Sized> Tokenizer for std::sync::Arc<T> {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        (**self).spans(text)
    }
    fn count(&self, text: &str) -> usize {
        (**self).count(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum CharClass {
    Space,
    Word,
    Punct,
}

fn classify(c: char) -> CharClass {
    if c.is_whitespace() {
        CharClass::Space
    } else if c.is_alphanumeric() {
        CharClass::Word
    } else {
        CharClass::Punct
    }
}

/// Splits on Unicode whitespace; runs of alphanumeric characters form one
/// token and every other non-whitespace character is a token by itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceTokenizer;

impl ReferenceTokenizer {
    /// Like [`Tokenizer::spans`], but whitespace runs are emitted as tokens
    /// too, so the spans tile the whole text. Used by the mock scorer.
    pub fn covering_spans(text: &str) -> Vec<Range<usize>> {
        segment(text, true)
    }
}

fn segment(text: &str, keep_space: bool) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut run: Option<(usize, CharClass)> = None;
    for (i, c) in text.char_indices() {
        let class = classify(c);
        if let Some((start, prev)) = run {
            if prev == class && class != CharClass::Punct {
                continue;
            }
            if prev != CharClass::Space || keep_space {
                out.push(start..i);
            }
        }
        run = Some((i, class));
    }
    if let Some((start, prev)) = run {
        if prev != CharClass::Space || keep_space {
            out.push(start..text.len());
        }
    }
    out
}

impl Tokenizer for ReferenceTokenizer {
    fn spans(&self, text: &str) -> Vec<Range<usize>> {
        segment(text, false)
    }

    fn count(&self, text: &str) -> usize {
        let mut n = 0;
        let mut prev = CharClass::Space;
        for c in text.chars() {
            let class = classify(c);
            match class {
                CharClass::Space => {}
                CharClass::Punct => n += 1,
                CharClass::Word if prev != CharClass::Word => n += 1,
                CharClass::Word => {}
            }
            prev = class;
        }
        n
    }
}
