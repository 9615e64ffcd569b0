//! JSONL corpus reading and writing.

use std::collections::HashSet;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;
use tracing::warn;

use crate::sample::Sample;

pub const DEFAULT_MAX_MALFORMED_FRACTION: f64 = 0.1;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{malformed} of {lines} lines malformed, above the {max_fraction} limit")]
    TooManyMalformed {
        malformed: usize,
        lines: usize,
        max_fraction: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedLine {
    /// 1-based line number.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub samples: Vec<Sample>,
    pub skipped: Vec<SkippedLine>,
}

/// Streams samples from JSONL, skipping (and remembering) malformed lines.
/// Blank lines are ignored. Records with a repeated `id` are malformed.
pub struct CorpusReader<R> {
    lines: io::Lines<R>,
    line_no: usize,
    seen: HashSet<String>,
    skipped: Vec<SkippedLine>,
}

impl<R: BufRead> CorpusReader<R> {
    pub fn new(reader: R) -> Self {
        CorpusReader {
            lines: reader.lines(),
            line_no: 0,
            seen: HashSet::new(),
            skipped: Vec::new(),
        }
    }

    pub fn skipped(&self) -> &[SkippedLine] {
        &self.skipped
    }

    pub fn into_skipped(self) -> Vec<SkippedLine> {
        self.skipped
    }

    fn parse(&mut self, line: &str) -> Result<Sample, String> {
        let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
        let sample = Sample::from_record(&value, &format!("line-{}", self.line_no))
            .map_err(|e| e.to_string())?;
        if !self.seen.insert(sample.id.clone()) {
            return Err(format!("duplicate id {}", sample.id));
        }
        Ok(sample)
    }
}

impl<R: BufRead> Iterator for CorpusReader<R> {
    type Item = io::Result<Sample>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e)),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse(&line) {
                Ok(s) => return Some(Ok(s)),
                Err(reason) => {
                    warn!(line = self.line_no, %reason, "skipping malformed record");
                    self.skipped.push(SkippedLine {
                        line: self.line_no,
                        reason,
                    });
                }
            }
        }
    }
}

/// Read a whole corpus, failing if more than `max_malformed_fraction` of the
/// non-blank lines are malformed.
pub fn load_corpus(path: &Path, max_malformed_fraction: f64) -> Result<Corpus, CorpusError> {
    let read_err = |source| CorpusError::Read {
        path: path.to_owned(),
        source,
    };
    let file = File::open(path).map_err(read_err)?;
    let mut reader = CorpusReader::new(BufReader::new(file));
    let samples = reader
        .by_ref()
        .collect::<io::Result<Vec<_>>>()
        .map_err(read_err)?;
    let skipped = reader.into_skipped();
    let lines = samples.len() + skipped.len();
    if lines > 0 && skipped.len() as f64 / lines as f64 > max_malformed_fraction {
        return Err(CorpusError::TooManyMalformed {
            malformed: skipped.len(),
            lines,
            max_fraction: max_malformed_fraction,
        });
    }
    Ok(Corpus { samples, skipped })
}

/// One compact JSON object per line, newline-terminated.
pub fn to_jsonl_line<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string(value).expect("record serializes");
    s.push('\n');
    s
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: &Path,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<usize, CorpusError> {
    let write_err = |source| CorpusError::Write {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(write_err)?);
    let mut n = 0;
    for r in records {
        out.write_all(to_jsonl_line(r).as_bytes())
            .map_err(write_err)?;
        n += 1;
    }
    out.flush().map_err(write_err)?;
    Ok(n)
}
