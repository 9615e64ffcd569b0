//! Commit journal for crash-safe resumption.
//!
//! Each committed output line is followed by a journal line recording how
//! many samples are durable and the output length at that point. Resuming
//! truncates the output back to the last journaled length, which discards
//! any half-written record.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub committed: usize,
    pub offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    fingerprint: String,
    committed: usize,
    offset: u64,
}

pub fn journal_path(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".journal");
    PathBuf::from(name)
}

/// Last intact checkpoint in the journal, if any, and whether it was written
/// for the same run fingerprint. A torn final line is ignored.
pub fn read_checkpoint(path: &Path, fingerprint: &str) -> io::Result<Option<Checkpoint>> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
        Err(e) => return Err(e),
    };
    let mut last = None;
    for line in BufReader::new(file).lines() {
        let line = line?;
        let Ok(entry) = serde_json::from_str::<Entry>(&line) else {
            continue;
        };
        if entry.fingerprint != fingerprint {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                "journal was written by a run with a different input or configuration",
            ));
        }
        last = Some(Checkpoint {
            committed: entry.committed,
            offset: entry.offset,
        });
    }
    Ok(last)
}

pub struct Journal {
    file: File,
    fingerprint: String,
}

impl Journal {
    /// Open for appending; `fresh` discards earlier entries.
    pub fn open(path: &Path, fingerprint: &str, fresh: bool) -> io::Result<Self> {
        let file = if fresh {
            File::create(path)?
        } else {
            OpenOptions::new().create(true).append(true).open(path)?
        };
        Ok(Journal {
            file,
            fingerprint: fingerprint.to_owned(),
        })
    }

    pub fn record(&mut self, cp: Checkpoint) -> io::Result<()> {
        let entry = Entry {
            fingerprint: self.fingerprint.clone(),
            committed: cp.committed,
            offset: cp.offset,
        };
        let mut line = serde_json::to_string(&entry).map_err(io::Error::other)?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()
    }
}
