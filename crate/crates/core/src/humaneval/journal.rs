use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::campaign::JudgmentRecord;
use crate::jsonl::{self, HeaderPolicy, JsonlError, SchemaHeader};

pub const JUDGMENT_SCHEMA: &str = "judgment";
const JUDGMENT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum JournalError {
    #[error(transparent)]
    Read(#[from] JsonlError),
    #[error("journal write failed: {0}")]
    Write(#[from] io::Error),
    #[error("duplicate judgment by `{worker_id}` on `{candidate_id}`")]
    Duplicate {
        worker_id: String,
        candidate_id: String,
    },
}

/// Append-only judgment log with an in-memory index of (worker, candidate).
#[derive(Debug, Default)]
pub struct Journal {
    file: Option<File>,
    path: Option<PathBuf>,
    records: Vec<JudgmentRecord>,
    index: HashSet<(String, String)>,
}

fn header() -> SchemaHeader {
    SchemaHeader::new(JUDGMENT_SCHEMA, JUDGMENT_VERSION)
}

impl Journal {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a journal file and replays its records.
    pub fn open(path: &Path) -> Result<Self, JournalError> {
        let mut journal = Journal {
            path: Some(path.to_owned()),
            ..Default::default()
        };
        if path.exists() && std::fs::metadata(path)?.len() > 0 {
            for row in jsonl::read_file::<JudgmentRecord>(path, &header(), HeaderPolicy::Required)? {
                journal.index_record(row.value)?;
            }
            journal.file = Some(OpenOptions::new().append(true).open(path)?);
        } else {
            let mut file = File::create(path)?;
            serde_json::to_writer(&mut file, &header()).map_err(io::Error::from)?;
            file.write_all(b"\n")?;
            file.sync_data()?;
            journal.file = Some(file);
        }
        Ok(journal)
    }

    fn index_record(&mut self, record: JudgmentRecord) -> Result<(), JournalError> {
        let key = (record.worker_id.clone(), record.candidate_id.clone());
        if !self.index.insert(key) {
            return Err(JournalError::Duplicate {
                worker_id: record.worker_id,
                candidate_id: record.candidate_id,
            });
        }
        self.records.push(record);
        Ok(())
    }

    pub fn contains(&self, worker_id: &str, candidate_id: &str) -> bool {
        self.index
            .contains(&(worker_id.to_owned(), candidate_id.to_owned()))
    }

    /// Appends exactly once; the line is flushed to disk before the record
    /// becomes visible in memory.
    pub fn append(&mut self, record: JudgmentRecord) -> Result<(), JournalError> {
        if self.contains(&record.worker_id, &record.candidate_id) {
            return Err(JournalError::Duplicate {
                worker_id: record.worker_id,
                candidate_id: record.candidate_id,
            });
        }
        if let Some(file) = &mut self.file {
            let mut line = serde_json::to_vec(&record).map_err(io::Error::from)?;
            line.push(b'\n');
            file.write_all(&line)?;
            file.sync_data()?;
        }
        self.index_record(record)
    }

    /// Records of a journal in its on-disk format, without opening a file.
    pub fn parse(text: &str) -> Result<Vec<JudgmentRecord>, JsonlError> {
        Ok(jsonl::read_from(text.as_bytes(), &header(), HeaderPolicy::Required)?
            .into_iter()
            .map(|n| n.value)
            .collect())
    }

    pub fn records(&self) -> &[JudgmentRecord] {
        &self.records
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// The journal in its on-disk format.
    pub fn export(&self) -> String {
        let mut buf = Vec::new();
        jsonl::write_to(&mut buf, &header(), &self.records).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }
}
