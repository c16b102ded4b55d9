//! Record files exchanged with an external model runner.
//!
//! The runner consumes input-sequence files and produces three kinds of
//! records: generations, per-token scoring (NLL in nats) and per-input-token
//! attribution scores. Each file is JSON lines with a schema header.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, HeaderPolicy, JsonlError, Numbered, SchemaHeader};
use crate::knowledge::{InputSequence, Role, Segment};

pub const RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRecord {
    pub sample_id: String,
    pub model_id: String,
    pub response_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoringRecord {
    pub sample_id: String,
    pub model_id: String,
    pub target_tokens: Vec<String>,
    /// Negative log-likelihood of each target token, in nats.
    pub token_nll: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributedToken {
    pub text: String,
    pub segment: Segment,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upos: Option<String>,
    /// Raw attribution score as produced by the runner.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributionRecord {
    pub sample_id: String,
    pub model_id: String,
    pub tokens: Vec<AttributedToken>,
}

/// A record kind with a schema name, a uniqueness key and local checks.
pub trait Record: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;

    fn sample_id(&self) -> &str;
    fn model_id(&self) -> &str;
    fn validate(&self) -> Result<(), String>;

    fn header() -> SchemaHeader {
        SchemaHeader::new(Self::SCHEMA, RECORD_VERSION)
    }
}

fn non_empty(field: &str, value: &str) -> Result<(), String> {
    if value.trim().is_empty() {
        Err(format!("empty {field}"))
    } else {
        Ok(())
    }
}

impl Record for GenerationRecord {
    const SCHEMA: &'static str = "generation";

    fn sample_id(&self) -> &str {
        &self.sample_id
    }
    fn model_id(&self) -> &str {
        &self.model_id
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("sample_id", &self.sample_id)?;
        non_empty("model_id", &self.model_id)?;
        non_empty("response_text", &self.response_text)
    }
}

impl Record for ScoringRecord {
    const SCHEMA: &'static str = "scoring";

    fn sample_id(&self) -> &str {
        &self.sample_id
    }
    fn model_id(&self) -> &str {
        &self.model_id
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("sample_id", &self.sample_id)?;
        non_empty("model_id", &self.model_id)?;
        if self.target_tokens.is_empty() {
            return Err("no target tokens".into());
        }
        if self.target_tokens.len() != self.token_nll.len() {
            return Err(format!(
                "{} target tokens but {} nll values",
                self.target_tokens.len(),
                self.token_nll.len()
            ));
        }
        if let Some((i, v)) = self
            .token_nll
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(format!("token_nll[{i}] = {v} is not a finite non-negative value"));
        }
        Ok(())
    }
}

impl Record for AttributionRecord {
    const SCHEMA: &'static str = "attribution";

    fn sample_id(&self) -> &str {
        &self.sample_id
    }
    fn model_id(&self) -> &str {
        &self.model_id
    }
    fn validate(&self) -> Result<(), String> {
        non_empty("sample_id", &self.sample_id)?;
        non_empty("model_id", &self.model_id)?;
        if self.tokens.is_empty() {
            return Err("no tokens".into());
        }
        if let Some((i, t)) = self.tokens.iter().enumerate().find(|(_, t)| !t.score.is_finite()) {
            return Err(format!("tokens[{i}] score {} is not finite", t.score));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum InterchangeError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error("line {line}: duplicate record for sample `{sample_id}` and model `{model_id}`")]
    Duplicate {
        line: usize,
        sample_id: String,
        model_id: String,
    },
    #[error("line {line}: {source}")]
    Alignment {
        line: usize,
        #[source]
        source: AlignError,
    },
}

pub fn read_records<R: Record>(path: &Path) -> Result<Vec<Numbered<R>>, InterchangeError> {
    check_records(jsonl::read_file(path, &R::header(), HeaderPolicy::Required)?)
}

pub fn parse_records<R: Record>(text: &str) -> Result<Vec<Numbered<R>>, InterchangeError> {
    check_records(jsonl::read_from(text.as_bytes(), &R::header(), HeaderPolicy::Required)?)
}

fn check_records<R: Record>(rows: Vec<Numbered<R>>) -> Result<Vec<Numbered<R>>, InterchangeError> {
    let mut keys = HashSet::new();
    for row in &rows {
        row.value.validate().map_err(|message| InterchangeError::Invalid {
            line: row.line,
            message,
        })?;
        let key = (row.value.sample_id().to_owned(), row.value.model_id().to_owned());
        if !keys.insert(key) {
            return Err(InterchangeError::Duplicate {
                line: row.line,
                sample_id: row.value.sample_id().to_owned(),
                model_id: row.value.model_id().to_owned(),
            });
        }
    }
    Ok(rows)
}

pub fn write_records<R: Record>(path: &Path, records: &[R]) -> std::io::Result<()> {
    jsonl::write_file(path, &R::header(), records)
}

pub fn records_to_string<R: Record>(records: &[R]) -> String {
    let mut buf = Vec::new();
    jsonl::write_to(&mut buf, &R::header(), records).expect("writing to memory");
    String::from_utf8(buf).expect("JSON is UTF-8")
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("record is for sample `{record}` but the input sequence is `{input}`")]
    Sample { record: String, input: String },
    #[error("sample `{sample_id}`: {record} attributed tokens vs {input} input tokens")]
    Length {
        sample_id: String,
        record: usize,
        input: usize,
    },
    #[error("sample `{sample_id}` token {position}: expected {expected:?}, found {found:?}")]
    Token {
        sample_id: String,
        position: usize,
        expected: (String, Segment),
        found: (String, Segment),
    },
    #[error("no input sequence for sample `{0}`")]
    MissingInput(String),
}

/// Accepts the record only if it matches the input sequence token for token
/// (text and segment).
pub fn align_attribution(
    record: AttributionRecord,
    seq: &InputSequence,
) -> Result<AttributionRecord, AlignError> {
    if record.sample_id != seq.sample_id {
        return Err(AlignError::Sample {
            record: record.sample_id,
            input: seq.sample_id.clone(),
        });
    }
    if record.tokens.len() != seq.tokens.len() {
        return Err(AlignError::Length {
            sample_id: record.sample_id,
            record: record.tokens.len(),
            input: seq.tokens.len(),
        });
    }
    for (position, (got, want)) in record.tokens.iter().zip(&seq.tokens).enumerate() {
        if got.text != want.text || got.segment != want.segment {
            return Err(AlignError::Token {
                sample_id: record.sample_id.clone(),
                position,
                expected: (want.text.clone(), want.segment),
                found: (got.text.clone(), got.segment),
            });
        }
    }
    Ok(record)
}

/// Aligns every record of a file against the stored input sequences.
pub fn cross_validate(
    records: Vec<Numbered<AttributionRecord>>,
    inputs: &[InputSequence],
) -> Result<Vec<AttributionRecord>, InterchangeError> {
    let by_id: HashMap<&str, &InputSequence> =
        inputs.iter().map(|s| (s.sample_id.as_str(), s)).collect();
    records
        .into_iter()
        .map(|row| {
            let line = row.line;
            let seq = by_id
                .get(row.value.sample_id.as_str())
                .ok_or_else(|| AlignError::MissingInput(row.value.sample_id.clone()))
                .map_err(|source| InterchangeError::Alignment { line, source })?;
            align_attribution(row.value, seq).map_err(|source| InterchangeError::Alignment { line, source })
        })
        .collect()
}
