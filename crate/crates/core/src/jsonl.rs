//! Line-delimited JSON files with a schema header line.
//!
//! Every file written by the workbench starts with
//! `{"schema":"<kind>","version":<n>}` followed by one record per line.

use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line 1: expected schema header for `{expected}` v{version}, found {found}")]
    Header {
        expected: String,
        version: u32,
        found: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaHeader {
    pub schema: String,
    pub version: u32,
}

impl SchemaHeader {
    pub fn new(schema: &str, version: u32) -> Self {
        Self {
            schema: schema.to_owned(),
            version,
        }
    }
}

/// Whether the schema header is mandatory when reading.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeaderPolicy {
    Required,
    Optional,
}

/// A decoded record together with its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct Numbered<T> {
    pub line: usize,
    pub value: T,
}

pub fn read_file<T: DeserializeOwned>(
    path: &Path,
    header: &SchemaHeader,
    policy: HeaderPolicy,
) -> Result<Vec<Numbered<T>>, JsonlError> {
    let file = fs::File::open(path).map_err(|source| JsonlError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_from(BufReader::new(file), header, policy).map_err(|e| match e {
        JsonlError::Io { source, .. } => JsonlError::Io {
            path: path.display().to_string(),
            source,
        },
        other => other,
    })
}

pub fn read_from<T: DeserializeOwned, R: BufRead>(
    reader: R,
    header: &SchemaHeader,
    policy: HeaderPolicy,
) -> Result<Vec<Numbered<T>>, JsonlError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| JsonlError::Io {
            path: String::new(),
            source,
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if line_no == 1 {
            match serde_json::from_str::<SchemaHeader>(trimmed) {
                Ok(found) if found == *header => continue,
                Ok(found) => {
                    return Err(JsonlError::Header {
                        expected: header.schema.clone(),
                        version: header.version,
                        found: format!("`{}` v{}", found.schema, found.version),
                    })
                }
                Err(_) if policy == HeaderPolicy::Optional => {}
                Err(_) => {
                    return Err(JsonlError::Header {
                        expected: header.schema.clone(),
                        version: header.version,
                        found: "no header".to_owned(),
                    })
                }
            }
        }
        let value = serde_json::from_str(trimmed).map_err(|e| JsonlError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(Numbered {
            line: line_no,
            value,
        });
    }
    Ok(out)
}

pub fn write_to<T: Serialize, W: Write>(
    mut writer: W,
    header: &SchemaHeader,
    records: impl IntoIterator<Item = T>,
) -> io::Result<()> {
    serde_json::to_writer(&mut writer, header)?;
    writer.write_all(b"\n")?;
    for record in records {
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()
}

pub fn write_file<T: Serialize>(
    path: &Path,
    header: &SchemaHeader,
    records: impl IntoIterator<Item = T>,
) -> io::Result<()> {
    let file = fs::File::create(path)?;
    write_to(io::BufWriter::new(file), header, records)
}
