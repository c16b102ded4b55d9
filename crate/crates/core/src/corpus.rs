//! Two-session dialogue corpora: loading, dialogue-level splits, nested
//! training subsets and history windowing.

use std::collections::HashSet;
use std::num::NonZeroUsize;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::jsonl::{self, HeaderPolicy, JsonlError, SchemaHeader};
use crate::rng;

pub const CORPUS_SCHEMA: &str = "corpus";
pub const CORPUS_VERSION: u32 = 1;

/// Slack used when turning `fraction * n` into a count, so that products
/// such as `0.29 * 100 = 28.999999999999996` land on the intended integer.
const COUNT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    User,
    Agent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionIndex {
    First,
    Second,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_index: SessionIndex,
    pub turns: Vec<Turn>,
}

impl Session {
    pub fn user_turns(&self) -> impl Iterator<Item = &Turn> {
        self.turns.iter().filter(|t| t.speaker == Speaker::User)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialoguePair {
    pub dialogue_id: String,
    pub user_id: String,
    pub first: Session,
    pub second: Session,
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("line {line}: dialogue `{dialogue_id}`: {message}")]
    Invalid {
        line: usize,
        dialogue_id: String,
        message: String,
    },
    #[error("line {line}: duplicate dialogue_id `{dialogue_id}`")]
    DuplicateId { line: usize, dialogue_id: String },
    #[error("line {line}: dialogue `{dialogue_id}`: empty knowledge source (no user turn in the first session)")]
    EmptyKnowledgeSource { line: usize, dialogue_id: String },
}

/// On-disk record; turn indices are implied by position.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairRecord {
    pub dialogue_id: String,
    pub user_id: String,
    pub sessions: Vec<SessionRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionRecord {
    pub session_index: SessionIndex,
    pub turns: Vec<TurnRecord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TurnRecord {
    pub speaker: Speaker,
    pub text: String,
}

impl From<&DialoguePair> for PairRecord {
    fn from(pair: &DialoguePair) -> Self {
        let session = |s: &Session| SessionRecord {
            session_index: s.session_index,
            turns: s
                .turns
                .iter()
                .map(|t| TurnRecord {
                    speaker: t.speaker,
                    text: t.text.clone(),
                })
                .collect(),
        };
        PairRecord {
            dialogue_id: pair.dialogue_id.clone(),
            user_id: pair.user_id.clone(),
            sessions: vec![session(&pair.first), session(&pair.second)],
        }
    }
}

impl PairRecord {
    fn into_pair(self, line: usize) -> Result<DialoguePair, CorpusError> {
        let id = self.dialogue_id.clone();
        let invalid = |message: String| CorpusError::Invalid {
            line,
            dialogue_id: id.clone(),
            message,
        };
        if self.dialogue_id.trim().is_empty() {
            return Err(invalid("empty dialogue_id".into()));
        }
        let mut first = None;
        let mut second = None;
        for rec in self.sessions {
            let slot = match rec.session_index {
                SessionIndex::First => &mut first,
                SessionIndex::Second => &mut second,
            };
            if slot.is_some() {
                return Err(invalid(format!(
                    "session {:?} appears twice",
                    rec.session_index
                )));
            }
            if rec.turns.is_empty() {
                return Err(invalid(format!(
                    "session {:?} has zero turns",
                    rec.session_index
                )));
            }
            let mut turns = Vec::with_capacity(rec.turns.len());
            for (turn_index, t) in rec.turns.into_iter().enumerate() {
                if t.text.trim().is_empty() {
                    return Err(invalid(format!(
                        "session {:?} turn {turn_index} has empty text",
                        rec.session_index
                    )));
                }
                turns.push(Turn {
                    speaker: t.speaker,
                    text: t.text,
                    turn_index,
                });
            }
            *slot = Some(Session {
                session_index: rec.session_index,
                turns,
            });
        }
        let first = first.ok_or_else(|| invalid("missing first session".into()))?;
        let second = second.ok_or_else(|| invalid("missing second session".into()))?;
        if first.user_turns().next().is_none() {
            return Err(CorpusError::EmptyKnowledgeSource {
                line,
                dialogue_id: id,
            });
        }
        Ok(DialoguePair {
            dialogue_id: self.dialogue_id,
            user_id: self.user_id,
            first,
            second,
        })
    }
}

fn corpus_header() -> SchemaHeader {
    SchemaHeader::new(CORPUS_SCHEMA, CORPUS_VERSION)
}

/// Loads a corpus file, validating every pair. The schema header line is
/// optional for corpora.
pub fn load_corpus(path: &Path) -> Result<Vec<DialoguePair>, CorpusError> {
    let rows = jsonl::read_file::<PairRecord>(path, &corpus_header(), HeaderPolicy::Optional)?;
    pairs_from_records(rows)
}

pub fn parse_corpus(text: &str) -> Result<Vec<DialoguePair>, CorpusError> {
    let rows = jsonl::read_from::<PairRecord, _>(
        text.as_bytes(),
        &corpus_header(),
        HeaderPolicy::Optional,
    )?;
    pairs_from_records(rows)
}

fn pairs_from_records(
    rows: Vec<jsonl::Numbered<PairRecord>>,
) -> Result<Vec<DialoguePair>, CorpusError> {
    let mut seen = HashSet::new();
    let mut pairs = Vec::with_capacity(rows.len());
    for row in rows {
        if !seen.insert(row.value.dialogue_id.clone()) {
            return Err(CorpusError::DuplicateId {
                line: row.line,
                dialogue_id: row.value.dialogue_id,
            });
        }
        pairs.push(row.value.into_pair(row.line)?);
    }
    Ok(pairs)
}

pub fn write_corpus(path: &Path, pairs: &[DialoguePair]) -> std::io::Result<()> {
    jsonl::write_file(path, &corpus_header(), pairs.iter().map(PairRecord::from))
}

#[derive(Debug, Error, PartialEq)]
pub enum SplitError {
    #[error("split fractions must be non-negative and sum to 1 (got {0:?})")]
    BadFractions([f64; 3]),
    #[error("{n} dialogues are too few for non-empty {split} split")]
    TooSmall { n: usize, split: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitFractions {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl SplitFractions {
    pub fn new(train: f64, valid: f64, test: f64) -> Result<Self, SplitError> {
        let all = [train, valid, test];
        if all.iter().any(|f| !f.is_finite() || *f < 0.0) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(SplitError::BadFractions(all));
        }
        Ok(Self { train, valid, test })
    }
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self {
            train: 0.8,
            valid: 0.1,
            test: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train: Vec<String>,
    pub valid: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

fn floor_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 + COUNT_EPS).floor() as usize
}

fn ceil_count(fraction: f64, n: usize) -> usize {
    (fraction * n as f64 - COUNT_EPS).ceil().max(0.0) as usize
}

/// Dialogue-level split: train and valid sizes are floored, test takes the
/// remainder. Ids are listed in permutation order.
pub fn split_corpus(
    pairs: &[DialoguePair],
    fractions: SplitFractions,
    seed: u64,
) -> Result<SplitAssignment, SplitError> {
    let fractions = SplitFractions::new(fractions.train, fractions.valid, fractions.test)?;
    let n = pairs.len();
    let n_train = floor_count(fractions.train, n);
    let n_valid = floor_count(fractions.valid, n).min(n - n_train);
    let n_test = n - n_train - n_valid;
    for (fraction, count, split) in [
        (fractions.train, n_train, "train"),
        (fractions.valid, n_valid, "valid"),
        (fractions.test, n_test, "test"),
    ] {
        if fraction > 0.0 && count == 0 {
            return Err(SplitError::TooSmall { n, split });
        }
    }
    let order = rng::permutation(n, seed);
    let ids: Vec<String> = order.iter().map(|&i| pairs[i].dialogue_id.clone()).collect();
    Ok(SplitAssignment {
        train: ids[..n_train].to_vec(),
        valid: ids[n_train..n_train + n_valid].to_vec(),
        test: ids[n_train + n_valid..].to_vec(),
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundedSample {
    pub sample_id: String,
    pub dialogue_id: String,
    pub history: Vec<Turn>,
    pub target: Turn,
    pub knowledge_ref: String,
}

pub fn sample_id(dialogue_id: &str, turn_index: usize) -> String {
    format!("{dialogue_id}#{turn_index}")
}

/// One sample per agent turn of the second session that has at least one
/// preceding turn; the history is the `window` turns right before it.
pub fn make_samples(pair: &DialoguePair, window: NonZeroUsize) -> Vec<GroundedSample> {
    let turns = &pair.second.turns;
    turns
        .iter()
        .enumerate()
        .filter(|(pos, t)| *pos > 0 && t.speaker == Speaker::Agent)
        .map(|(pos, target)| GroundedSample {
            sample_id: sample_id(&pair.dialogue_id, target.turn_index),
            dialogue_id: pair.dialogue_id.clone(),
            history: turns[pos.saturating_sub(window.get())..pos].to_vec(),
            target: target.clone(),
            knowledge_ref: pair.dialogue_id.clone(),
        })
        .collect()
}

#[derive(Debug, Error, PartialEq)]
pub enum SubsetError {
    #[error("subset fractions must lie in (0, 1], be strictly increasing and end at 1.0 (got {0:?})")]
    BadFractions(Vec<f64>),
}

/// Nested training subsets: set k is the first `ceil(f_k * n)` ids of one
/// seeded permutation.
pub fn subset_chain(
    train_ids: &[String],
    fractions: &[f64],
    seed: u64,
) -> Result<Vec<Vec<String>>, SubsetError> {
    let bad = || SubsetError::BadFractions(fractions.to_vec());
    let last = *fractions.last().ok_or_else(bad)?;
    if (last - 1.0).abs() > 1e-12
        || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0 + 1e-12))
        || fractions.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(bad());
    }
    let n = train_ids.len();
    let order = rng::permutation(n, seed);
    let shuffled: Vec<String> = order.iter().map(|&i| train_ids[i].clone()).collect();
    Ok(fractions
        .iter()
        .map(|&f| shuffled[..ceil_count(f, n).min(n)].to_vec())
        .collect())
}
