//! CoNLL-U ingestion for parses produced by an external dependency parser.
//!
//! Each sentence must carry `# dialogue_id = ...`, `# session = ...` and
//! `# turn = ...` comments locating the dialogue turn it was parsed from.
//! Multiword-token ranges (`3-4`) and empty nodes (`5.1`) are skipped.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::SessionIndex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedToken {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    /// Governor index, 0 for the root.
    pub head: usize,
    pub deprel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SourceTurn {
    pub dialogue_id: String,
    pub session: SessionIndex,
    pub turn_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedSentence {
    pub tokens: Vec<ParsedToken>,
    pub source_turn: SourceTurn,
    /// Comment lines without the leading `#`, in file order.
    pub comments: Vec<String>,
}

impl ParsedSentence {
    pub fn token(&self, index: usize) -> Option<&ParsedToken> {
        index.checked_sub(1).and_then(|i| self.tokens.get(i))
    }

    pub fn governor(&self, token: &ParsedToken) -> Option<&ParsedToken> {
        self.token(token.head)
    }

    pub fn dependents(&self, index: usize) -> impl Iterator<Item = &ParsedToken> {
        self.tokens.iter().filter(move |t| t.head == index)
    }

    pub fn root(&self) -> &ParsedToken {
        self.tokens
            .iter()
            .find(|t| t.head == 0)
            .expect("validated sentence has a root")
    }

    /// Indices of the subtree rooted at `index`, in sentence order.
    pub fn subtree(&self, index: usize) -> Vec<usize> {
        let mut inside = vec![false; self.tokens.len() + 1];
        inside[index] = true;
        // Heads are validated acyclic, so walking up terminates.
        for t in &self.tokens {
            let mut cur = t.index;
            while cur != 0 {
                if cur == index {
                    inside[t.index] = true;
                    break;
                }
                cur = self.tokens[cur - 1].head;
            }
        }
        (1..=self.tokens.len()).filter(|&i| inside[i]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("empty sentence")]
    Empty,
    #[error("token {index}: head {head} out of range 0..={len}")]
    HeadOutOfRange { index: usize, head: usize, len: usize },
    #[error("token {index} is its own head")]
    SelfLoop { index: usize },
    #[error("no root (no token with head 0)")]
    NoRoot,
    #[error("multiple roots: tokens {0:?}")]
    MultipleRoots(Vec<usize>),
    #[error("cyclic head links through token {index}")]
    Cycle { index: usize },
}

/// Checks that `heads[i]` (the head of token `i + 1`) describes a tree.
pub fn validate_heads(heads: &[usize]) -> Result<(), TreeError> {
    let len = heads.len();
    if len == 0 {
        return Err(TreeError::Empty);
    }
    for (i, &head) in heads.iter().enumerate() {
        let index = i + 1;
        if head > len {
            return Err(TreeError::HeadOutOfRange { index, head, len });
        }
        if head == index {
            return Err(TreeError::SelfLoop { index });
        }
    }
    let roots: Vec<usize> = (1..=len).filter(|&i| heads[i - 1] == 0).collect();
    match roots.len() {
        0 => return Err(TreeError::NoRoot),
        1 => {}
        _ => return Err(TreeError::MultipleRoots(roots)),
    }
    // 0 = unvisited, 1 = on current path, 2 = reaches the root.
    let mut state = vec![0u8; len + 1];
    for start in 1..=len {
        let mut path = Vec::new();
        let mut cur = start;
        while cur != 0 && state[cur] != 2 {
            if state[cur] == 1 {
                return Err(TreeError::Cycle { index: cur });
            }
            state[cur] = 1;
            path.push(cur);
            cur = heads[cur - 1];
        }
        for node in path {
            state[node] = 2;
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum SyntaxError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("sentence starting at line {line}: {source}")]
    Tree {
        line: usize,
        #[source]
        source: TreeError,
    },
    #[error("sentence starting at line {line}: missing `{key}` metadata")]
    MissingMetadata { line: usize, key: &'static str },
}

pub fn load_parses(path: &Path) -> Result<Vec<ParsedSentence>, SyntaxError> {
    let text = fs::read_to_string(path).map_err(|source| SyntaxError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_conllu(&text)
}

pub fn parse_conllu(text: &str) -> Result<Vec<ParsedSentence>, SyntaxError> {
    let mut sentences = Vec::new();
    let mut block: Vec<(usize, &str)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            if !block.is_empty() {
                sentences.push(parse_block(&block)?);
                block.clear();
            }
        } else {
            block.push((i + 1, line));
        }
    }
    if !block.is_empty() {
        sentences.push(parse_block(&block)?);
    }
    Ok(sentences)
}

fn parse_block(block: &[(usize, &str)]) -> Result<ParsedSentence, SyntaxError> {
    let start = block[0].0;
    let mut comments = Vec::new();
    let mut dialogue_id = None;
    let mut session = None;
    let mut turn = None;
    let mut tokens = Vec::new();

    for &(line, raw) in block {
        let malformed = |message: String| SyntaxError::Malformed { line, message };
        if let Some(comment) = raw.strip_prefix('#') {
            let comment = comment.trim();
            if let Some((key, value)) = comment.split_once('=') {
                let value = value.trim();
                match key.trim() {
                    "dialogue_id" => dialogue_id = Some(value.to_owned()),
                    "session" => {
                        session = Some(match value {
                            "first" | "1" => SessionIndex::First,
                            "second" | "2" => SessionIndex::Second,
                            other => return Err(malformed(format!("unknown session `{other}`"))),
                        })
                    }
                    "turn" => {
                        turn = Some(value.parse::<usize>().map_err(|_| {
                            malformed(format!("turn must be a non-negative integer, got `{value}`"))
                        })?)
                    }
                    _ => {}
                }
            }
            comments.push(comment.to_owned());
            continue;
        }
        let cols: Vec<&str> = raw.split('\t').collect();
        if cols.len() != 10 {
            return Err(malformed(format!("expected 10 tab-separated columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let index: usize = cols[0]
            .parse()
            .map_err(|_| malformed(format!("bad token id `{}`", cols[0])))?;
        if index != tokens.len() + 1 {
            return Err(malformed(format!(
                "token id {index} out of sequence (expected {})",
                tokens.len() + 1
            )));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| malformed(format!("bad head `{}`", cols[6])))?;
        tokens.push(ParsedToken {
            index,
            form: cols[1].to_owned(),
            lemma: cols[2].to_owned(),
            upos: cols[3].to_owned(),
            head,
            deprel: cols[7].to_owned(),
        });
    }

    let heads: Vec<usize> = tokens.iter().map(|t| t.head).collect();
    validate_heads(&heads).map_err(|source| SyntaxError::Tree { line: start, source })?;
    let missing = |key| SyntaxError::MissingMetadata { line: start, key };
    Ok(ParsedSentence {
        tokens,
        source_turn: SourceTurn {
            dialogue_id: dialogue_id.ok_or_else(|| missing("dialogue_id"))?,
            session: session.ok_or_else(|| missing("session"))?,
            turn_index: turn.ok_or_else(|| missing("turn"))?,
        },
        comments,
    })
}

impl fmt::Display for ParsedSentence {
    /// Writes the sentence back as CoNLL-U (unused columns as `_`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.comments {
            writeln!(f, "# {c}")?;
        }
        for t in &self.tokens {
            writeln!(
                f,
                "{}\t{}\t{}\t{}\t_\t_\t{}\t{}\t_\t_",
                t.index, t.form, t.lemma, t.upos, t.head, t.deprel
            )?;
        }
        Ok(())
    }
}
