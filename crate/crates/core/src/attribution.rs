//! Analytics over token attribution records (e.g. Integrated Gradients):
//! which input tokens push the generation up, and how the most significant
//! tokens split between the knowledge and history segments.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interchange::AttributionRecord;
use crate::knowledge::{Representation, Role, Segment};

/// Key for tokens without a part-of-speech tag.
pub const NO_UPOS: &str = "_";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttributionError {
    #[error("no attribution records")]
    Empty,
    #[error("records mix models `{0}` and `{1}`")]
    MixedModels(String, String),
    #[error("no token falls in the analysed scope")]
    NothingConsidered,
    #[error("record `{sample_id}` has an empty {segment:?} segment")]
    EmptySegment { sample_id: String, segment: Segment },
    #[error("top fraction must lie in (0, 1], got {0}")]
    BadTopFraction(f64),
}

/// Which tokens a positive-contribution profile looks at.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenScope {
    /// Knowledge-segment tokens only.
    #[default]
    Knowledge,
    History,
    All,
}

impl TokenScope {
    fn admits(self, segment: Segment) -> bool {
        match self {
            TokenScope::Knowledge => segment == Segment::Knowledge,
            TokenScope::History => segment == Segment::History,
            TokenScope::All => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositiveOptions {
    pub exclude_tags: bool,
    pub scope: TokenScope,
}

impl Default for PositiveOptions {
    fn default() -> Self {
        Self {
            exclude_tags: true,
            scope: TokenScope::Knowledge,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositiveProfile {
    pub model_id: String,
    pub repr: Representation,
    pub considered: usize,
    pub positive: usize,
    pub positive_fraction: f64,
    /// Share of positive tokens per UPOS tag.
    pub by_upos: BTreeMap<String, f64>,
    /// Share of positive Event vs Participant tokens (tags and other
    /// tokens excluded).
    pub by_role: BTreeMap<Role, f64>,
}

fn single_model(records: &[AttributionRecord]) -> Result<&str, AttributionError> {
    let first = records.first().ok_or(AttributionError::Empty)?;
    match records.iter().find(|r| r.model_id != first.model_id) {
        Some(other) => Err(AttributionError::MixedModels(
            first.model_id.clone(),
            other.model_id.clone(),
        )),
        None => Ok(&first.model_id),
    }
}

/// Fraction of tokens with a strictly positive score, pooled over records,
/// with breakdowns among the positive tokens.
pub fn positive_stats(
    records: &[AttributionRecord],
    repr: Representation,
    options: PositiveOptions,
) -> Result<PositiveProfile, AttributionError> {
    let model_id = single_model(records)?.to_owned();
    let mut considered = 0usize;
    let mut positive = 0usize;
    let mut upos_counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut role_counts: BTreeMap<Role, usize> = BTreeMap::new();
    for token in records.iter().flat_map(|r| &r.tokens) {
        if !options.scope.admits(token.segment) || (options.exclude_tags && token.role == Role::Tag) {
            continue;
        }
        considered += 1;
        if token.score <= 0.0 {
            continue;
        }
        positive += 1;
        let upos = token.upos.clone().unwrap_or_else(|| NO_UPOS.to_owned());
        *upos_counts.entry(upos).or_default() += 1;
        if matches!(token.role, Role::Event | Role::Participant) {
            *role_counts.entry(token.role).or_default() += 1;
        }
    }
    if considered == 0 {
        return Err(AttributionError::NothingConsidered);
    }
    fn share<K: Ord>(counts: BTreeMap<K, usize>) -> BTreeMap<K, f64> {
        let total: usize = counts.values().sum();
        counts
            .into_iter()
            .map(|(k, c)| (k, c as f64 / total as f64))
            .collect()
    }
    Ok(PositiveProfile {
        model_id,
        repr,
        considered,
        positive,
        positive_fraction: positive as f64 / considered as f64,
        by_upos: share(upos_counts),
        by_role: share(role_counts),
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SharePooling {
    /// Arithmetic mean of per-record shares.
    #[default]
    RecordMean,
    /// Top-k counts and segment lengths summed over records first.
    Pooled,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordShares {
    pub sample_id: String,
    pub k: usize,
    pub knowledge_len: usize,
    pub history_len: usize,
    pub knowledge_top: usize,
    pub history_top: usize,
    pub knowledge_share: f64,
    pub history_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignificantShares {
    pub model_id: String,
    pub repr: Representation,
    /// Percentages; they sum to 100.
    pub knowledge_share: f64,
    pub history_share: f64,
    pub per_record: Vec<RecordShares>,
}

impl SignificantShares {
    /// Table row in the `44.6% | 55.4%` style.
    pub fn row(&self) -> String {
        format!("{:.1}% | {:.1}%", self.knowledge_share, self.history_share)
    }
}

/// `ceil(fraction * len)` clamped to `1..=len`, tolerant of products such as
/// `0.1 * 30 = 3.0000000000000004`.
pub fn top_k(fraction: f64, len: usize) -> usize {
    ((fraction * len as f64 - 1e-9).ceil() as usize).clamp(1, len)
}

/// Indices of the `k` highest scores; ties go to the earlier position.
fn top_positions(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

fn shares(n_k: f64, n_h: f64) -> (f64, f64) {
    let total = n_k + n_h;
    (100.0 * n_k / total, 100.0 * n_h / total)
}

fn record_shares(record: &AttributionRecord, top_fraction: f64) -> Result<RecordShares, AttributionError> {
    let len_of = |segment| record.tokens.iter().filter(|t| t.segment == segment).count();
    let (knowledge_len, history_len) = (len_of(Segment::Knowledge), len_of(Segment::History));
    for (len, segment) in [(knowledge_len, Segment::Knowledge), (history_len, Segment::History)] {
        if len == 0 {
            return Err(AttributionError::EmptySegment {
                sample_id: record.sample_id.clone(),
                segment,
            });
        }
    }
    let scores: Vec<f64> = record.tokens.iter().map(|t| t.score).collect();
    let k = top_k(top_fraction, scores.len());
    let top = top_positions(&scores, k);
    let knowledge_top = top
        .iter()
        .filter(|&&i| record.tokens[i].segment == Segment::Knowledge)
        .count();
    let history_top = k - knowledge_top;
    // Both segments are non-empty and k >= 1, so at least one ratio is > 0.
    let (knowledge_share, history_share) = shares(
        knowledge_top as f64 / knowledge_len as f64,
        history_top as f64 / history_len as f64,
    );
    Ok(RecordShares {
        sample_id: record.sample_id.clone(),
        k,
        knowledge_len,
        history_len,
        knowledge_top,
        history_top,
        knowledge_share,
        history_share,
    })
}

/// Segment shares of the top-`top_fraction` tokens, each segment's count
/// normalized by its length.
pub fn significant_stats(
    records: &[AttributionRecord],
    repr: Representation,
    top_fraction: f64,
    pooling: SharePooling,
) -> Result<SignificantShares, AttributionError> {
    if !(top_fraction > 0.0 && top_fraction <= 1.0) {
        return Err(AttributionError::BadTopFraction(top_fraction));
    }
    let model_id = single_model(records)?.to_owned();
    let per_record = records
        .iter()
        .map(|r| record_shares(r, top_fraction))
        .collect::<Result<Vec<_>, _>>()?;
    let n = per_record.len() as f64;
    let (knowledge_share, history_share) = match pooling {
        SharePooling::RecordMean => (
            per_record.iter().map(|r| r.knowledge_share).sum::<f64>() / n,
            per_record.iter().map(|r| r.history_share).sum::<f64>() / n,
        ),
        SharePooling::Pooled => {
            let sum = |f: fn(&RecordShares) -> usize| per_record.iter().map(f).sum::<usize>() as f64;
            shares(
                sum(|r| r.knowledge_top) / sum(|r| r.knowledge_len),
                sum(|r| r.history_top) / sum(|r| r.history_len),
            )
        }
    };
    Ok(SignificantShares {
        model_id,
        repr,
        knowledge_share,
        history_share,
        per_record,
    })
}

/// `model | repr | knowledge | history` rows.
pub fn shares_table(rows: &[SignificantShares]) -> String {
    let mut out = String::from("model\trepr\tknowledge\thistory\n");
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{:.1}%\t{:.1}%",
            r.model_id,
            r.repr.name(),
            r.knowledge_share,
            r.history_share
        )
        .unwrap();
    }
    out
}
