use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Speaker;
use crate::metrics::GROUND_TRUTH;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    /// Grammatical and syntactic well-formedness.
    Correctness,
    /// Coherent continuation of the dialogue.
    Appropriateness,
    /// Refers to the dialogue context rather than being generic.
    Contextualization,
    /// Shows the agent followed the conversation.
    Listening,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Correctness,
        Criterion::Appropriateness,
        Criterion::Contextualization,
        Criterion::Listening,
    ];

    /// Criteria whose negative votes must be motivated with error labels.
    pub fn requires_motivation(self) -> bool {
        matches!(self, Criterion::Appropriateness | Criterion::Contextualization)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Vote {
    Positive,
    Negative,
    Unsure,
}

impl Vote {
    pub const ALL: [Vote; 3] = [Vote::Positive, Vote::Negative, Vote::Unsure];

    pub fn index(self) -> usize {
        match self {
            Vote::Positive => 0,
            Vote::Negative => 1,
            Vote::Unsure => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorLabel {
    Generic,
    Hallucination,
    Incoherent,
    Other,
}

impl ErrorLabel {
    pub const ALL: [ErrorLabel; 4] = [
        ErrorLabel::Generic,
        ErrorLabel::Hallucination,
        ErrorLabel::Incoherent,
        ErrorLabel::Other,
    ];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JudgmentRecord {
    pub worker_id: String,
    pub candidate_id: String,
    pub votes: BTreeMap<Criterion, Vote>,
    #[serde(default)]
    pub error_labels: BTreeSet<ErrorLabel>,
    /// Client-side submission time, milliseconds since the Unix epoch.
    pub timestamp: u64,
}

impl JudgmentRecord {
    pub fn validate(&self) -> Result<(), String> {
        if self.worker_id.trim().is_empty() || self.candidate_id.trim().is_empty() {
            return Err("worker_id and candidate_id must be non-empty".into());
        }
        if let Some(missing) = Criterion::ALL.iter().find(|c| !self.votes.contains_key(c)) {
            return Err(format!("missing vote for {missing:?}"));
        }
        let needs_labels = Criterion::ALL
            .iter()
            .any(|c| c.requires_motivation() && self.votes[c] == Vote::Negative);
        if needs_labels && self.error_labels.is_empty() {
            return Err("negative appropriateness or contextualization requires error labels".into());
        }
        Ok(())
    }

    pub fn vote(&self, criterion: Criterion) -> Vote {
        self.votes[&criterion]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignConfig {
    pub raters_per_item: usize,
    pub histories_per_worker: usize,
    pub candidates_per_history: usize,
    pub qualification_size: usize,
    /// Minimum share of matching gold criterion votes to qualify.
    pub qualification_threshold: f64,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        Self {
            raters_per_item: 7,
            histories_per_worker: 10,
            candidates_per_history: 3,
            qualification_size: 5,
            qualification_threshold: 0.6,
        }
    }
}

impl CampaignConfig {
    pub fn worker_quota(&self) -> usize {
        self.histories_per_worker * self.candidates_per_history
    }

    pub fn validate(&self) -> Result<(), CampaignError> {
        if self.raters_per_item == 0
            || self.histories_per_worker == 0
            || self.candidates_per_history == 0
            || self.qualification_size == 0
        {
            return Err(CampaignError::Config("all counts must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.qualification_threshold) {
            return Err(CampaignError::Config("qualification_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Candidate {
    pub candidate_id: String,
    pub sample_id: String,
    /// Model id, or `GroundTruth` for the reference response.
    pub source: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryTurn {
    pub speaker: Speaker,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HistoryItem {
    pub history_id: String,
    pub turns: Vec<HistoryTurn>,
    pub candidates: Vec<Candidate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualificationItem {
    pub history: Vec<HistoryTurn>,
    pub candidate: Candidate,
    pub gold: BTreeMap<Criterion, Vote>,
}

/// Everything the collection service needs to run a campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Campaign {
    #[serde(default)]
    pub config: CampaignConfig,
    pub workers: Vec<String>,
    pub seed: u64,
    pub histories: Vec<HistoryItem>,
    pub qualification: Vec<QualificationItem>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CampaignError {
    #[error("campaign config: {0}")]
    Config(String),
    #[error("history `{0}` has no GroundTruth candidate")]
    MissingGroundTruth(String),
    #[error("duplicate candidate id `{0}`")]
    DuplicateCandidate(String),
    #[error("duplicate worker id `{0}`")]
    DuplicateWorker(String),
    #[error("expected {expected} qualification items, found {found}")]
    QualificationSize { expected: usize, found: usize },
    #[error("qualification item `{0}` must give a gold vote for every criterion")]
    IncompleteGold(String),
}

impl Campaign {
    pub fn validate(&self) -> Result<(), CampaignError> {
        self.config.validate()?;
        let mut workers = HashSet::new();
        for w in &self.workers {
            if !workers.insert(w) {
                return Err(CampaignError::DuplicateWorker(w.clone()));
            }
        }
        let mut ids = HashSet::new();
        for h in &self.histories {
            if !h.candidates.iter().any(|c| c.source == GROUND_TRUTH) {
                return Err(CampaignError::MissingGroundTruth(h.history_id.clone()));
            }
        }
        let all = self
            .histories
            .iter()
            .flat_map(|h| &h.candidates)
            .chain(self.qualification.iter().map(|q| &q.candidate));
        for c in all {
            if !ids.insert(c.candidate_id.as_str()) {
                return Err(CampaignError::DuplicateCandidate(c.candidate_id.clone()));
            }
        }
        if self.qualification.len() != self.config.qualification_size {
            return Err(CampaignError::QualificationSize {
                expected: self.config.qualification_size,
                found: self.qualification.len(),
            });
        }
        if let Some(q) = self.qualification.iter().find(|q| q.gold.len() != Criterion::ALL.len()) {
            return Err(CampaignError::IncompleteGold(q.candidate.candidate_id.clone()));
        }
        Ok(())
    }

    pub fn candidates(&self) -> impl Iterator<Item = &Candidate> {
        self.histories.iter().flat_map(|h| &h.candidates)
    }

    pub fn gold(&self) -> BTreeMap<String, BTreeMap<Criterion, Vote>> {
        self.qualification
            .iter()
            .map(|q| (q.candidate.candidate_id.clone(), q.gold.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualificationOutcome {
    pub matched: usize,
    pub total: usize,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QualifyError {
    #[error("incomplete qualification: {found} of {expected} samples judged")]
    Incomplete { expected: usize, found: usize },
    #[error("judgment on `{0}`, which is not a qualification sample")]
    UnknownSample(String),
    #[error("qualification sample `{0}` judged twice")]
    Duplicate(String),
}

/// Share of criterion votes matching the gold votes; an Unsure vote never
/// matches.
pub fn qualify(
    judgments: &[JudgmentRecord],
    gold: &BTreeMap<String, BTreeMap<Criterion, Vote>>,
    config: &CampaignConfig,
) -> Result<QualificationOutcome, QualifyError> {
    if judgments.len() != config.qualification_size {
        return Err(QualifyError::Incomplete {
            expected: config.qualification_size,
            found: judgments.len(),
        });
    }
    let mut seen = HashSet::new();
    let mut matched = 0;
    for j in judgments {
        let expected = gold
            .get(&j.candidate_id)
            .ok_or_else(|| QualifyError::UnknownSample(j.candidate_id.clone()))?;
        if !seen.insert(&j.candidate_id) {
            return Err(QualifyError::Duplicate(j.candidate_id.clone()));
        }
        matched += Criterion::ALL
            .iter()
            .filter(|c| {
                let vote = j.votes.get(c);
                vote != Some(&Vote::Unsure) && vote.is_some() && vote == expected.get(c)
            })
            .count();
    }
    let total = judgments.len() * Criterion::ALL.len();
    Ok(QualificationOutcome {
        matched,
        total,
        passed: matched as f64 >= config.qualification_threshold * total as f64 - 1e-12,
    })
}


#[cfg(test)]
pub(crate) use tests::judgment;
