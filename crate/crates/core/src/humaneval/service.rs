use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::aggregate::{
    aggregate_majority, agreement_report, error_distribution, AgreementReport, ErrorDistribution,
    KappaError, MajorityError, MajorityReport,
};
use super::campaign::{
    qualify, Campaign, CampaignError, Candidate, Criterion, ErrorLabel, HistoryTurn,
    JudgmentRecord, QualificationOutcome,
};
use super::journal::{Journal, JournalError};
use super::plan::{plan_assignments, Plan, PlanError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Qualification,
    Main,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QualificationStatus {
    Pending,
    Passed,
    Failed,
}

/// One candidate to judge, without its source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskView {
    pub phase: Phase,
    pub history_id: String,
    pub history: Vec<HistoryTurn>,
    pub candidate_id: String,
    pub candidate_text: String,
    pub criteria: Vec<Criterion>,
    pub error_labels: Vec<ErrorLabel>,
    /// 0-based position of this task within its phase.
    pub position: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub worker_id: String,
    pub qualification: QualificationStatus,
    pub qualification_done: usize,
    pub qualification_total: usize,
    pub main_done: usize,
    pub main_total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ack {
    pub worker_id: String,
    pub candidate_id: String,
    pub phase: Phase,
    /// Present when this judgment completed the qualification.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub qualification: Option<QualificationOutcome>,
    pub progress: Progress,
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error("unknown worker `{0}`")]
    UnknownWorker(String),
    #[error("unknown candidate `{0}`")]
    UnknownCandidate(String),
    #[error("invalid judgment: {0}")]
    Invalid(String),
    #[error("worker `{0}` has not completed the qualification")]
    QualificationPending(String),
    #[error("worker `{0}` did not pass the qualification")]
    NotQualified(String),
    #[error("worker `{worker_id}` is not assigned to `{candidate_id}`")]
    Unassigned {
        worker_id: String,
        candidate_id: String,
    },
    #[error("duplicate judgment by `{worker_id}` on `{candidate_id}`")]
    Duplicate {
        worker_id: String,
        candidate_id: String,
    },
    #[error(transparent)]
    Journal(JournalError),
    #[error(transparent)]
    Majority(#[from] MajorityError),
    #[error(transparent)]
    Kappa(#[from] KappaError),
}

impl From<JournalError> for ServiceError {
    fn from(e: JournalError) -> Self {
        match e {
            JournalError::Duplicate {
                worker_id,
                candidate_id,
            } => ServiceError::Duplicate {
                worker_id,
                candidate_id,
            },
            other => ServiceError::Journal(other),
        }
    }
}

/// Collection-service state: campaign, assignment plan, journal and the
/// per-worker qualification status derived from it.
#[derive(Debug)]
pub struct CampaignState {
    campaign: Campaign,
    plan: Plan,
    journal: Journal,
    /// candidate id -> (history index, candidate index)
    main: HashMap<String, (usize, usize)>,
    /// candidate id -> qualification item index
    qualification: HashMap<String, usize>,
    assigned: HashSet<(String, String)>,
    status: HashMap<String, QualificationStatus>,
    candidates: Vec<Candidate>,
}

impl CampaignState {
    /// Validates the campaign, plans assignments and replays the journal.
    pub fn new(campaign: Campaign, journal: Journal) -> Result<Self, ServiceError> {
        campaign.validate()?;
        let plan = plan_assignments(&campaign.histories, &campaign.workers, &campaign.config, campaign.seed)?;
        let main = campaign
            .histories
            .iter()
            .enumerate()
            .flat_map(|(h, item)| {
                item.candidates
                    .iter()
                    .enumerate()
                    .map(move |(c, cand)| (cand.candidate_id.clone(), (h, c)))
            })
            .collect();
        let qualification = campaign
            .qualification
            .iter()
            .enumerate()
            .map(|(i, q)| (q.candidate.candidate_id.clone(), i))
            .collect();
        let assigned = plan
            .iter()
            .flat_map(|(w, tasks)| tasks.iter().map(move |t| (w.clone(), t.candidate_id.clone())))
            .collect();
        let status = campaign
            .workers
            .iter()
            .map(|w| (w.clone(), QualificationStatus::Pending))
            .collect();
        let candidates = campaign.candidates().cloned().collect();
        let replay = journal.records().to_vec();
        let mut state = CampaignState {
            campaign,
            plan,
            journal: Journal::in_memory(),
            main,
            qualification,
            assigned,
            status,
            candidates,
        };
        for record in replay {
            state.check(&record)?;
            state.apply(record)?;
        }
        state.journal = journal;
        Ok(state)
    }

    pub fn campaign(&self) -> &Campaign {
        &self.campaign
    }

    pub fn plan(&self) -> &Plan {
        &self.plan
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    fn status_of(&self, worker: &str) -> Result<QualificationStatus, ServiceError> {
        self.status
            .get(worker)
            .copied()
            .ok_or_else(|| ServiceError::UnknownWorker(worker.to_owned()))
    }

    fn phase_of(&self, candidate_id: &str) -> Result<Phase, ServiceError> {
        if self.qualification.contains_key(candidate_id) {
            Ok(Phase::Qualification)
        } else if self.main.contains_key(candidate_id) {
            Ok(Phase::Main)
        } else {
            Err(ServiceError::UnknownCandidate(candidate_id.to_owned()))
        }
    }

    /// Everything `submit` verifies before touching the journal.
    fn check(&self, record: &JudgmentRecord) -> Result<Phase, ServiceError> {
        record.validate().map_err(ServiceError::Invalid)?;
        let status = self.status_of(&record.worker_id)?;
        let phase = self.phase_of(&record.candidate_id)?;
        if self.journal.contains(&record.worker_id, &record.candidate_id) {
            return Err(ServiceError::Duplicate {
                worker_id: record.worker_id.clone(),
                candidate_id: record.candidate_id.clone(),
            });
        }
        if phase == Phase::Main {
            match status {
                QualificationStatus::Pending => {
                    return Err(ServiceError::QualificationPending(record.worker_id.clone()))
                }
                QualificationStatus::Failed => return Err(ServiceError::NotQualified(record.worker_id.clone())),
                QualificationStatus::Passed => {}
            }
            if !self
                .assigned
                .contains(&(record.worker_id.clone(), record.candidate_id.clone()))
            {
                return Err(ServiceError::Unassigned {
                    worker_id: record.worker_id.clone(),
                    candidate_id: record.candidate_id.clone(),
                });
            }
        }
        Ok(phase)
    }

    fn qualification_judgments(&self, worker: &str) -> Vec<JudgmentRecord> {
        self.journal
            .records()
            .iter()
            .filter(|r| r.worker_id == worker && self.qualification.contains_key(&r.candidate_id))
            .cloned()
            .collect()
    }

    fn apply(&mut self, record: JudgmentRecord) -> Result<Option<QualificationOutcome>, ServiceError> {
        let worker = record.worker_id.clone();
        let phase = self.phase_of(&record.candidate_id)?;
        self.journal.append(record)?;
        if phase == Phase::Qualification {
            let done = self.qualification_judgments(&worker);
            if done.len() == self.campaign.config.qualification_size {
                let outcome = qualify(&done, &self.campaign.gold(), &self.campaign.config)
                    .expect("qualification set is complete and validated");
                let status = if outcome.passed {
                    QualificationStatus::Passed
                } else {
                    QualificationStatus::Failed
                };
                self.status.insert(worker, status);
                return Ok(Some(outcome));
            }
        }
        Ok(None)
    }

    /// Validates and journals one judgment.
    pub fn submit(&mut self, record: JudgmentRecord) -> Result<Ack, ServiceError> {
        let phase = self.check(&record)?;
        let worker_id = record.worker_id.clone();
        let candidate_id = record.candidate_id.clone();
        let qualification = self.apply(record)?;
        Ok(Ack {
            progress: self.progress(&worker_id)?,
            worker_id,
            candidate_id,
            phase,
            qualification,
        })
    }

    /// The worker's next unanswered task, qualification first. `None` once
    /// every assigned task has been judged.
    pub fn next_task(&self, worker: &str) -> Result<Option<TaskView>, ServiceError> {
        match self.status_of(worker)? {
            QualificationStatus::Failed => Err(ServiceError::NotQualified(worker.to_owned())),
            QualificationStatus::Pending => {
                let total = self.campaign.qualification.len();
                Ok(self
                    .campaign
                    .qualification
                    .iter()
                    .enumerate()
                    .find(|(_, q)| !self.journal.contains(worker, &q.candidate.candidate_id))
                    .map(|(position, q)| TaskView {
                        phase: Phase::Qualification,
                        history_id: q.candidate.sample_id.clone(),
                        history: q.history.clone(),
                        candidate_id: q.candidate.candidate_id.clone(),
                        candidate_text: q.candidate.text.clone(),
                        criteria: Criterion::ALL.to_vec(),
                        error_labels: ErrorLabel::ALL.to_vec(),
                        position,
                        total,
                    }))
            }
            QualificationStatus::Passed => {
                let tasks = &self.plan[worker];
                Ok(tasks
                    .iter()
                    .enumerate()
                    .find(|(_, t)| !self.journal.contains(worker, &t.candidate_id))
                    .map(|(position, t)| {
                        let (h, c) = self.main[&t.candidate_id];
                        let history = &self.campaign.histories[h];
                        TaskView {
                            phase: Phase::Main,
                            history_id: history.history_id.clone(),
                            history: history.turns.clone(),
                            candidate_id: t.candidate_id.clone(),
                            candidate_text: history.candidates[c].text.clone(),
                            criteria: Criterion::ALL.to_vec(),
                            error_labels: ErrorLabel::ALL.to_vec(),
                            position,
                            total: tasks.len(),
                        }
                    }))
            }
        }
    }

    pub fn progress(&self, worker: &str) -> Result<Progress, ServiceError> {
        let status = self.status_of(worker)?;
        let tasks = &self.plan[worker];
        Ok(Progress {
            worker_id: worker.to_owned(),
            qualification: status,
            qualification_done: self.qualification_judgments(worker).len(),
            qualification_total: self.campaign.qualification.len(),
            main_done: tasks
                .iter()
                .filter(|t| self.journal.contains(worker, &t.candidate_id))
                .count(),
            main_total: tasks.len(),
        })
    }

    /// Main-phase judgments (qualification excluded).
    pub fn main_judgments(&self) -> Vec<JudgmentRecord> {
        self.journal
            .records()
            .iter()
            .filter(|r| self.main.contains_key(&r.candidate_id))
            .cloned()
            .collect()
    }

    pub fn majority_report(&self) -> Result<MajorityReport, ServiceError> {
        Ok(aggregate_majority(
            &self.main_judgments(),
            &self.candidates,
            self.campaign.config.raters_per_item,
        )?)
    }

    pub fn kappa_report(&self) -> Result<AgreementReport, ServiceError> {
        Ok(agreement_report(&self.main_judgments(), &self.candidates)?)
    }

    pub fn error_report(&self) -> std::collections::BTreeMap<String, ErrorDistribution> {
        error_distribution(&self.main_judgments(), &self.candidates)
    }

    pub fn export(&self) -> String {
        self.journal.export()
    }
}
