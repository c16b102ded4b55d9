//! Human-evaluation protocol: campaign definition, worker assignment,
//! qualification, judgment collection and aggregation.
//!
//! Judges rate one response candidate at a time on four criteria with a
//! three-way vote and motivate negative appropriateness/contextualization
//! votes with error labels. Every candidate is rated by a fixed panel of
//! workers; results are aggregated by majority voting, Fleiss' kappa and
//! error-label distributions.

mod aggregate;
mod campaign;
mod journal;
mod plan;
mod service;

pub use aggregate::{
    aggregate_majority, agreement_report, error_distribution, fleiss_kappa, majority_label,
    AgreementReport, Band, ErrorDistribution, KappaError, MajorityError, MajorityReport,
    MeanStd,
};
pub use campaign::{
    qualify, Campaign, CampaignConfig, CampaignError, Candidate, Criterion, ErrorLabel,
    HistoryItem, HistoryTurn, JudgmentRecord, QualificationItem, QualificationOutcome,
    QualifyError, Vote,
};
pub use journal::{Journal, JournalError, JUDGMENT_SCHEMA};
pub use plan::{plan_assignments, validate_plan, Plan, PlanError, Task};
pub use service::{
    Ack, CampaignState, Phase, Progress, QualificationStatus, ServiceError, TaskView,
};
