use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::campaign::{CampaignConfig, HistoryItem};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    pub history_id: String,
    pub candidate_id: String,
}

/// worker id -> tasks in serving order.
pub type Plan = BTreeMap<String, Vec<Task>>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("infeasible: raters_per_item = {raters} exceeds the worker pool of {workers}")]
    TooFewWorkers { raters: usize, workers: usize },
    #[error(
        "infeasible: {candidates} candidates x {raters} raters = {demand} tasks exceed worker capacity {workers} x {quota} = {capacity}"
    )]
    Capacity {
        candidates: usize,
        raters: usize,
        demand: usize,
        workers: usize,
        quota: usize,
        capacity: usize,
    },
    #[error("duplicate candidate id `{0}`")]
    DuplicateCandidate(String),
    #[error("duplicate worker id `{0}`")]
    DuplicateWorker(String),
}

/// Assigns every candidate to `raters_per_item` distinct workers.
///
/// Candidates are processed in campaign order and each goes to the
/// least-loaded workers, ties broken by a seeded worker ranking. Loads
/// therefore never differ by more than one, so the plan exists exactly when
/// the pool has at least `raters_per_item` workers and enough total capacity.
pub fn plan_assignments(
    histories: &[HistoryItem],
    workers: &[String],
    config: &CampaignConfig,
    seed: u64,
) -> Result<Plan, PlanError> {
    let mut seen = HashSet::new();
    for w in workers {
        if !seen.insert(w) {
            return Err(PlanError::DuplicateWorker(w.clone()));
        }
    }
    let mut ids = HashSet::new();
    for c in histories.iter().flat_map(|h| &h.candidates) {
        if !ids.insert(&c.candidate_id) {
            return Err(PlanError::DuplicateCandidate(c.candidate_id.clone()));
        }
    }
    let raters = config.raters_per_item;
    let quota = config.worker_quota();
    let candidates = ids.len();
    if candidates > 0 && raters > workers.len() {
        return Err(PlanError::TooFewWorkers {
            raters,
            workers: workers.len(),
        });
    }
    let demand = candidates * raters;
    let capacity = workers.len() * quota;
    if demand > capacity {
        return Err(PlanError::Capacity {
            candidates,
            raters,
            demand,
            workers: workers.len(),
            quota,
            capacity,
        });
    }

    let rank = rng::permutation(workers.len(), seed);
    let mut load = vec![0usize; workers.len()];
    let mut plan: Plan = workers.iter().map(|w| (w.clone(), Vec::new())).collect();
    let mut order: Vec<usize> = (0..workers.len()).collect();
    for history in histories {
        for candidate in &history.candidates {
            order.sort_by_key(|&w| (load[w], rank[w]));
            for &w in &order[..raters] {
                load[w] += 1;
                plan.get_mut(&workers[w]).expect("worker in plan").push(Task {
                    history_id: history.history_id.clone(),
                    candidate_id: candidate.candidate_id.clone(),
                });
            }
        }
    }
    Ok(plan)
}

/// Checks rater counts, per-worker uniqueness and quotas of a plan.
pub fn validate_plan(plan: &Plan, histories: &[HistoryItem], config: &CampaignConfig) -> Result<(), String> {
    let mut raters: HashMap<&str, usize> = HashMap::new();
    for (worker, tasks) in plan {
        if tasks.len() > config.worker_quota() {
            return Err(format!(
                "worker `{worker}` has {} tasks, quota {}",
                tasks.len(),
                config.worker_quota()
            ));
        }
        let mut mine = HashSet::new();
        for t in tasks {
            if !mine.insert(&t.candidate_id) {
                return Err(format!("worker `{worker}` sees `{}` twice", t.candidate_id));
            }
            *raters.entry(&t.candidate_id).or_default() += 1;
        }
    }
    let mut expected = 0;
    for c in histories.iter().flat_map(|h| &h.candidates) {
        expected += 1;
        let got = raters.get(c.candidate_id.as_str()).copied().unwrap_or(0);
        if got != config.raters_per_item {
            return Err(format!(
                "candidate `{}` has {got} raters, expected {}",
                c.candidate_id, config.raters_per_item
            ));
        }
    }
    if raters.len() != expected {
        return Err("plan assigns unknown candidates".into());
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::humaneval::campaign::Candidate;

    fn histories(n: usize, per: usize) -> Vec<HistoryItem> {
        (0..n)
            .map(|h| HistoryItem {
                history_id: format!("h{h}"),
                turns: vec![],
                candidates: (0..per)
                    .map(|c| Candidate {
                        candidate_id: format!("h{h}/c{c}"),
                        sample_id: format!("h{h}"),
                        source: format!("m{c}"),
                        text: "x".into(),
                    })
                    .collect(),
            })
            .collect()
    }

    fn workers(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("w{i}")).collect()
    }

    #[test]
    fn small_feasible_plan() {
        let config = CampaignConfig {
            raters_per_item: 2,
            histories_per_worker: 1,
            candidates_per_history: 3,
            ..Default::default()
        };
        let hs = histories(2, 3);
        let plan = plan_assignments(&hs, &workers(4), &config, 5).unwrap();
        assert_eq!(plan.values().map(Vec::len).sum::<usize>(), 12);
        validate_plan(&plan, &hs, &config).unwrap();
        assert_eq!(plan, plan_assignments(&hs, &workers(4), &config, 5).unwrap());
    }

    #[test]
    fn pigeonhole() {
        let err = plan_assignments(&histories(1, 3), &workers(3), &CampaignConfig::default(), 0).unwrap_err();
        assert_eq!(err, PlanError::TooFewWorkers { raters: 7, workers: 3 });
        assert!(err.to_string().contains("raters_per_item"));
    }

    #[test]
    fn capacity_bound() {
        let config = CampaignConfig {
            raters_per_item: 2,
            histories_per_worker: 1,
            candidates_per_history: 1,
            ..Default::default()
        };
        let err = plan_assignments(&histories(2, 3), &workers(4), &config, 0).unwrap_err();
        assert!(matches!(err, PlanError::Capacity { demand: 12, capacity: 4, .. }));
    }

    #[test]
    fn validator_catches_violations() {
        let config = CampaignConfig {
            raters_per_item: 2,
            ..Default::default()
        };
        let hs = histories(1, 2);
        let mut plan = plan_assignments(&hs, &workers(3), &config, 1).unwrap();
        let (w, tasks) = plan.iter_mut().find(|(_, t)| !t.is_empty()).unwrap();
        let w = w.clone();
        let dup = tasks[0].clone();
        tasks.push(dup);
        assert!(validate_plan(&plan, &hs, &config).unwrap_err().contains(&w));
    }
}
