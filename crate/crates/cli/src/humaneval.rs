//! `campaign plan|serve|report`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use ldwb_core::corpus::make_samples;
use ldwb_core::humaneval::{
    plan_assignments, validate_plan, Campaign, CampaignState, Candidate, ErrorDistribution, ErrorLabel, HistoryItem,
    HistoryTurn, Journal, QualificationItem,
};
use ldwb_core::interchange::GenerationRecord;
use ldwb_core::metrics::{group_generations, GROUND_TRUTH};
use ldwb_core::rng::SeededRng;
use ldwb_server::AppState;
use serde::Serialize;

use crate::config::WorkbenchConfig;
use crate::evaluate::read_all;
use crate::pipeline::{load_pairs, read_split, window};
use crate::workspace::{read_json, write_json, write_text, Failure, Outcome, Workspace};

/// Builds the campaign from test-split samples: each history carries the
/// ground truth and one response per model, shuffled under blind ids.
pub fn build_campaign(config: &WorkbenchConfig, ws: &Workspace, generations: &[PathBuf]) -> Result<Campaign, Failure> {
    let c = &config.campaign;
    if c.workers.is_empty() {
        return Err(Failure::usage("[campaign] workers is empty"));
    }
    let gold_path = config
        .paths
        .gold
        .as_ref()
        .ok_or_else(|| Failure::usage("[paths] gold (qualification items) is required"))?;
    if generations.is_empty() {
        return Err(Failure::usage("at least one --generations file is required"));
    }
    let qualification: Vec<QualificationItem> = read_json(gold_path)?;
    let records: Vec<GenerationRecord> = read_all(generations)?;
    let responses = group_generations(&records);
    if responses.contains_key(GROUND_TRUTH) {
        return Err(Failure::Data(anyhow::anyhow!("model id `{GROUND_TRUTH}` is reserved")));
    }
    let expected = c.protocol.candidates_per_history;
    if responses.len() + 1 != expected {
        return Err(Failure::Data(anyhow::anyhow!(
            "candidates_per_history = {expected} needs {} models besides {GROUND_TRUTH}, generations hold {}",
            expected.saturating_sub(1),
            responses.len()
        )));
    }

    let pairs = load_pairs(config)?;
    let test: HashSet<String> = read_split(ws)?.test.into_iter().collect();
    let mut eligible: Vec<_> = pairs
        .iter()
        .filter(|p| test.contains(&p.dialogue_id))
        .flat_map(|p| make_samples(p, window(config.samples.window)))
        .filter(|s| responses.values().all(|by_sample| by_sample.contains_key(&s.sample_id)))
        .collect();
    eligible.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    if eligible.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!(
            "no test sample has a response from every model"
        )));
    }
    let mut rng = SeededRng::new(c.seed);
    if c.histories > 0 {
        if c.histories > eligible.len() {
            return Err(Failure::Data(anyhow::anyhow!(
                "[campaign] histories = {} but only {} test samples have every model's response",
                c.histories,
                eligible.len()
            )));
        }
        rng.shuffle(&mut eligible);
        eligible.truncate(c.histories);
        eligible.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
    }

    let histories = eligible
        .into_iter()
        .map(|sample| {
            let mut sources: Vec<(&str, &str)> = vec![(GROUND_TRUTH, sample.target.text.as_str())];
            sources.extend(
                responses
                    .iter()
                    .map(|(model, by_sample)| (model.as_str(), by_sample[&sample.sample_id].as_str())),
            );
            rng.shuffle(&mut sources);
            let candidates = sources
                .into_iter()
                .enumerate()
                .map(|(k, (source, text))| Candidate {
                    candidate_id: format!("{}/c{k}", sample.sample_id),
                    sample_id: sample.sample_id.clone(),
                    source: source.to_owned(),
                    text: text.to_owned(),
                })
                .collect();
            HistoryItem {
                history_id: sample.sample_id.clone(),
                turns: sample
                    .history
                    .iter()
                    .map(|t| HistoryTurn {
                        speaker: t.speaker,
                        text: t.text.clone(),
                    })
                    .collect(),
                candidates,
            }
        })
        .collect();
    let campaign = Campaign {
        config: c.protocol.clone(),
        workers: c.workers.clone(),
        seed: c.seed,
        histories,
        qualification,
    };
    campaign.validate().context("campaign")?;
    Ok(campaign)
}

pub fn plan(config: &WorkbenchConfig, ws: &Workspace, generations: &[PathBuf]) -> Outcome {
    let campaign = build_campaign(config, ws, generations)?;
    let plan = plan_assignments(&campaign.histories, &campaign.workers, &campaign.config, campaign.seed)
        .context("assignment plan")?;
    if let Err(e) = validate_plan(&plan, &campaign.histories, &campaign.config) {
        bail_data(format!("planner produced an invalid plan: {e}"))?;
    }
    write_json(&ws.campaign_file(), &campaign)?;
    write_json(&ws.campaign_dir().join("plan.json"), &plan)?;
    println!(
        "campaign plan: {} histories, {} candidates, {} tasks over {} workers -> {}",
        campaign.histories.len(),
        campaign.candidates().count(),
        plan.values().map(Vec::len).sum::<usize>(),
        campaign.workers.len(),
        ws.campaign_dir().display()
    );
    Ok(())
}

fn bail_data(message: String) -> Outcome {
    Err(Failure::Data(anyhow::anyhow!(message)))
}

fn load_campaign(ws: &Workspace) -> anyhow::Result<Campaign> {
    let path = ws.campaign_file();
    if !path.exists() {
        bail!("{} not found; run `ldwb campaign plan` first", path.display());
    }
    read_json(&path)
}

pub fn serve(config: &WorkbenchConfig, ws: &Workspace, bind: Option<&str>) -> Outcome {
    let addr = match bind {
        Some(b) => b.parse().map_err(|e| Failure::usage(format!("--bind `{b}`: {e}")))?,
        None => config.bind_addr().map_err(Failure::Usage)?,
    };
    let campaign = load_campaign(ws)?;
    let journal = config.journal_path();
    if let Some(dir) = journal.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let state = AppState::with_campaign(campaign, Some(journal.clone())).context("loading campaign")?;
    println!("campaign serve: listening on http://{addr}, journal {}", journal.display());
    ldwb_server::serve_blocking(addr, Arc::new(state)).with_context(|| format!("serving on {addr}"))?;
    Ok(())
}

fn errors_tsv(errors: &BTreeMap<String, ErrorDistribution>) -> String {
    let mut out = String::from("source\tlabeled");
    for label in ErrorLabel::ALL {
        let name = serde_json::to_value(label).expect("label serializes");
        write!(out, "\t{}", name.as_str().expect("label is a string")).unwrap();
    }
    out.push('\n');
    for (source, d) in errors {
        write!(out, "{source}\t{}", d.labeled).unwrap();
        for label in ErrorLabel::ALL {
            write!(out, "\t{:.1}", d.percent.get(&label).copied().unwrap_or(0.0)).unwrap();
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct HumanEvalReport<'a> {
    judgments: usize,
    majority: &'a ldwb_core::humaneval::MajorityReport,
    agreement: &'a ldwb_core::humaneval::AgreementReport,
    errors: &'a BTreeMap<String, ErrorDistribution>,
}

/// Replays the journal and writes the majority, agreement and error reports.
pub fn report(config: &WorkbenchConfig, ws: &Workspace) -> Outcome {
    let campaign = load_campaign(ws)?;
    let path = config.journal_path();
    if !path.exists() {
        bail_data(format!("journal {} not found", path.display()))?;
    }
    let journal = read_only_journal(&path)?;
    let state = CampaignState::new(campaign, journal).context("replaying the journal")?;
    let majority = state.majority_report().context("majority report")?;
    let agreement = state.kappa_report().context("agreement report")?;
    let errors = state.error_report();
    let dir = ws.reports_dir();
    write_text(&dir.join("majority.tsv"), &majority.to_tsv())?;
    write_text(&dir.join("kappa.tsv"), &agreement.to_tsv())?;
    write_text(&dir.join("errors.tsv"), &errors_tsv(&errors))?;
    write_json(
        &dir.join("humaneval.json"),
        &HumanEvalReport {
            judgments: state.main_judgments().len(),
            majority: &majority,
            agreement: &agreement,
            errors: &errors,
        },
    )?;
    print!("{}", majority.to_tsv());
    println!("campaign report -> {}", dir.display());
    Ok(())
}

/// Replays a journal without keeping a handle that could append to it.
fn read_only_journal(path: &Path) -> anyhow::Result<Journal> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut journal = Journal::in_memory();
    for record in Journal::parse(&text).with_context(|| format!("journal {}", path.display()))? {
        journal.append(record).with_context(|| format!("journal {}", path.display()))?;
    }
    Ok(journal)
}
