//! Helpers shared by the CLI integration suites: invoking the binary, a
//! synthetic corpus, a synthetic runner and synthetic judges.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ldwb_core::humaneval::{Campaign, CampaignState, Criterion, ErrorLabel, Journal, JudgmentRecord, Phase, Vote};
use ldwb_core::interchange::{write_records, AttributedToken, AttributionRecord, GenerationRecord, ScoringRecord};
use ldwb_core::knowledge::read_inputs;
use ldwb_core::{InputSequence, Role, Segment};

pub const REPRS: [&str; 3] = ["raw", "boh", "psg"];

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

pub fn sample_config() -> PathBuf {
    fixture("sample/workbench.toml")
}

/// Runs `ldwb` with the output root redirected to `out`.
pub fn ldwb(config: &Path, out: &Path, args: &[&str]) -> Output {
    ldwb_env(config, out, args, &[])
}

/// [`ldwb`] with extra path overrides such as `("LDWB_CORPUS", path)`.
pub fn ldwb_env(config: &Path, out: &Path, args: &[&str], env: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ldwb"));
    cmd.arg("--config").arg(config).args(args).env("LDWB_OUTPUT", out);
    for var in ["LDWB_CORPUS", "LDWB_PARSES", "LDWB_LAYOUT", "LDWB_GOLD", "LDWB_JOURNAL"] {
        cmd.env_remove(var);
    }
    for (var, value) in env {
        cmd.env(var, value);
    }
    cmd.output().expect("spawning ldwb")
}

/// Like [`ldwb`], but a non-zero exit becomes an error carrying stderr.
pub fn ldwb_ok(config: &Path, out: &Path, args: &[&str]) -> Result<String, String> {
    let output = ldwb(config, out, args);
    if output.status.success() {
        Ok(String::from_utf8_lossy(&output.stdout).into_owned())
    } else {
        Err(format!(
            "`ldwb {}` exited with {:?}: {}",
            args.join(" "),
            output.status.code(),
            String::from_utf8_lossy(&output.stderr)
        ))
    }
}

/// FNV-1a, mapped to [0, 1).
pub fn unit(key: &str) -> f64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in key.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Corpus file text with `n` minimal dialogue pairs.
pub fn synthetic_corpus(n: usize) -> String {
    let mut out = String::from("{\"schema\":\"corpus\",\"version\":1}\n");
    for i in 0..n {
        let line = serde_json::json!({
            "dialogue_id": format!("s{i:04}"),
            "user_id": format!("u{}", i % 37),
            "sessions": [
                {"session_index": "first", "turns": [
                    {"speaker": "user", "text": format!("I met friend number {i}.")},
                    {"speaker": "agent", "text": "Nice."}
                ]},
                {"session_index": "second", "turns": [
                    {"speaker": "user", "text": "Hello again."},
                    {"speaker": "agent", "text": "How is your friend?"}
                ]}
            ]
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

fn knowledge_words(seq: &InputSequence) -> Vec<&str> {
    seq.tokens
        .iter()
        .filter(|t| t.segment == Segment::Knowledge && t.role != Role::Tag && !t.text.starts_with('<'))
        .map(|t| t.text.as_str())
        .collect()
}

/// A deterministic stand-in for a fine-tuned model.
pub fn generate(seq: &InputSequence, model: &str) -> GenerationRecord {
    let words = knowledge_words(seq);
    let pick = (unit(&format!("{model}|{}", seq.sample_id)) * 3.0) as usize + 1;
    let response = if words.is_empty() {
        "Tell me more about it.".to_owned()
    } else {
        let chosen: Vec<&str> = words.iter().rev().take(pick).rev().copied().collect();
        format!("I remember {}. How is it going?", chosen.join(" "))
    };
    GenerationRecord {
        sample_id: seq.sample_id.clone(),
        model_id: model.to_owned(),
        response_text: response,
    }
}

pub fn score(seq: &InputSequence, model: &str, scale: f64) -> ScoringRecord {
    let target_tokens: Vec<String> = seq.target_text.split_whitespace().map(str::to_owned).collect();
    let token_nll = (0..target_tokens.len())
        .map(|i| scale * (0.5 + 3.0 * unit(&format!("{model}|{}|{i}", seq.sample_id))))
        .collect();
    ScoringRecord {
        sample_id: seq.sample_id.clone(),
        model_id: model.to_owned(),
        target_tokens,
        token_nll,
    }
}

pub fn attribute(seq: &InputSequence, model: &str) -> AttributionRecord {
    AttributionRecord {
        sample_id: seq.sample_id.clone(),
        model_id: model.to_owned(),
        tokens: seq
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| AttributedToken {
                text: t.text.clone(),
                segment: t.segment,
                role: t.role,
                upos: match t.role {
                    Role::Event => Some("VERB".into()),
                    Role::Participant => Some("NOUN".into()),
                    _ => None,
                },
                score: 2.0 * unit(&format!("{model}|{}|{i}", seq.sample_id)) - 1.0,
            })
            .collect(),
    }
}

/// Writes generation, scoring and attribution files for `inputs`.
pub fn run_runner(inputs: &Path, model: &str, dir: &Path) -> Result<(), String> {
    let seqs = read_inputs(inputs).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let io = |e: std::io::Error| e.to_string();
    write_records(&dir.join("generation.jsonl"), &seqs.iter().map(|s| generate(s, model)).collect::<Vec<_>>())
        .map_err(io)?;
    write_records(&dir.join("scoring.jsonl"), &seqs.iter().map(|s| score(s, model, 1.0)).collect::<Vec<_>>())
        .map_err(io)?;
    write_records(&dir.join("attribution.jsonl"), &seqs.iter().map(|s| attribute(s, model)).collect::<Vec<_>>())
        .map_err(io)?;
    Ok(())
}

fn vote_for(key: &str) -> Vote {
    match (unit(key) * 10.0) as u32 {
        0..=5 => Vote::Positive,
        6..=8 => Vote::Negative,
        _ => Vote::Unsure,
    }
}

fn labels_for(votes: &BTreeMap<Criterion, Vote>, key: &str) -> BTreeSet<ErrorLabel> {
    let needs = votes.iter().any(|(c, v)| c.requires_motivation() && *v == Vote::Negative);
    if needs {
        BTreeSet::from([ErrorLabel::ALL[(unit(key) * 4.0) as usize]])
    } else {
        BTreeSet::new()
    }
}

/// Every worker answers the qualification set with the gold votes, then
/// judges all assigned candidates; judgments go to the journal at `journal`.
pub fn judge_all(campaign: Campaign, journal: &Path) -> Result<usize, String> {
    let gold = campaign.gold();
    let workers = campaign.workers.clone();
    let journal = Journal::open(journal).map_err(|e| e.to_string())?;
    let mut state = CampaignState::new(campaign, journal).map_err(|e| e.to_string())?;
    let mut clock = 1_700_000_000_000u64;
    let mut submitted = 0;
    for worker in &workers {
        while let Some(task) = state.next_task(worker).map_err(|e| e.to_string())? {
            let key = format!("{worker}|{}", task.candidate_id);
            let votes: BTreeMap<Criterion, Vote> = match task.phase {
                Phase::Qualification => gold[&task.candidate_id].clone(),
                Phase::Main => Criterion::ALL
                    .into_iter()
                    .map(|c| (c, vote_for(&format!("{key}|{c:?}"))))
                    .collect(),
            };
            clock += 1000;
            let record = JudgmentRecord {
                worker_id: worker.clone(),
                candidate_id: task.candidate_id.clone(),
                error_labels: labels_for(&votes, &key),
                votes,
                timestamp: clock,
            };
            state.submit(record).map_err(|e| format!("{worker}: {e}"))?;
            submitted += 1;
        }
    }
    Ok(submitted)
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_owned(), std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// The whole pipeline on the sample corpus: representations, inputs,
/// synthetic runner outputs and every report.
pub fn dry_run(out: &Path) -> Result<(), String> {
    let config = sample_config();
    let run = |args: &[&str]| ldwb_ok(&config, out, args);
    run(&["ingest"])?;
    run(&["split"])?;
    run(&["parse-check"])?;
    run(&["subsets"])?;
    for repr in REPRS {
        run(&["represent", "--repr", repr])?;
        run(&["assemble", "--repr", repr, "--window", "2"])?;
        let inputs = out.join(format!("inputs/{repr}-w2/test.jsonl"));
        run_runner(&inputs, &format!("gpt-{repr}"), &out.join(format!("runner/{repr}")))?;
    }
    let files = |name: &str| -> Vec<String> {
        REPRS
            .iter()
            .map(|r| out.join(format!("runner/{r}/{name}.jsonl")).display().to_string())
            .collect()
    };
    let flagged = |flag: &str, paths: &[String]| -> Vec<String> {
        paths.iter().flat_map(|p| [flag.to_owned(), p.clone()]).collect()
    };
    let call = |head: &[&str], rest: Vec<String>| {
        let mut args: Vec<&str> = head.to_vec();
        args.extend(rest.iter().map(String::as_str));
        run(&args)
    };
    call(&["eval", "ppl"], flagged("--scoring", &files("scoring")))?;
    call(&["eval", "bleu"], flagged("--generations", &files("generation")))?;

    let psg_test = read_inputs(&out.join("inputs/psg-w2/test.jsonl")).map_err(|e| e.to_string())?;
    let mut points = Vec::new();
    for fraction in [0.25, 0.5, 0.75, 1.0] {
        let path = out.join(format!("runner/curve/{fraction}.jsonl"));
        std::fs::create_dir_all(path.parent().unwrap()).map_err(|e| e.to_string())?;
        let records: Vec<ScoringRecord> = psg_test.iter().map(|s| score(s, "gpt-psg", 1.5 - 0.5 * fraction)).collect();
        write_records(&path, &records).map_err(|e| e.to_string())?;
        points.push(format!("{fraction}={}", path.display()));
    }
    call(&["eval", "curve"], flagged("--point", &points))?;

    let inputs: Vec<String> = REPRS
        .iter()
        .map(|r| out.join(format!("inputs/{r}-w2/test.jsonl")).display().to_string())
        .collect();
    for kind in ["positive", "significant"] {
        let mut rest = flagged("--inputs", &inputs);
        rest.extend(flagged("--attributions", &files("attribution")));
        call(&["attrib", kind], rest)?;
    }

    let generations = files("generation");
    call(&["campaign", "plan"], flagged("--generations", &[generations[0].clone(), generations[2].clone()]))?;
    let campaign: Campaign = serde_json::from_str(
        &std::fs::read_to_string(out.join("campaign/campaign.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    judge_all(campaign, &out.join("campaign/journal.jsonl"))?;
    run(&["campaign", "report"])?;
    Ok(())
}

/// Files the dry run must leave behind.
pub const DRY_RUN_OUTPUTS: [&str; 22] = [
    "corpus.jsonl",
    "ingest.json",
    "split/manifest.json",
    "parses/check.json",
    "subsets/manifest.json",
    "knowledge/raw.jsonl",
    "knowledge/boh.jsonl",
    "knowledge/psg.jsonl",
    "inputs/psg-w2/train.jsonl",
    "inputs/boh-w2/valid.jsonl",
    "inputs/raw-w2/test.jsonl",
    "eval/ppl.tsv",
    "eval/bleu.tsv",
    "eval/curve.tsv",
    "attrib/positive.tsv",
    "attrib/significant.tsv",
    "campaign/campaign.json",
    "campaign/plan.json",
    "campaign/journal.jsonl",
    "reports/majority.tsv",
    "reports/kappa.tsv",
    "reports/errors.tsv",
];
