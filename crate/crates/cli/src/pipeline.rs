//! Corpus-side subcommands: ingest, split, parse-check, represent, assemble
//! and subsets.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::num::NonZeroUsize;

use anyhow::{bail, Context};
use ldwb_core::corpus::{load_corpus, make_samples, split_corpus, subset_chain, write_corpus, SplitAssignment};
use ldwb_core::knowledge::{
    assemble_input, build_knowledge, read_knowledge, write_inputs, write_knowledge, Knowledge, KnowledgeRecord,
};
use ldwb_core::syntax::{load_parses, ParsedSentence, SourceTurn};
use ldwb_core::{DialoguePair, Representation, SessionIndex, Speaker};
use serde::Serialize;

use crate::config::WorkbenchConfig;
use crate::workspace::{id_list, read_json, write_json, write_text, write_with, Failure, Outcome, Workspace, SPLITS};

pub fn load_pairs(config: &WorkbenchConfig) -> anyhow::Result<Vec<DialoguePair>> {
    let path = &config.paths.corpus;
    load_corpus(path).with_context(|| format!("corpus {}", path.display()))
}

fn load_sentences(config: &WorkbenchConfig) -> anyhow::Result<Vec<ParsedSentence>> {
    let path = &config.paths.parses;
    load_parses(path).with_context(|| format!("parses {}", path.display()))
}

pub fn read_split(ws: &Workspace) -> anyhow::Result<SplitAssignment> {
    let path = ws.split_manifest();
    if !path.exists() {
        bail!("{} not found; run `ldwb split` first", path.display());
    }
    read_json(&path)
}

pub fn window(w: usize) -> NonZeroUsize {
    NonZeroUsize::new(w).expect("windows are validated on load")
}

#[derive(Serialize)]
struct IngestSummary {
    dialogues: usize,
    users: usize,
    first_session_turns: usize,
    second_session_turns: usize,
    samples: usize,
    window: usize,
}

pub fn ingest(config: &WorkbenchConfig, ws: &Workspace) -> Outcome {
    let pairs = load_pairs(config)?;
    let w = config.samples.window;
    let summary = IngestSummary {
        dialogues: pairs.len(),
        users: pairs.iter().map(|p| &p.user_id).collect::<BTreeSet<_>>().len(),
        first_session_turns: pairs.iter().map(|p| p.first.turns.len()).sum(),
        second_session_turns: pairs.iter().map(|p| p.second.turns.len()).sum(),
        samples: pairs.iter().map(|p| make_samples(p, window(w)).len()).sum(),
        window: w,
    };
    write_with(&ws.corpus(), |p| write_corpus(p, &pairs))?;
    write_json(&ws.ingest_summary(), &summary)?;
    println!(
        "ingest: {} dialogues, {} samples at window {w} -> {}",
        summary.dialogues,
        summary.samples,
        ws.corpus().display()
    );
    Ok(())
}

pub fn split(config: &WorkbenchConfig, ws: &Workspace) -> Outcome {
    let pairs = load_pairs(config)?;
    let assignment = split_corpus(&pairs, config.split.fractions()?, config.split.seed).context("split")?;
    let dir = ws.split_dir();
    for (name, ids) in SPLITS.iter().zip([&assignment.train, &assignment.valid, &assignment.test]) {
        write_text(&dir.join(format!("{name}.txt")), &id_list(ids))?;
    }
    write_json(&ws.split_manifest(), &assignment)?;
    println!(
        "split: {} train, {} valid, {} test -> {}",
        assignment.train.len(),
        assignment.valid.len(),
        assignment.test.len(),
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct ParseCheck {
    sentences: usize,
    /// First-session user turns, the knowledge source of boh and psg.
    knowledge_turns: usize,
    covered_turns: usize,
    /// Parses of existing turns outside the knowledge source.
    unused_sentences: usize,
    missing: Vec<SourceTurn>,
    orphans: Vec<SourceTurn>,
}

pub fn parse_check(config: &WorkbenchConfig, ws: &Workspace) -> Outcome {
    let pairs = load_pairs(config)?;
    let sentences = load_sentences(config)?;
    let mut turns: HashMap<SourceTurn, bool> = HashMap::new();
    let mut knowledge: BTreeSet<SourceTurn> = BTreeSet::new();
    for pair in &pairs {
        for (session, index) in [(&pair.first, SessionIndex::First), (&pair.second, SessionIndex::Second)] {
            for turn in &session.turns {
                let key = SourceTurn {
                    dialogue_id: pair.dialogue_id.clone(),
                    session: index,
                    turn_index: turn.turn_index,
                };
                let is_knowledge = index == SessionIndex::First && turn.speaker == Speaker::User;
                if is_knowledge {
                    knowledge.insert(key.clone());
                }
                turns.insert(key, is_knowledge);
            }
        }
    }
    let mut covered = BTreeSet::new();
    let mut orphans = BTreeSet::new();
    let mut unused = 0;
    for s in &sentences {
        match turns.get(&s.source_turn) {
            Some(true) => {
                covered.insert(s.source_turn.clone());
            }
            Some(false) => unused += 1,
            None => {
                orphans.insert(s.source_turn.clone());
            }
        }
    }
    let report = ParseCheck {
        sentences: sentences.len(),
        knowledge_turns: knowledge.len(),
        covered_turns: covered.len(),
        unused_sentences: unused,
        missing: knowledge.difference(&covered).cloned().collect(),
        orphans: orphans.into_iter().collect(),
    };
    write_json(&ws.parse_check(), &report)?;
    println!(
        "parse-check: {} sentences cover {}/{} knowledge turns, {} orphan turns",
        report.sentences,
        report.covered_turns,
        report.knowledge_turns,
        report.orphans.len()
    );
    if !report.missing.is_empty() || !report.orphans.is_empty() {
        return Err(Failure::Data(anyhow::anyhow!(
            "{} knowledge turns lack a parse and {} parsed turns are not in the corpus (see {})",
            report.missing.len(),
            report.orphans.len(),
            ws.parse_check().display()
        )));
    }
    Ok(())
}

pub fn represent(config: &WorkbenchConfig, ws: &Workspace, repr: Representation) -> Outcome {
    if repr == Representation::None {
        return Err(Failure::usage("`none` has no knowledge to build; pick raw, boh or psg"));
    }
    let pairs = load_pairs(config)?;
    let sentences = if repr == Representation::Raw {
        Vec::new()
    } else {
        load_sentences(config)?
    };
    let layout = config.layout();
    let records = pairs
        .iter()
        .map(|pair| {
            let knowledge = build_knowledge(pair, &sentences, repr, &layout, config.knowledge.psg)
                .with_context(|| format!("dialogue `{}`", pair.dialogue_id))?;
            Ok(KnowledgeRecord {
                dialogue_id: pair.dialogue_id.clone(),
                knowledge,
            })
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let empty = records.iter().filter(|r| r.knowledge.text().is_empty()).count();
    let path = ws.knowledge(repr);
    write_with(&path, |p| write_knowledge(p, &records))?;
    println!(
        "represent: {} {} records ({empty} empty) -> {}",
        records.len(),
        repr.name(),
        path.display()
    );
    Ok(())
}

fn knowledge_by_dialogue(ws: &Workspace, repr: Representation) -> anyhow::Result<HashMap<String, Knowledge>> {
    if repr == Representation::None {
        return Ok(HashMap::new());
    }
    let path = ws.knowledge(repr);
    if !path.exists() {
        bail!("{} not found; run `ldwb represent --repr {}` first", path.display(), repr.name());
    }
    let records = read_knowledge(&path).with_context(|| format!("knowledge {}", path.display()))?;
    let mut map = HashMap::new();
    for r in records {
        if r.knowledge.representation() != repr {
            bail!("{}: dialogue `{}` holds {} knowledge", path.display(), r.dialogue_id, r.knowledge.representation().name());
        }
        if map.insert(r.dialogue_id.clone(), r.knowledge).is_some() {
            bail!("{}: duplicate dialogue `{}`", path.display(), r.dialogue_id);
        }
    }
    Ok(map)
}

pub fn assemble(config: &WorkbenchConfig, ws: &Workspace, repr: Representation, w: usize) -> Outcome {
    if w == 0 {
        return Err(Failure::usage("--window must be at least 1"));
    }
    let pairs = load_pairs(config)?;
    let assignment = read_split(ws)?;
    let knowledge = knowledge_by_dialogue(ws, repr)?;
    let layout = config.layout();
    let by_id: HashMap<&str, &DialoguePair> = pairs.iter().map(|p| (p.dialogue_id.as_str(), p)).collect();
    let dir = ws.inputs_dir(repr, w);
    let mut counts = BTreeMap::new();
    for (name, ids) in SPLITS.iter().zip([&assignment.train, &assignment.valid, &assignment.test]) {
        let mut ids: Vec<&String> = ids.iter().collect();
        ids.sort();
        let mut inputs = Vec::new();
        for id in ids {
            let pair = by_id
                .get(id.as_str())
                .with_context(|| format!("split lists `{id}`, which is not in the corpus"))?;
            let piece = match repr {
                Representation::None => Knowledge::None,
                _ => knowledge
                    .get(id.as_str())
                    .cloned()
                    .with_context(|| format!("no {} knowledge for `{id}`", repr.name()))?,
            };
            for sample in make_samples(pair, window(w)) {
                inputs.push(
                    assemble_input(&sample, &piece, &layout)
                        .with_context(|| format!("sample `{}`", sample.sample_id))?,
                );
            }
        }
        counts.insert(*name, inputs.len());
        write_with(&dir.join(format!("{name}.jsonl")), |p| write_inputs(p, &inputs))?;
    }
    println!(
        "assemble: {} train, {} valid, {} test samples -> {}",
        counts["train"],
        counts["valid"],
        counts["test"],
        dir.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct SubsetManifest<'a> {
    seed: u64,
    train_dialogues: usize,
    subsets: Vec<SubsetEntry<'a>>,
}

#[derive(Serialize)]
struct SubsetEntry<'a> {
    fraction: f64,
    file: String,
    dialogues: usize,
    #[serde(skip)]
    ids: &'a [String],
}

pub fn subset_file_name(fraction: f64) -> String {
    format!("train-{fraction}.txt")
}

pub fn subsets(config: &WorkbenchConfig, ws: &Workspace) -> Outcome {
    let assignment = read_split(ws)?;
    let chain = subset_chain(&assignment.train, &config.subsets.fractions, config.subsets.seed).context("subsets")?;
    let manifest = SubsetManifest {
        seed: config.subsets.seed,
        train_dialogues: assignment.train.len(),
        subsets: config
            .subsets
            .fractions
            .iter()
            .zip(&chain)
            .map(|(&fraction, ids)| SubsetEntry {
                fraction,
                file: subset_file_name(fraction),
                dialogues: ids.len(),
                ids,
            })
            .collect(),
    };
    let dir = ws.subsets_dir();
    for entry in &manifest.subsets {
        write_text(&dir.join(&entry.file), &id_list(entry.ids))?;
    }
    write_json(&dir.join("manifest.json"), &manifest)?;
    let sizes: Vec<String> = manifest
        .subsets
        .iter()
        .map(|e| format!("{}:{}", e.fraction, e.dialogues))
        .collect();
    println!("subsets: {} -> {}", sizes.join(" "), dir.display());
    Ok(())
}
