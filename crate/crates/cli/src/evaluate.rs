//! Subcommands over runner outputs: `eval ppl|bleu|curve` and
//! `attrib positive|significant`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use ldwb_core::attribution::{positive_stats, shares_table, significant_stats, PositiveProfile};
use ldwb_core::corpus::make_samples;
use ldwb_core::interchange::{cross_validate, read_records, AttributionRecord, GenerationRecord, Record, ScoringRecord};
use ldwb_core::knowledge::read_inputs;
use ldwb_core::metrics::{curve_to_tsv, group_generations, learning_curve, perplexity_by_model, similarity_matrix};
use ldwb_core::{InputSequence, Representation, Role};

use crate::config::WorkbenchConfig;
use crate::pipeline::{load_pairs, window};
use crate::workspace::{write_json, write_text, Failure, Outcome, Workspace};

/// Records of several files, unique by (sample, model) across all of them.
pub fn read_all<R: Record + Clone>(files: &[PathBuf]) -> anyhow::Result<Vec<R>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for file in files {
        for row in read_records::<R>(file).with_context(|| format!("{} {}", R::SCHEMA, file.display()))? {
            let key = (row.value.sample_id().to_owned(), row.value.model_id().to_owned());
            if !seen.insert(key) {
                bail!(
                    "{}:{}: sample `{}` of model `{}` already appeared in an earlier file",
                    file.display(),
                    row.line,
                    row.value.sample_id(),
                    row.value.model_id()
                );
            }
            out.push(row.value);
        }
    }
    Ok(out)
}

/// sample id -> target text, over the whole corpus.
pub fn targets(config: &WorkbenchConfig) -> anyhow::Result<BTreeMap<String, String>> {
    let pairs = load_pairs(config)?;
    Ok(pairs
        .iter()
        .flat_map(|p| make_samples(p, window(1)))
        .map(|s| (s.sample_id, s.target.text))
        .collect())
}

fn check_known<R: Record>(records: &[R], known: &BTreeMap<String, String>) -> anyhow::Result<()> {
    if let Some(r) = records.iter().find(|r| !known.contains_key(r.sample_id())) {
        bail!("model `{}` has a record for unknown sample `{}`", r.model_id(), r.sample_id());
    }
    Ok(())
}

fn require_files(files: &[PathBuf], flag: &str) -> Outcome {
    if files.is_empty() {
        return Err(Failure::usage(format!("at least one {flag} file is required")));
    }
    Ok(())
}

pub fn ppl(config: &WorkbenchConfig, ws: &Workspace, scoring: &[PathBuf]) -> Outcome {
    require_files(scoring, "--scoring")?;
    let records: Vec<ScoringRecord> = read_all(scoring)?;
    check_known(&records, &targets(config)?)?;
    let reports = perplexity_by_model(&records).context("perplexity")?;
    let mut tsv = String::from("model\tnll\tppl\ttokens\n");
    for r in &reports {
        writeln!(tsv, "{}\t{:.6}\t{:.6}\t{}", r.model_id, r.nll, r.ppl(), r.n_tokens).unwrap();
    }
    let dir = ws.eval_dir();
    write_text(&dir.join("ppl.tsv"), &tsv)?;
    write_json(&dir.join("ppl.json"), &reports)?;
    print!("{tsv}");
    Ok(())
}

pub fn bleu(config: &WorkbenchConfig, ws: &Workspace, generations: &[PathBuf]) -> Outcome {
    require_files(generations, "--generations")?;
    let records: Vec<GenerationRecord> = read_all(generations)?;
    let truth = targets(config)?;
    check_known(&records, &truth)?;
    let matrix = similarity_matrix(&group_generations(&records), &truth, config.bleu.smoothing, config.bleu.pooling)
        .context("BLEU similarity")?;
    let dir = ws.eval_dir();
    write_text(&dir.join("bleu.tsv"), &matrix.to_tsv())?;
    write_json(&dir.join("bleu.json"), &matrix)?;
    print!("{}", matrix.to_tsv());
    Ok(())
}

pub fn curve(config: &WorkbenchConfig, ws: &Workspace, points: &[(f64, PathBuf)]) -> Outcome {
    if points.is_empty() {
        return Err(Failure::usage("at least one --point FRACTION=FILE is required"));
    }
    let known = targets(config)?;
    let mut reports = Vec::new();
    for (fraction, file) in points {
        let records: Vec<ScoringRecord> = read_all(std::slice::from_ref(file))?;
        check_known(&records, &known)?;
        for report in perplexity_by_model(&records).with_context(|| format!("perplexity of {}", file.display()))? {
            reports.push((*fraction, report));
        }
    }
    let curve = learning_curve(&reports, &config.subsets.fractions).context("learning curve")?;
    let dir = ws.eval_dir();
    write_text(&dir.join("curve.tsv"), &curve_to_tsv(&curve))?;
    write_json(&dir.join("curve.json"), &curve)?;
    print!("{}", curve_to_tsv(&curve));
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttribKind {
    Positive,
    Significant,
}

type Grouped = BTreeMap<(String, Representation), Vec<AttributionRecord>>;

/// Attribution files checked token by token against the inputs they were
/// computed on, grouped by model and representation.
fn aligned(inputs: &[PathBuf], attributions: &[PathBuf]) -> Result<Grouped, Failure> {
    if inputs.is_empty() || inputs.len() != attributions.len() {
        return Err(Failure::usage(format!(
            "--inputs and --attributions must be given in pairs (got {} and {})",
            inputs.len(),
            attributions.len()
        )));
    }
    let mut grouped = Grouped::new();
    let mut seen = HashSet::new();
    for (input, attribution) in inputs.iter().zip(attributions) {
        let sequences = read_inputs(input).with_context(|| format!("inputs {}", input.display()))?;
        let repr = input_repr(input, &sequences)?;
        let rows = read_records::<AttributionRecord>(attribution)
            .with_context(|| format!("attribution {}", attribution.display()))?;
        let records = cross_validate(rows, &sequences)
            .with_context(|| format!("{} against {}", attribution.display(), input.display()))?;
        for r in records {
            if !seen.insert((r.sample_id.clone(), r.model_id.clone(), repr)) {
                return Err(Failure::Data(anyhow::anyhow!(
                    "sample `{}` of model `{}` ({}) is attributed twice",
                    r.sample_id,
                    r.model_id,
                    repr.name()
                )));
            }
            grouped.entry((r.model_id.clone(), repr)).or_default().push(r);
        }
    }
    Ok(grouped)
}

fn input_repr(path: &Path, sequences: &[InputSequence]) -> anyhow::Result<Representation> {
    let first = sequences
        .first()
        .with_context(|| format!("{} holds no input sequences", path.display()))?
        .repr;
    if let Some(other) = sequences.iter().find(|s| s.repr != first) {
        bail!("{} mixes {} and {} inputs", path.display(), first.name(), other.repr.name());
    }
    Ok(first)
}

fn pct(x: Option<&f64>) -> String {
    format!("{:.1}%", 100.0 * x.copied().unwrap_or(0.0))
}

fn positive_table(rows: &[PositiveProfile]) -> String {
    let mut out = String::from("model\trepr\tconsidered\tpositive\tpositive_share\tevent\tparticipant\tupos\n");
    for r in rows {
        let upos: Vec<String> = r.by_upos.iter().map(|(tag, share)| format!("{tag}:{:.3}", share)).collect();
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.model_id,
            r.repr.name(),
            r.considered,
            r.positive,
            pct(Some(&r.positive_fraction)),
            pct(r.by_role.get(&Role::Event)),
            pct(r.by_role.get(&Role::Participant)),
            upos.join(",")
        )
        .unwrap();
    }
    out
}

pub fn attrib(
    config: &WorkbenchConfig,
    ws: &Workspace,
    kind: AttribKind,
    inputs: &[PathBuf],
    attributions: &[PathBuf],
) -> Outcome {
    let grouped = aligned(inputs, attributions)?;
    let dir = ws.attrib_dir();
    let a = &config.attribution;
    let table = match kind {
        AttribKind::Positive => {
            let rows = grouped
                .iter()
                .map(|((model, repr), records)| {
                    positive_stats(records, *repr, a.positive())
                        .with_context(|| format!("model `{model}` ({})", repr.name()))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            write_json(&dir.join("positive.json"), &rows)?;
            let table = positive_table(&rows);
            write_text(&dir.join("positive.tsv"), &table)?;
            table
        }
        AttribKind::Significant => {
            let rows = grouped
                .iter()
                .map(|((model, repr), records)| {
                    significant_stats(records, *repr, a.top_fraction, a.pooling)
                        .with_context(|| format!("model `{model}` ({})", repr.name()))
                })
                .collect::<anyhow::Result<Vec<_>>>()?;
            write_json(&dir.join("significant.json"), &rows)?;
            let table = shares_table(&rows);
            write_text(&dir.join("significant.tsv"), &table)?;
            table
        }
    };
    print!("{table}");
    Ok(())
}
