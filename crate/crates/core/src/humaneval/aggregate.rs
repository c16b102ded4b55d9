use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use super::campaign::{Candidate, Criterion, ErrorLabel, JudgmentRecord, Vote};

/// Strict plurality over the three categories; any tie for first place is
/// resolved to `Unsure`.
pub fn majority_label(votes: &[Vote]) -> Vote {
    let mut counts = [0usize; 3];
    for v in votes {
        counts[v.index()] += 1;
    }
    let best = *counts.iter().max().unwrap_or(&0);
    let winners: Vec<Vote> = Vote::ALL.into_iter().filter(|v| counts[v.index()] == best).collect();
    match winners.as_slice() {
        [single] => *single,
        _ => Vote::Unsure,
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MajorityError {
    #[error("candidate `{candidate_id}` has {found} judgments, expected {expected}")]
    Annotation {
        candidate_id: String,
        found: usize,
        expected: usize,
    },
    #[error("judgment on unknown candidate `{0}`")]
    UnknownCandidate(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MajorityReport {
    /// source -> criterion -> percentage of candidates labeled Positive.
    pub percent_positive: BTreeMap<String, BTreeMap<Criterion, f64>>,
    pub candidates: BTreeMap<String, usize>,
}

impl MajorityReport {
    pub fn row(&self, source: &str) -> Option<String> {
        let cells = self.percent_positive.get(source)?;
        Some(
            Criterion::ALL
                .iter()
                .map(|c| format!("{:.2}%", cells[c]))
                .collect::<Vec<_>>()
                .join(" | "),
        )
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("source\tcorrectness\tappropriateness\tcontextualization\tlistening\tcandidates\n");
        for (source, cells) in &self.percent_positive {
            out.push_str(source);
            for c in Criterion::ALL {
                write!(out, "\t{:.2}", cells[&c]).unwrap();
            }
            writeln!(out, "\t{}", self.candidates[source]).unwrap();
        }
        out
    }
}

fn group_by_candidate<'a>(
    judgments: &'a [JudgmentRecord],
    candidates: &[Candidate],
) -> Result<BTreeMap<String, Vec<&'a JudgmentRecord>>, MajorityError> {
    let mut groups: BTreeMap<String, Vec<&JudgmentRecord>> = candidates
        .iter()
        .map(|c| (c.candidate_id.clone(), Vec::new()))
        .collect();
    for j in judgments {
        groups
            .get_mut(&j.candidate_id)
            .ok_or_else(|| MajorityError::UnknownCandidate(j.candidate_id.clone()))?
            .push(j);
    }
    Ok(groups)
}

/// Majority label per candidate and criterion, reported as the share of
/// Positive-labeled candidates per source.
pub fn aggregate_majority(
    judgments: &[JudgmentRecord],
    candidates: &[Candidate],
    raters_per_item: usize,
) -> Result<MajorityReport, MajorityError> {
    let groups = group_by_candidate(judgments, candidates)?;
    let mut positives: BTreeMap<String, BTreeMap<Criterion, usize>> = BTreeMap::new();
    let mut totals: BTreeMap<String, usize> = BTreeMap::new();
    for c in candidates {
        let group = &groups[&c.candidate_id];
        if group.len() != raters_per_item {
            return Err(MajorityError::Annotation {
                candidate_id: c.candidate_id.clone(),
                found: group.len(),
                expected: raters_per_item,
            });
        }
        *totals.entry(c.source.clone()).or_default() += 1;
        let row = positives.entry(c.source.clone()).or_default();
        for criterion in Criterion::ALL {
            let votes: Vec<Vote> = group.iter().map(|j| j.vote(criterion)).collect();
            *row.entry(criterion).or_default() += usize::from(majority_label(&votes) == Vote::Positive);
        }
    }
    let percent_positive = positives
        .into_iter()
        .map(|(source, row)| {
            let n = totals[&source] as f64;
            let cells = row.into_iter().map(|(c, p)| (c, 100.0 * p as f64 / n)).collect();
            (source, cells)
        })
        .collect();
    Ok(MajorityReport {
        percent_positive,
        candidates: totals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Band {
    Poor,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl Band {
    pub fn of(kappa: f64) -> Band {
        if kappa <= 0.20 {
            Band::Poor
        } else if kappa <= 0.40 {
            Band::Fair
        } else if kappa <= 0.60 {
            Band::Moderate
        } else if kappa <= 0.80 {
            Band::Substantial
        } else {
            Band::AlmostPerfect
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KappaError {
    #[error("no items")]
    Empty,
    #[error("item {item} has {found} ratings, expected {expected}")]
    UnequalRatings {
        item: usize,
        found: usize,
        expected: usize,
    },
    #[error("at least 2 ratings per item are required, got {0}")]
    TooFewRatings(usize),
    #[error("judgment on unknown candidate `{0}`")]
    UnknownCandidate(String),
}

/// Fleiss' kappa over an items x 3 table of category counts.
///
/// Perfect observed agreement scores 1, including the degenerate table where
/// every rating falls in one category and chance agreement is also 1.
pub fn fleiss_kappa(table: &[[usize; 3]]) -> Result<f64, KappaError> {
    let first = table.first().ok_or(KappaError::Empty)?;
    let n = first.iter().sum::<usize>();
    if n < 2 {
        return Err(KappaError::TooFewRatings(n));
    }
    if let Some((item, row)) = table.iter().enumerate().find(|(_, r)| r.iter().sum::<usize>() != n) {
        return Err(KappaError::UnequalRatings {
            item,
            found: row.iter().sum(),
            expected: n,
        });
    }
    let items = table.len() as f64;
    let nf = n as f64;
    let p_bar = table
        .iter()
        .map(|row| {
            let agree: usize = row.iter().map(|c| c * c).sum::<usize>() - n;
            agree as f64 / (nf * (nf - 1.0))
        })
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..3)
        .map(|j| {
            let pj = table.iter().map(|r| r[j]).sum::<usize>() as f64 / (items * nf);
            pj * pj
        })
        .sum();
    if p_bar == 1.0 {
        return Ok(1.0);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub band: Band,
}

impl MeanStd {
    fn of(values: &[f64]) -> Option<MeanStd> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
            band: Band::of(mean),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementReport {
    pub kappa: BTreeMap<String, BTreeMap<Criterion, f64>>,
    pub per_model: BTreeMap<String, Option<MeanStd>>,
    pub per_criterion: BTreeMap<Criterion, Option<MeanStd>>,
}

impl AgreementReport {
    pub fn to_tsv(&self) -> String {
        let ms = |m: &Option<MeanStd>| match m {
            Some(m) => format!("{:.2}±{:.2}", m.mean, m.std),
            None => "-".into(),
        };
        let mut out = String::from("source\tappropriateness\tcontextualization\tcorrectness\tlistening\tper_model\n");
        let columns = [
            Criterion::Appropriateness,
            Criterion::Contextualization,
            Criterion::Correctness,
            Criterion::Listening,
        ];
        for (source, row) in &self.kappa {
            out.push_str(source);
            for c in columns {
                write!(out, "\t{:.2}", row[&c]).unwrap();
            }
            writeln!(out, "\t{}", ms(&self.per_model[source])).unwrap();
        }
        out.push_str("per_criterion");
        for c in columns {
            write!(out, "\t{}", ms(&self.per_criterion[&c])).unwrap();
        }
        out.push_str("\t-\nband");
        for c in columns {
            let band = self.per_criterion[&c].map_or("-".to_owned(), |m| format!("{:?}", m.band));
            write!(out, "\t{band}").unwrap();
        }
        out.push_str("\t-\n");
        out
    }
}

/// Fleiss' kappa per (source, criterion) over that source's candidates,
/// with mean ± std rollups.
pub fn agreement_report(
    judgments: &[JudgmentRecord],
    candidates: &[Candidate],
) -> Result<AgreementReport, KappaError> {
    let by_candidate = group_by_candidate(judgments, candidates).map_err(|e| match e {
        MajorityError::UnknownCandidate(id) => KappaError::UnknownCandidate(id),
        other => unreachable!("grouping only fails on unknown candidates: {other}"),
    })?;
    let mut sources: BTreeMap<&str, Vec<&Candidate>> = BTreeMap::new();
    for c in candidates {
        sources.entry(&c.source).or_default().push(c);
    }
    let mut kappa = BTreeMap::new();
    for (source, cands) in &sources {
        let mut row = BTreeMap::new();
        for criterion in Criterion::ALL {
            let table: Vec<[usize; 3]> = cands
                .iter()
                .map(|c| {
                    let mut counts = [0usize; 3];
                    for j in &by_candidate[&c.candidate_id] {
                        counts[j.vote(criterion).index()] += 1;
                    }
                    counts
                })
                .collect();
            row.insert(criterion, fleiss_kappa(&table)?);
        }
        kappa.insert((*source).to_owned(), row);
    }
    let per_model = kappa
        .iter()
        .map(|(source, row): (&String, &BTreeMap<Criterion, f64>)| {
            let values: Vec<f64> = row.values().copied().collect();
            (source.clone(), MeanStd::of(&values))
        })
        .collect();
    let per_criterion = Criterion::ALL
        .into_iter()
        .map(|c| {
            let values: Vec<f64> = kappa.values().map(|row| row[&c]).collect();
            (c, MeanStd::of(&values))
        })
        .collect();
    Ok(AgreementReport {
        kappa,
        per_model,
        per_criterion,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorDistribution {
    /// Judgments carrying at least one error label.
    pub labeled: usize,
    pub percent: BTreeMap<ErrorLabel, f64>,
}

/// Per source, how often each error label was selected among all judgments
/// (not majority labels) that carry at least one label. Labels are counted
/// independently.
pub fn error_distribution(
    judgments: &[JudgmentRecord],
    candidates: &[Candidate],
) -> BTreeMap<String, ErrorDistribution> {
    let source_of: HashMap<&str, &str> = candidates
        .iter()
        .map(|c| (c.candidate_id.as_str(), c.source.as_str()))
        .collect();
    let mut counts: BTreeMap<String, (usize, BTreeMap<ErrorLabel, usize>)> = candidates
        .iter()
        .map(|c| (c.source.clone(), Default::default()))
        .collect();
    for j in judgments.iter().filter(|j| !j.error_labels.is_empty()) {
        let Some(source) = source_of.get(j.candidate_id.as_str()) else {
            continue;
        };
        let entry = counts.get_mut(*source).expect("source registered");
        entry.0 += 1;
        for label in &j.error_labels {
            *entry.1.entry(*label).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(source, (labeled, by_label))| {
            let percent = ErrorLabel::ALL
                .into_iter()
                .map(|l| {
                    let hits = by_label.get(&l).copied().unwrap_or(0);
                    let pct = if labeled == 0 { 0.0 } else { 100.0 * hits as f64 / labeled as f64 };
                    (l, pct)
                })
                .collect();
            (source, ErrorDistribution { labeled, percent })
        })
        .collect()
}
