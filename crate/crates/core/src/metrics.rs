//! Automatic evaluation: perplexity, BLEU-4 similarity and learning curves.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::interchange::{GenerationRecord, ScoringRecord};

/// Label of the reference responses in a similarity matrix.
pub const GROUND_TRUTH: &str = "GroundTruth";

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("no scoring records")]
    Empty,
    #[error("records mix models `{0}` and `{1}`")]
    MixedModels(String, String),
    #[error("empty hypothesis")]
    EmptyHypothesis,
    #[error("no non-empty reference")]
    NoReference,
    #[error("smoothing epsilon must lie in (0, 1], got {0}")]
    BadEpsilon(f64),
    #[error("similarity matrix needs at least 2 labels, got {0}")]
    TooFewLabels(usize),
    #[error("labels `{0}` and `{1}` share no sample")]
    NoSharedSamples(String, String),
    #[error("model id `{0}` is reserved")]
    ReservedLabel(String),
    #[error("duplicate point for model `{model}` at fraction {fraction}")]
    DuplicatePoint { model: String, fraction: f64 },
    #[error("model `{model}` has no point at fraction {fraction}")]
    MissingFraction { model: String, fraction: f64 },
    #[error("fraction {0} is not part of the subset chain")]
    UnexpectedFraction(f64),
}

/// Mean per-token NLL (nats) of one model. Perplexity is derived from it.
#[derive(Debug, Clone, PartialEq)]
pub struct PerplexityReport {
    pub model_id: String,
    pub nll: f64,
    pub n_tokens: usize,
}

impl PerplexityReport {
    pub fn ppl(&self) -> f64 {
        self.nll.exp()
    }
}

#[derive(Serialize)]
struct PerplexityRow<'a> {
    model_id: &'a str,
    nll: f64,
    ppl: f64,
    n_tokens: usize,
}

impl Serialize for PerplexityReport {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        PerplexityRow {
            model_id: &self.model_id,
            nll: self.nll,
            ppl: self.ppl(),
            n_tokens: self.n_tokens,
        }
        .serialize(serializer)
    }
}

/// Compensated sum of values sorted ascending, so the result does not depend
/// on input order or grouping.
fn stable_sum(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Token-level (micro) average NLL over all records of one model.
pub fn perplexity(records: &[ScoringRecord]) -> Result<PerplexityReport, MetricsError> {
    let first = records.first().ok_or(MetricsError::Empty)?;
    if let Some(other) = records.iter().find(|r| r.model_id != first.model_id) {
        return Err(MetricsError::MixedModels(first.model_id.clone(), other.model_id.clone()));
    }
    let values: Vec<f64> = records.iter().flat_map(|r| r.token_nll.iter().copied()).collect();
    if values.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n_tokens = values.len();
    Ok(PerplexityReport {
        model_id: first.model_id.clone(),
        nll: stable_sum(values) / n_tokens as f64,
        n_tokens,
    })
}

/// Per-model reports, keyed by model id.
pub fn perplexity_by_model(records: &[ScoringRecord]) -> Result<Vec<PerplexityReport>, MetricsError> {
    let mut groups: BTreeMap<&str, Vec<ScoringRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.model_id).or_default().push(r.clone());
    }
    if groups.is_empty() {
        return Err(MetricsError::Empty);
    }
    groups.values().map(|g| perplexity(g)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Smoothing {
    /// Any zero n-gram match count yields a score of 0.
    None,
    /// Zero match counts are replaced by `epsilon`.
    AddEpsilon { epsilon: f64 },
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::AddEpsilon { epsilon: 0.1 }
    }
}

impl Smoothing {
    pub fn validate(self) -> Result<Self, MetricsError> {
        match self {
            Smoothing::AddEpsilon { epsilon } if !(epsilon > 0.0 && epsilon <= 1.0) => {
                Err(MetricsError::BadEpsilon(epsilon))
            }
            s => Ok(s),
        }
    }
}

/// Lowercases, splits on whitespace and detaches every character that is
/// neither alphanumeric nor whitespace as a token of its own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.to_lowercase().split_whitespace() {
        let mut word = String::new();
        for c in chunk.chars() {
            if c.is_alphanumeric() {
                word.push(c);
            } else {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(c.to_string());
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    for w in tokens.windows(n) {
        *counts
            .entry(w.iter().map(AsRef::as_ref).collect::<Vec<&str>>())
            .or_insert(0) += 1;
    }
    counts
}

/// Sufficient statistics of one hypothesis against its references.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BleuStats {
    matches: [usize; MAX_ORDER],
    totals: [usize; MAX_ORDER],
    hyp_len: usize,
    ref_len: usize,
}

impl BleuStats {
    fn add(&mut self, other: &BleuStats) {
        for n in 0..MAX_ORDER {
            self.matches[n] += other.matches[n];
            self.totals[n] += other.totals[n];
        }
        self.hyp_len += other.hyp_len;
        self.ref_len += other.ref_len;
    }

    /// Geometric mean over the orders that have hypothesis n-grams, times
    /// the brevity penalty.
    fn score(&self, smoothing: Smoothing) -> f64 {
        let orders = self.totals.iter().take_while(|&&t| t > 0).count();
        if orders == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..orders {
            let matched = match (self.matches[n], smoothing) {
                (0, Smoothing::None) => return 0.0,
                (0, Smoothing::AddEpsilon { epsilon }) => epsilon,
                (m, _) => m as f64,
            };
            log_sum += (matched / self.totals[n] as f64).ln();
        }
        let bp = (1.0 - self.ref_len as f64 / self.hyp_len as f64).min(0.0).exp();
        bp * (log_sum / orders as f64).exp()
    }
}

fn bleu_stats<S: AsRef<str>>(hypothesis: &[S], references: &[Vec<S>]) -> Result<BleuStats, MetricsError> {
    if hypothesis.is_empty() {
        return Err(MetricsError::EmptyHypothesis);
    }
    let refs: Vec<&Vec<S>> = references.iter().filter(|r| !r.is_empty()).collect();
    if refs.is_empty() {
        return Err(MetricsError::NoReference);
    }
    let c = hypothesis.len();
    // Closest reference length; ties go to the shorter reference.
    let ref_len = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .expect("non-empty");
    let mut stats = BleuStats {
        hyp_len: c,
        ref_len,
        ..Default::default()
    };
    for n in 1..=MAX_ORDER.min(c) {
        let hyp = ngram_counts(hypothesis, n);
        let mut max_ref: HashMap<Vec<&str>, usize> = HashMap::new();
        for r in &refs {
            for (gram, count) in ngram_counts(r, n) {
                let slot = max_ref.entry(gram).or_insert(0);
                *slot = (*slot).max(count);
            }
        }
        stats.matches[n - 1] = hyp
            .iter()
            .map(|(gram, &count)| count.min(max_ref.get(gram).copied().unwrap_or(0)))
            .sum();
        stats.totals[n - 1] = c + 1 - n;
    }
    Ok(stats)
}

/// Sentence-level BLEU-4: clipped n-gram precisions for n = 1..4 combined
/// by geometric mean, times `exp(min(0, 1 - r/c))`.
///
/// A hypothesis shorter than four tokens is scored over the orders it has
/// n-grams for, so `bleu4(x, [x]) == 1` for every non-empty `x`.
pub fn bleu4<S: AsRef<str>>(
    hypothesis: &[S],
    references: &[Vec<S>],
    smoothing: Smoothing,
) -> Result<f64, MetricsError> {
    let smoothing = smoothing.validate()?;
    Ok(bleu_stats(hypothesis, references)?.score(smoothing))
}

/// Corpus-level BLEU-4: statistics are pooled over all pairs before scoring.
pub fn corpus_bleu4<S: AsRef<str>>(
    pairs: &[(Vec<S>, Vec<Vec<S>>)],
    smoothing: Smoothing,
) -> Result<f64, MetricsError> {
    let smoothing = smoothing.validate()?;
    let mut pooled = BleuStats::default();
    for (hyp, refs) in pairs {
        pooled.add(&bleu_stats(hyp, refs)?);
    }
    if pooled.hyp_len == 0 {
        return Err(MetricsError::EmptyHypothesis);
    }
    Ok(pooled.score(smoothing))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BleuPooling {
    /// Mean of sentence-level scores.
    #[default]
    Sentence,
    /// Statistics pooled over the shared samples.
    Corpus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrix {
    pub labels: Vec<String>,
    /// `cells[a][b]`: mean BLEU-4 of label a's responses scored against
    /// label b's responses as references.
    pub cells: Vec<Vec<f64>>,
    pub shared: Vec<Vec<usize>>,
}

impl SimilarityMatrix {
    pub fn cell(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.labels.iter().position(|l| l == a)?;
        let j = self.labels.iter().position(|l| l == b)?;
        Some(self.cells[i][j])
    }

    /// Tab-separated table, rows are hypotheses and columns references.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("hypothesis\\reference");
        for l in &self.labels {
            write!(out, "\t{l}").unwrap();
        }
        out.push('\n');
        for (label, row) in self.labels.iter().zip(&self.cells) {
            out.push_str(label);
            for v in row {
                write!(out, "\t{v:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// model id -> sample id -> response text.
pub type ResponseSets = BTreeMap<String, BTreeMap<String, String>>;

pub fn group_generations(records: &[GenerationRecord]) -> ResponseSets {
    let mut sets = ResponseSets::new();
    for r in records {
        sets.entry(r.model_id.clone())
            .or_default()
            .insert(r.sample_id.clone(), r.response_text.clone());
    }
    sets
}

/// Pairwise BLEU-4 among model response sets and the ground truth (last
/// label). Responses are tokenized with [`tokenize`].
pub fn similarity_matrix(
    generations: &ResponseSets,
    ground_truth: &BTreeMap<String, String>,
    smoothing: Smoothing,
    pooling: BleuPooling,
) -> Result<SimilarityMatrix, MetricsError> {
    if generations.contains_key(GROUND_TRUTH) {
        return Err(MetricsError::ReservedLabel(GROUND_TRUTH.into()));
    }
    let mut sets: Vec<(&str, BTreeMap<&str, Vec<String>>)> = generations
        .iter()
        .map(|(model, responses)| {
            let toks = responses.iter().map(|(s, t)| (s.as_str(), tokenize(t))).collect();
            (model.as_str(), toks)
        })
        .collect();
    sets.push((
        GROUND_TRUTH,
        ground_truth.iter().map(|(s, t)| (s.as_str(), tokenize(t))).collect(),
    ));
    if sets.len() < 2 {
        return Err(MetricsError::TooFewLabels(sets.len()));
    }
    let k = sets.len();
    let mut cells = vec![vec![0.0; k]; k];
    let mut shared = vec![vec![0usize; k]; k];
    for (i, (label_a, a)) in sets.iter().enumerate() {
        for (j, (label_b, b)) in sets.iter().enumerate() {
            let pairs: Vec<(Vec<String>, Vec<Vec<String>>)> = a
                .iter()
                .filter_map(|(sample, hyp)| b.get(sample).map(|r| (hyp.clone(), vec![r.clone()])))
                .collect();
            if pairs.is_empty() {
                return Err(MetricsError::NoSharedSamples((*label_a).into(), (*label_b).into()));
            }
            shared[i][j] = pairs.len();
            cells[i][j] = match pooling {
                BleuPooling::Sentence => {
                    let scores = pairs
                        .iter()
                        .map(|(h, r)| bleu4(h, r, smoothing))
                        .collect::<Result<Vec<_>, _>>()?;
                    stable_sum(scores) / pairs.len() as f64
                }
                BleuPooling::Corpus => corpus_bleu4(&pairs, smoothing)?,
            };
        }
    }
    Ok(SimilarityMatrix {
        labels: sets.iter().map(|(l, _)| (*l).to_owned()).collect(),
        cells,
        shared,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurvePoint {
    pub fraction: f64,
    pub nll: f64,
    pub ppl: f64,
}

/// model id -> points sorted by training fraction.
pub type LearningCurve = BTreeMap<String, Vec<CurvePoint>>;

fn same_fraction(a: f64, b: f64) -> bool {
    (a - b).abs() < 1e-9
}

/// Assembles per-model perplexity series over the subset-chain fractions.
/// Every model must have exactly one report per fraction.
pub fn learning_curve(
    reports: &[(f64, PerplexityReport)],
    fractions: &[f64],
) -> Result<LearningCurve, MetricsError> {
    let mut curve = LearningCurve::new();
    for (fraction, report) in reports {
        let fraction = *fractions
            .iter()
            .find(|f| same_fraction(**f, *fraction))
            .ok_or(MetricsError::UnexpectedFraction(*fraction))?;
        let series = curve.entry(report.model_id.clone()).or_default();
        if series.iter().any(|p| same_fraction(p.fraction, fraction)) {
            return Err(MetricsError::DuplicatePoint {
                model: report.model_id.clone(),
                fraction,
            });
        }
        series.push(CurvePoint {
            fraction,
            nll: report.nll,
            ppl: report.ppl(),
        });
    }
    for (model, series) in &mut curve {
        if let Some(&fraction) = fractions
            .iter()
            .find(|f| !series.iter().any(|p| same_fraction(p.fraction, **f)))
        {
            return Err(MetricsError::MissingFraction {
                model: model.clone(),
                fraction,
            });
        }
        series.sort_by(|a, b| a.fraction.total_cmp(&b.fraction));
    }
    Ok(curve)
}

pub fn curve_to_tsv(curve: &LearningCurve) -> String {
    let mut out = String::from("model\tfraction\tnll\tppl\n");
    for (model, series) in curve {
        for p in series {
            writeln!(out, "{model}\t{}\t{:.6}\t{:.6}", p.fraction, p.nll, p.ppl).unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scoring(model: &str, nll: &[f64]) -> ScoringRecord {
        ScoringRecord {
            sample_id: format!("s{}", nll.len()),
            model_id: model.into(),
            target_tokens: nll.iter().map(|_| "t".to_owned()).collect(),
            token_nll: nll.to_vec(),
        }
    }

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    #[test]
    fn perplexity_closed_forms() {
        let zero = perplexity(&[scoring("m", &[0.0, 0.0, 0.0])]).unwrap();
        assert_eq!((zero.nll, zero.ppl()), (0.0, 1.0));
        let two = perplexity(&[scoring("m", &[1.0, 3.0])]).unwrap();
        assert_eq!(two.nll, 2.0);
        assert!((two.ppl() - 7.38905609893065).abs() < 1e-12);
    }

    #[test]
    fn perplexity_micro_averages() {
        let r = perplexity(&[scoring("m", &[1.0]), scoring("m", &[2.0, 3.0, 6.0])]).unwrap();
        assert_eq!(r.nll, 3.0);
        assert_eq!(r.n_tokens, 4);
    }

    #[test]
    fn perplexity_errors() {
        assert_eq!(perplexity(&[]), Err(MetricsError::Empty));
        assert!(matches!(
            perplexity(&[scoring("a", &[1.0]), scoring("b", &[1.0])]),
            Err(MetricsError::MixedModels(..))
        ));
    }

    #[test]
    fn table_one_pair_is_consistent() {
        // nll printed with two decimals, so the underlying value lies in
        // [2.755, 2.765) and exp of it brackets 15.84.
        let ppl = PerplexityReport {
            model_id: "m".into(),
            nll: 2.76,
            n_tokens: 1,
        }
        .ppl();
        assert!((ppl - 15.80).abs() < 0.005, "{ppl}");
        assert!(((ppl - 15.84) / 15.84).abs() < 0.005);
        assert!((2.755f64.exp()..2.765f64.exp()).contains(&15.84));
    }

    #[test]
    fn bleu_identity_and_brevity() {
        let x = toks("the cat sat on the mat today");
        assert_eq!(bleu4(&x, &[x.clone()], Smoothing::default()).unwrap(), 1.0);
        let single = toks("hi");
        assert_eq!(bleu4(&single, &[single.clone()], Smoothing::None).unwrap(), 1.0);

        let reference = toks("a b c d e f g h");
        let hyp = toks("a b c d");
        let score = bleu4(&hyp, &[reference], Smoothing::default()).unwrap();
        assert!((score - (-1.0f64).exp()).abs() < 1e-15, "{score}");
    }

    #[test]
    fn bleu_smoothing_and_errors() {
        let hyp = toks("a b c d e");
        let reference = toks("x a b y z");
        assert_eq!(bleu4(&hyp, &[reference.clone()], Smoothing::None).unwrap(), 0.0);
        let s = bleu4(&hyp, &[reference.clone()], Smoothing::default()).unwrap();
        assert!(s > 0.0 && s < 1.0);
        let empty: Vec<String> = vec![];
        assert_eq!(bleu4(&empty, &[reference.clone()], Smoothing::None), Err(MetricsError::EmptyHypothesis));
        assert_eq!(bleu4(&hyp, &[empty], Smoothing::None), Err(MetricsError::NoReference));
        assert!(bleu4(&hyp, &[reference], Smoothing::AddEpsilon { epsilon: 0.0 }).is_err());
    }

    #[test]
    fn bleu_reference_order_invariance() {
        let hyp = toks("the dog ran to the park");
        let r1 = toks("the dog ran");
        let r2 = toks("a dog ran to a park quickly");
        let a = bleu4(&hyp, &[r1.clone(), r2.clone()], Smoothing::default()).unwrap();
        let b = bleu4(&hyp, &[r2, r1], Smoothing::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tokenizer_detaches_punctuation() {
        assert_eq!(tokenize("Hello, World!  It's"), ["hello", ",", "world", "!", "it", "'", "s"]);
    }

    #[test]
    fn similarity_of_identical_models() {
        let mut gens = ResponseSets::new();
        let responses: BTreeMap<String, String> =
            [("s1", "how are you"), ("s2", "tell me more")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
        gens.insert("a".into(), responses.clone());
        gens.insert("b".into(), responses.clone());
        let m = similarity_matrix(&gens, &responses, Smoothing::default(), BleuPooling::Sentence).unwrap();
        assert_eq!(m.labels, ["a", "b", GROUND_TRUTH]);
        assert!(m.cells.iter().flatten().all(|&v| v == 1.0));
        let c = similarity_matrix(&gens, &responses, Smoothing::default(), BleuPooling::Corpus).unwrap();
        assert!(c.cells.iter().flatten().all(|&v| v == 1.0));
    }

    #[test]
    fn similarity_requires_shared_samples() {
        let mut gens = ResponseSets::new();
        gens.insert("a".into(), [("s1".to_string(), "x".to_string())].into());
        let gt = [("s2".to_string(), "y".to_string())].into();
        assert!(matches!(
            similarity_matrix(&gens, &gt, Smoothing::default(), BleuPooling::Sentence),
            Err(MetricsError::NoSharedSamples(..))
        ));
    }

    fn report(model: &str, nll: f64) -> PerplexityReport {
        PerplexityReport {
            model_id: model.into(),
            nll,
            n_tokens: 10,
        }
    }

    #[test]
    fn learning_curve_orders_points() {
        let fractions = [0.25, 0.5, 0.75, 1.0];
        let reports: Vec<_> = [1.0, 0.25, 0.75, 0.5]
            .iter()
            .map(|&f| (f, report("m", 4.0 - f)))
            .collect();
        let curve = learning_curve(&reports, &fractions).unwrap();
        let xs: Vec<f64> = curve["m"].iter().map(|p| p.fraction).collect();
        assert_eq!(xs, fractions);

        let mut dup = reports.clone();
        dup.push((0.5, report("m", 1.0)));
        assert!(matches!(learning_curve(&dup, &fractions), Err(MetricsError::DuplicatePoint { .. })));
        assert!(matches!(
            learning_curve(&reports[..3], &fractions),
            Err(MetricsError::MissingFraction { .. })
        ));
    }
}
