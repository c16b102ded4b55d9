mod support;

use ldwb_core::humaneval::fleiss_kappa;
use ldwb_core::interchange::GenerationRecord;
use ldwb_core::metrics::{bleu4, group_generations, similarity_matrix, tokenize, BleuPooling, Smoothing, GROUND_TRUTH};
use ldwb_core::rng::SeededRng;
use support::oracles;

fn words(rng: &mut SeededRng, vocab: usize, len: usize) -> Vec<String> {
    (0..len).map(|_| format!("w{}", rng.below(vocab as u64))).collect()
}

#[test]
fn bleu_matches_textbook_oracle_on_random_pairs() {
    let mut rng = SeededRng::new(41);
    for case in 0..50 {
        let hyp_len = 1 + rng.below(20) as usize;
        let hyp = words(&mut rng, 6, hyp_len);
        let refs: Vec<Vec<String>> = (0..1 + rng.below(3))
            .map(|_| {
                let len = 1 + rng.below(20) as usize;
                words(&mut rng, 6, len)
            })
            .collect();
        for (smoothing, eps) in [(Smoothing::default(), Some(0.1)), (Smoothing::None, None)] {
            let got = bleu4(&hyp, &refs, smoothing).unwrap();
            let want = oracles::bleu(&hyp, &refs, eps);
            assert!((got - want).abs() <= 1e-9, "case {case}: {got} vs {want}");
        }
    }
}

#[test]
fn bleu_closed_forms() {
    let toks = |s: &str| s.split_whitespace().map(String::from).collect::<Vec<_>>();
    for s in ["a", "a b", "a b c", "the cat sat on the mat"] {
        assert_eq!(bleu4(&toks(s), &[toks(s)], Smoothing::None).unwrap(), 1.0);
    }
    // Hypothesis is a prefix of the reference: all precisions are 1, so the
    // score is exactly the brevity penalty.
    let hyp = toks("a b c d e");
    let reference = toks("a b c d e f g h i j");
    assert_eq!(bleu4(&hyp, &[reference], Smoothing::None).unwrap(), (1.0f64 - 10.0 / 5.0).exp());
    // A longer hypothesis is not penalised.
    let hyp = toks("a b c d e f");
    let refs = vec![toks("a b c d e f"), toks("a b c")];
    assert_eq!(bleu4(&hyp, &refs, Smoothing::None).unwrap(), 1.0);
}

#[test]
fn five_token_pair_with_one_shared_bigram() {
    let hyp = tokenize("we went to the park");
    let reference = tokenize("they went to a beach");
    let got = bleu4(&hyp, std::slice::from_ref(&reference), Smoothing::default()).unwrap();
    // unigrams 2/5, bigrams 1/4, trigrams eps/3, 4-grams eps/2, no penalty.
    let want = (2.0f64 / 5.0 * 1.0 / 4.0 * 0.1 / 3.0 * 0.1 / 2.0).powf(0.25);
    assert!((got - want).abs() < 1e-12);
    assert!((got - oracles::bleu(&hyp, &[reference], Some(0.1))).abs() < 1e-12);
}

#[test]
fn similarity_matrix_on_three_samples() {
    let gen = |model: &str, sample: &str, text: &str| GenerationRecord {
        sample_id: sample.into(),
        model_id: model.into(),
        response_text: text.into(),
    };
    let rows = vec![
        gen("m1", "s1", "How is your sister doing?"),
        gen("m1", "s2", "Did you sleep well?"),
        gen("m1", "s3", "Tell me more about work."),
        gen("m2", "s1", "How is your sister?"),
        gen("m2", "s2", "Did you sleep better last night?"),
        gen("m2", "s3", "How was work today?"),
    ];
    let truth = [
        ("s1", "How are things with your sister?"),
        ("s2", "Did you sleep well last night?"),
        ("s3", "How did work go this week?"),
    ];
    let mut truth_rows = Vec::new();
    for (s, t) in truth {
        truth_rows.push(gen(GROUND_TRUTH, s, t));
    }
    let sets = group_generations(&rows);
    let truth_sets = group_generations(&truth_rows)[GROUND_TRUTH].clone();
    let matrix = similarity_matrix(&sets, &truth_sets, Smoothing::default(), BleuPooling::Sentence).unwrap();
    assert_eq!(matrix.labels, vec!["m1", "m2", GROUND_TRUTH]);

    let mut all = group_generations(&rows);
    all.insert(GROUND_TRUTH.into(), truth_sets);
    for a in &matrix.labels {
        for b in &matrix.labels {
            let want = ["s1", "s2", "s3"]
                .iter()
                .map(|s| oracles::bleu(&tokenize(&all[a][*s]), &[tokenize(&all[b][*s])], Some(0.1)))
                .sum::<f64>()
                / 3.0;
            let got = matrix.cell(a, b).unwrap();
            assert!((got - want).abs() < 1e-12, "{a} vs {b}: {got} {want}");
        }
    }
    assert_eq!(matrix.cell("m1", "m1"), Some(1.0));
}

#[test]
fn fleiss_matches_oracle_on_random_tables() {
    let mut rng = SeededRng::new(5);
    for _ in 0..300 {
        let raters = 2 + rng.below(8) as usize;
        let items = 1 + rng.below(30) as usize;
        let table: Vec<[usize; 3]> = (0..items)
            .map(|_| {
                let mut row = [0; 3];
                for _ in 0..raters {
                    row[rng.below(3) as usize] += 1;
                }
                row
            })
            .collect();
        let got = fleiss_kappa(&table).unwrap();
        let want = oracles::fleiss(&table.iter().map(|r| r.to_vec()).collect::<Vec<_>>());
        assert!((got - want).abs() < 1e-12, "{table:?}");
    }
}
