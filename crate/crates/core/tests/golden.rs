use std::collections::BTreeMap;
use std::path::PathBuf;

use ldwb_core::corpus::{load_corpus, make_samples};
use ldwb_core::knowledge::{
    assemble_input, build_knowledge, build_psg, extract_head_nouns, knowledge_parses, linearize_psg,
    parse_linearized, Knowledge, Layout, PsgOptions,
};
use ldwb_core::syntax::load_parses;
use ldwb_core::{Representation, Role, Segment};
use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(rel)
}

fn read_json(rel: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture(rel)).unwrap()).unwrap()
}

fn read_jsonl(rel: &str) -> Vec<Value> {
    std::fs::read_to_string(fixture(rel))
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn six_token_parse_matches_golden() {
    let parses = load_parses(&fixture("golden/six_token.conllu")).unwrap();
    assert_eq!(parses.len(), 1);
    let tokens = serde_json::to_value(&parses[0].tokens).unwrap();
    assert_eq!(tokens, read_json("golden/six_token.json"));
    assert_eq!(parses[0].root().form, "argued");
}

#[test]
fn head_nouns_on_ten_sentences() {
    let parses = load_parses(&fixture("golden/head_nouns.conllu")).unwrap();
    let expected = read_json("golden/head_nouns.json");
    let cases = expected.as_array().unwrap();
    assert_eq!(parses.len(), 10);
    for (sentence, case) in parses.iter().zip(cases) {
        let got = extract_head_nouns(std::slice::from_ref(sentence)).lemmas;
        let want: Vec<String> = serde_json::from_value(case["head_nouns"].clone()).unwrap();
        assert_eq!(got, want, "{}", case["text"]);
    }
}

#[test]
fn node_merging_on_five_sentences() {
    let parses = load_parses(&fixture("golden/merge.conllu")).unwrap();
    let expected = read_json("golden/merge.json");
    let graph = build_psg(&parses, PsgOptions::default());
    graph.check_invariants().unwrap();
    let nodes: Vec<String> = serde_json::from_value(expected["nodes"].clone()).unwrap();
    assert_eq!(graph.nodes, nodes);
    let events: Vec<(String, Option<String>, Option<String>)> = expected["events"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| {
            serde_json::from_value(serde_json::json!([e["predicate"], e["subject"], e["object"]])).unwrap()
        })
        .collect();
    let got: Vec<_> = graph
        .events
        .iter()
        .map(|e| (e.predicate.clone(), e.subject.clone(), e.object.clone()))
        .collect();
    assert_eq!(got, events);
    let incident: BTreeMap<String, usize> = serde_json::from_value(expected["incident"].clone()).unwrap();
    for (node, n) in incident {
        assert_eq!(graph.incident(&node).count(), n, "{node}");
    }
    let layout = Layout::default();
    let lin = linearize_psg(&graph, &layout.tags);
    assert_eq!(lin.text, expected["linearized"].as_str().unwrap());
    assert_eq!(parse_linearized(&lin.text, &layout.tags).unwrap(), graph);
}

#[test]
fn sample_corpus_representations_match_goldens() {
    let pairs = load_corpus(&fixture("sample/corpus.jsonl")).unwrap();
    let parses = load_parses(&fixture("sample/parses.conllu")).unwrap();
    let layout = Layout::default();
    assert_eq!(pairs.len(), 20);
    for (repr, file) in [
        (Representation::Raw, "golden/sample_raw.jsonl"),
        (Representation::HeadNouns, "golden/sample_boh.jsonl"),
        (Representation::LinearGraph, "golden/sample_psg.jsonl"),
    ] {
        let golden = read_jsonl(file);
        assert_eq!(golden.len(), pairs.len());
        for (pair, want) in pairs.iter().zip(&golden) {
            assert_eq!(want["dialogue_id"], pair.dialogue_id.as_str());
            let k = build_knowledge(pair, &parses, repr, &layout, PsgOptions::default()).unwrap();
            let mut got = serde_json::to_value(&k).unwrap();
            got["dialogue_id"] = pair.dialogue_id.clone().into();
            assert_eq!(&got, want, "{} {}", pair.dialogue_id, repr.name());
        }
    }
}

#[test]
fn sample_graphs_round_trip() {
    let pairs = load_corpus(&fixture("sample/corpus.jsonl")).unwrap();
    let parses = load_parses(&fixture("sample/parses.conllu")).unwrap();
    let tags = Layout::default().tags;
    for pair in &pairs {
        let selected: Vec<_> = knowledge_parses(pair, &parses).into_iter().cloned().collect();
        assert_eq!(selected.len(), 4, "{}", pair.dialogue_id);
        let graph = build_psg(&selected, PsgOptions::default());
        let lin = linearize_psg(&graph, &tags);
        assert_eq!(parse_linearized(&lin.text, &tags).unwrap(), graph);
    }
}

#[test]
fn raw_sample_assembles_to_golden_sequence() {
    let pairs = load_corpus(&fixture("sample/corpus.jsonl")).unwrap();
    let layout = Layout::default();
    let pair = &pairs[0];
    let sample = &make_samples(pair, std::num::NonZeroUsize::new(2).unwrap())[0];
    let k = build_knowledge(pair, &[], Representation::Raw, &layout, PsgOptions::default()).unwrap();
    let seq = assemble_input(sample, &k, &layout).unwrap();

    // Assembled by hand from the first pair of the sample corpus.
    let knowledge = "We met Maria at the park. <brk> My friend gave me a gift. <brk> \
                     Maria's friend was sad. <brk> The park was quiet.";
    let history = "<user> I slept badly again.";
    let texts: Vec<&str> = seq.tokens.iter().map(|t| t.text.as_str()).collect();
    let want: Vec<&str> = knowledge.split_whitespace().chain(history.split_whitespace()).collect();
    assert_eq!(texts, want);
    let n_knowledge = knowledge.split_whitespace().count();
    assert_eq!(seq.segment_len(Segment::Knowledge), n_knowledge);
    assert!(seq.tokens[..n_knowledge].iter().all(|t| t.segment == Segment::Knowledge));
    assert!(seq.tokens[n_knowledge..].iter().all(|t| t.segment == Segment::History));
    assert!(seq.tokens.iter().all(|t| t.role == Role::Other));
    assert_eq!(seq.sample_id, "d000#1");
    assert_eq!(seq.target_text, "That sounds important. What about your friend?");
    assert!(matches!(k, Knowledge::Raw(_)));
}

#[test]
fn layout_fixture_is_the_default_layout() {
    let text = std::fs::read_to_string(fixture("layout.toml")).unwrap();
    let parsed: Layout = toml::from_str(&text).unwrap();
    assert_eq!(parsed, Layout::default());
}
