//! Personal-knowledge representations built from the user's first-session
//! turns, and assembly of model input sequences.
//!
//! Three representations are supported:
//!
//! * raw text: user turns joined with a separator token;
//! * bag of head nouns: lemmas of nouns that head their noun phrase;
//! * personal space graph: verbs are events, their subject/object
//!   dependents are participants; the graph is fed to models through a
//!   tagged linearization (`[E] call [S] maria [O] doctor`).

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{DialoguePair, GroundedSample, SessionIndex, Speaker};
use crate::jsonl::{self, HeaderPolicy, JsonlError, SchemaHeader};
use crate::syntax::{ParsedSentence, ParsedToken};

pub const INPUTS_SCHEMA: &str = "inputs";
pub const INPUTS_VERSION: u32 = 1;
pub const KNOWLEDGE_SCHEMA: &str = "knowledge";
pub const KNOWLEDGE_VERSION: u32 = 1;

const NOUN_TAGS: [&str; 2] = ["NOUN", "PROPN"];
const SUBJECT_RELS: [&str; 2] = ["nsubj", "nsubj:pass"];
const OBJECT_RELS: [&str; 2] = ["obj", "iobj"];

#[derive(Debug, Error, PartialEq)]
pub enum KnowledgeError {
    #[error("the first session has no user turn")]
    NoUserTurns,
    #[error("layout: {0}")]
    Layout(String),
    #[error("sample `{0}` has an empty history")]
    EmptyHistory(String),
    #[error("linearized graph: {0}")]
    Linearization(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GraphTags {
    pub event: String,
    pub subject: String,
    pub object: String,
}

impl Default for GraphTags {
    fn default() -> Self {
        Self {
            event: "[E]".into(),
            subject: "[S]".into(),
            object: "[O]".into(),
        }
    }
}

/// Reserved-token conventions shared by knowledge building and assembly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Layout {
    /// Token placed between consecutive user turns in raw knowledge.
    pub separator: String,
    pub user_marker: String,
    pub agent_marker: String,
    pub tags: GraphTags,
}

impl Default for Layout {
    fn default() -> Self {
        Self {
            separator: "<brk>".into(),
            user_marker: "<user>".into(),
            agent_marker: "<agent>".into(),
            tags: GraphTags::default(),
        }
    }
}

fn is_single_token(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(char::is_whitespace)
}

/// Labels of the form `[X]` are reserved for structural tags.
fn is_tag_shaped(s: &str) -> bool {
    s.len() >= 2 && s.starts_with('[') && s.ends_with(']')
}

impl Layout {
    pub fn validate(&self) -> Result<(), KnowledgeError> {
        let bad = |m: &str| Err(KnowledgeError::Layout(m.to_owned()));
        if !is_single_token(&self.user_marker) || !is_single_token(&self.agent_marker) {
            return bad("speaker markers must be non-empty single tokens");
        }
        if self.user_marker == self.agent_marker {
            return bad("user and agent markers must differ");
        }
        if !is_single_token(&self.separator) {
            return bad("separator must be a non-empty single token");
        }
        let tags = [&self.tags.event, &self.tags.subject, &self.tags.object];
        if tags.iter().any(|t| !is_single_token(t) || !is_tag_shaped(t)) {
            return bad("graph tags must be single tokens of the form `[X]`");
        }
        if tags[0] == tags[1] || tags[0] == tags[2] || tags[1] == tags[2] {
            return bad("graph tags must be distinct");
        }
        Ok(())
    }

    fn marker(&self, speaker: Speaker) -> &str {
        match speaker {
            Speaker::User => &self.user_marker,
            Speaker::Agent => &self.agent_marker,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawKnowledge {
    pub text: String,
    pub token_count: usize,
}

/// User turns of the first session, in order, joined by the separator.
pub fn build_raw(first: &crate::Session, separator: &str) -> Result<RawKnowledge, KnowledgeError> {
    let turns: Vec<&str> = first.user_turns().map(|t| t.text.trim()).collect();
    if turns.is_empty() {
        return Err(KnowledgeError::NoUserTurns);
    }
    let text = turns.join(&format!(" {separator} "));
    let token_count = text.split_whitespace().count();
    Ok(RawKnowledge { text, token_count })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadNounKnowledge {
    pub lemmas: Vec<String>,
}

/// Lowercased lemma with the surface form as fallback for `_` lemmas;
/// whitespace inside a lemma becomes `_` so labels stay single tokens.
fn label_of(token: &ParsedToken) -> String {
    let base = if token.lemma.is_empty() || token.lemma == "_" {
        &token.form
    } else {
        &token.lemma
    };
    base.split_whitespace()
        .collect::<Vec<_>>()
        .join("_")
        .to_lowercase()
}

fn is_noun(token: &ParsedToken) -> bool {
    NOUN_TAGS.contains(&token.upos.as_str())
}

/// Nouns not governed by another noun, deduplicated in first-occurrence order.
pub fn extract_head_nouns(parses: &[ParsedSentence]) -> HeadNounKnowledge {
    let mut seen = HashSet::new();
    let mut lemmas = Vec::new();
    for sentence in parses {
        for token in &sentence.tokens {
            if !is_noun(token) || sentence.governor(token).is_some_and(is_noun) {
                continue;
            }
            let label = label_of(token);
            if !label.is_empty() && seen.insert(label.clone()) {
                lemmas.push(label);
            }
        }
    }
    HeadNounKnowledge { lemmas }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub predicate: String,
    pub subject: Option<String>,
    pub object: Option<String>,
    /// Rank of the event's first mention.
    pub occurrence: usize,
}

impl Event {
    #[cfg(test)]
    fn key(&self) -> (&str, Option<&str>, Option<&str>) {
        (&self.predicate, self.subject.as_deref(), self.object.as_deref())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonalSpaceGraph {
    /// Participant labels in order of first appearance.
    pub nodes: Vec<String>,
    pub events: Vec<Event>,
}

impl PersonalSpaceGraph {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events incident to a participant.
    pub fn incident<'a>(&'a self, node: &'a str) -> impl Iterator<Item = &'a Event> + 'a {
        self.events.iter().filter(move |e| {
            e.subject.as_deref() == Some(node) || e.object.as_deref() == Some(node)
        })
    }

    pub fn check_invariants(&self) -> Result<(), String> {
        let nodes: HashSet<&str> = self.nodes.iter().map(String::as_str).collect();
        if nodes.len() != self.nodes.len() {
            return Err("duplicate node label".into());
        }
        for (rank, e) in self.events.iter().enumerate() {
            if e.occurrence != rank {
                return Err(format!("event {rank} has occurrence {}", e.occurrence));
            }
            if e.subject.is_none() && e.object.is_none() {
                return Err(format!("event `{}` has no participant", e.predicate));
            }
            for p in [&e.subject, &e.object].into_iter().flatten() {
                if !nodes.contains(p.as_str()) {
                    return Err(format!("participant `{p}` is not a node"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParticipantMode {
    /// Participant label is the dependent's lemma.
    #[default]
    Lemma,
    /// Participant label is the dependent's whole subtree, `_`-joined.
    Subtree,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventMode {
    /// Events with a single participant are kept.
    #[default]
    AllowSingle,
    /// Only events with both a subject and an object are kept.
    RequireBoth,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PsgOptions {
    pub participants: ParticipantMode,
    pub events: EventMode,
}

fn participant_label(sentence: &ParsedSentence, token: &ParsedToken, mode: ParticipantMode) -> Option<String> {
    let label = match mode {
        ParticipantMode::Lemma => label_of(token),
        ParticipantMode::Subtree => sentence
            .subtree(token.index)
            .into_iter()
            .filter_map(|i| sentence.token(i))
            .map(|t| t.form.split_whitespace().collect::<Vec<_>>().join("_").to_lowercase())
            .filter(|f| !f.is_empty())
            .collect::<Vec<_>>()
            .join("_"),
    };
    (!label.is_empty() && !is_tag_shaped(&label)).then_some(label)
}

/// Events are verbs with their first subject and first object dependent
/// (by position); participants merge across sentences by label identity and
/// repeated identical events keep their first mention.
pub fn build_psg(parses: &[ParsedSentence], options: PsgOptions) -> PersonalSpaceGraph {
    let mut graph = PersonalSpaceGraph::default();
    let mut seen_events = HashSet::new();
    let mut seen_nodes = HashSet::new();
    for sentence in parses {
        for verb in sentence.tokens.iter().filter(|t| t.upos == "VERB") {
            let predicate = label_of(verb);
            if predicate.is_empty() || is_tag_shaped(&predicate) {
                continue;
            }
            let pick = |rels: &[&str]| {
                sentence
                    .dependents(verb.index)
                    .filter(|d| rels.contains(&d.deprel.as_str()))
                    .find_map(|d| participant_label(sentence, d, options.participants))
            };
            let subject = pick(&SUBJECT_RELS);
            let object = pick(&OBJECT_RELS);
            let keep = match options.events {
                EventMode::AllowSingle => subject.is_some() || object.is_some(),
                EventMode::RequireBoth => subject.is_some() && object.is_some(),
            };
            if !keep {
                continue;
            }
            let event = Event {
                predicate,
                subject,
                object,
                occurrence: graph.events.len(),
            };
            let key = (
                event.predicate.clone(),
                event.subject.clone(),
                event.object.clone(),
            );
            if !seen_events.insert(key) {
                continue;
            }
            for p in [&event.subject, &event.object].into_iter().flatten() {
                if seen_nodes.insert(p.clone()) {
                    graph.nodes.push(p.clone());
                }
            }
            graph.events.push(event);
        }
    }
    graph
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedGraph {
    pub text: String,
    /// Whitespace-token indices of structural tags.
    pub tag_positions: Vec<usize>,
}

pub fn linearize_psg<'a>(graph: &'a PersonalSpaceGraph, tags: &'a GraphTags) -> LinearizedGraph {
    let mut tokens: Vec<&'a str> = Vec::new();
    let mut tag_positions = Vec::new();
    let mut push_tag = |tokens: &mut Vec<&'a str>, tag: &'a str| {
        tag_positions.push(tokens.len());
        tokens.push(tag);
    };
    let mut events: Vec<&Event> = graph.events.iter().collect();
    events.sort_by_key(|e| e.occurrence);
    for e in events {
        push_tag(&mut tokens, &tags.event);
        tokens.extend(e.predicate.split_whitespace());
        if let Some(s) = &e.subject {
            push_tag(&mut tokens, &tags.subject);
            tokens.extend(s.split_whitespace());
        }
        if let Some(o) = &e.object {
            push_tag(&mut tokens, &tags.object);
            tokens.extend(o.split_whitespace());
        }
    }
    LinearizedGraph {
        text: tokens.join(" "),
        tag_positions,
    }
}

/// Inverse of [`linearize_psg`]: rebuilds the event list and node set.
pub fn parse_linearized(text: &str, tags: &GraphTags) -> Result<PersonalSpaceGraph, KnowledgeError> {
    #[derive(Clone, Copy, PartialEq)]
    enum Slot {
        Predicate,
        Subject,
        Object,
    }
    let err = |m: String| KnowledgeError::Linearization(m);
    let mut events: Vec<Event> = Vec::new();
    let mut slot: Option<Slot> = None;
    let mut buf: Vec<&str> = Vec::new();

    fn flush(events: &mut [Event], slot: Option<Slot>, buf: &mut Vec<&str>) -> Result<(), KnowledgeError> {
        let Some(slot) = slot else { return Ok(()) };
        if buf.is_empty() {
            return Err(KnowledgeError::Linearization("tag without label".into()));
        }
        let label = buf.join(" ");
        buf.clear();
        let event = events.last_mut().expect("slot implies an open event");
        match slot {
            Slot::Predicate => event.predicate = label,
            Slot::Subject => event.subject = Some(label),
            Slot::Object => event.object = Some(label),
        }
        Ok(())
    }

    for token in text.split_whitespace() {
        let next = if token == tags.event {
            Some(Slot::Predicate)
        } else if token == tags.subject {
            Some(Slot::Subject)
        } else if token == tags.object {
            Some(Slot::Object)
        } else {
            None
        };
        match next {
            None => {
                if slot.is_none() {
                    return Err(err(format!("token `{token}` outside any event")));
                }
                buf.push(token);
            }
            Some(next) => {
                flush(&mut events, slot, &mut buf)?;
                match (slot, next) {
                    (_, Slot::Predicate) => events.push(Event {
                        predicate: String::new(),
                        subject: None,
                        object: None,
                        occurrence: events.len(),
                    }),
                    (Some(Slot::Predicate), Slot::Subject)
                    | (Some(Slot::Predicate), Slot::Object)
                    | (Some(Slot::Subject), Slot::Object) => {}
                    _ => return Err(err(format!("unexpected tag `{token}`"))),
                }
                slot = Some(next);
            }
        }
    }
    flush(&mut events, slot, &mut buf)?;

    let mut graph = PersonalSpaceGraph::default();
    let mut seen = HashSet::new();
    for e in &events {
        if e.subject.is_none() && e.object.is_none() {
            return Err(err(format!("event `{}` has no participant", e.predicate)));
        }
        for p in [&e.subject, &e.object].into_iter().flatten() {
            if seen.insert(p.clone()) {
                graph.nodes.push(p.clone());
            }
        }
    }
    graph.events = events;
    Ok(graph)
}

/// First-session parses of the pair's user turns, in turn order.
pub fn knowledge_parses<'a>(pair: &DialoguePair, parses: &'a [ParsedSentence]) -> Vec<&'a ParsedSentence> {
    let user_turns: HashSet<usize> = pair.first.user_turns().map(|t| t.turn_index).collect();
    let mut selected: Vec<(usize, usize, &ParsedSentence)> = parses
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            s.source_turn.dialogue_id == pair.dialogue_id
                && s.source_turn.session == SessionIndex::First
                && user_turns.contains(&s.source_turn.turn_index)
        })
        .map(|(pos, s)| (s.source_turn.turn_index, pos, s))
        .collect();
    selected.sort_by_key(|&(turn, pos, _)| (turn, pos));
    selected.into_iter().map(|(_, _, s)| s).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Representation {
    None,
    Raw,
    #[serde(rename = "boh")]
    HeadNouns,
    #[serde(rename = "psg")]
    LinearGraph,
}

impl Representation {
    pub fn name(self) -> &'static str {
        match self {
            Representation::None => "none",
            Representation::Raw => "raw",
            Representation::HeadNouns => "boh",
            Representation::LinearGraph => "psg",
        }
    }
}

impl std::str::FromStr for Representation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Representation::None),
            "raw" => Ok(Representation::Raw),
            "boh" => Ok(Representation::HeadNouns),
            "psg" => Ok(Representation::LinearGraph),
            other => Err(format!("unknown representation `{other}` (none|raw|boh|psg)")),
        }
    }
}

/// A built knowledge piece for one dialogue pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "repr", rename_all = "lowercase")]
pub enum Knowledge {
    None,
    Raw(RawKnowledge),
    #[serde(rename = "boh")]
    HeadNouns(HeadNounKnowledge),
    #[serde(rename = "psg")]
    Graph(LinearizedGraph),
}

impl Knowledge {
    pub fn representation(&self) -> Representation {
        match self {
            Knowledge::None => Representation::None,
            Knowledge::Raw(_) => Representation::Raw,
            Knowledge::HeadNouns(_) => Representation::HeadNouns,
            Knowledge::Graph(_) => Representation::LinearGraph,
        }
    }

    /// The text fed to the model as the knowledge segment.
    pub fn text(&self) -> String {
        match self {
            Knowledge::None => String::new(),
            Knowledge::Raw(raw) => raw.text.clone(),
            Knowledge::HeadNouns(boh) => boh.lemmas.join(" "),
            Knowledge::Graph(g) => g.text.clone(),
        }
    }
}

/// Builds the requested representation for a pair.
pub fn build_knowledge(
    pair: &DialoguePair,
    parses: &[ParsedSentence],
    repr: Representation,
    layout: &Layout,
    options: PsgOptions,
) -> Result<Knowledge, KnowledgeError> {
    Ok(match repr {
        Representation::None => Knowledge::None,
        Representation::Raw => Knowledge::Raw(build_raw(&pair.first, &layout.separator)?),
        Representation::HeadNouns => {
            let selected: Vec<ParsedSentence> =
                knowledge_parses(pair, parses).into_iter().cloned().collect();
            Knowledge::HeadNouns(extract_head_nouns(&selected))
        }
        Representation::LinearGraph => {
            let selected: Vec<ParsedSentence> =
                knowledge_parses(pair, parses).into_iter().cloned().collect();
            Knowledge::Graph(linearize_psg(&build_psg(&selected, options), &layout.tags))
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Knowledge,
    History,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Event,
    Participant,
    Tag,
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputToken {
    pub text: String,
    pub segment: Segment,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSequence {
    pub sample_id: String,
    pub repr: Representation,
    pub tokens: Vec<InputToken>,
    pub target_text: String,
}

impl InputSequence {
    pub fn segment_len(&self, segment: Segment) -> usize {
        self.tokens.iter().filter(|t| t.segment == segment).count()
    }
}

fn knowledge_tokens(knowledge: &Knowledge, tags: &GraphTags) -> Result<Vec<InputToken>, KnowledgeError> {
    let other = |text: &str| InputToken {
        text: text.to_owned(),
        segment: Segment::Knowledge,
        role: Role::Other,
    };
    Ok(match knowledge {
        Knowledge::Graph(g) => {
            let tag_set: HashSet<usize> = g.tag_positions.iter().copied().collect();
            let mut current = Role::Other;
            let mut out = Vec::new();
            for (i, text) in g.text.split_whitespace().enumerate() {
                let role = if tag_set.contains(&i) {
                    current = if text == tags.event {
                        Role::Event
                    } else if text == tags.subject || text == tags.object {
                        Role::Participant
                    } else {
                        return Err(KnowledgeError::Linearization(format!(
                            "tag `{text}` does not match the layout's graph tags"
                        )));
                    };
                    Role::Tag
                } else if current == Role::Other {
                    return Err(KnowledgeError::Linearization(format!(
                        "token `{text}` precedes the first tag"
                    )));
                } else {
                    current
                };
                out.push(InputToken {
                    text: text.to_owned(),
                    segment: Segment::Knowledge,
                    role,
                });
            }
            out
        }
        other_repr => other_repr.text().split_whitespace().map(other).collect(),
    })
}

/// Knowledge tokens followed by the history turns, each turn introduced by
/// its speaker marker.
pub fn assemble_input(
    sample: &GroundedSample,
    knowledge: &Knowledge,
    layout: &Layout,
) -> Result<InputSequence, KnowledgeError> {
    layout.validate()?;
    if sample.history.is_empty() {
        return Err(KnowledgeError::EmptyHistory(sample.sample_id.clone()));
    }
    let mut tokens = knowledge_tokens(knowledge, &layout.tags)?;
    for turn in &sample.history {
        let history = |text: &str| InputToken {
            text: text.to_owned(),
            segment: Segment::History,
            role: Role::Other,
        };
        tokens.push(history(layout.marker(turn.speaker)));
        tokens.extend(turn.text.split_whitespace().map(history));
    }
    Ok(InputSequence {
        sample_id: sample.sample_id.clone(),
        repr: knowledge.representation(),
        tokens,
        target_text: sample.target.text.clone(),
    })
}

/// One line of a knowledge file: the representation built for a pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnowledgeRecord {
    pub dialogue_id: String,
    #[serde(flatten)]
    pub knowledge: Knowledge,
}

fn knowledge_header() -> SchemaHeader {
    SchemaHeader::new(KNOWLEDGE_SCHEMA, KNOWLEDGE_VERSION)
}

pub fn write_knowledge(path: &Path, records: &[KnowledgeRecord]) -> std::io::Result<()> {
    jsonl::write_file(path, &knowledge_header(), records)
}

pub fn read_knowledge(path: &Path) -> Result<Vec<KnowledgeRecord>, JsonlError> {
    Ok(jsonl::read_file(path, &knowledge_header(), HeaderPolicy::Required)?
        .into_iter()
        .map(|n| n.value)
        .collect())
}

fn inputs_header() -> SchemaHeader {
    SchemaHeader::new(INPUTS_SCHEMA, INPUTS_VERSION)
}

pub fn write_inputs(path: &Path, inputs: &[InputSequence]) -> std::io::Result<()> {
    jsonl::write_file(path, &inputs_header(), inputs)
}

pub fn read_inputs(path: &Path) -> Result<Vec<InputSequence>, JsonlError> {
    Ok(jsonl::read_file(path, &inputs_header(), HeaderPolicy::Required)?
        .into_iter()
        .map(|n| n.value)
        .collect())
}
