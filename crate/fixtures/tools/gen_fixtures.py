"""Regenerates the shipped fixtures.

The sample corpus is built from sentence templates whose dependency
analyses were annotated by hand in Universal Dependencies v2 style, so the
CoNLL-U files need no parser. The expected knowledge outputs are computed
here by a small, separate implementation of the extraction rules and frozen
next to the inputs.

Usage: python3 fixtures/tools/gen_fixtures.py
"""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
SEED = 20240607
TAGSET = "UD v2 (universal POS tags, universal dependency relations)"

NAMES = ["Maria", "Luca", "Anna", "Paolo", "Giulia", "Marco"]
KIN = ["sister", "brother", "mother", "father", "friend", "colleague"]
THINGS = ["letter", "gift", "book", "cake"]
PLACES = ["office", "park", "hospital", "school"]

# Each token: (form, lemma, upos, head, deprel). Placeholders in braces are
# filled per dialogue; lemmas of filled slots equal the lowercased form
# except for proper nouns, which keep their case in the lemma column.
TEMPLATES = {
    "call": [
        ("{name}", "{name}", "PROPN", 2, "nsubj"),
        ("called", "call", "VERB", 0, "root"),
        ("the", "the", "DET", 4, "det"),
        ("doctor", "doctor", "NOUN", 2, "obj"),
        (".", ".", "PUNCT", 2, "punct"),
    ],
    "argue": [
        ("I", "I", "PRON", 2, "nsubj"),
        ("argued", "argue", "VERB", 0, "root"),
        ("with", "with", "ADP", 5, "case"),
        ("my", "my", "PRON", 5, "nmod:poss"),
        ("{kin}", "{kin}", "NOUN", 2, "obl"),
        (".", ".", "PUNCT", 2, "punct"),
    ],
    "cry": [
        ("I", "I", "PRON", 2, "nsubj"),
        ("cried", "cry", "VERB", 0, "root"),
        ("all", "all", "DET", 4, "det"),
        ("night", "night", "NOUN", 2, "obl:tmod"),
        (".", ".", "PUNCT", 2, "punct"),
    ],
    "give": [
        ("My", "my", "PRON", 2, "nmod:poss"),
        ("{kin}", "{kin}", "NOUN", 3, "nsubj"),
        ("gave", "give", "VERB", 0, "root"),
        ("me", "I", "PRON", 3, "iobj"),
        ("a", "a", "DET", 6, "det"),
        ("{thing}", "{thing}", "NOUN", 3, "obj"),
        (".", ".", "PUNCT", 3, "punct"),
    ],
    "quiet": [
        ("The", "the", "DET", 2, "det"),
        ("{place}", "{place}", "NOUN", 4, "nsubj"),
        ("was", "be", "AUX", 4, "cop"),
        ("quiet", "quiet", "ADJ", 0, "root"),
        (".", ".", "PUNCT", 4, "punct"),
    ],
    "meet": [
        ("We", "we", "PRON", 2, "nsubj"),
        ("met", "meet", "VERB", 0, "root"),
        ("{name}", "{name}", "PROPN", 2, "obj"),
        ("at", "at", "ADP", 6, "case"),
        ("the", "the", "DET", 6, "det"),
        ("{place}", "{place}", "NOUN", 2, "obl"),
        (".", ".", "PUNCT", 2, "punct"),
    ],
    "sad": [
        ("{name}", "{name}", "PROPN", 3, "nmod:poss"),
        ("'s", "'s", "PART", 1, "case"),
        ("{kin}", "{kin}", "NOUN", 5, "nsubj"),
        ("was", "be", "AUX", 5, "cop"),
        ("sad", "sad", "ADJ", 0, "root"),
        (".", ".", "PUNCT", 5, "punct"),
    ],
}

AGENT_FIRST = [
    "How did that make you feel?",
    "Tell me more about it.",
    "What happened next?",
    "Thank you for sharing that.",
]
USER_SECOND = [
    "Today I feel a bit better.",
    "I slept badly again.",
    "Work was stressful this week.",
    "I went for a long walk.",
    "I talked to someone about it.",
]
AGENT_SECOND = [
    "Last time you mentioned {topic}. How is that going?",
    "Did you manage to relax after {topic}?",
    "That sounds important. What about {topic}?",
    "I remember you spoke about {topic}.",
]

# 10 sentences with hand-derived head-noun lists.
HEAD_NOUN_CASES = [
    ([("My", "my", "PRON", 2, "nmod:poss"), ("sister", "sister", "NOUN", 4, "nmod:poss"),
      ("'s", "'s", "PART", 2, "case"), ("doctor", "doctor", "NOUN", 5, "nsubj"),
      ("called", "call", "VERB", 0, "root"), (".", ".", "PUNCT", 5, "punct")], ["doctor"]),
    ([("Go", "go", "VERB", 0, "root"), ("away", "away", "ADV", 1, "advmod"),
      ("!", "!", "PUNCT", 1, "punct")], []),
    ([("The", "the", "DET", 2, "det"), ("dog", "dog", "NOUN", 3, "nsubj"),
      ("barked", "bark", "VERB", 0, "root"), ("and", "and", "CCONJ", 7, "cc"),
      ("that", "that", "DET", 6, "det"), ("dog", "dog", "NOUN", 7, "nsubj"),
      ("bit", "bite", "VERB", 3, "conj"), ("Luca", "Luca", "PROPN", 7, "obj"),
      (".", ".", "PUNCT", 3, "punct")], ["dog", "luca"]),
    ([("Anna", "Anna", "PROPN", 2, "nsubj"), ("bought", "buy", "VERB", 0, "root"),
      ("a", "a", "DET", 4, "det"), ("box", "box", "NOUN", 2, "obj"),
      ("of", "of", "ADP", 6, "case"), ("chocolates", "chocolate", "NOUN", 4, "nmod"),
      (".", ".", "PUNCT", 2, "punct")], ["anna", "box"]),
    ([("I", "I", "PRON", 2, "nsubj"), ("cried", "cry", "VERB", 0, "root"),
      ("all", "all", "DET", 4, "det"), ("night", "night", "NOUN", 2, "obl:tmod"),
      (".", ".", "PUNCT", 2, "punct")], ["night"]),
    ([("The", "the", "DET", 2, "det"), ("hospital", "hospital", "NOUN", 6, "nsubj"),
      ("in", "in", "ADP", 4, "case"), ("Rome", "Rome", "PROPN", 2, "nmod"),
      ("was", "be", "AUX", 6, "cop"), ("crowded", "crowded", "ADJ", 0, "root"),
      (".", ".", "PUNCT", 6, "punct")], ["hospital"]),
    ([("Maria", "Maria", "PROPN", 2, "nsubj"), ("called", "call", "VERB", 0, "root"),
      ("the", "the", "DET", 4, "det"), ("doctor", "doctor", "NOUN", 2, "obj"),
      (".", ".", "PUNCT", 2, "punct")], ["maria", "doctor"]),
    ([("My", "my", "PRON", 2, "nmod:poss"), ("mother", "mother", "NOUN", 6, "nsubj"),
      ("and", "and", "CCONJ", 5, "cc"), ("my", "my", "PRON", 5, "nmod:poss"),
      ("father", "father", "NOUN", 2, "conj"), ("argued", "argue", "VERB", 0, "root"),
      (".", ".", "PUNCT", 6, "punct")], ["mother"]),
    ([("We", "we", "PRON", 2, "nsubj"), ("talked", "talk", "VERB", 0, "root"),
      ("about", "about", "ADP", 4, "case"), ("work", "work", "NOUN", 2, "obl"),
      (".", ".", "PUNCT", 2, "punct")], ["work"]),
    ([("Cats", "cat", "NOUN", 2, "nsubj"), ("chased", "chase", "VERB", 0, "root"),
      ("the", "the", "DET", 4, "det"), ("mice", "mouse", "NOUN", 2, "obj"),
      (".", ".", "PUNCT", 2, "punct")], ["cat", "mouse"]),
]

# Five sentences sharing participants; hand-derived merged graph below.
MERGE_SENTENCES = [
    [("My", "my", "PRON", 2, "nmod:poss"), ("sister", "sister", "NOUN", 3, "nsubj"),
     ("called", "call", "VERB", 0, "root"), ("me", "I", "PRON", 3, "obj"),
     (".", ".", "PUNCT", 3, "punct")],
    [("I", "I", "PRON", 2, "nsubj"), ("visited", "visit", "VERB", 0, "root"),
     ("my", "my", "PRON", 4, "nmod:poss"), ("sister", "sister", "NOUN", 2, "obj"),
     (".", ".", "PUNCT", 2, "punct")],
    [("The", "the", "DET", 2, "det"), ("weather", "weather", "NOUN", 4, "nsubj"),
     ("was", "be", "AUX", 4, "cop"), ("bad", "bad", "ADJ", 0, "root"),
     (".", ".", "PUNCT", 4, "punct")],
    [("Luca", "Luca", "PROPN", 2, "nsubj"), ("hugged", "hug", "VERB", 0, "root"),
     ("his", "his", "PRON", 4, "nmod:poss"), ("sister", "sister", "NOUN", 2, "obj"),
     (".", ".", "PUNCT", 2, "punct")],
    [("I", "I", "PRON", 2, "nsubj"), ("cried", "cry", "VERB", 0, "root"),
     (".", ".", "PUNCT", 2, "punct")],
]
MERGE_EXPECTED = {
    "nodes": ["sister", "i", "luca"],
    "events": [
        {"predicate": "call", "subject": "sister", "object": "i"},
        {"predicate": "visit", "subject": "i", "object": "sister"},
        {"predicate": "hug", "subject": "luca", "object": "sister"},
        {"predicate": "cry", "subject": "i", "object": None},
    ],
    "incident": {"sister": 3, "i": 3, "luca": 1},
    "linearized": "[E] call [S] sister [O] i [E] visit [S] i [O] sister "
                  "[E] hug [S] luca [O] sister [E] cry [S] i",
}


# Qualification items with hand-assigned gold votes (criteria in order
# correctness, appropriateness, contextualization, listening).
QUALIFICATION = [
    ("I argued with my brother yesterday.", "Did you manage to talk to your brother again?",
     ["positive", "positive", "positive", "positive"]),
    ("My mother gave me a book.", "ok.", ["positive", "negative", "negative", "negative"]),
    ("The office was quiet.", "Office quiet the was why?", ["negative", "negative", "positive", "positive"]),
    ("I cried all night.", "Your sister called the doctor last week, right?",
     ["positive", "negative", "negative", "negative"]),
    ("We met Luca at the park.", "How did it feel to see Luca at the park?",
     ["positive", "positive", "positive", "positive"]),
]
CRITERIA = ["correctness", "appropriateness", "contextualization", "listening"]


def qualification_items():
    items = []
    for i, (user, response, gold) in enumerate(QUALIFICATION):
        items.append({
            "history": [{"speaker": "user", "text": user}],
            "candidate": {"candidate_id": f"qual-{i}", "sample_id": f"qual-{i}",
                          "source": "GroundTruth", "text": response},
            "gold": dict(zip(CRITERIA, gold)),
        })
    return items


def fill(template, slots):
    out = []
    for form, lemma, upos, head, deprel in template:
        out.append((form.format(**slots), lemma.format(**slots), upos, head, deprel))
    return out


def surface(tokens):
    text = " ".join(t[0] for t in tokens)
    for p in [" .", " !", " ?", " 's"]:
        text = text.replace(p, p[1:])
    return text


def conllu_block(tokens, dialogue_id, session, turn, text):
    lines = [
        f"# dialogue_id = {dialogue_id}",
        f"# session = {session}",
        f"# turn = {turn}",
        f"# text = {text}",
    ]
    for i, (form, lemma, upos, head, deprel) in enumerate(tokens, 1):
        lines.append("\t".join([str(i), form, lemma, upos, "_", "_", str(head), deprel, "_", "_"]))
    return "\n".join(lines) + "\n\n"


# Independent implementation of the extraction rules, used only to freeze goldens.

NOUNS = {"NOUN", "PROPN"}
SUBJ = {"nsubj", "nsubj:pass"}
OBJ = {"obj", "iobj"}


def head_nouns(sentences):
    out = []
    for toks in sentences:
        for form, lemma, upos, head, _ in toks:
            if upos not in NOUNS:
                continue
            if head and toks[head - 1][2] in NOUNS:
                continue
            label = (lemma if lemma != "_" else form).lower()
            if label not in out:
                out.append(label)
    return out


def events(sentences):
    found = []
    for toks in sentences:
        for i, (form, lemma, upos, head, _) in enumerate(toks, 1):
            if upos != "VERB":
                continue
            deps = [t for t in toks if t[3] == i]
            subj = next((t[1].lower() for t in deps if t[4] in SUBJ), None)
            obj = next((t[1].lower() for t in deps if t[4] in OBJ), None)
            if subj is None and obj is None:
                continue
            ev = (lemma.lower(), subj, obj)
            if ev not in found:
                found.append(ev)
    return found


def linearize(evs):
    parts = []
    for pred, subj, obj in evs:
        parts += ["[E]", pred]
        if subj:
            parts += ["[S]", subj]
        if obj:
            parts += ["[O]", obj]
    return " ".join(parts)


def dump_jsonl(path, header, rows):
    with open(path, "w", encoding="utf-8") as f:
        if header is not None:
            f.write(json.dumps(header, separators=(",", ":")) + "\n")
        for row in rows:
            f.write(json.dumps(row, separators=(",", ":")) + "\n")


def sample_corpus(rng):
    pairs, conllu = [], []
    golden = {"raw": [], "boh": [], "psg": []}
    for d in range(20):
        did = f"d{d:03d}"
        keys = rng.sample(sorted(TEMPLATES), 4)
        slots = {
            "name": rng.choice(NAMES),
            "kin": rng.choice(KIN),
            "thing": rng.choice(THINGS),
            "place": rng.choice(PLACES),
        }
        sentences = [fill(TEMPLATES[k], slots) for k in keys]
        first = []
        for k, toks in enumerate(sentences):
            text = surface(toks)
            conllu.append(conllu_block(toks, did, "first", len(first), text))
            first.append({"speaker": "user", "text": text})
            first.append({"speaker": "agent", "text": AGENT_FIRST[k]})
        topic = "your " + slots["kin"]
        second = []
        for k in range(3):
            second.append({"speaker": "user", "text": rng.choice(USER_SECOND)})
            second.append({"speaker": "agent", "text": rng.choice(AGENT_SECOND).format(topic=topic)})
        pairs.append({
            "dialogue_id": did,
            "user_id": f"u{d % 7:02d}",
            "sessions": [
                {"session_index": "first", "turns": first},
                {"session_index": "second", "turns": second},
            ],
        })
        user_texts = [t["text"] for t in first if t["speaker"] == "user"]
        raw = " <brk> ".join(user_texts)
        golden["raw"].append({"dialogue_id": did, "repr": "raw", "text": raw,
                              "token_count": len(raw.split())})
        golden["boh"].append({"dialogue_id": did, "repr": "boh", "lemmas": head_nouns(sentences)})
        lin = linearize(events(sentences))
        positions = [i for i, t in enumerate(lin.split()) if t in ("[E]", "[S]", "[O]")]
        golden["psg"].append({"dialogue_id": did, "repr": "psg", "text": lin,
                              "tag_positions": positions})
    return pairs, conllu, golden


def schemas():
    header = {
        "type": "object",
        "required": ["schema", "version"],
        "properties": {"schema": {"type": "string"}, "version": {"type": "integer"}},
    }
    turn = {
        "type": "object", "additionalProperties": False, "required": ["speaker", "text"],
        "properties": {"speaker": {"enum": ["user", "agent"]}, "text": {"type": "string", "minLength": 1}},
    }
    corpus = {
        "type": "object", "additionalProperties": False,
        "required": ["dialogue_id", "user_id", "sessions"],
        "properties": {
            "dialogue_id": {"type": "string", "minLength": 1},
            "user_id": {"type": "string"},
            "sessions": {
                "type": "array", "minItems": 2, "maxItems": 2,
                "items": {
                    "type": "object", "additionalProperties": False,
                    "required": ["session_index", "turns"],
                    "properties": {
                        "session_index": {"enum": ["first", "second"]},
                        "turns": {"type": "array", "minItems": 1, "items": turn},
                    },
                },
            },
        },
    }
    segment = {"enum": ["knowledge", "history"]}
    role = {"enum": ["event", "participant", "tag", "other"]}
    inputs = {
        "type": "object", "additionalProperties": False,
        "required": ["sample_id", "repr", "tokens", "target_text"],
        "properties": {
            "sample_id": {"type": "string"},
            "repr": {"enum": ["none", "raw", "boh", "psg"]},
            "tokens": {"type": "array", "items": {
                "type": "object", "additionalProperties": False,
                "required": ["text", "segment", "role"],
                "properties": {"text": {"type": "string"}, "segment": segment, "role": role},
            }},
            "target_text": {"type": "string"},
        },
    }
    generation = {
        "type": "object", "additionalProperties": False,
        "required": ["sample_id", "model_id", "response_text"],
        "properties": {"sample_id": {"type": "string"}, "model_id": {"type": "string"},
                       "response_text": {"type": "string"}},
    }
    scoring = {
        "type": "object", "additionalProperties": False,
        "required": ["sample_id", "model_id", "target_tokens", "token_nll"],
        "properties": {
            "sample_id": {"type": "string"}, "model_id": {"type": "string"},
            "target_tokens": {"type": "array", "minItems": 1, "items": {"type": "string"}},
            "token_nll": {"type": "array", "minItems": 1, "items": {"type": "number", "minimum": 0}},
        },
    }
    attribution = {
        "type": "object", "additionalProperties": False,
        "required": ["sample_id", "model_id", "tokens"],
        "properties": {
            "sample_id": {"type": "string"}, "model_id": {"type": "string"},
            "tokens": {"type": "array", "items": {
                "type": "object", "additionalProperties": False,
                "required": ["text", "segment", "role", "score"],
                "properties": {"text": {"type": "string"}, "segment": segment, "role": role,
                               "upos": {"type": "string"}, "score": {"type": "number"}},
            }},
        },
    }
    vote = {"enum": ["positive", "negative", "unsure"]}
    judgment = {
        "type": "object", "additionalProperties": False,
        "required": ["worker_id", "candidate_id", "votes", "timestamp"],
        "properties": {
            "worker_id": {"type": "string"}, "candidate_id": {"type": "string"},
            "votes": {
                "type": "object", "additionalProperties": False,
                "required": ["correctness", "appropriateness", "contextualization", "listening"],
                "properties": {k: vote for k in
                               ["correctness", "appropriateness", "contextualization", "listening"]},
            },
            "error_labels": {"type": "array", "uniqueItems": True,
                             "items": {"enum": ["generic", "hallucination", "incoherent", "other"]}},
            "timestamp": {"type": "integer", "minimum": 0},
        },
    }
    out = {}
    for name, record in [("corpus", corpus), ("inputs", inputs), ("generation", generation),
                         ("scoring", scoring), ("attribution", attribution), ("judgment", judgment)]:
        out[name] = {
            "$schema": "https://json-schema.org/draft/2020-12/schema",
            "title": f"{name} record",
            "x-schema": name,
            "x-version": 1,
            "description": "Line-delimited JSON. Line 1 is the header "
                           f'{{"schema":"{name}","version":1}}; every further non-blank line is one record.',
            "x-header": header,
            **record,
        }
    return out


def main():
    rng = random.Random(SEED)
    sample = ROOT / "sample"
    golden_dir = ROOT / "golden"
    schema_dir = ROOT / "schemas"
    for d in (sample, golden_dir, schema_dir):
        d.mkdir(parents=True, exist_ok=True)

    pairs, conllu, golden = sample_corpus(rng)
    dump_jsonl(sample / "corpus.jsonl", {"schema": "corpus", "version": 1}, pairs)
    with open(sample / "parses.conllu", "w", encoding="utf-8") as f:
        f.write(f"# tagset = {TAGSET}\n")
        f.write("".join(conllu))
    (sample / "qualification.json").write_text(
        json.dumps(qualification_items(), indent=2) + "\n", encoding="utf-8")
    for name, rows in golden.items():
        dump_jsonl(golden_dir / f"sample_{name}.jsonl", None, rows)

    blocks, expected = [], []
    for i, (toks, nouns) in enumerate(HEAD_NOUN_CASES):
        blocks.append(conllu_block(toks, "hn", "first", i, surface(toks)))
        expected.append({"turn": i, "text": surface(toks), "head_nouns": nouns})
    (golden_dir / "head_nouns.conllu").write_text("".join(blocks), encoding="utf-8")
    (golden_dir / "head_nouns.json").write_text(json.dumps(expected, indent=2) + "\n", encoding="utf-8")

    blocks = [conllu_block(t, "merge", "first", i, surface(t)) for i, t in enumerate(MERGE_SENTENCES)]
    (golden_dir / "merge.conllu").write_text("".join(blocks), encoding="utf-8")
    (golden_dir / "merge.json").write_text(json.dumps(MERGE_EXPECTED, indent=2) + "\n", encoding="utf-8")

    six = next(p for p in pairs for t in p["sessions"][0]["turns"]
               if t["text"].startswith("I argued with my"))
    turn = next(i for i, t in enumerate(six["sessions"][0]["turns"]) if t["text"].startswith("I argued"))
    toks = fill(TEMPLATES["argue"], {"kin": six["sessions"][0]["turns"][turn]["text"].split()[-1].rstrip(".")})
    (golden_dir / "six_token.conllu").write_text(
        conllu_block(toks, six["dialogue_id"], "first", turn, surface(toks)), encoding="utf-8")
    (golden_dir / "six_token.json").write_text(json.dumps(
        [{"index": i, "form": f, "lemma": l, "upos": u, "head": h, "deprel": r}
         for i, (f, l, u, h, r) in enumerate(toks, 1)], indent=2) + "\n", encoding="utf-8")

    for name, schema in schemas().items():
        (schema_dir / f"{name}.schema.json").write_text(json.dumps(schema, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    main()
