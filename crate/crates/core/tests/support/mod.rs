//! Oracles shared by the standalone tests and the acceptance runner.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap};

use lingreader::annotators::{Annotators, AntonymLexicon};
use lingreader::corpus::{derive_span_label, parse_coqa, Split};
use lingreader::metrics::{normalize_text, token_f1, turn_f1, EvalMode};
use lingreader::qa_classes::{tag_corpus, QaClass};
use lingreader::CharSpan;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::json;

#[derive(Deserialize)]
pub struct Pair {
    pub prediction: String,
    pub references: Vec<String>,
    pub normalized_prediction: Vec<String>,
    pub normalized_references: Vec<Vec<String>>,
    pub f1_max: f64,
    pub f1_official: f64,
}

/// Pairs frozen from a port of the public CoQA evaluation script
/// (tests/oracles/coqa_metric_oracle.py).
pub fn metric_pairs() -> Vec<Pair> {
    serde_json::from_str(include_str!("../data/metric_pairs.json")).unwrap()
}

/// Every normalization and F1 value of the suite, compared exactly.
pub fn metric_mismatches() -> Vec<String> {
    let mut out = Vec::new();
    for p in metric_pairs() {
        if normalize_text(&p.prediction) != p.normalized_prediction {
            out.push(format!("normalize {:?}", p.prediction));
        }
        for (r, expected) in p.references.iter().zip(&p.normalized_references) {
            if &normalize_text(r) != expected {
                out.push(format!("normalize {r:?}"));
            }
        }
        let max = token_f1(&p.prediction, &p.references);
        if max != p.f1_max || turn_f1(&p.prediction, &p.references, EvalMode::SimpleMax) != p.f1_max {
            out.push(format!("max f1 {:?} vs {:?}: {max} != {}", p.prediction, p.references, p.f1_max));
        }
        let official = turn_f1(&p.prediction, &p.references, EvalMode::StrictOfficial);
        if official != p.f1_official {
            out.push(format!("official f1 {:?}: {official} != {}", p.prediction, p.f1_official));
        }
    }
    out
}

const VOCAB: &[&str] = &[
    "the", "a", "an", "The", "bottle", "bottle,", "sea", "sea.", "Anna", "Anna's", "red", "ball", "\"red\"", "(ball)",
    "was", "not", "in", "park", "park!", "three", "3", "...", "--", "it", "It", "dog", "dog.", "and", "said",
];

/// Trimmed words as `(start, end)` byte offsets, found without the crate's
/// tokenizer.
fn word_bounds(text: &str) -> Vec<(usize, usize)> {
    let re = regex::Regex::new(r"\S+").unwrap();
    re.find_iter(text)
        .filter_map(|m| {
            let raw = m.as_str();
            let trimmed = raw.trim_matches(|c: char| c.is_ascii_punctuation());
            if trimmed.is_empty() {
                return None;
            }
            let lead = raw.len() - raw.trim_start_matches(|c: char| c.is_ascii_punctuation()).len();
            Some((m.start() + lead, m.start() + lead + trimmed.len()))
        })
        .collect()
}

/// `(2·common, |pred| + |gold|)`, with the empty cases as 0/1 or 1/1.
fn f1_ratio(pred: &[String], gold: &[String]) -> (i64, i64) {
    if pred.is_empty() || gold.is_empty() {
        return ((pred.is_empty() && gold.is_empty()) as i64, 1);
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for g in gold {
        *counts.entry(g.as_str()).or_default() += 1;
    }
    let mut common = 0;
    for p in pred {
        if let Some(c) = counts.get_mut(p.as_str()).filter(|c| **c > 0) {
            *c -= 1;
            common += 1;
        }
    }
    (2 * common, (pred.len() + gold.len()) as i64)
}

/// Best word-aligned substring by exact F1 ratio; fewer tokens, then the
/// earlier start, win ties.
pub fn brute_force_span(text: &str, gold: &str) -> Option<CharSpan> {
    let gold_tokens = normalize_text(gold);
    let bounds = word_bounds(text);
    let mut best: Option<((i64, i64), (usize, usize, usize), CharSpan)> = None;
    for &(s, _) in &bounds {
        for &(_, e) in bounds.iter().filter(|(_, e)| *e > s) {
            let pred = normalize_text(&text[s..e]);
            let f1 = f1_ratio(&pred, &gold_tokens);
            let key = (pred.len(), s, e - s);
            let better = match &best {
                None => true,
                Some((bf, bk, _)) => {
                    let lhs = f1.0 * bf.1;
                    let rhs = bf.0 * f1.1;
                    lhs > rhs || (lhs == rhs && key < *bk)
                }
            };
            if better {
                best = Some((f1, key, CharSpan::new(s, e)));
            }
        }
    }
    best.filter(|(f1, _, _)| f1.0 > 0).map(|(_, _, span)| span)
}

/// A rationale of up to 40 words and a gold answer that usually overlaps it.
pub fn span_fixture(rng: &mut ChaCha8Rng) -> (String, String) {
    let n = rng.gen_range(1..=40);
    let words: Vec<&str> = (0..n).map(|_| *VOCAB.choose(rng).unwrap()).collect();
    let mut text = String::new();
    for (i, w) in words.iter().enumerate() {
        if i > 0 {
            text.push_str(if rng.gen_bool(0.1) { "  " } else { " " });
        }
        text.push_str(w);
    }
    let gold = match rng.gen_range(0..4) {
        0 => {
            let i = rng.gen_range(0..n);
            let j = rng.gen_range(i..n.min(i + 6));
            words[i..=j].join(" ")
        }
        1 => {
            let k = rng.gen_range(1..4);
            (0..k).map(|_| *VOCAB.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
        }
        2 => ["yes", "unknown", "", "the"][rng.gen_range(0..4)].to_string(),
        _ => {
            let i = rng.gen_range(0..n);
            format!("{} {}", words[i], VOCAB.choose(rng).unwrap())
        }
    };
    (text, gold)
}

/// Runs `n` fixtures; returns the mismatches and how many had a span.
pub fn span_oracle(n: usize, seed: u64) -> (Vec<String>, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = Vec::new();
    let mut found = 0;
    for _ in 0..n {
        let (text, gold) = span_fixture(&mut rng);
        let expected = brute_force_span(&text, &gold);
        let got = derive_span_label(&text, &gold);
        if got != expected {
            mismatches.push(format!("text {text:?} gold {gold:?}: {got:?} != {expected:?}"));
        }
        found += expected.is_some() as usize;
    }
    (mismatches, found)
}

#[derive(Deserialize)]
struct Fixtures {
    stories: Vec<FixtureStory>,
}

#[derive(Deserialize)]
struct FixtureStory {
    id: String,
    source: String,
    text: String,
    turns: Vec<FixtureTurn>,
}

#[derive(Deserialize)]
struct FixtureTurn {
    q: String,
    a: String,
    r: String,
    classes: Vec<String>,
}

fn coqa(fixtures: &Fixtures) -> String {
    let data: Vec<_> = fixtures
        .stories
        .iter()
        .map(|s| {
            let questions: Vec<_> = s
                .turns
                .iter()
                .enumerate()
                .map(|(i, t)| json!({"turn_id": i + 1, "input_text": t.q}))
                .collect();
            let answers: Vec<_> = s
                .turns
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let start = s.text.find(&t.r).unwrap_or_else(|| panic!("rationale {:?} not in {}", t.r, s.id));
                    json!({"turn_id": i + 1, "input_text": t.a, "span_start": start,
                           "span_end": start + t.r.len(), "span_text": t.r})
                })
                .collect();
            json!({"id": s.id, "source": s.source, "story": s.text, "questions": questions, "answers": answers})
        })
        .collect();
    json!({"version": "1.0", "data": data}).to_string()
}

/// Tags the hand-labelled mini-corpus offline; returns the number of turns
/// and every disagreement with the hand labels.
pub fn class_fixture_mismatches() -> (usize, Vec<String>) {
    let fixtures: Fixtures = serde_json::from_str(include_str!("../data/class_fixtures.json")).unwrap();
    let corpus = parse_coqa(&coqa(&fixtures), Split::Dev, "fixtures").unwrap();
    let annotations = Annotators::offline().annotate_corpus(&corpus).unwrap();
    let records = tag_corpus(&corpus, &annotations, AntonymLexicon::bundled());

    let mut mismatches = Vec::new();
    let expected_turns = fixtures
        .stories
        .iter()
        .flat_map(|s| s.turns.iter().enumerate().map(move |(i, t)| (s.id.as_str(), i as u32 + 1, t)));
    for (story, turn, t) in expected_turns {
        let Some(record) = records.iter().find(|r| r.story_id == story && r.turn_id == turn) else {
            mismatches.push(format!("{story} turn {turn} was not tagged"));
            continue;
        };
        if !record.classes.is_consistent() {
            mismatches.push(format!("{story} turn {turn} is inconsistent"));
        }
        if record.defined.get(QaClass::Surp) {
            mismatches.push(format!("{story} turn {turn}: surprisal defined offline"));
        }
        let expected: BTreeSet<&str> = t.classes.iter().map(String::as_str).collect();
        let got: BTreeSet<&str> = record.classes.members().map(|c| c.key()).collect();
        if expected != got {
            mismatches.push(format!("{story} turn {turn} {:?}: expected {expected:?}, got {got:?}", t.q));
        }
    }
    (corpus.len(), mismatches)
}
