//! CoQA ingestion, the internal corpus format and training-label derivation.

mod input;
mod labels;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::{char_to_byte, CharSpan};

pub use input::{
    build_model_input, EncodedInput, InputConfig, Segment, SpecialToken, SubwordTokenizer, TokenPiece,
    WordTokenizer,
};
pub use labels::{answer_type_for, derive_span_label, derive_type_label, AnswerType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceDomain {
    Children,
    Literature,
    School,
    News,
    Wikipedia,
    Reddit,
    Science,
}

impl SourceDomain {
    /// Maps CoQA's `source` field (`mctest`, `gutenberg`, `race`, `cnn`, ...).
    pub fn from_coqa(source: &str) -> Option<Self> {
        Some(match source {
            "mctest" | "children" => SourceDomain::Children,
            "gutenberg" | "literature" => SourceDomain::Literature,
            "race" | "school" => SourceDomain::School,
            "cnn" | "news" => SourceDomain::News,
            "wikipedia" => SourceDomain::Wikipedia,
            "reddit" => SourceDomain::Reddit,
            "science" => SourceDomain::Science,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Story {
    pub id: String,
    pub text: String,
    pub source_domain: SourceDomain,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub turn_id: u32,
    pub question: String,
    pub gold_answers: Vec<String>,
    /// Byte span of the rationale in the story; absent for unanswerable turns.
    pub rationale: Option<CharSpan>,
    pub rationale_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryPair {
    pub question: String,
    pub answer: String,
}

/// Identifies a dialogue turn across files.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TurnKey {
    pub story_id: String,
    pub turn_id: u32,
}

impl TurnKey {
    pub fn new(story_id: impl Into<String>, turn_id: u32) -> Self {
        TurnKey {
            story_id: story_id.into(),
            turn_id,
        }
    }
}

impl std::fmt::Display for TurnKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}#{}", self.story_id, self.turn_id)
    }
}

/// Links an augmented sample back to the sample it was rewritten from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_story_id: String,
    pub original: String,
    pub replacement: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QAExample {
    pub story_id: String,
    pub turn: Turn,
    pub history: Vec<HistoryPair>,
    /// Training span label (byte span into the story).
    pub span_label: Option<CharSpan>,
    pub type_label: AnswerType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<Provenance>,
}

impl QAExample {
    pub fn key(&self) -> TurnKey {
        TurnKey::new(self.story_id.clone(), self.turn.turn_id)
    }

    /// The first gold answer, which training labels are derived from.
    pub fn answer(&self) -> &str {
        &self.turn.gold_answers[0]
    }

    /// The span the answer is anchored to: the derived span label when one
    /// exists, otherwise the rationale.
    pub fn answer_anchor(&self) -> Option<CharSpan> {
        self.span_label.or(self.turn.rationale)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub stories: Vec<Story>,
    pub examples: Vec<QAExample>,
    index: HashMap<String, usize>,
}

impl Corpus {
    pub fn new(stories: Vec<Story>, examples: Vec<QAExample>) -> Self {
        let index = stories.iter().enumerate().map(|(i, s)| (s.id.clone(), i)).collect();
        Corpus {
            stories,
            examples,
            index,
        }
    }

    pub fn story(&self, id: &str) -> Option<&Story> {
        self.index.get(id).map(|&i| &self.stories[i])
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Examples grouped per story, in turn order.
    pub fn dialogues(&self) -> BTreeMap<&str, Vec<&QAExample>> {
        let mut out: BTreeMap<&str, Vec<&QAExample>> = BTreeMap::new();
        for ex in &self.examples {
            out.entry(ex.story_id.as_str()).or_default().push(ex);
        }
        for turns in out.values_mut() {
            turns.sort_by_key(|e| e.turn.turn_id);
        }
        out
    }

    pub fn subset(&self, keep: impl Fn(&QAExample) -> bool) -> Corpus {
        let examples: Vec<QAExample> = self.examples.iter().filter(|e| keep(e)).cloned().collect();
        let mut ids: Vec<&str> = examples.iter().map(|e| e.story_id.as_str()).collect();
        ids.dedup();
        let stories = self
            .stories
            .iter()
            .filter(|s| ids.contains(&s.id.as_str()))
            .cloned()
            .collect();
        Corpus::new(stories, examples)
    }

    /// SHA-256 over the JSONL serialization; identifies training data in checkpoints.
    pub fn fingerprint(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut hasher = Sha256::new();
        for record in self.records() {
            hasher.update(serde_json::to_vec(&record).expect("record serializes"));
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }

    fn records(&self) -> impl Iterator<Item = CorpusRecord> + '_ {
        self.examples.iter().map(move |ex| {
            let story = self.story(&ex.story_id).expect("example references a known story");
            CorpusRecord {
                source: story.source_domain,
                story: story.text.clone(),
                example: ex.clone(),
            }
        })
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for record in self.records() {
            serde_json::to_writer(&mut out, &record)?;
            out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Corpus> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut stories: Vec<Story> = Vec::new();
        let mut seen: HashMap<String, usize> = HashMap::new();
        let mut examples = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
                record: format!("{}:{}", path.display(), lineno + 1),
                message: e.to_string(),
            })?;
            match seen.get(&record.example.story_id) {
                Some(&i) if stories[i].text != record.story => {
                    return Err(Error::Parse {
                        record: format!("{}:{}", path.display(), lineno + 1),
                        message: format!("story {} has conflicting texts", record.example.story_id),
                    })
                }
                Some(_) => {}
                None => {
                    seen.insert(record.example.story_id.clone(), stories.len());
                    stories.push(Story {
                        id: record.example.story_id.clone(),
                        text: record.story,
                        source_domain: record.source,
                    });
                }
            }
            examples.push(record.example);
        }
        Ok(Corpus::new(stories, examples))
    }
}

/// One line of the internal JSONL corpus: a QA example plus its story.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorpusRecord {
    source: SourceDomain,
    story: String,
    #[serde(flatten)]
    example: QAExample,
}

// --- CoQA JSON --------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct CoqaFile {
    data: Vec<serde_json::Value>,
}

#[derive(Debug, Deserialize)]
struct CoqaItem {
    id: String,
    story: String,
    source: String,
    questions: Vec<CoqaQuestion>,
    answers: Vec<CoqaAnswer>,
    #[serde(default)]
    additional_answers: BTreeMap<String, Vec<CoqaAnswer>>,
}

#[derive(Debug, Deserialize)]
struct CoqaQuestion {
    input_text: String,
    turn_id: u32,
}

#[derive(Debug, Deserialize)]
struct CoqaAnswer {
    span_start: i64,
    span_end: i64,
    #[serde(default)]
    span_text: String,
    input_text: String,
    turn_id: u32,
}

/// Loads a CoQA-format JSON file. Every turn yields one [`QAExample`] with
/// derived span and answer-type labels.
pub fn load_corpus(path: &Path, split: Split) -> Result<Corpus> {
    let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_coqa(&raw, split, &path.display().to_string())
}

pub fn parse_coqa(raw: &str, split: Split, origin: &str) -> Result<Corpus> {
    let file: CoqaFile = serde_json::from_str(raw).map_err(|e| Error::Parse {
        record: origin.to_string(),
        message: e.to_string(),
    })?;
    let mut stories = Vec::with_capacity(file.data.len());
    let mut examples = Vec::new();
    let mut ids = std::collections::HashSet::new();
    for (i, value) in file.data.into_iter().enumerate() {
        let item: CoqaItem = serde_json::from_value(value).map_err(|e| Error::Parse {
            record: format!("{origin} data[{i}]"),
            message: e.to_string(),
        })?;
        let (story, turns) = convert_item(item, split, &format!("{origin} data[{i}]"))?;
        if !ids.insert(story.id.clone()) {
            return Err(Error::Parse {
                record: format!("{origin} data[{i}]"),
                message: format!("duplicate story id {}", story.id),
            });
        }
        examples.extend(turns);
        stories.push(story);
    }
    Ok(Corpus::new(stories, examples))
}

fn convert_item(item: CoqaItem, split: Split, record: &str) -> Result<(Story, Vec<QAExample>)> {
    let parse_err = |message: String| Error::Parse {
        record: format!("{record} (story {})", item.id),
        message,
    };
    if item.story.is_empty() {
        return Err(parse_err("empty story text".into()));
    }
    let source_domain =
        SourceDomain::from_coqa(&item.source).ok_or_else(|| parse_err(format!("unknown source {:?}", item.source)))?;
    if item.questions.len() != item.answers.len() {
        return Err(parse_err(format!(
            "{} questions but {} answers",
            item.questions.len(),
            item.answers.len()
        )));
    }
    for extra in item.additional_answers.values() {
        if extra.len() != item.answers.len() {
            return Err(parse_err("additional_answers length differs from answers".into()));
        }
    }

    let mut examples = Vec::with_capacity(item.questions.len());
    let mut history: Vec<HistoryPair> = Vec::new();
    for (i, (q, a)) in item.questions.iter().zip(&item.answers).enumerate() {
        let expected = i as u32 + 1;
        if q.turn_id != expected || a.turn_id != expected {
            return Err(parse_err(format!(
                "turn ids must be consecutive from 1: expected {expected}, got question {} / answer {}",
                q.turn_id, a.turn_id
            )));
        }
        let (rationale, rationale_text) = rationale_span(&item.story, a, &item.id)?;
        let mut gold_answers = vec![a.input_text.clone()];
        if split == Split::Dev {
            for extra in item.additional_answers.values() {
                if extra[i].turn_id != expected {
                    return Err(parse_err(format!("additional answer turn id mismatch at turn {expected}")));
                }
                gold_answers.push(extra[i].input_text.clone());
            }
        }
        let turn = Turn {
            turn_id: expected,
            question: q.input_text.clone(),
            gold_answers,
            rationale,
            rationale_text,
        };
        let example = labelled_example(item.id.clone(), turn, history.clone());
        history.push(HistoryPair {
            question: q.input_text.clone(),
            answer: a.input_text.clone(),
        });
        examples.push(example);
    }
    let story = Story {
        id: item.id,
        text: item.story,
        source_domain,
    };
    Ok((story, examples))
}

/// Builds an example and derives its labels from the first gold answer.
pub fn labelled_example(story_id: String, turn: Turn, history: Vec<HistoryPair>) -> QAExample {
    let answer = &turn.gold_answers[0];
    let span_label = turn.rationale.and_then(|r| {
        derive_span_label(&turn.rationale_text, answer).map(|s| s.shift(r.start))
    });
    let type_label = derive_type_label(answer);
    QAExample {
        story_id,
        turn,
        history,
        span_label,
        type_label,
        provenance: None,
    }
}

/// Converts CoQA character offsets to a trimmed byte span of the story.
/// Negative offsets mark unanswerable turns.
fn rationale_span(story: &str, a: &CoqaAnswer, story_id: &str) -> Result<(Option<CharSpan>, String)> {
    if a.span_start < 0 || a.span_end < 0 {
        return Ok((None, String::new()));
    }
    let invalid = |message: String| Error::Validation {
        story_id: story_id.to_string(),
        turn_id: a.turn_id,
        message,
    };
    if a.span_start > a.span_end {
        return Err(invalid(format!("rationale start {} > end {}", a.span_start, a.span_end)));
    }
    let start = char_to_byte(story, a.span_start as usize);
    let end = char_to_byte(story, a.span_end as usize);
    let (Some(start), Some(end)) = (start, end) else {
        return Err(invalid(format!(
            "rationale span [{}, {}) out of bounds for story of {} chars",
            a.span_start,
            a.span_end,
            story.chars().count()
        )));
    };
    let raw = &story[start..end];
    let lead = raw.len() - raw.trim_start().len();
    let trimmed = raw.trim();
    let span = CharSpan::new(start + lead, start + lead + trimmed.len());
    if !a.span_text.is_empty() && a.span_text.trim() != trimmed {
        log::warn!(
            "story {story_id} turn {}: span_text differs from the story substring; using the story",
            a.turn_id
        );
    }
    Ok((Some(span), trimmed.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = r#"{"version": "1.0", "data": [
      {"id": "s1", "source": "mctest", "story": "Tom had a red ball. He gave it to Ann.",
       "questions": [{"input_text": "What did Tom have?", "turn_id": 1},
                     {"input_text": "What color?", "turn_id": 2},
                     {"input_text": "Who got it?", "turn_id": 3}],
       "answers": [{"span_start": 0, "span_end": 19, "span_text": "Tom had a red ball.", "input_text": "a ball", "turn_id": 1},
                   {"span_start": 10, "span_end": 13, "span_text": "red", "input_text": "red", "turn_id": 2},
                   {"span_start": 20, "span_end": 38, "span_text": "He gave it to Ann.", "input_text": "Ann", "turn_id": 3}]},
      {"id": "s2", "source": "cnn", "story": "Rain fell. Nobody came. The end.",
       "questions": [{"input_text": "Did anyone come?", "turn_id": 1},
                     {"input_text": "What fell?", "turn_id": 2},
                     {"input_text": "Why?", "turn_id": 3}],
       "answers": [{"span_start": 11, "span_end": 23, "span_text": "Nobody came.", "input_text": "No", "turn_id": 1},
                   {"span_start": 0, "span_end": 10, "span_text": "Rain fell.", "input_text": "Rain", "turn_id": 2},
                   {"span_start": -1, "span_end": -1, "span_text": "unknown", "input_text": "unknown", "turn_id": 3}]}
    ]}"#;

    #[test]
    fn two_story_fixture_chains_history() {
        let corpus = parse_coqa(FIXTURE, Split::Train, "fixture").unwrap();
        assert_eq!(corpus.stories.len(), 2);
        assert_eq!(corpus.len(), 6);
        for ex in &corpus.examples {
            assert_eq!(ex.history.len() as u32, ex.turn.turn_id - 1);
        }
        let third = &corpus.examples[2];
        assert_eq!(third.history[0].question, "What did Tom have?");
        assert_eq!(third.history[1].answer, "red");
        assert_eq!(third.span_label.unwrap().slice(&corpus.stories[0].text), "Ann");
        assert_eq!(corpus.examples[0].span_label.unwrap().slice(&corpus.stories[0].text), "ball");
        assert_eq!(corpus.examples[3].type_label, AnswerType::No);
        assert_eq!(corpus.examples[5].type_label, AnswerType::Unanswerable);
        assert_eq!(corpus.examples[5].turn.rationale, None);
    }

    #[test]
    fn empty_data_is_empty_corpus() {
        let corpus = parse_coqa(r#"{"data": []}"#, Split::Dev, "empty").unwrap();
        assert!(corpus.is_empty());
    }

    #[test]
    fn malformed_record_is_named() {
        let raw = r#"{"data": [{"id": "x", "story": "s"}]}"#;
        let err = parse_coqa(raw, Split::Train, "bad.json").unwrap_err();
        assert!(err.to_string().contains("data[0]"), "{err}");
    }

    #[test]
    fn out_of_bounds_rationale_names_story_and_turn() {
        let raw = FIXTURE.replace(r#""span_start": 20, "span_end": 38"#, r#""span_start": 20, "span_end": 380"#);
        let err = parse_coqa(&raw, Split::Train, "f").unwrap_err();
        match err {
            Error::Validation { story_id, turn_id, .. } => {
                assert_eq!(story_id, "s1");
                assert_eq!(turn_id, 3);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn dev_split_keeps_additional_answers() {
        let raw = r#"{"data": [{"id": "d", "source": "race", "story": "Yes it is.",
          "questions": [{"input_text": "Is it?", "turn_id": 1}],
          "answers": [{"span_start": 0, "span_end": 3, "span_text": "Yes", "input_text": "yes", "turn_id": 1}],
          "additional_answers": {"0": [{"span_start": 0, "span_end": 3, "span_text": "Yes", "input_text": "Yes it is", "turn_id": 1}]}}]}"#;
        let dev = parse_coqa(raw, Split::Dev, "d").unwrap();
        assert_eq!(dev.examples[0].turn.gold_answers, ["yes", "Yes it is"]);
        let train = parse_coqa(raw, Split::Train, "d").unwrap();
        assert_eq!(train.examples[0].turn.gold_answers, ["yes"]);
    }

    #[test]
    fn jsonl_roundtrip() {
        let corpus = parse_coqa(FIXTURE, Split::Train, "fixture").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        corpus.write_jsonl(&path).unwrap();
        let back = Corpus::read_jsonl(&path).unwrap();
        assert_eq!(back.examples, corpus.examples);
        assert_eq!(back.stories, corpus.stories);
        assert_eq!(back.fingerprint(), corpus.fingerprint());
    }
}
