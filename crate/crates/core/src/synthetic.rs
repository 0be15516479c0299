//! Deterministic CoQA-format toy dialogues for smoke tests, benchmarks and
//! trainability checks when the real corpus is not at hand.
//!
//! Stories are short templated facts about a few characters; questions cover
//! spans, yes/no, counts one..five and unanswerable turns.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::corpus::{parse_coqa, Corpus, Split};

const NAMES: [&str; 16] = [
    "Tom", "Anna", "Mark", "Lucy", "Sam", "Nina", "Paul", "Rosa", "Ben", "Ella", "Jack", "Mia", "Leo", "Ivy", "Max",
    "Zoe",
];
const OBJECTS: [&str; 12] = [
    "red ball",
    "blue kite",
    "old book",
    "green hat",
    "small boat",
    "yellow bike",
    "wooden box",
    "silver watch",
    "paper map",
    "big drum",
    "warm coat",
    "toy train",
];
const PLACES: [&str; 10] = [
    "Paris", "London", "Boston", "Madrid", "Oslo", "Cairo", "Dublin", "Lima", "Rome", "Tokyo",
];
const PETS: [&str; 6] = ["cats", "dogs", "birds", "fish", "rabbits", "hens"];
const COUNTS: [&str; 5] = ["one", "two", "three", "four", "five"];

struct Builder {
    story: String,
    questions: Vec<Value>,
    answers: Vec<Value>,
}

impl Builder {
    /// Appends a sentence and returns its character span.
    fn sentence(&mut self, text: &str) -> (usize, usize) {
        if !self.story.is_empty() {
            self.story.push(' ');
        }
        let start = self.story.len();
        self.story.push_str(text);
        (start, self.story.len())
    }

    fn turn(&mut self, question: String, answer: &str, rationale: Option<(usize, usize)>) {
        let turn_id = self.questions.len() + 1;
        let (start, end) = rationale.map_or((-1i64, -1i64), |(s, e)| (s as i64, e as i64));
        let span_text = rationale.map_or(String::new(), |(s, e)| self.story[s..e].to_string());
        self.questions.push(json!({"input_text": question, "turn_id": turn_id}));
        self.answers.push(json!({
            "span_start": start,
            "span_end": end,
            "span_text": span_text,
            "input_text": answer,
            "turn_id": turn_id,
        }));
    }
}

fn story(id: usize, rng: &mut ChaCha8Rng) -> Value {
    let mut names = NAMES.to_vec();
    names.shuffle(rng);
    let people = &names[..3];
    let mut b = Builder {
        story: String::new(),
        questions: Vec::new(),
        answers: Vec::new(),
    };
    let mut facts = Vec::new();
    for &who in people {
        let object = *OBJECTS.choose(rng).expect("non-empty");
        let place = *PLACES.choose(rng).expect("non-empty");
        let pets = *PETS.choose(rng).expect("non-empty");
        let count = rng.gen_range(0..COUNTS.len());
        let owns = b.sentence(&format!("{who} has a {object}."));
        let lives = b.sentence(&format!("{who} lives in {place}."));
        let keeps = b.sentence(&format!("{who} keeps {} {pets}.", COUNTS[count]));
        facts.push((who, object, place, pets, count, owns, lives, keeps));
    }
    let absent = names[3];
    for (who, object, place, pets, count, owns, lives, keeps) in facts {
        match rng.gen_range(0..3) {
            0 => b.turn(format!("What does {who} have?"), &format!("a {object}"), Some(owns)),
            1 => b.turn(format!("Where does {who} live?"), place, Some(lives)),
            _ => b.turn(format!("How many {pets} does {who} keep?"), COUNTS[count], Some(keeps)),
        }
        if rng.gen_bool(0.5) {
            b.turn(format!("Does {who} live in {place}?"), "yes", Some(lives));
        } else {
            let other = PLACES.iter().find(|p| **p != place).expect("several places");
            b.turn(format!("Does {who} live in {other}?"), "no", Some(lives));
        }
    }
    if rng.gen_bool(0.5) {
        b.turn(format!("Where does {absent} live?"), "unknown", None);
    }
    json!({
        "id": format!("toy{id:04}"),
        "source": "mctest",
        "story": b.story,
        "questions": b.questions,
        "answers": b.answers,
    })
}

/// CoQA-format JSON with `stories` dialogues of six or seven turns each.
pub fn toy_coqa_json(stories: usize, seed: u64) -> Value {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<Value> = (0..stories).map(|i| story(i, &mut rng)).collect();
    json!({"version": "toy", "data": data})
}

pub fn toy_corpus(stories: usize, seed: u64) -> Corpus {
    parse_coqa(&toy_coqa_json(stories, seed).to_string(), Split::Train, "toy").expect("toy corpus is well formed")
}
