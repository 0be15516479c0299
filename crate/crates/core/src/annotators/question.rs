use serde::{Deserialize, Serialize};

use super::lexicon::{entity_heads, is_auxiliary};
use crate::text::lower_words;

/// Coarse answer category of a question.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QuestionCategory {
    Num,
    Hum,
    Loc,
    Ent,
    Other,
}

pub trait QuestionClassifier: Send + Sync {
    fn name(&self) -> &str;
    fn classify(&self, question: &str) -> QuestionCategory;
}

/// Rule cascade over the leading wh-phrase.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleQuestionClassifier;

const LEADING_FILLERS: &[&str] = &["and", "but", "so", "then", "ok", "okay", "well", "also", "now"];

impl QuestionClassifier for RuleQuestionClassifier {
    fn name(&self) -> &str {
        "rule-question"
    }

    fn classify(&self, question: &str) -> QuestionCategory {
        let words = lower_words(question);
        let start = words
            .iter()
            .position(|w| !LEADING_FILLERS.contains(&w.as_str()))
            .unwrap_or(words.len());
        let words = &words[start..];
        // The first wh-word anywhere governs, e.g. "In what city ...".
        let Some(wh) = words.iter().position(|w| {
            matches!(
                w.as_str(),
                "how" | "when" | "who" | "whose" | "whom" | "where" | "what" | "which"
            )
        }) else {
            return QuestionCategory::Other;
        };
        let next = words.get(wh + 1).map(String::as_str);
        match (words[wh].as_str(), next) {
            ("how", Some("many" | "much" | "old" | "long" | "far" | "often")) => QuestionCategory::Num,
            ("how", _) => QuestionCategory::Other,
            ("when", _) => QuestionCategory::Num,
            ("what" | "which", Some("number" | "year" | "age" | "date" | "time" | "day" | "month")) => {
                QuestionCategory::Num
            }
            ("who" | "whose" | "whom", _) => QuestionCategory::Hum,
            ("where", _) => QuestionCategory::Loc,
            ("what" | "which", Some(head)) if entity_heads().contains(head) => QuestionCategory::Ent,
            ("what" | "which", Some(head)) if !is_auxiliary(head) && is_plain_noun(head) => {
                // "which city" / "what town": a location head is still LOC.
                if LOCATION_HEADS.contains(&head) {
                    QuestionCategory::Loc
                } else if PERSON_HEADS.contains(&head) {
                    QuestionCategory::Hum
                } else {
                    QuestionCategory::Ent
                }
            }
            _ => QuestionCategory::Other,
        }
    }
}

const LOCATION_HEADS: &[&str] = &["city", "country", "place", "state", "town", "village", "room", "street"];
const PERSON_HEADS: &[&str] = &["person", "man", "woman", "boy", "girl", "people", "team", "player"];

fn is_plain_noun(word: &str) -> bool {
    !matches!(
        word,
        "a" | "an" | "the" | "he" | "she" | "it" | "they" | "i" | "you" | "we" | "his" | "her" | "their" | "of"
            | "to" | "in" | "on" | "for" | "else" | "kind" | "happened" | "happens"
    ) && !super::lexicon::verb_forms().contains_key(word)
}
