use serde::{Deserialize, Serialize};

use super::lexicon::{negative_words, positive_words};
use crate::span::CharSpan;
use crate::text::{lower_words, sentence_spans, stem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Polarity {
    Negative,
    NonNegative,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentimentLabel {
    pub sentence: CharSpan,
    pub polarity: Polarity,
}

pub trait SentimentClassifier: Send + Sync {
    fn name(&self) -> &str;

    /// Polarity of one sentence (or short text treated as one).
    fn polarity(&self, sentence: &str) -> Polarity;

    /// Sentence spans partitioning `text`.
    fn split(&self, text: &str) -> Vec<CharSpan> {
        sentence_spans(text)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Splits `text` into sentences and labels each one.
pub fn sentence_sentiment(text: &str, classifier: &dyn SentimentClassifier) -> Vec<SentimentLabel> {
    classifier
        .split(text)
        .into_iter()
        .map(|sentence| SentimentLabel {
            sentence,
            polarity: classifier.polarity(sentence.slice(text)),
        })
        .collect()
}

/// Negative iff negative-lexicon hits outnumber positive ones.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconSentiment;

impl SentimentClassifier for LexiconSentiment {
    fn name(&self) -> &str {
        "lexicon-sentiment"
    }

    /// Lexicon entries are words or two-word phrases; a phrase match covers
    /// both words. A hit within three words after a negator counts for the
    /// opposite side ("did not like").
    fn polarity(&self, sentence: &str) -> Polarity {
        let (mut neg, mut pos) = (0, 0);
        let words = lower_words(sentence);
        let mut i = 0;
        while i < words.len() {
            let w = &words[i];
            let negated = words[i.saturating_sub(3)..i].iter().any(|p| is_negator(p));
            let phrase = words.get(i + 1).map(|next| format!("{w} {next}"));
            let s = stem(w);
            let (hit_neg, hit_pos, width) = match phrase {
                Some(p) if negative_words().contains(p.as_str()) => (true, false, 2),
                Some(p) if positive_words().contains(p.as_str()) => (false, true, 2),
                _ if negative_words().contains(w.as_str()) || negative_words().contains(s.as_str()) => (true, false, 1),
                _ if positive_words().contains(w.as_str()) || positive_words().contains(s.as_str()) => (false, true, 1),
                _ => (false, false, 1),
            };
            i += width;
            if (hit_neg && !negated) || (hit_pos && negated) {
                neg += 1;
            } else if hit_neg || hit_pos {
                pos += 1;
            }
        }
        if neg > pos {
            Polarity::Negative
        } else {
            Polarity::NonNegative
        }
    }
}

fn is_negator(word: &str) -> bool {
    matches!(word, "not" | "no" | "never" | "nothing" | "nobody" | "without") || word.ends_with("n't")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(text: &str) -> Vec<Polarity> {
        sentence_sentiment(text, &LexiconSentiment).into_iter().map(|l| l.polarity).collect()
    }

    #[test]
    fn job_hunt_examples() {
        assert_eq!(labels("How much later did he get his next job?"), [Polarity::Negative]);
        assert_eq!(labels("Casillas has finally landed his first full-time job"), [Polarity::NonNegative]);
        let full = "Nearly four years later, as Obama seeks reelection, Casillas has finally landed his first \
                    full-time job, emerging out of the group known as the long-term unemployed.";
        assert_eq!(labels(full), [Polarity::NonNegative]);
    }

    #[test]
    fn negators_flip_nearby_words() {
        assert_eq!(labels("Ben did not like the book."), [Polarity::Negative]);
        assert_eq!(labels("She was never sad."), [Polarity::NonNegative]);
        assert_eq!(labels("Not a word, but he liked it."), [Polarity::NonNegative]);
    }

    #[test]
    fn empty_text() {
        assert!(labels("").is_empty());
    }

    #[test]
    fn spans_partition() {
        let t = "He was sad. She was happy!  Then";
        let l = sentence_sentiment(t, &LexiconSentiment);
        assert_eq!(l.len(), 3);
        assert_eq!(l[0].polarity, Polarity::Negative);
        assert_eq!(l[1].polarity, Polarity::NonNegative);
        assert_eq!(l[0].sentence.start, 0);
        assert_eq!(l[2].sentence.end, t.len());
    }
}
