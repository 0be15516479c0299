use serde::{Deserialize, Serialize};

use super::model::HeadOutputs;
use crate::corpus::{AnswerType, EncodedInput};
use crate::scalar::Scalar;
use crate::span::CharSpan;

/// Longest answer span considered, in tokens.
pub const MAX_ANSWER_TOKENS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PredictionKind {
    #[serde(rename = "SPAN")]
    Span,
    #[serde(rename = "YES")]
    Yes,
    #[serde(rename = "NO")]
    No,
    #[serde(rename = "UNANSWERABLE")]
    Unanswerable,
    #[serde(rename = "COUNT_1")]
    Count1,
    #[serde(rename = "COUNT_2")]
    Count2,
    #[serde(rename = "COUNT_3")]
    Count3,
    #[serde(rename = "COUNT_4")]
    Count4,
    #[serde(rename = "COUNT_5")]
    Count5,
}

impl PredictionKind {
    /// The override kind for a non-FREEFORM answer type.
    pub fn from_answer_type(t: AnswerType) -> Option<Self> {
        Some(match t {
            AnswerType::Freeform => return None,
            AnswerType::Yes => PredictionKind::Yes,
            AnswerType::No => PredictionKind::No,
            AnswerType::Unanswerable => PredictionKind::Unanswerable,
            AnswerType::One => PredictionKind::Count1,
            AnswerType::Two => PredictionKind::Count2,
            AnswerType::Three => PredictionKind::Count3,
            AnswerType::Four => PredictionKind::Count4,
            AnswerType::Five => PredictionKind::Count5,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub answer_text: String,
    pub kind: PredictionKind,
    /// Byte span in the story for SPAN predictions.
    pub span: Option<CharSpan>,
    /// Span probability product or class probability, in (0, 1].
    pub confidence: f64,
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

fn positive(p: f64) -> f64 {
    p.max(f64::MIN_POSITIVE)
}

/// Softmax of the type head, indexed like [`AnswerType::index`].
pub fn type_probabilities<S: Scalar>(outputs: &HeadOutputs<S>) -> Vec<f64> {
    softmax(&outputs.type_logits.iter().map(|x| x.as_f64()).collect::<Vec<_>>())
}

/// Best `(first, last, p_start · p_end)` over story tokens with
/// `last - first < MAX_ANSWER_TOKENS`; earlier and shorter spans win ties.
pub fn best_span(p_start: &[f64], p_end: &[f64], encoded: &EncodedInput) -> Option<(usize, usize, f64)> {
    let story = encoded.story_range();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in story.clone() {
        if encoded.offsets[i].is_none() {
            continue;
        }
        for j in i..story.end.min(i + MAX_ANSWER_TOKENS) {
            if encoded.offsets[j].is_none() {
                continue;
            }
            let p = p_start[i] * p_end[j];
            if best.is_none_or(|(_, _, b)| p > b) {
                best = Some((i, j, p));
            }
        }
    }
    best
}

/// Picks the answer: the best story span, unless some non-FREEFORM answer
/// type is strictly more probable than that span.
pub fn decode<S: Scalar>(outputs: &HeadOutputs<S>, encoded: &EncodedInput, story_text: &str) -> Prediction {
    let to_f64 = |v: &[S]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
    let p_start = softmax(&to_f64(&outputs.start_logits));
    let p_end = softmax(&to_f64(&outputs.end_logits));
    let p_type = type_probabilities(outputs);

    let class = (1..p_type.len())
        .filter_map(|i| AnswerType::from_index(i).map(|t| (t, p_type[i])))
        .fold(None::<(AnswerType, f64)>, |best, (t, p)| match best {
            Some((_, b)) if b >= p => best,
            _ => Some((t, p)),
        });
    let class_prediction = |(t, p): (AnswerType, f64)| Prediction {
        answer_text: t.canonical_text().expect("non-FREEFORM type").to_string(),
        kind: PredictionKind::from_answer_type(t).expect("non-FREEFORM type"),
        span: None,
        confidence: positive(p),
    };

    match best_span(&p_start, &p_end, encoded) {
        None => {
            let p = p_type.get(AnswerType::Unanswerable.index()).copied().unwrap_or(1.0);
            class_prediction((AnswerType::Unanswerable, p))
        }
        Some((i, j, span_confidence)) => match class {
            Some(c) if c.1 > span_confidence => class_prediction(c),
            _ => {
                let span = encoded.story_span(i, j).expect("span lies in the story segment");
                Prediction {
                    answer_text: span.slice(story_text).to_string(),
                    kind: PredictionKind::Span,
                    span: Some(span),
                    confidence: positive(span_confidence),
                }
            }
        },
    }
}
