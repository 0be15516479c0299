use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::metrics::normalize_text;
use crate::span::CharSpan;
use crate::text::words;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnswerType {
    Freeform,
    Yes,
    No,
    Unanswerable,
    One,
    Two,
    Three,
    Four,
    Five,
}

impl AnswerType {
    pub const ALL: [AnswerType; 9] = [
        AnswerType::Freeform,
        AnswerType::Yes,
        AnswerType::No,
        AnswerType::Unanswerable,
        AnswerType::One,
        AnswerType::Two,
        AnswerType::Three,
        AnswerType::Four,
        AnswerType::Five,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn count(n: u32) -> Option<Self> {
        match n {
            1..=5 => Self::from_index(3 + n as usize),
            _ => None,
        }
    }

    pub fn is_count(self) -> bool {
        self.index() >= 4
    }

    /// Answer string emitted when the type head overrides the span.
    pub fn canonical_text(self) -> Option<&'static str> {
        Some(match self {
            AnswerType::Freeform => return None,
            AnswerType::Yes => "yes",
            AnswerType::No => "no",
            AnswerType::Unanswerable => "unknown",
            AnswerType::One => "one",
            AnswerType::Two => "two",
            AnswerType::Three => "three",
            AnswerType::Four => "four",
            AnswerType::Five => "five",
        })
    }
}

/// Classifies an already-normalized token list.
pub fn answer_type_for(tokens: &[String]) -> AnswerType {
    let [token] = tokens else {
        return AnswerType::Freeform;
    };
    match token.as_str() {
        "yes" => AnswerType::Yes,
        "no" => AnswerType::No,
        "unknown" => AnswerType::Unanswerable,
        "1" | "one" => AnswerType::One,
        "2" | "two" => AnswerType::Two,
        "3" | "three" => AnswerType::Three,
        "4" | "four" => AnswerType::Four,
        "5" | "five" => AnswerType::Five,
        _ => AnswerType::Freeform,
    }
}

/// Answer-type label of a gold answer. Only bare numerals map to the
/// counting classes; "five days" stays freeform.
pub fn derive_type_label(gold_answer: &str) -> AnswerType {
    answer_type_for(&normalize_text(gold_answer))
}

/// The word-aligned substring of `rationale_text` with maximal token F1
/// against `gold_answer`, as a byte span relative to `rationale_text`.
///
/// Ties go to the substring with fewer normalized tokens, then to the
/// earlier start, then to the shorter byte length. Returns `None` when no
/// substring overlaps the answer.
pub fn derive_span_label(rationale_text: &str, gold_answer: &str) -> Option<CharSpan> {
    let gold = normalize_text(gold_answer);
    let mut gold_counts: HashMap<&str, i64> = HashMap::new();
    for t in &gold {
        *gold_counts.entry(t).or_default() += 1;
    }
    let ws = words(rationale_text);
    let word_tokens: Vec<Vec<String>> = ws.iter().map(|w| normalize_text(w.text)).collect();

    // F1 as the exact ratio 2c / (p + g); the empty cases follow the metric.
    let mut best: Option<(Ratio, (i64, usize, usize), CharSpan)> = None;
    for i in 0..ws.len() {
        let mut remaining = gold_counts.clone();
        let mut common = 0i64;
        let mut pred_len = 0i64;
        for j in i..ws.len() {
            for t in &word_tokens[j] {
                pred_len += 1;
                if let Some(n) = remaining.get_mut(t.as_str()) {
                    if *n > 0 {
                        *n -= 1;
                        common += 1;
                    }
                }
            }
            let f1 = if pred_len == 0 || gold.is_empty() {
                Ratio::from_bool(pred_len == 0 && gold.is_empty())
            } else {
                Ratio {
                    num: 2 * common,
                    den: pred_len + gold.len() as i64,
                }
            };
            let span = CharSpan::new(ws[i].span.start, ws[j].span.end);
            let tie_key = (pred_len, span.start, span.len());
            let better = match &best {
                None => true,
                Some((bf, bk, _)) => match f1.cmp(bf) {
                    std::cmp::Ordering::Greater => true,
                    std::cmp::Ordering::Less => false,
                    std::cmp::Ordering::Equal => tie_key < *bk,
                },
            };
            if better {
                best = Some((f1, tie_key, span));
            }
        }
    }
    best.filter(|(f1, _, _)| f1.num > 0).map(|(_, _, span)| span)
}

#[derive(Debug, Clone, Copy)]
struct Ratio {
    num: i64,
    den: i64,
}

impl Ratio {
    fn from_bool(b: bool) -> Self {
        Ratio {
            num: b as i64,
            den: 1,
        }
    }

    fn cmp(&self, other: &Ratio) -> std::cmp::Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}
