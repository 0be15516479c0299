//! CoQA answer normalization, token F1 and per-class aggregation.

mod report;

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, TurnKey};
use crate::error::{Error, Result};
use crate::qa_classes::{ClassRecord, QaClass};

pub use report::{
    read_predictions, render_comparison, render_heatmap_svg, render_table, write_predictions, PredictionRecord,
};

fn article_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\b(a|an|the)\b").expect("valid regex"))
}

/// Official CoQA normalization: lowercase, drop ASCII punctuation, drop the
/// articles a/an/the, split on whitespace.
pub fn normalize_text(s: &str) -> Vec<String> {
    let lowered = s.to_lowercase();
    let no_punct: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    let no_articles = article_regex().replace_all(&no_punct, " ");
    no_articles.split_whitespace().map(str::to_string).collect()
}

/// Token F1 between one prediction and one reference, in `[0, 1]`.
pub fn f1_score(prediction: &str, reference: &str) -> f64 {
    f1_tokens(&normalize_text(prediction), &normalize_text(reference))
}

pub(crate) fn f1_tokens(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return (pred == gold) as u8 as f64;
    }
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in pred {
        if let Some(n) = counts.get_mut(t.as_str()) {
            if *n > 0 {
                *n -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Maximum token F1 of `prediction` over `references`.
///
/// # Panics
/// If `references` is empty.
pub fn token_f1<S: AsRef<str>>(prediction: &str, references: &[S]) -> f64 {
    assert!(!references.is_empty(), "token_f1 needs at least one reference");
    let pred = normalize_text(prediction);
    references
        .iter()
        .map(|r| f1_tokens(&pred, &normalize_text(r.as_ref())))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Max F1 over all references.
    #[default]
    SimpleMax,
    /// The official evaluator's leave-one-out average when a turn has
    /// several references.
    StrictOfficial,
}

/// Per-turn F1 in `[0, 1]` under the given mode.
pub fn turn_f1<S: AsRef<str>>(prediction: &str, references: &[S], mode: EvalMode) -> f64 {
    match mode {
        EvalMode::StrictOfficial if references.len() > 1 => {
            let total: f64 = (0..references.len())
                .map(|skip| {
                    let rest: Vec<&str> = references
                        .iter()
                        .enumerate()
                        .filter(|(i, _)| *i != skip)
                        .map(|(_, r)| r.as_ref())
                        .collect();
                    token_f1(prediction, &rest)
                })
                .sum();
            total / references.len() as f64
        }
        _ => token_f1(prediction, references),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScore {
    pub size: usize,
    /// Mean F1 ×100 over member turns; absent for empty classes.
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub overall_f1: f64,
    pub n_examples: usize,
    /// Keyed by the class column name (`num`, `1-5`, ...).
    pub per_class: BTreeMap<String, ClassScore>,
}

impl EvalReport {
    pub fn class(&self, class: QaClass) -> Option<&ClassScore> {
        self.per_class.get(class.column())
    }
}

/// Scores predictions against every turn of `corpus`; class scores use the
/// turns whose class bit is defined and set.
pub fn evaluate(
    predictions: &HashMap<TurnKey, String>,
    corpus: &Corpus,
    classes: &HashMap<TurnKey, ClassRecord>,
    mode: EvalMode,
) -> Result<EvalReport> {
    let mut missing: Vec<TurnKey> = corpus
        .examples
        .iter()
        .map(|e| e.key())
        .filter(|k| !predictions.contains_key(k))
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::MissingPredictions(missing));
    }

    let scores: Vec<(TurnKey, f64)> = corpus
        .examples
        .iter()
        .map(|e| {
            let key = e.key();
            let f1 = turn_f1(&predictions[&key], &e.turn.gold_answers, mode);
            (key, f1)
        })
        .collect();

    let n = scores.len();
    let overall_f1 = if n == 0 {
        0.0
    } else {
        100.0 * scores.iter().map(|(_, f)| f).sum::<f64>() / n as f64
    };

    let mut per_class = BTreeMap::new();
    if !classes.is_empty() {
        for class in QaClass::ALL {
            let member: Vec<f64> = scores
                .iter()
                .filter(|(k, _)| classes.get(k).is_some_and(|r| r.is_member(class)))
                .map(|(_, f)| *f)
                .collect();
            let f1 = (!member.is_empty()).then(|| 100.0 * member.iter().sum::<f64>() / member.len() as f64);
            per_class.insert(
                class.column().to_string(),
                ClassScore {
                    size: member.len(),
                    f1,
                },
            );
        }
    }
    Ok(EvalReport {
        mode,
        overall_f1,
        n_examples: n,
        per_class,
    })
}
