//! Masked-LM likelihood of proper nouns, and the backends it relies on.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::span::CharSpan;
use crate::text::{is_stopword, sentence_spans};

/// Likelihood below which a proper noun counts as surprising.
pub const SURPRISAL_THRESHOLD: f64 = 5e-5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalScore {
    /// Byte span of the proper noun.
    pub token: CharSpan,
    pub likelihood: f64,
}

impl SurprisalScore {
    pub fn is_surprising(&self, threshold: f64) -> bool {
        self.likelihood < threshold
    }
}

/// Fill-in distribution at one masked position, sorted by descending
/// probability.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Distribution(Vec<(String, f64)>);

impl Distribution {
    pub fn new(mut entries: Vec<(String, f64)>) -> Self {
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Distribution(entries)
    }

    /// Probability of `token`; zero when it is not listed.
    pub fn prob(&self, token: &str) -> f64 {
        self.0.iter().find(|(t, _)| t == token).map_or(0.0, |(_, p)| *p)
    }

    pub fn top_k(&self, k: usize) -> &[(String, f64)] {
        &self.0[..k.min(self.0.len())]
    }
}

pub trait MaskedLm: Send + Sync {
    fn name(&self) -> &str;

    /// Vocabulary pieces `word` is split into.
    fn pieces(&self, word: &str) -> Vec<String>;

    /// Distributions at each of `n_masks` consecutive mask slots that
    /// replace `span` in `text`.
    fn fill(&self, text: &str, span: CharSpan, n_masks: usize) -> Result<Vec<Distribution>>;

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Backend used when no masked LM is configured: every call fails.
#[derive(Debug, Clone, Default)]
pub struct UnavailableMaskedLm {
    pub reason: String,
}

impl MaskedLm for UnavailableMaskedLm {
    fn name(&self) -> &str {
        "unavailable"
    }

    fn pieces(&self, word: &str) -> Vec<String> {
        vec![word.to_string()]
    }

    fn fill(&self, _text: &str, _span: CharSpan, _n_masks: usize) -> Result<Vec<Distribution>> {
        Err(Error::ScorerUnavailable(if self.reason.is_empty() {
            "no masked language model configured".into()
        } else {
            self.reason.clone()
        }))
    }
}

/// Table-driven masked LM: distributions are looked up by the surface form
/// of the masked word. Serves as a test fixture and as the reader for
/// scores precomputed by an external model.
///
/// JSON layout: `{"default": [[tok, p], ...], "slots": {"word": [[[tok, p], ...], ...]},
/// "pieces": {"word": ["pi", "##ece"]}}`; each slot lists one distribution per
/// piece (the last one is reused for extra pieces).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TableMaskedLm {
    #[serde(default)]
    pub default: Distribution,
    #[serde(default)]
    pub slots: HashMap<String, Vec<Distribution>>,
    #[serde(default)]
    pub pieces: HashMap<String, Vec<String>>,
}

impl TableMaskedLm {
    pub fn with_slot(mut self, word: &str, entries: &[(&str, f64)]) -> Self {
        let dist = Distribution::new(entries.iter().map(|(t, p)| (t.to_string(), *p)).collect());
        self.slots.entry(word.to_string()).or_default().push(dist);
        self
    }

    pub fn with_pieces(mut self, word: &str, pieces: &[&str]) -> Self {
        self.pieces.insert(word.to_string(), pieces.iter().map(|p| p.to_string()).collect());
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&raw).map_err(|e| Error::Parse {
            record: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

impl MaskedLm for TableMaskedLm {
    fn name(&self) -> &str {
        "table-mlm"
    }

    fn pieces(&self, word: &str) -> Vec<String> {
        self.pieces.get(word).cloned().unwrap_or_else(|| vec![word.to_string()])
    }

    fn fill(&self, text: &str, span: CharSpan, n_masks: usize) -> Result<Vec<Distribution>> {
        let word = span.slice(text);
        let dists = match self.slots.get(word) {
            Some(d) if !d.is_empty() => d.as_slice(),
            _ => std::slice::from_ref(&self.default),
        };
        Ok((0..n_masks).map(|i| dists[i.min(dists.len() - 1)].clone()).collect())
    }
}

pub trait PosTagger: Send + Sync {
    fn name(&self) -> &str;
    /// Byte spans of tokens tagged as proper nouns.
    fn proper_nouns(&self, text: &str) -> Vec<CharSpan>;

    fn is_proper_noun_at(&self, text: &str, span: CharSpan) -> bool {
        self.proper_nouns(text).contains(&span)
    }
}

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\p{L}[\p{L}\p{N}]*(?:['’-]\p{L}+)*").expect("valid regex"))
}

/// Capitalization heuristic: a capitalized non-stopword is a proper noun
/// unless it opens its sentence, where it needs a capitalized occurrence
/// elsewhere in the text. Explicit word lists override the heuristic.
#[derive(Debug, Clone, Default)]
pub struct HeuristicPosTagger {
    pub always_proper: HashSet<String>,
    pub never_proper: HashSet<String>,
}

impl HeuristicPosTagger {
    pub fn with_proper(mut self, words: &[&str]) -> Self {
        self.always_proper.extend(words.iter().map(|w| w.to_string()));
        self
    }

    pub fn with_non_proper(mut self, words: &[&str]) -> Self {
        self.never_proper.extend(words.iter().map(|w| w.to_string()));
        self
    }
}

impl PosTagger for HeuristicPosTagger {
    fn name(&self) -> &str {
        "heuristic-pos"
    }

    fn proper_nouns(&self, text: &str) -> Vec<CharSpan> {
        let sentence_starts: HashSet<usize> = sentence_spans(text)
            .iter()
            .map(|s| s.start + (s.slice(text).len() - s.slice(text).trim_start_matches(|c: char| !c.is_alphanumeric()).len()))
            .collect();
        let words: Vec<(CharSpan, &str)> = word_regex()
            .find_iter(text)
            .map(|m| (CharSpan::new(m.start(), m.end()), m.as_str()))
            .collect();
        let capitalized_inside: HashSet<&str> = words
            .iter()
            .filter(|(s, w)| !sentence_starts.contains(&s.start) && starts_upper(w))
            .map(|(_, w)| *w)
            .collect();
        words
            .iter()
            .filter(|(span, w)| {
                if self.never_proper.contains(*w) {
                    return false;
                }
                if self.always_proper.contains(*w) {
                    return true;
                }
                if !starts_upper(w) || *w == "I" || is_stopword(&w.to_lowercase()) {
                    return false;
                }
                !sentence_starts.contains(&span.start) || capitalized_inside.contains(w)
            })
            .map(|(s, _)| *s)
            .collect()
    }
}

fn starts_upper(w: &str) -> bool {
    w.chars().next().is_some_and(char::is_uppercase)
}

/// Scores every proper noun of `text` by the masked-LM probability of the
/// original word in its sentence. Multi-piece words use the geometric mean
/// of their piece probabilities.
pub fn surprisal_scores(text: &str, masked_lm: &dyn MaskedLm, tagger: &dyn PosTagger) -> Result<Vec<SurprisalScore>> {
    let mut out = Vec::new();
    let sentences = sentence_spans(text);
    for token in tagger.proper_nouns(text) {
        let sentence = sentences
            .iter()
            .find(|s| s.contains(&token))
            .copied()
            .unwrap_or(CharSpan::new(0, text.len()));
        let local = CharSpan::new(token.start - sentence.start, token.end - sentence.start);
        let likelihood = word_likelihood(sentence.slice(text), local, masked_lm)?;
        out.push(SurprisalScore { token, likelihood });
    }
    Ok(out)
}

/// Probability of the word at `span` being restored at its masked slot(s).
pub fn word_likelihood(text: &str, span: CharSpan, masked_lm: &dyn MaskedLm) -> Result<f64> {
    let pieces = masked_lm.pieces(span.slice(text));
    let dists = masked_lm.fill(text, span, pieces.len())?;
    let log_sum: f64 = pieces.iter().zip(&dists).map(|(p, d)| d.prob(p).ln()).sum();
    Ok((log_sum / pieces.len() as f64).exp().clamp(0.0, 1.0))
}
