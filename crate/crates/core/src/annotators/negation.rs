use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::span::CharSpan;
use crate::text::sentence_spans;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NegationScope {
    pub cue: CharSpan,
    /// Negated material; empty when the cue closes its clause.
    pub scope: Vec<CharSpan>,
}

pub trait NegationDetector: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, text: &str) -> Vec<NegationScope>;
    /// Whether one instance may be called from several threads at once.
    fn concurrent_safe(&self) -> bool {
        true
    }
}

const CUES: &[&str] = &["neither", "never", "no", "nobody", "nor", "not", "nothing", "without"];
const CLAUSE_CONJUNCTIONS: &[&str] = &["and", "but", "nor", "or", "so", "yet"];

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+(?:['’]\w+)*|[^\w\s]").expect("valid regex"))
}

/// Cue-lexicon negation detector. The scope of a cue runs from the next
/// word to the end of its clause: sentence punctuation, a comma-like mark or
/// a coordinating conjunction.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexiconNegation;

impl NegationDetector for LexiconNegation {
    fn name(&self) -> &str {
        "lexicon-negation"
    }

    fn detect(&self, text: &str) -> Vec<NegationScope> {
        let mut out = Vec::new();
        for sentence in sentence_spans(text) {
            let base = sentence.start;
            let tokens: Vec<CharSpan> = token_regex()
                .find_iter(sentence.slice(text))
                .map(|m| CharSpan::new(base + m.start(), base + m.end()))
                .collect();
            for (i, tok) in tokens.iter().enumerate() {
                let word = tok.slice(text).to_lowercase();
                let cue = if CUES.contains(&word.as_str()) {
                    *tok
                } else if let Some(stem) = word.strip_suffix("n't").or_else(|| word.strip_suffix("n’t")) {
                    if stem.is_empty() {
                        continue;
                    }
                    let suffix = tok.slice(text).len() - stem.len();
                    CharSpan::new(tok.end - suffix, tok.end)
                } else {
                    continue;
                };
                let mut scope_end = None;
                for next in &tokens[i + 1..] {
                    let w = next.slice(text);
                    let is_word = w.chars().next().is_some_and(|c| c.is_alphanumeric() || c == '_');
                    if !is_word || CLAUSE_CONJUNCTIONS.contains(&w.to_lowercase().as_str()) {
                        break;
                    }
                    scope_end = Some(next.end);
                }
                let scope = match (tokens.get(i + 1), scope_end) {
                    (Some(first), Some(end)) => vec![CharSpan::new(first.start, end)],
                    _ => Vec::new(),
                };
                out.push(NegationScope { cue, scope });
            }
        }
        out
    }
}
