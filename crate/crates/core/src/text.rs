//! Small text helpers shared by label derivation and the annotators.

use crate::span::CharSpan;

/// A whitespace-delimited word with surrounding ASCII punctuation trimmed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Word<'a> {
    pub text: &'a str,
    pub span: CharSpan,
}

/// Splits `text` into words: maximal non-whitespace runs with leading and
/// trailing ASCII punctuation removed. Runs made only of punctuation are
/// dropped.
pub fn words(text: &str) -> Vec<Word<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices().chain(std::iter::once((text.len(), ' '))) {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                if let Some(span) = trim_punct(text, CharSpan::new(s, i)) {
                    out.push(Word {
                        text: span.slice(text),
                        span,
                    });
                }
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    out
}

fn trim_punct(text: &str, span: CharSpan) -> Option<CharSpan> {
    let s = span.slice(text);
    let trimmed_start = s.trim_start_matches(|c: char| c.is_ascii_punctuation());
    let lead = s.len() - trimmed_start.len();
    let trimmed = trimmed_start.trim_end_matches(|c: char| c.is_ascii_punctuation());
    if trimmed.is_empty() {
        return None;
    }
    Some(CharSpan::new(span.start + lead, span.start + lead + trimmed.len()))
}

/// Lowercased word forms of `text`, with a trailing possessive `'s` kept.
pub fn lower_words(text: &str) -> Vec<String> {
    words(text).iter().map(|w| w.text.to_lowercase()).collect()
}

/// Sentence spans that partition `text`. A sentence ends after a run of
/// `.`, `!` or `?` (plus closing quotes/brackets) followed by whitespace or
/// the end of text; trailing whitespace belongs to the preceding sentence.
pub fn sentence_spans(text: &str) -> Vec<CharSpan> {
    if text.is_empty() {
        return Vec::new();
    }
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') {
            let mut j = i + 1;
            while j < bytes.len() && matches!(bytes[j], b'.' | b'!' | b'?' | b'"' | b'\'' | b')' | b']') {
                j += 1;
            }
            if j == bytes.len() || (bytes[j] as char).is_ascii_whitespace() {
                while j < bytes.len() && (bytes[j] as char).is_ascii_whitespace() {
                    j += 1;
                }
                spans.push(CharSpan::new(start, j));
                start = j;
            }
            i = j;
        } else {
            i += 1;
        }
    }
    if start < text.len() {
        spans.push(CharSpan::new(start, text.len()));
    }
    spans
}

/// Strips common English inflectional suffixes. Crude, but stable and
/// good enough for matching question words against lexicon entries.
pub fn stem(word: &str) -> String {
    let w = word.to_lowercase();
    let w = w.strip_suffix("'s").unwrap_or(&w).to_string();
    for (suffix, replacement) in [("ies", "y"), ("ied", "y"), ("ing", ""), ("ed", ""), ("es", ""), ("s", "")] {
        if let Some(root) = w.strip_suffix(suffix) {
            if root.len() >= 3 && !(suffix == "s" && root.ends_with('s')) {
                return format!("{}{replacement}", undouble(root, suffix));
            }
        }
    }
    w
}

/// "winn" -> "win" after `-ing`/`-ed`; doubled l, s and z stay ("falling", "missed").
fn undouble<'a>(root: &'a str, suffix: &str) -> &'a str {
    let b = root.as_bytes();
    let n = b.len();
    let doubled = n >= 4 && b[n - 1] == b[n - 2] && !b"aeioulsz".contains(&b[n - 1]) && b[n - 1].is_ascii_alphabetic();
    if doubled && matches!(suffix, "ing" | "ed") {
        &root[..n - 1]
    } else {
        root
    }
}

pub const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "because",
    "been", "before", "being", "but", "by", "can", "could", "did", "do", "does", "doing", "for", "from",
    "had", "has", "have", "having", "he", "her", "here", "hers", "him", "his", "how", "i", "if", "in",
    "into", "is", "it", "its", "just", "me", "my", "of", "on", "or", "our", "she", "so", "some", "than",
    "that", "the", "their", "them", "then", "there", "these", "they", "this", "those", "to", "too", "us",
    "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom", "whose", "why", "will",
    "with", "would", "you", "your",
];

pub fn is_stopword(word: &str) -> bool {
    STOPWORDS.binary_search(&word).is_ok()
}
