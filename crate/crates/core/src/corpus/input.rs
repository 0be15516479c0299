use std::collections::HashMap;
use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{QAExample, Story};
use crate::error::{Error, Result};
use crate::span::CharSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputConfig {
    pub history_token_budget: usize,
    pub max_input_tokens: usize,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            history_token_budget: 64,
            max_input_tokens: 512,
        }
    }
}

impl InputConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_token_budget >= self.max_input_tokens {
            return Err(Error::Config(format!(
                "history budget {} must be below the input limit {}",
                self.history_token_budget, self.max_input_tokens
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpecialToken {
    Pad,
    Unk,
    Cls,
    Sep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenPiece {
    pub id: u32,
    pub span: CharSpan,
}

/// Any tokenizer producing ids with byte offsets into the source text.
pub trait SubwordTokenizer: Send + Sync {
    fn tokenize(&self, text: &str) -> Vec<TokenPiece>;
    fn special_id(&self, special: SpecialToken) -> u32;
    fn vocab_size(&self) -> usize;
}

/// Lowercasing word/punctuation tokenizer with a closed vocabulary.
/// Used with the small offline encoder; out-of-vocabulary words map to `[UNK]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordTokenizer {
    tokens: Vec<String>,
    ids: HashMap<String, u32>,
}

const SPECIALS: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];

fn word_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+(?:'\w+)*|[^\w\s]").expect("valid regex"))
}

impl WordTokenizer {
    /// Vocabulary of every word seen at least `min_count` times, in
    /// first-seen order after the specials.
    pub fn fit<'a>(texts: impl IntoIterator<Item = &'a str>, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut order = Vec::new();
        for text in texts {
            for m in word_regex().find_iter(text) {
                let w = m.as_str().to_lowercase();
                let c = counts.entry(w.clone()).or_insert(0);
                if *c == 0 {
                    order.push(w);
                }
                *c += 1;
            }
        }
        let vocab = order.into_iter().filter(|w| counts[w] >= min_count);
        Self::from_vocab(vocab)
    }

    /// Builds from a word list; specials are prepended and must not be included.
    pub fn from_vocab(words: impl IntoIterator<Item = String>) -> Self {
        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(words);
        let ids = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        WordTokenizer { tokens, ids }
    }

    /// The non-special vocabulary, in id order.
    pub fn words(&self) -> &[String] {
        &self.tokens[SPECIALS.len()..]
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }
}

impl SubwordTokenizer for WordTokenizer {
    fn tokenize(&self, text: &str) -> Vec<TokenPiece> {
        let unk = self.special_id(SpecialToken::Unk);
        word_regex()
            .find_iter(text)
            .map(|m| TokenPiece {
                id: self.ids.get(&m.as_str().to_lowercase()).copied().unwrap_or(unk),
                span: CharSpan::new(m.start(), m.end()),
            })
            .collect()
    }

    fn special_id(&self, special: SpecialToken) -> u32 {
        special as u32
    }

    fn vocab_size(&self) -> usize {
        self.tokens.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Segment {
    Special,
    Story,
    History,
    Question,
}

/// `[CLS] story [SEP] history [SEP] question [SEP]`, with per-token byte
/// offsets into the story, the joined history text, or the question.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub segments: Vec<Segment>,
    pub offsets: Vec<Option<CharSpan>>,
    /// Included history pairs joined as `q a q a ...` with single spaces.
    pub history_text: String,
    pub history_pairs: usize,
    pub story_truncated: bool,
}

impl EncodedInput {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Token positions of the story segment.
    pub fn story_range(&self) -> Range<usize> {
        let start = self.segments.iter().position(|s| *s == Segment::Story).unwrap_or(1);
        let end = start + self.segments[start.min(self.len())..].iter().take_while(|s| **s == Segment::Story).count();
        start..end
    }

    /// Byte span in the story covered by tokens `first..=last`.
    pub fn story_span(&self, first: usize, last: usize) -> Option<CharSpan> {
        let range = self.story_range();
        if first > last || !range.contains(&first) || !range.contains(&last) {
            return None;
        }
        Some(CharSpan::new(self.offsets[first]?.start, self.offsets[last]?.end))
    }

    /// Story token range overlapping a byte span of the story.
    pub fn tokens_for_story_span(&self, span: CharSpan) -> Option<(usize, usize)> {
        let mut hits = self.story_range().filter(|&i| self.offsets[i].is_some_and(|o| o.overlaps(&span)));
        let first = hits.next()?;
        let last = hits.last().unwrap_or(first);
        Some((first, last))
    }
}

/// Encodes one turn for the reader.
///
/// The most recent whole question/answer pairs that fit the history budget
/// are kept (oldest dropped first); when the sequence would exceed the input
/// limit the story is cut from its end.
pub fn build_model_input(
    example: &QAExample,
    story: &Story,
    config: &InputConfig,
    tokenizer: &dyn SubwordTokenizer,
) -> Result<EncodedInput> {
    config.validate()?;
    let cls = tokenizer.special_id(SpecialToken::Cls);
    let sep = tokenizer.special_id(SpecialToken::Sep);
    const N_SPECIALS: usize = 4;

    let question = tokenizer.tokenize(&example.turn.question);
    if question.len() + N_SPECIALS > config.max_input_tokens {
        return Err(Error::MalformedInput(format!(
            "question of {} in story {} has {} tokens, over the {}-token input limit",
            example.turn.turn_id,
            example.story_id,
            question.len(),
            config.max_input_tokens
        )));
    }

    // Walk back from the latest pair while whole pairs fit.
    let mut pair_tokens: Vec<(Vec<TokenPiece>, Vec<TokenPiece>)> = Vec::new();
    let mut used = 0;
    for pair in example.history.iter().rev() {
        let q = tokenizer.tokenize(&pair.question);
        let a = tokenizer.tokenize(&pair.answer);
        if used + q.len() + a.len() > config.history_token_budget {
            break;
        }
        used += q.len() + a.len();
        pair_tokens.push((q, a));
    }
    pair_tokens.reverse();
    let n_pairs = pair_tokens.len();
    let included = &example.history[example.history.len() - n_pairs..];

    let mut history_text = String::new();
    let mut history: Vec<TokenPiece> = Vec::with_capacity(used);
    for (pair, (q, a)) in included.iter().zip(&pair_tokens) {
        for (text, pieces) in [(&pair.question, q), (&pair.answer, a)] {
            if !history_text.is_empty() {
                history_text.push(' ');
            }
            let base = history_text.len();
            history_text.push_str(text);
            history.extend(pieces.iter().map(|p| TokenPiece {
                id: p.id,
                span: p.span.shift(base),
            }));
        }
    }

    let mut story_tokens = tokenizer.tokenize(&story.text);
    let room = config.max_input_tokens - N_SPECIALS - question.len() - history.len();
    let story_truncated = story_tokens.len() > room;
    story_tokens.truncate(room);

    let total = N_SPECIALS + story_tokens.len() + history.len() + question.len();
    let mut ids = Vec::with_capacity(total);
    let mut segments = Vec::with_capacity(total);
    let mut offsets = Vec::with_capacity(total);
    let push_special = |ids: &mut Vec<u32>, segments: &mut Vec<Segment>, offsets: &mut Vec<_>, id| {
        ids.push(id);
        segments.push(Segment::Special);
        offsets.push(None);
    };
    push_special(&mut ids, &mut segments, &mut offsets, cls);
    for (pieces, segment) in [
        (&story_tokens, Segment::Story),
        (&history, Segment::History),
        (&question, Segment::Question),
    ] {
        for p in pieces {
            ids.push(p.id);
            segments.push(segment);
            offsets.push(Some(p.span));
        }
        push_special(&mut ids, &mut segments, &mut offsets, sep);
    }

    Ok(EncodedInput {
        ids,
        segments,
        offsets,
        history_text,
        history_pairs: n_pairs,
        story_truncated,
    })
}
