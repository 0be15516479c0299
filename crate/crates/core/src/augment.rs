//! Surprising-word substitution: proper nouns the masked LM finds unlikely
//! are replaced, across a whole dialogue, by the LM's most likely proper-noun
//! filler, producing extra training samples.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotators::{surprisal_scores, MaskedLm, PosTagger};
use crate::corpus::{derive_span_label, Corpus, HistoryPair, Provenance, QAExample, Story};
use crate::error::{Error, Result};
use crate::span::CharSpan;
use crate::text::sentence_spans;

/// Candidate fillers inspected per slot.
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substitution {
    pub story_id: String,
    pub original: String,
    /// Every whole-word occurrence of `original` in the story.
    pub occurrences: Vec<CharSpan>,
    pub replacement: String,
    pub original_likelihood: f64,
    pub replacement_likelihood: f64,
}

impl Substitution {
    /// Identifier of the augmented copy of the story.
    pub fn new_story_id(&self) -> String {
        format!("{}_{}_{}", self.story_id, self.original, self.replacement)
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Byte spans of `word` in `text` not adjacent to other word characters.
pub fn word_occurrences(text: &str, word: &str) -> Vec<CharSpan> {
    if word.is_empty() {
        return Vec::new();
    }
    text.match_indices(word)
        .filter(|(start, _)| {
            let end = start + word.len();
            !text[..*start].chars().next_back().is_some_and(is_word_char)
                && !text[end..].chars().next().is_some_and(is_word_char)
        })
        .map(|(start, _)| CharSpan::new(start, start + word.len()))
        .collect()
}

/// Text with every occurrence of a word replaced, plus the old → new edits.
struct Rewrite {
    text: String,
    edits: Vec<(CharSpan, CharSpan)>,
}

impl Rewrite {
    fn new(text: &str, original: &str, replacement: &str) -> Self {
        let mut out = String::with_capacity(text.len());
        let mut edits = Vec::new();
        let mut last = 0;
        for occ in word_occurrences(text, original) {
            out.push_str(&text[last..occ.start]);
            let start = out.len();
            out.push_str(replacement);
            edits.push((occ, CharSpan::new(start, out.len())));
            last = occ.end;
        }
        out.push_str(&text[last..]);
        Rewrite { text: out, edits }
    }

    /// New position of an old offset; `None` inside a replaced word.
    fn map_offset(&self, pos: usize) -> Option<usize> {
        let mut delta: isize = 0;
        for (old, new) in &self.edits {
            if pos <= old.start {
                break;
            }
            if pos < old.end {
                return None;
            }
            delta = new.end as isize - old.end as isize;
        }
        Some((pos as isize + delta) as usize)
    }

    fn map_span(&self, span: CharSpan) -> Option<CharSpan> {
        Some(CharSpan::new(self.map_offset(span.start)?, self.map_offset(span.end)?))
    }
}

fn candidate_is_word(candidate: &str) -> bool {
    !candidate.is_empty() && !candidate.starts_with("##") && candidate.chars().all(|c| c.is_alphabetic())
}

/// Proposes at most one substitution per distinct surprising surface form,
/// in order of first occurrence.
pub fn propose_substitutions(
    story: &Story,
    threshold: f64,
    masked_lm: &dyn MaskedLm,
    pos_tagger: &dyn PosTagger,
    k: usize,
) -> Result<Vec<Substitution>> {
    let text = story.text.as_str();
    let sentences = sentence_spans(text);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for score in surprisal_scores(text, masked_lm, pos_tagger)? {
        if !score.is_surprising(threshold) {
            continue;
        }
        let original = score.token.slice(text);
        if !seen.insert(original.to_string()) {
            continue;
        }
        let sentence = sentences
            .iter()
            .find(|s| s.contains(&score.token))
            .copied()
            .unwrap_or(CharSpan::new(0, text.len()));
        let local = CharSpan::new(score.token.start - sentence.start, score.token.end - sentence.start);
        let sentence_text = sentence.slice(text);
        let fillers = masked_lm.fill(sentence_text, local, 1)?;
        let Some(dist) = fillers.first() else { continue };
        let accepted = dist.top_k(k).iter().find(|(candidate, p)| {
            if candidate == original || !candidate_is_word(candidate) || *p <= score.likelihood {
                return false;
            }
            let replaced = format!(
                "{}{}{}",
                &sentence_text[..local.start],
                candidate,
                &sentence_text[local.end..]
            );
            let span = CharSpan::new(local.start, local.start + candidate.len());
            pos_tagger.is_proper_noun_at(&replaced, span)
        });
        if let Some((replacement, p)) = accepted {
            out.push(Substitution {
                story_id: story.id.clone(),
                original: original.to_string(),
                occurrences: word_occurrences(text, original),
                replacement: replacement.clone(),
                original_likelihood: score.likelihood,
                replacement_likelihood: *p,
            });
        } else {
            log::debug!("no proper-noun filler for {original:?} in {}", story.id);
        }
    }
    Ok(out)
}

fn rewrite_sample(
    sample: &QAExample,
    story: &Rewrite,
    sub: &Substitution,
    new_story_id: &str,
) -> std::result::Result<QAExample, String> {
    let swap = |s: &str| Rewrite::new(s, &sub.original, &sub.replacement).text;
    let mut turn = sample.turn.clone();
    turn.question = swap(&turn.question);
    turn.gold_answers = turn.gold_answers.iter().map(|a| swap(a)).collect();
    if let Some(r) = sample.turn.rationale {
        let mapped = story.map_span(r).ok_or("rationale boundary inside a replaced word")?;
        let text = mapped.slice(&story.text).to_string();
        if text != swap(&sample.turn.rationale_text) {
            return Err("rewritten rationale does not match the rewritten story".into());
        }
        turn.rationale = Some(mapped);
        turn.rationale_text = text;
    }
    let mapped_label = match sample.span_label {
        Some(s) => Some(story.map_span(s).ok_or("span label boundary inside a replaced word")?),
        None => None,
    };
    let derived = turn
        .rationale
        .and_then(|r| derive_span_label(&turn.rationale_text, &turn.gold_answers[0]).map(|s| s.shift(r.start)));
    if derived != mapped_label {
        return Err(format!("span label {mapped_label:?} does not re-derive ({derived:?})"));
    }
    Ok(QAExample {
        story_id: new_story_id.to_string(),
        turn,
        history: sample
            .history
            .iter()
            .map(|h| HistoryPair {
                question: swap(&h.question),
                answer: swap(&h.answer),
            })
            .collect(),
        span_label: mapped_label,
        type_label: sample.type_label,
        provenance: Some(Provenance {
            source_story_id: sample.story_id.clone(),
            original: sub.original.clone(),
            replacement: sub.replacement.clone(),
        }),
    })
}

/// Rewrites a story and all of its samples; samples whose offsets cannot be
/// carried over are skipped with a warning. Returns the new story, the new
/// samples and the number skipped.
pub fn apply_substitution(story: &Story, samples: &[&QAExample], sub: &Substitution) -> (Story, Vec<QAExample>, usize) {
    let rewrite = Rewrite::new(&story.text, &sub.original, &sub.replacement);
    let id = sub.new_story_id();
    let mut out = Vec::with_capacity(samples.len());
    let mut skipped = 0;
    for sample in samples {
        match rewrite_sample(sample, &rewrite, sub, &id) {
            Ok(s) => out.push(s),
            Err(reason) => {
                log::warn!("skipping augmented {}: {reason}", sample.key());
                skipped += 1;
            }
        }
    }
    let new_story = Story {
        id,
        text: rewrite.text,
        source_domain: story.source_domain,
    };
    (new_story, out, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub substitution: Substitution,
    pub samples_added: usize,
    pub samples_skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentManifest {
    pub threshold: f64,
    pub top_k: usize,
    pub masked_lm: String,
    pub pos_tagger: String,
    pub original_samples: usize,
    pub added_samples: usize,
    pub entries: Vec<ManifestEntry>,
}

/// The original corpus followed by every applied substitution's samples.
pub fn augment_corpus(
    corpus: &Corpus,
    threshold: f64,
    masked_lm: &dyn MaskedLm,
    pos_tagger: &dyn PosTagger,
    k: usize,
) -> Result<(Corpus, AugmentManifest)> {
    let dialogues = corpus.dialogues();
    let propose = |story: &Story| propose_substitutions(story, threshold, masked_lm, pos_tagger, k);
    let proposals: Vec<Vec<Substitution>> = if masked_lm.concurrent_safe() {
        corpus.stories.par_iter().map(propose).collect::<Result<_>>()?
    } else {
        corpus.stories.iter().map(propose).collect::<Result<_>>()?
    };

    let mut stories = corpus.stories.clone();
    let mut examples = corpus.examples.clone();
    let mut entries = Vec::new();
    let mut taken: HashSet<String> = stories.iter().map(|s| s.id.clone()).collect();
    for (story, subs) in corpus.stories.iter().zip(proposals) {
        let samples = dialogues.get(story.id.as_str()).cloned().unwrap_or_default();
        for sub in subs {
            let (new_story, new_samples, skipped) = apply_substitution(story, &samples, &sub);
            if !taken.insert(new_story.id.clone()) {
                return Err(Error::Validation {
                    story_id: new_story.id,
                    turn_id: 0,
                    message: "augmented story id collides with an existing story".into(),
                });
            }
            entries.push(ManifestEntry {
                substitution: sub,
                samples_added: new_samples.len(),
                samples_skipped: skipped,
            });
            if !new_samples.is_empty() {
                stories.push(new_story);
                examples.extend(new_samples);
            }
        }
    }
    let manifest = AugmentManifest {
        threshold,
        top_k: k,
        masked_lm: masked_lm.name().to_string(),
        pos_tagger: pos_tagger.name().to_string(),
        original_samples: corpus.len(),
        added_samples: entries.iter().map(|e| e.samples_added).sum(),
        entries,
    };
    Ok((Corpus::new(stories, examples), manifest))
}

/// One JSON line per manifest entry.
pub fn write_manifest(path: &Path, manifest: &AugmentManifest) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for entry in &manifest.entries {
        serde_json::to_writer(&mut w, entry)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_manifest_entries(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            record: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
