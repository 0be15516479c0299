//! Linguistic annotators behind pluggable traits, with deterministic
//! offline fallbacks, and the per-story annotation record.

mod antonyms;
pub(crate) mod lexicon;
mod negation;
mod question;
mod sentiment;
mod srl;
mod surprisal;

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, QAExample, Story};
use crate::error::{Error, Result};
use crate::span::CharSpan;

pub use antonyms::AntonymLexicon;
pub use negation::{LexiconNegation, NegationDetector, NegationScope};
pub use question::{QuestionCategory, QuestionClassifier, RuleQuestionClassifier};
pub use sentiment::{sentence_sentiment, LexiconSentiment, Polarity, SentimentClassifier, SentimentLabel};
pub use srl::{RuleSrl, SrlArgument, SrlFrame, SrlLabeler, SrlRole};
pub use surprisal::{
    surprisal_scores, word_likelihood, Distribution, HeuristicPosTagger, MaskedLm, PosTagger, SurprisalScore,
    TableMaskedLm, UnavailableMaskedLm, SURPRISAL_THRESHOLD,
};

/// Which backend produced each annotation kind.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub negation: String,
    pub sentiment: String,
    pub srl: String,
    pub question: String,
    /// Absent when surprisal was not computed.
    pub masked_lm: Option<String>,
    pub pos: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionAnnotations {
    pub turn_id: u32,
    pub category: QuestionCategory,
    pub polarity: Polarity,
    pub srl: Vec<SrlFrame>,
}

/// Annotations of one story and its questions. Offsets are bytes into the
/// story text (question SRL offsets are into the question).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationSet {
    pub story_id: String,
    pub negation: Vec<NegationScope>,
    pub sentiment: Vec<SentimentLabel>,
    pub srl: Vec<SrlFrame>,
    /// `None` when no masked LM was available.
    pub surprisal: Option<Vec<SurprisalScore>>,
    pub questions: Vec<QuestionAnnotations>,
    pub backends: BackendInfo,
}

impl AnnotationSet {
    pub fn question(&self, turn_id: u32) -> Option<&QuestionAnnotations> {
        self.questions.iter().find(|q| q.turn_id == turn_id)
    }

    /// The sentence containing byte `offset` of the story.
    pub fn sentence_at(&self, offset: usize) -> Option<&SentimentLabel> {
        self.sentiment.iter().find(|s| s.sentence.contains_offset(offset))
    }

    pub fn frames_within(&self, span: CharSpan) -> impl Iterator<Item = &SrlFrame> {
        self.srl.iter().filter(move |f| span.contains(&f.predicate))
    }
}

/// The set of annotator backends used for one run.
pub struct Annotators {
    pub negation: Box<dyn NegationDetector>,
    pub sentiment: Box<dyn SentimentClassifier>,
    pub srl: Box<dyn SrlLabeler>,
    pub question: Box<dyn QuestionClassifier>,
    pub masked_lm: Option<Box<dyn MaskedLm>>,
    pub pos: Box<dyn PosTagger>,
}

impl Annotators {
    /// Rule and lexicon fallbacks; no masked LM, so surprisal is undefined.
    pub fn offline() -> Self {
        Annotators {
            negation: Box::new(LexiconNegation),
            sentiment: Box::new(LexiconSentiment),
            srl: Box::new(RuleSrl),
            question: Box::new(RuleQuestionClassifier),
            masked_lm: None,
            pos: Box::new(HeuristicPosTagger::default()),
        }
    }

    pub fn with_masked_lm(mut self, lm: Box<dyn MaskedLm>) -> Self {
        self.masked_lm = Some(lm);
        self
    }

    pub fn with_pos_tagger(mut self, pos: Box<dyn PosTagger>) -> Self {
        self.pos = pos;
        self
    }

    pub fn backends(&self) -> BackendInfo {
        BackendInfo {
            negation: self.negation.name().to_string(),
            sentiment: self.sentiment.name().to_string(),
            srl: self.srl.name().to_string(),
            question: self.question.name().to_string(),
            masked_lm: self.masked_lm.as_ref().map(|m| m.name().to_string()),
            pos: self.pos.name().to_string(),
        }
    }

    fn concurrent_safe(&self) -> bool {
        self.negation.concurrent_safe()
            && self.sentiment.concurrent_safe()
            && self.srl.concurrent_safe()
            && self.masked_lm.as_ref().is_none_or(|m| m.concurrent_safe())
    }

    /// Annotates a story and the questions of `turns`.
    pub fn annotate_story(&self, story: &Story, turns: &[&QAExample]) -> Result<AnnotationSet> {
        let text = &story.text;
        let sentiment = sentence_sentiment(text, self.sentiment.as_ref());
        let srl = sentiment
            .iter()
            .flat_map(|s| {
                self.srl
                    .frames(s.sentence.slice(text))
                    .into_iter()
                    .map(move |f| f.shift(s.sentence.start))
            })
            .collect();
        let surprisal = match &self.masked_lm {
            Some(lm) => Some(surprisal_scores(text, lm.as_ref(), self.pos.as_ref())?),
            None => None,
        };
        let questions = turns
            .iter()
            .map(|ex| {
                let q = &ex.turn.question;
                QuestionAnnotations {
                    turn_id: ex.turn.turn_id,
                    category: self.question.classify(q),
                    polarity: self.sentiment.polarity(q),
                    srl: self.srl.frames(q),
                }
            })
            .collect();
        Ok(AnnotationSet {
            story_id: story.id.clone(),
            negation: self.negation.detect(text),
            sentiment,
            srl,
            surprisal,
            questions,
            backends: self.backends(),
        })
    }

    /// Annotates every story of `corpus`, in story order. Runs in parallel
    /// when all backends allow concurrent calls.
    pub fn annotate_corpus(&self, corpus: &Corpus) -> Result<Vec<AnnotationSet>> {
        let dialogues = corpus.dialogues();
        let work = |story: &Story| {
            let turns = dialogues.get(story.id.as_str()).cloned().unwrap_or_default();
            self.annotate_story(story, &turns)
        };
        if self.concurrent_safe() {
            corpus.stories.par_iter().map(work).collect()
        } else {
            corpus.stories.iter().map(work).collect()
        }
    }
}

pub fn write_annotations(path: &Path, sets: &[AnnotationSet]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for set in sets {
        serde_json::to_writer(&mut out, set)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_annotations(path: &Path) -> Result<Vec<AnnotationSet>> {
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
