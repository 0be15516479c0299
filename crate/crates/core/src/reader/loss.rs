use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::{HeadOutputs, HeadVars};
use super::tape::{ParamStore, Tape, Var};
use super::{AuxTask, ReaderConfig};
use crate::annotators::{AnnotationSet, Polarity, SrlRole};
use crate::corpus::{AnswerType, EncodedInput, QAExample};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::span::CharSpan;

/// Supervision for one encoded input, in token positions.
#[derive(Debug, Clone, PartialEq)]
pub struct LossLabels {
    /// Inclusive start/end token of the answer; `None` contributes no span loss.
    pub span: Option<(usize, usize)>,
    pub rationale: Vec<bool>,
    pub answer_type: usize,
    /// `L × 1` or `L × roles`; required when an auxiliary task is configured.
    pub aux: Option<Array2<u8>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub start: f64,
    pub end: f64,
    pub rationale: f64,
    pub answer_type: f64,
    /// Unweighted auxiliary loss.
    pub aux: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn add(&mut self, other: &LossBreakdown) {
        self.start += other.start;
        self.end += other.end;
        self.rationale += other.rationale;
        self.answer_type += other.answer_type;
        self.aux += other.aux;
        self.total += other.total;
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.start *= factor;
        self.end *= factor;
        self.rationale *= factor;
        self.answer_type *= factor;
        self.aux *= factor;
        self.total *= factor;
        self
    }
}

pub(crate) struct LossVars {
    pub total: Var,
    start: Option<Var>,
    end: Option<Var>,
    rationale: Var,
    answer_type: Var,
    aux: Option<Var>,
}

impl LossVars {
    pub fn read<S: Scalar>(&self, tape: &Tape<'_, S>) -> LossBreakdown {
        let get = |v: Option<Var>| v.map_or(0.0, |v| tape.scalar(v).as_f64());
        LossBreakdown {
            start: get(self.start),
            end: get(self.end),
            rationale: get(Some(self.rationale)),
            answer_type: get(Some(self.answer_type)),
            aux: get(self.aux),
            total: get(Some(self.total)),
        }
    }
}

fn out_of_range(message: String) -> Error {
    Error::LabelOutOfRange(message)
}

/// Records the loss on `tape`; all term weights are 1 except the auxiliary
/// term, which is scaled by `aux_weight`.
pub(crate) fn loss_on_tape<S: Scalar>(
    tape: &mut Tape<'_, S>,
    heads: &HeadVars,
    labels: &LossLabels,
    config: &ReaderConfig,
) -> Result<LossVars> {
    let len = tape.value(heads.start).len();
    let classes = tape.value(heads.answer_type).len();
    if classes != config.answer_type_classes {
        return Err(Error::Config(format!(
            "type head has {classes} classes, config expects {}",
            config.answer_type_classes
        )));
    }
    if labels.rationale.len() != len {
        return Err(out_of_range(format!(
            "rationale mask has {} entries for {len} tokens",
            labels.rationale.len()
        )));
    }
    if labels.answer_type >= classes {
        return Err(out_of_range(format!("answer type {} with {classes} classes", labels.answer_type)));
    }
    if let Some((s, e)) = labels.span {
        if s >= len || e >= len {
            return Err(out_of_range(format!("span ({s}, {e}) outside {len} tokens")));
        }
    }

    let mut terms = Vec::with_capacity(5);
    let (start, end) = match labels.span {
        Some((s, e)) => {
            let start = tape.cross_entropy(heads.start, s);
            let end = tape.cross_entropy(heads.end, e);
            terms.push((start, S::one()));
            terms.push((end, S::one()));
            (Some(start), Some(end))
        }
        None => (None, None),
    };
    let mask = Array2::from_shape_fn((len, 1), |(i, _)| if labels.rationale[i] { S::one() } else { S::zero() });
    let rationale = tape.bce_mean(heads.rationale, mask);
    terms.push((rationale, S::one()));
    let answer_type = tape.cross_entropy(heads.answer_type, labels.answer_type);
    terms.push((answer_type, S::one()));

    let aux = match (config.aux_task, heads.aux) {
        (AuxTask::None, _) => None,
        (_, None) => return Err(Error::Config("auxiliary task configured without an auxiliary head".into())),
        (_, Some(aux_var)) => {
            let targets = labels
                .aux
                .as_ref()
                .ok_or_else(|| out_of_range("auxiliary labels missing".into()))?;
            let shape = tape.value(aux_var).dim();
            if targets.dim() != shape {
                return Err(out_of_range(format!(
                    "auxiliary labels {:?} for head output {:?}",
                    targets.dim(),
                    shape
                )));
            }
            let loss = tape.bce_mean(aux_var, targets.mapv(|b| S::of(b as f64)));
            terms.push((loss, S::of(config.aux_weight)));
            Some(loss)
        }
    };
    let total = tape.weighted_sum(&terms);
    Ok(LossVars {
        total,
        start,
        end,
        rationale,
        answer_type,
        aux,
    })
}

/// Loss of precomputed head outputs, broken down per term.
pub fn compute_loss<S: Scalar>(outputs: &HeadOutputs<S>, labels: &LossLabels, config: &ReaderConfig) -> Result<LossBreakdown> {
    let empty = ParamStore::new();
    let mut tape = Tape::new(&empty);
    let heads = HeadVars::constants(&mut tape, outputs);
    let vars = loss_on_tape(&mut tape, &heads, labels, config)?;
    Ok(vars.read(&tape))
}

/// Token-level supervision for the span, rationale and type heads.
///
/// Answers whose span is cut off by story truncation get no span target.
/// Type labels beyond the configured classes fall back to FREEFORM.
pub fn example_labels(example: &QAExample, encoded: &EncodedInput, config: &ReaderConfig) -> LossLabels {
    let story = encoded.story_range();
    let covered_end = story.clone().last().and_then(|i| encoded.offsets[i]).map_or(0, |o| o.end);
    let span = example
        .span_label
        .filter(|s| s.end <= covered_end)
        .and_then(|s| encoded.tokens_for_story_span(s));
    let rationale = story_mask(encoded, example.turn.rationale.iter().copied());
    let answer_type = match example.type_label.index() {
        i if i < config.answer_type_classes => i,
        _ => AnswerType::Freeform.index(),
    };
    LossLabels {
        span,
        rationale,
        answer_type,
        aux: None,
    }
}

/// Story tokens overlapping any of `spans`; other tokens are false.
fn story_mask(encoded: &EncodedInput, spans: impl IntoIterator<Item = CharSpan>) -> Vec<bool> {
    let spans: Vec<CharSpan> = spans.into_iter().collect();
    let mut mask = vec![false; encoded.len()];
    for i in encoded.story_range() {
        if let Some(o) = encoded.offsets[i] {
            mask[i] = spans.iter().any(|s| s.overlaps(&o));
        }
    }
    mask
}

/// Per-token targets for an auxiliary task; rows follow the encoded input,
/// columns are one for binary tasks or one per role in `roles` for SRL.
///
/// Only story tokens can be labelled 1. ORDER marks story tokens starting at
/// or after the end of the previous turn's answer, so turn 1 is all zeros.
pub fn token_aux_labels(
    annotations: Option<&AnnotationSet>,
    task: AuxTask,
    prev_answer_span: Option<CharSpan>,
    encoded: &EncodedInput,
    roles: &[SrlRole],
) -> Array2<u8> {
    let len = encoded.len();
    let binary = |mask: Vec<bool>| Array2::from_shape_fn((len, 1), |(i, _)| mask[i] as u8);
    match task {
        AuxTask::None => Array2::zeros((len, 0)),
        AuxTask::Negation => {
            let spans = annotations
                .into_iter()
                .flat_map(|a| a.negation.iter().flat_map(|n| n.scope.iter().copied()));
            binary(story_mask(encoded, spans))
        }
        AuxTask::Sentiment => {
            let spans = annotations.into_iter().flat_map(|a| {
                a.sentiment
                    .iter()
                    .filter(|s| s.polarity == Polarity::Negative)
                    .map(|s| s.sentence)
            });
            binary(story_mask(encoded, spans))
        }
        AuxTask::Order => {
            let mut mask = vec![false; len];
            if let Some(prev) = prev_answer_span {
                for i in encoded.story_range() {
                    mask[i] = encoded.offsets[i].is_some_and(|o| o.start >= prev.end);
                }
            }
            binary(mask)
        }
        AuxTask::Srl => {
            let mut out = Array2::zeros((len, roles.len()));
            for frame in annotations.into_iter().flat_map(|a| a.srl.iter()) {
                for arg in &frame.arguments {
                    let Some(col) = roles.iter().position(|&r| r == arg.role) else { continue };
                    for (i, hit) in story_mask(encoded, [arg.span]).into_iter().enumerate() {
                        if hit {
                            out[[i, col]] = 1;
                        }
                    }
                }
            }
            out
        }
    }
}
