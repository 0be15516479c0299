//! Multitask extractive reader: encoder, span/rationale/type heads, an
//! optional auxiliary token-labelling head, loss, decoding and training.

mod checkpoint;
mod decode;
mod loss;
mod model;
mod tape;
mod train;

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotators::{BackendInfo, SrlRole};
use crate::corpus::{build_model_input, AnswerType, Corpus, EncodedInput, InputConfig, QAExample, Story, TurnKey, WordTokenizer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use checkpoint::{CheckpointMeta, TensorInfo};
pub use decode::{best_span, decode, type_probabilities, Prediction, PredictionKind, MAX_ANSWER_TOKENS};
pub use loss::{compute_loss, example_labels, token_aux_labels, LossBreakdown, LossLabels};
pub use model::{Encoder, EncoderConfig, HeadOutputs, TinyTransformer};
pub use tape::{ParamStore, Tape, Var};
pub use train::{train, train_with, AdamW, EpochLog, TrainConfig, TrainingRecord};

use model::{Head, HeadVars, Init};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuxTask {
    None,
    Negation,
    Order,
    Sentiment,
    Srl,
}

impl AuxTask {
    pub const ALL: [AuxTask; 5] = [AuxTask::None, AuxTask::Negation, AuxTask::Order, AuxTask::Sentiment, AuxTask::Srl];

    /// Whether training labels for this task come from story annotations.
    pub fn needs_annotations(self) -> bool {
        matches!(self, AuxTask::Negation | AuxTask::Sentiment | AuxTask::Srl)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReaderConfig {
    /// 4 (FREEFORM/YES/NO/UNANSWERABLE) or 9 (adds the counts one..five).
    pub answer_type_classes: usize,
    pub aux_task: AuxTask,
    pub aux_weight: f64,
    pub srl_role_inventory: Vec<SrlRole>,
}

impl Default for ReaderConfig {
    fn default() -> Self {
        ReaderConfig {
            answer_type_classes: 9,
            aux_task: AuxTask::None,
            aux_weight: 1.0,
            srl_role_inventory: SrlRole::INVENTORY.to_vec(),
        }
    }
}

impl ReaderConfig {
    /// The four-class baseline.
    pub fn base() -> Self {
        ReaderConfig {
            answer_type_classes: 4,
            ..Self::default()
        }
    }

    /// The baseline with counting classes.
    pub fn base_sharp() -> Self {
        Self::default()
    }

    pub fn enhanced(task: AuxTask) -> Self {
        ReaderConfig {
            aux_task: task,
            ..Self::default()
        }
    }

    /// Output width of the auxiliary head, if any.
    pub fn aux_width(&self) -> Option<usize> {
        match self.aux_task {
            AuxTask::None => None,
            AuxTask::Srl => Some(self.srl_role_inventory.len()),
            _ => Some(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.answer_type_classes != 4 && self.answer_type_classes != 9 {
            return Err(Error::Config(format!(
                "answer_type_classes must be 4 or 9, got {}",
                self.answer_type_classes
            )));
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return Err(Error::Config(format!("aux_weight must be finite and >= 0, got {}", self.aux_weight)));
        }
        if self.aux_task == AuxTask::Srl && self.srl_role_inventory.is_empty() {
            return Err(Error::Config("SRL auxiliary task needs a non-empty role inventory".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Network {
    encoder: TinyTransformer,
    span: Head,
    rationale: Head,
    answer_type: Head,
    aux: Option<Head>,
}

/// Seeded RNG for one parameter group; the auxiliary head draws from its own
/// stream so that adding it leaves every shared parameter unchanged.
fn init_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A reader instantiated over scalar type `S`.
#[derive(Debug, Clone)]
pub struct Reader<S: Scalar> {
    pub encoder_config: EncoderConfig,
    pub config: ReaderConfig,
    pub input_config: InputConfig,
    pub seed: u64,
    pub tokenizer: WordTokenizer,
    pub params: ParamStore<S>,
    /// Set by training.
    pub training: Option<TrainingRecord>,
    network: Network,
}

impl<S: Scalar> Reader<S> {
    /// Freshly initialized reader; `encoder_config.vocab_size` must match the tokenizer.
    pub fn new(
        tokenizer: WordTokenizer,
        encoder_config: EncoderConfig,
        config: ReaderConfig,
        input_config: InputConfig,
        seed: u64,
    ) -> Result<Self> {
        encoder_config.validate()?;
        config.validate()?;
        input_config.validate()?;
        if encoder_config.vocab_size != crate::corpus::SubwordTokenizer::vocab_size(&tokenizer) {
            return Err(Error::Config(format!(
                "encoder vocabulary {} does not match tokenizer vocabulary {}",
                encoder_config.vocab_size,
                crate::corpus::SubwordTokenizer::vocab_size(&tokenizer)
            )));
        }
        if input_config.max_input_tokens > encoder_config.max_positions {
            return Err(Error::Config(format!(
                "input limit {} exceeds encoder positions {}",
                input_config.max_input_tokens, encoder_config.max_positions
            )));
        }
        let mut params = ParamStore::new();
        let d = encoder_config.hidden;
        let hh = encoder_config.head_hidden;
        let mut rng = init_rng(seed, 0);
        let mut init = Init {
            store: &mut params,
            rng: &mut rng,
        };
        let encoder = TinyTransformer::init(encoder_config, &mut init);
        let span = Head::init("head.span", d, hh, 2, &mut init);
        let rationale = Head::init("head.rationale", d, hh, 1, &mut init);
        let answer_type = Head::init("head.type", d, hh, config.answer_type_classes, &mut init);
        let mut aux_rng = init_rng(seed, 1);
        let aux = config.aux_width().map(|w| {
            let mut init = Init {
                store: &mut params,
                rng: &mut aux_rng,
            };
            Head::init("head.aux", d, hh, w, &mut init)
        });
        Ok(Reader {
            encoder_config,
            config,
            input_config,
            seed,
            tokenizer,
            params,
            training: None,
            network: Network {
                encoder,
                span,
                rationale,
                answer_type,
                aux,
            },
        })
    }

    /// Reader with a tiny encoder and a vocabulary fitted on `corpus`.
    pub fn for_corpus(corpus: &Corpus, config: ReaderConfig, seed: u64) -> Result<Self> {
        let tokenizer = fit_tokenizer(corpus);
        let encoder = EncoderConfig::tiny(crate::corpus::SubwordTokenizer::vocab_size(&tokenizer));
        Self::new(tokenizer, encoder, config, InputConfig::default(), seed)
    }

    pub fn encode(&self, example: &QAExample, story: &Story) -> Result<EncodedInput> {
        build_model_input(example, story, &self.input_config, &self.tokenizer)
    }

    fn heads_on_tape(&self, tape: &mut Tape<'_, S>, input: &EncodedInput) -> Result<HeadVars> {
        let net = &self.network;
        let x = net.encoder.encode(tape, input)?;
        let span = net.span.apply(tape, x);
        let start = tape.column(span, 0);
        let end = tape.column(span, 1);
        let rationale = net.rationale.apply(tape, x);
        let cls = tape.row(x, 0);
        let answer_type = net.answer_type.apply(tape, cls);
        let aux = net.aux.as_ref().map(|h| h.apply(tape, x));
        Ok(HeadVars {
            start,
            end,
            rationale,
            answer_type,
            aux,
        })
    }

    /// Head outputs for one input; deterministic.
    pub fn forward(&self, input: &EncodedInput) -> Result<HeadOutputs<S>> {
        let mut tape = Tape::new(&self.params);
        let heads = self.heads_on_tape(&mut tape, input)?;
        Ok(heads.read(&tape))
    }

    /// Loss of the current weights on one input.
    pub fn loss(&self, input: &EncodedInput, labels: &LossLabels) -> Result<LossBreakdown> {
        self.loss_with(&self.params, input, labels)
    }

    /// Loss with substitute weights of the same layout, e.g. for finite differences.
    pub fn loss_with(&self, params: &ParamStore<S>, input: &EncodedInput, labels: &LossLabels) -> Result<LossBreakdown> {
        self.check_layout(params)?;
        let mut tape = Tape::new(params);
        let heads = self.heads_on_tape(&mut tape, input)?;
        let vars = loss::loss_on_tape(&mut tape, &heads, labels, &self.config)?;
        Ok(vars.read(&tape))
    }

    /// Loss and its gradient with respect to every parameter (zeros where unused).
    pub fn loss_and_gradients(
        &self,
        input: &EncodedInput,
        labels: &LossLabels,
    ) -> Result<(LossBreakdown, Vec<ndarray::Array2<S>>)> {
        let mut tape = Tape::new(&self.params);
        let heads = self.heads_on_tape(&mut tape, input)?;
        let vars = loss::loss_on_tape(&mut tape, &heads, labels, &self.config)?;
        let grads = tape
            .backward(vars.total)
            .into_iter()
            .zip(&self.params.tensors)
            .map(|(g, p)| g.unwrap_or_else(|| ndarray::Array2::zeros(p.raw_dim())))
            .collect();
        Ok((vars.read(&tape), grads))
    }

    fn check_layout(&self, params: &ParamStore<S>) -> Result<()> {
        let same = params.len() == self.params.len()
            && params
                .tensors
                .iter()
                .zip(&self.params.tensors)
                .all(|(a, b)| a.dim() == b.dim());
        if same {
            Ok(())
        } else {
            Err(Error::Config("weights do not match the reader's parameter layout".into()))
        }
    }

    /// Indices of auxiliary-head parameters in [`Reader::params`].
    pub fn aux_param_indices(&self) -> Vec<usize> {
        (0..self.params.len())
            .filter(|&i| self.params.names[i].starts_with("head.aux."))
            .collect()
    }

    pub fn predict(&self, example: &QAExample, story: &Story) -> Result<Prediction> {
        let encoded = self.encode(example, story)?;
        let outputs = self.forward(&encoded)?;
        Ok(decode(&outputs, &encoded, &story.text))
    }

    /// Predictions for every example, computed in parallel.
    pub fn predict_corpus(&self, corpus: &Corpus) -> Result<BTreeMap<TurnKey, Prediction>> {
        corpus
            .examples
            .par_iter()
            .map(|ex| {
                let story = corpus.story(&ex.story_id).ok_or_else(|| Error::Validation {
                    story_id: ex.story_id.clone(),
                    turn_id: ex.turn.turn_id,
                    message: "story text missing".into(),
                })?;
                Ok((ex.key(), self.predict(ex, story)?))
            })
            .collect()
    }

    /// Answer types this reader can emit.
    pub fn answer_types(&self) -> &'static [AnswerType] {
        &AnswerType::ALL[..self.config.answer_type_classes]
    }

    pub fn backends(&self) -> Option<&BackendInfo> {
        self.training.as_ref().and_then(|t| t.annotator_backends.as_ref())
    }
}

/// Vocabulary over all stories, questions and answers of a corpus.
pub fn fit_tokenizer(corpus: &Corpus) -> WordTokenizer {
    let texts = corpus.stories.iter().map(|s| s.text.as_str()).chain(
        corpus
            .examples
            .iter()
            .flat_map(|e| std::iter::once(e.turn.question.as_str()).chain(e.turn.gold_answers.iter().map(String::as_str))),
    );
    WordTokenizer::fit(texts, 1)
}
