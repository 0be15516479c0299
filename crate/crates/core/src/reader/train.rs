use std::collections::{BTreeSet, HashMap};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::{example_labels, token_aux_labels, LossBreakdown, LossLabels};
use super::tape::ParamStore;
use super::{AuxTask, Reader};
use crate::annotators::{AnnotationSet, BackendInfo};
use crate::corpus::{Corpus, EncodedInput};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::span::CharSpan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_size: usize,
    /// Seeds the example shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 4,
            learning_rate: 3e-5,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let rates = [
            ("learning_rate", self.learning_rate),
            ("weight_decay", self.weight_decay),
            ("epsilon", self.epsilon),
        ];
        if let Some((name, v)) = rates.iter().find(|(_, v)| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub steps: usize,
    /// Per-example mean of every loss term.
    pub mean: LossBreakdown,
}

/// What a checkpoint records about how its weights were produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub config: TrainConfig,
    pub data_fingerprint: String,
    pub examples: usize,
    pub skipped: usize,
    pub annotator_backends: Option<BackendInfo>,
    pub curve: Vec<EpochLog>,
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW<S> {
    m: Vec<Array2<S>>,
    v: Vec<Array2<S>>,
    steps: i32,
}

impl<S: Scalar> AdamW<S> {
    pub fn new(params: &ParamStore<S>) -> Self {
        AdamW {
            m: params.zeros_like(),
            v: params.zeros_like(),
            steps: 0,
        }
    }

    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &[Array2<S>], config: &TrainConfig) {
        self.steps += 1;
        let b1 = S::of(config.beta1);
        let b2 = S::of(config.beta2);
        let lr = S::of(config.learning_rate);
        let wd = S::of(config.weight_decay);
        let eps = S::of(config.epsilon);
        let c1 = S::one() - b1.powi(self.steps);
        let c2 = S::one() - b2.powi(self.steps);
        for (((p, g), m), v) in params.tensors.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                *m = b1 * *m + (S::one() - b1) * g;
                *v = b2 * *v + (S::one() - b2) * g * g;
                let update = (*m / c1) / ((*v / c2).sqrt() + eps) + wd * *p;
                *p = *p - lr * update;
            });
        }
    }
}

struct Instance {
    encoded: EncodedInput,
    labels: LossLabels,
}

fn check_coverage(corpus: &Corpus, task: AuxTask, annotations: &HashMap<&str, &AnnotationSet>) -> Result<()> {
    if !task.needs_annotations() {
        return Ok(());
    }
    let stories: BTreeSet<&str> = corpus.examples.iter().map(|e| e.story_id.as_str()).collect();
    let missing = stories.iter().filter(|s| !annotations.contains_key(*s)).count();
    if missing > 0 {
        return Err(Error::AnnotationCoverage {
            task: format!("{task:?}").to_uppercase(),
            missing,
            total: stories.len(),
        });
    }
    Ok(())
}

fn prepare<S: Scalar>(
    reader: &Reader<S>,
    corpus: &Corpus,
    annotations: &HashMap<&str, &AnnotationSet>,
) -> Result<(Vec<Instance>, usize)> {
    let mut prev: HashMap<(&str, u32), Option<CharSpan>> = HashMap::new();
    for (story, turns) in corpus.dialogues() {
        for pair in turns.windows(2) {
            prev.insert((story, pair[1].turn.turn_id), pair[0].answer_anchor());
        }
    }
    let task = reader.config.aux_task;
    let built: Vec<Option<Instance>> = corpus
        .examples
        .par_iter()
        .map(|ex| {
            let story = corpus.story(&ex.story_id).ok_or_else(|| Error::Validation {
                story_id: ex.story_id.clone(),
                turn_id: ex.turn.turn_id,
                message: "story text missing".into(),
            })?;
            let encoded = match reader.encode(ex, story) {
                Ok(e) => e,
                Err(Error::MalformedInput(msg)) => {
                    log::warn!("skipping {}: {msg}", ex.key());
                    return Ok(None);
                }
                Err(e) => return Err(e),
            };
            let mut labels = example_labels(ex, &encoded, &reader.config);
            if task != AuxTask::None {
                let prev_span = prev.get(&(ex.story_id.as_str(), ex.turn.turn_id)).copied().flatten();
                labels.aux = Some(token_aux_labels(
                    annotations.get(ex.story_id.as_str()).copied(),
                    task,
                    prev_span,
                    &encoded,
                    &reader.config.srl_role_inventory,
                ));
            }
            Ok(Some(Instance { encoded, labels }))
        })
        .collect::<Result<_>>()?;
    let skipped = built.iter().filter(|b| b.is_none()).count();
    Ok((built.into_iter().flatten().collect(), skipped))
}

/// Trains `reader` in place for `config.epochs` epochs.
pub fn train<S: Scalar>(
    reader: &mut Reader<S>,
    corpus: &Corpus,
    config: &TrainConfig,
    annotations: Option<&[AnnotationSet]>,
) -> Result<TrainingRecord> {
    train_with(reader, corpus, config, annotations, |_, _| true)
}

/// As [`train`], calling `on_epoch` after every epoch; returning `false` stops early.
pub fn train_with<S: Scalar>(
    reader: &mut Reader<S>,
    corpus: &Corpus,
    config: &TrainConfig,
    annotations: Option<&[AnnotationSet]>,
    mut on_epoch: impl FnMut(&Reader<S>, &EpochLog) -> bool,
) -> Result<TrainingRecord> {
    config.validate()?;
    let by_story: HashMap<&str, &AnnotationSet> = annotations
        .unwrap_or_default()
        .iter()
        .map(|a| (a.story_id.as_str(), a))
        .collect();
    check_coverage(corpus, reader.config.aux_task, &by_story)?;
    let (instances, skipped) = prepare(reader, corpus, &by_story)?;

    let mut record = TrainingRecord {
        config: config.clone(),
        data_fingerprint: corpus.fingerprint(),
        examples: instances.len(),
        skipped,
        annotator_backends: annotations.and_then(|a| a.first()).map(|a| a.backends.clone()),
        curve: Vec::new(),
    };
    let mut optimizer = AdamW::new(&reader.params);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(2);
    let mut order: Vec<usize> = (0..instances.len()).collect();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossBreakdown::default();
        let mut steps = 0;
        for batch in order.chunks(config.batch_size) {
            let results: Vec<(LossBreakdown, Vec<Array2<S>>)> = batch
                .par_iter()
                .map(|&i| reader.loss_and_gradients(&instances[i].encoded, &instances[i].labels))
                .collect::<Result<_>>()?;
            let scale = S::of(1.0 / batch.len() as f64);
            let mut grads = reader.params.zeros_like();
            for (loss, g) in &results {
                sum.add(loss);
                for (acc, gi) in grads.iter_mut().zip(g) {
                    *acc += gi;
                }
            }
            for g in &mut grads {
                g.mapv_inplace(|x| x * scale);
            }
            optimizer.step(&mut reader.params, &grads, config);
            steps += 1;
        }
        let log = EpochLog {
            epoch: epoch + 1,
            steps,
            mean: sum.scaled(1.0 / instances.len().max(1) as f64),
        };
        log::info!(
            "epoch {} total {:.4} start {:.4} end {:.4} rationale {:.4} type {:.4} aux {:.4}",
            log.epoch,
            log.mean.total,
            log.mean.start,
            log.mean.end,
            log.mean.rationale,
            log.mean.answer_type,
            log.mean.aux
        );
        record.curve.push(log);
        reader.training = Some(record.clone());
        if !on_epoch(reader, record.curve.last().expect("just pushed")) {
            break;
        }
    }
    reader.training = Some(record.clone());
    Ok(record)
}
