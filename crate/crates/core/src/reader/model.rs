use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{ParamStore, Tape, Var};
use crate::corpus::{EncodedInput, Segment};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Shape of the small randomly initialized transformer used off-GPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub hidden: usize,
    pub layers: usize,
    pub heads: usize,
    pub ffn: usize,
    /// Width of the hidden layer inside every output head.
    pub head_hidden: usize,
    pub max_positions: usize,
}

impl EncoderConfig {
    /// Two layers of width 64.
    pub fn tiny(vocab_size: usize) -> Self {
        EncoderConfig {
            vocab_size,
            hidden: 64,
            layers: 2,
            heads: 2,
            ffn: 128,
            head_hidden: 64,
            max_positions: 512,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("hidden", self.hidden),
            ("heads", self.heads),
            ("ffn", self.ffn),
            ("head_hidden", self.head_hidden),
            ("max_positions", self.max_positions),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("encoder {name} must be positive")));
        }
        if self.hidden % self.heads != 0 {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.hidden, self.heads
            )));
        }
        Ok(())
    }
}

/// A contextual encoder: maps an encoded input to one vector per token.
pub trait Encoder<S: Scalar>: Send + Sync {
    fn hidden_size(&self) -> usize;
    fn encode(&self, tape: &mut Tape<'_, S>, input: &EncodedInput) -> Result<Var>;
}

fn segment_id(segment: Segment) -> usize {
    match segment {
        Segment::Special => 0,
        Segment::Story => 1,
        Segment::History => 2,
        Segment::Question => 3,
    }
}

/// Registers parameters with deterministic initialization.
pub(crate) struct Init<'a, S: Scalar, R: Rng> {
    pub store: &'a mut ParamStore<S>,
    pub rng: &'a mut R,
}

impl<S: Scalar, R: Rng> Init<'_, S, R> {
    fn uniform(&mut self, name: String, rows: usize, cols: usize, limit: f64) -> usize {
        let values = Array2::from_shape_fn((rows, cols), |_| S::of(self.rng.gen_range(-limit..limit)));
        self.store.push(name, values)
    }

    /// Glorot-uniform weight matrix.
    fn weight(&mut self, name: String, rows: usize, cols: usize) -> usize {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        self.uniform(name, rows, cols, limit)
    }

    fn embedding(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.uniform(name, rows, cols, 0.1)
    }

    fn filled(&mut self, name: String, cols: usize, value: f64) -> usize {
        self.store.push(name, Array2::from_elem((1, cols), S::of(value)))
    }
}

#[derive(Debug, Clone)]
struct AttentionHead {
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
}

#[derive(Debug, Clone)]
struct Layer {
    heads: Vec<AttentionHead>,
    bo: usize,
    ln1: (usize, usize),
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    ln2: (usize, usize),
}

/// Post-norm transformer with learned token, position and segment embeddings.
#[derive(Debug, Clone)]
pub struct TinyTransformer {
    config: EncoderConfig,
    token: usize,
    position: usize,
    segment: usize,
    ln: (usize, usize),
    layers: Vec<Layer>,
}

impl TinyTransformer {
    pub(crate) fn init<S: Scalar, R: Rng>(config: EncoderConfig, init: &mut Init<'_, S, R>) -> Self {
        let d = config.hidden;
        let dh = d / config.heads;
        let token = init.embedding("encoder.token".into(), config.vocab_size, d);
        let position = init.embedding("encoder.position".into(), config.max_positions, d);
        let segment = init.embedding("encoder.segment".into(), 4, d);
        let ln = (
            init.filled("encoder.ln.gamma".into(), d, 1.0),
            init.filled("encoder.ln.beta".into(), d, 0.0),
        );
        let layers = (0..config.layers)
            .map(|l| {
                let p = format!("encoder.layer{l}");
                let heads = (0..config.heads)
                    .map(|h| AttentionHead {
                        wq: init.weight(format!("{p}.attn{h}.wq"), d, dh),
                        bq: init.filled(format!("{p}.attn{h}.bq"), dh, 0.0),
                        wk: init.weight(format!("{p}.attn{h}.wk"), d, dh),
                        bk: init.filled(format!("{p}.attn{h}.bk"), dh, 0.0),
                        wv: init.weight(format!("{p}.attn{h}.wv"), d, dh),
                        bv: init.filled(format!("{p}.attn{h}.bv"), dh, 0.0),
                        wo: init.weight(format!("{p}.attn{h}.wo"), dh, d),
                    })
                    .collect();
                Layer {
                    heads,
                    bo: init.filled(format!("{p}.attn.bo"), d, 0.0),
                    ln1: (init.filled(format!("{p}.ln1.gamma"), d, 1.0), init.filled(format!("{p}.ln1.beta"), d, 0.0)),
                    w1: init.weight(format!("{p}.ffn.w1"), d, config.ffn),
                    b1: init.filled(format!("{p}.ffn.b1"), config.ffn, 0.0),
                    w2: init.weight(format!("{p}.ffn.w2"), config.ffn, d),
                    b2: init.filled(format!("{p}.ffn.b2"), d, 0.0),
                    ln2: (init.filled(format!("{p}.ln2.gamma"), d, 1.0), init.filled(format!("{p}.ln2.beta"), d, 0.0)),
                }
            })
            .collect();
        TinyTransformer {
            config,
            token,
            position,
            segment,
            ln,
            layers,
        }
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }
}

fn linear<S: Scalar>(tape: &mut Tape<'_, S>, x: Var, w: usize, b: usize) -> Var {
    let w = tape.param(w);
    let b = tape.param(b);
    let y = tape.matmul(x, w);
    tape.add_row(y, b)
}

impl<S: Scalar> Encoder<S> for TinyTransformer {
    fn hidden_size(&self) -> usize {
        self.config.hidden
    }

    fn encode(&self, tape: &mut Tape<'_, S>, input: &EncodedInput) -> Result<Var> {
        let len = input.len();
        if len == 0 {
            return Err(Error::MalformedInput("empty encoded input".into()));
        }
        if len > self.config.max_positions {
            return Err(Error::Config(format!(
                "input of {len} tokens exceeds {} positions",
                self.config.max_positions
            )));
        }
        if input.segments.len() != len {
            return Err(Error::MalformedInput("segment ids do not match token ids".into()));
        }
        let ids: Vec<usize> = input.ids.iter().map(|&i| i as usize).collect();
        if let Some(bad) = ids.iter().find(|&&i| i >= self.config.vocab_size) {
            return Err(Error::Config(format!(
                "token id {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let positions: Vec<usize> = (0..len).collect();
        let segments: Vec<usize> = input.segments.iter().map(|&s| segment_id(s)).collect();

        let tok = tape.param(self.token);
        let pos = tape.param(self.position);
        let seg = tape.param(self.segment);
        let e_tok = tape.gather(tok, &ids);
        let e_pos = tape.gather(pos, &positions);
        let e_seg = tape.gather(seg, &segments);
        let sum = tape.add(e_tok, e_pos);
        let sum = tape.add(sum, e_seg);
        let (g, b) = (tape.param(self.ln.0), tape.param(self.ln.1));
        let mut x = tape.layer_norm(sum, g, b);

        let dh = self.config.hidden / self.config.heads;
        let scale = S::of(1.0 / (dh as f64).sqrt());
        for layer in &self.layers {
            let mut attn: Option<Var> = None;
            for head in &layer.heads {
                let q = linear(tape, x, head.wq, head.bq);
                let k = linear(tape, x, head.wk, head.bk);
                let v = linear(tape, x, head.wv, head.bv);
                let scores = tape.matmul_t(q, k);
                let scores = tape.scale(scores, scale);
                let weights = tape.softmax_rows(scores);
                let ctx = tape.matmul(weights, v);
                let wo = tape.param(head.wo);
                let out = tape.matmul(ctx, wo);
                attn = Some(match attn {
                    Some(acc) => tape.add(acc, out),
                    None => out,
                });
            }
            let bo = tape.param(layer.bo);
            let attn = tape.add_row(attn.expect("at least one head"), bo);
            let res = tape.add(x, attn);
            let (g, b) = (tape.param(layer.ln1.0), tape.param(layer.ln1.1));
            x = tape.layer_norm(res, g, b);

            let h = linear(tape, x, layer.w1, layer.b1);
            let h = tape.relu(h);
            let f = linear(tape, h, layer.w2, layer.b2);
            let res = tape.add(x, f);
            let (g, b) = (tape.param(layer.ln2.0), tape.param(layer.ln2.1));
            x = tape.layer_norm(res, g, b);
        }
        Ok(x)
    }
}

/// linear → ReLU → linear.
#[derive(Debug, Clone)]
pub(crate) struct Head {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

impl Head {
    pub fn init<S: Scalar, R: Rng>(
        name: &str,
        input: usize,
        hidden: usize,
        outputs: usize,
        init: &mut Init<'_, S, R>,
    ) -> Self {
        Head {
            w1: init.weight(format!("{name}.w1"), input, hidden),
            b1: init.filled(format!("{name}.b1"), hidden, 0.0),
            w2: init.weight(format!("{name}.w2"), hidden, outputs),
            b2: init.filled(format!("{name}.b2"), outputs, 0.0),
        }
    }

    pub fn apply<S: Scalar>(&self, tape: &mut Tape<'_, S>, x: Var) -> Var {
        let h = linear(tape, x, self.w1, self.b1);
        let h = tape.relu(h);
        linear(tape, h, self.w2, self.b2)
    }
}

/// Raw scores of every head for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs<S> {
    pub start_logits: Vec<S>,
    pub end_logits: Vec<S>,
    pub rationale_logits: Vec<S>,
    pub type_logits: Vec<S>,
    /// `L × 1` for binary auxiliary tasks, `L × roles` for SRL.
    pub aux_logits: Option<Array2<S>>,
}

impl<S: Scalar> HeadOutputs<S> {
    pub fn len(&self) -> usize {
        self.start_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.start_logits.is_empty()
    }
}

/// Head outputs as tape nodes.
#[derive(Debug, Clone, Copy)]
pub(crate) struct HeadVars {
    /// `L × 1`.
    pub start: Var,
    pub end: Var,
    pub rationale: Var,
    /// `1 × C`.
    pub answer_type: Var,
    pub aux: Option<Var>,
}

impl HeadVars {
    pub fn read<S: Scalar>(&self, tape: &Tape<'_, S>) -> HeadOutputs<S> {
        let column = |v: Var| tape.value(v).iter().copied().collect::<Vec<S>>();
        HeadOutputs {
            start_logits: column(self.start),
            end_logits: column(self.end),
            rationale_logits: column(self.rationale),
            type_logits: column(self.answer_type),
            aux_logits: self.aux.map(|a| tape.value(a).clone()),
        }
    }

    /// Places precomputed outputs on a tape as constants.
    pub fn constants<S: Scalar>(tape: &mut Tape<'_, S>, outputs: &HeadOutputs<S>) -> Self {
        let col = |v: &[S]| Array2::from_shape_vec((v.len(), 1), v.to_vec()).expect("column shape");
        HeadVars {
            start: tape.constant(col(&outputs.start_logits)),
            end: tape.constant(col(&outputs.end_logits)),
            rationale: tape.constant(col(&outputs.rationale_logits)),
            answer_type: tape.constant(
                Array2::from_shape_vec((1, outputs.type_logits.len()), outputs.type_logits.clone()).expect("row shape"),
            ),
            aux: outputs.aux_logits.as_ref().map(|a| tape.constant(a.clone())),
        }
    }
}
