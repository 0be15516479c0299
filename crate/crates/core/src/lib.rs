//! Diagnostic toolkit for extractive conversational question answering.
//!
//! The pipeline ingests CoQA-format dialogues and derives extractive span
//! and answer-type labels ([`corpus`]), annotates stories and questions with
//! negation scopes, sentence sentiment, semantic-role frames, question
//! categories and masked-LM surprisal ([`annotators`]), groups turns into 14
//! diagnostic classes ([`qa_classes`]), trains a multitask extractive reader
//! with auxiliary token-labelling objectives ([`reader`]), augments training
//! data by replacing surprising proper nouns ([`augment`]), combines readers
//! by per-turn confidence ([`ensemble`]) and scores predictions overall and
//! per class ([`metrics`]).

pub mod annotators;
pub mod augment;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod metrics;
pub mod qa_classes;
pub mod reader;
pub mod scalar;
pub mod span;
pub mod synthetic;
pub mod text;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use span::CharSpan;

/// Reader in single precision, used for training and inference.
pub type Reader32 = reader::Reader<f32>;
/// Reader in double precision, used for gradient checks and exact comparisons.
pub type Reader64 = reader::Reader<f64>;
