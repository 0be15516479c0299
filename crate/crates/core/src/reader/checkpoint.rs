//! Checkpoint directory layout:
//!
//! - `weights.bin`: magic `LGRW` followed by every tensor's entries,
//!   row-major, little-endian, in the order listed in the metadata
//! - `meta.json`: [`CheckpointMeta`]
//! - `vocab.txt`: the tokenizer vocabulary, one word per line, specials excluded

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{EncoderConfig, Reader, ReaderConfig, TrainingRecord};
use crate::corpus::{InputConfig, WordTokenizer};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAGIC: &[u8; 4] = b"LGRW";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub dtype: String,
    pub encoder: EncoderConfig,
    pub reader: ReaderConfig,
    pub input: InputConfig,
    pub seed: u64,
    pub training: Option<TrainingRecord>,
    pub tensors: Vec<TensorInfo>,
    pub weights_sha256: String,
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn corrupt(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        record: path.display().to_string(),
        message: message.into(),
    }
}

impl<S: Scalar> Reader<S> {
    pub fn metadata(&self, weights_sha256: String) -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            dtype: S::DTYPE.to_string(),
            encoder: self.encoder_config,
            reader: self.config.clone(),
            input: self.input_config,
            seed: self.seed,
            training: self.training.clone(),
            tensors: self
                .params
                .names
                .iter()
                .zip(&self.params.tensors)
                .map(|(name, t)| TensorInfo {
                    name: name.clone(),
                    rows: t.nrows(),
                    cols: t.ncols(),
                })
                .collect(),
            weights_sha256,
        }
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut blob = MAGIC.to_vec();
        for t in &self.params.tensors {
            for &x in t.iter() {
                match S::DTYPE {
                    "f32" => blob.extend((x.as_f64() as f32).to_le_bytes()),
                    _ => blob.extend(x.as_f64().to_le_bytes()),
                }
            }
        }
        let digest = hex::encode(Sha256::digest(&blob));
        write_file(&dir.join("weights.bin"), &blob)?;
        let meta = serde_json::to_string_pretty(&self.metadata(digest))?;
        write_file(&dir.join("meta.json"), meta.as_bytes())?;
        let mut vocab = self.tokenizer.words().join("\n");
        vocab.push('\n');
        write_file(&dir.join("vocab.txt"), vocab.as_bytes())
    }

    /// Loads a checkpoint written with any dtype, converting to `S`.
    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join("meta.json");
        let raw = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let meta: CheckpointMeta = serde_json::from_str(&raw).map_err(|e| corrupt(&meta_path, e.to_string()))?;
        if meta.format_version != FORMAT_VERSION {
            return Err(corrupt(&meta_path, format!("unsupported format version {}", meta.format_version)));
        }
        let vocab_path = dir.join("vocab.txt");
        let vocab = fs::read_to_string(&vocab_path).map_err(|e| Error::io(&vocab_path, e))?;
        let tokenizer = WordTokenizer::from_vocab(vocab.lines().filter(|l| !l.is_empty()).map(str::to_string));
        let mut reader = Reader::<S>::new(tokenizer, meta.encoder, meta.reader.clone(), meta.input, meta.seed)?;

        let weights_path = dir.join("weights.bin");
        let blob = fs::read(&weights_path).map_err(|e| Error::io(&weights_path, e))?;
        if hex::encode(Sha256::digest(&blob)) != meta.weights_sha256 {
            return Err(corrupt(&weights_path, "checksum does not match metadata"));
        }
        if !blob.starts_with(MAGIC) {
            return Err(corrupt(&weights_path, "missing magic header"));
        }
        let width = match meta.dtype.as_str() {
            "f32" => 4,
            "f64" => 8,
            other => return Err(corrupt(&meta_path, format!("unknown dtype {other}"))),
        };
        let expected: usize = meta.tensors.iter().map(|t| t.rows * t.cols).sum::<usize>() * width;
        if blob.len() - MAGIC.len() != expected {
            return Err(corrupt(&weights_path, format!("expected {expected} bytes of weights")));
        }
        if meta.tensors.len() != reader.params.len() {
            return Err(Error::Config(format!(
                "checkpoint has {} tensors, configuration implies {}",
                meta.tensors.len(),
                reader.params.len()
            )));
        }
        let mut values = blob[MAGIC.len()..].chunks_exact(width).map(|c| match width {
            4 => f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64,
            _ => f64::from_le_bytes(c.try_into().expect("8 bytes")),
        });
        for info in &meta.tensors {
            let idx = reader
                .params
                .index_of(&info.name)
                .ok_or_else(|| Error::Config(format!("unexpected tensor {}", info.name)))?;
            let tensor = &mut reader.params.tensors[idx];
            if tensor.dim() != (info.rows, info.cols) {
                return Err(Error::Config(format!(
                    "tensor {} is {}x{}, configuration implies {:?}",
                    info.name,
                    info.rows,
                    info.cols,
                    tensor.dim()
                )));
            }
            for x in tensor.iter_mut() {
                *x = S::of(values.next().expect("length checked"));
            }
        }
        reader.training = meta.training;
        Ok(reader)
    }
}
