use std::path::PathBuf;

use crate::corpus::TurnKey;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {record}: {message}")]
    Parse { record: String, message: String },

    #[error("validation error in story {story_id} turn {turn_id}: {message}")]
    Validation {
        story_id: String,
        turn_id: u32,
        message: String,
    },

    #[error("malformed input: {0}")]
    MalformedInput(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("label out of range: {0}")]
    LabelOutOfRange(String),

    #[error("missing predictions for {} turn(s): {}", .0.len(), format_turns(.0))]
    MissingPredictions(Vec<TurnKey>),

    #[error("prediction sets cover different turns: {}", format_turns(.0))]
    CoverageMismatch(Vec<TurnKey>),

    #[error("masked language model unavailable ({0}); run with --offline to skip surprisal annotations")]
    ScorerUnavailable(String),

    #[error("annotation coverage for {task} is incomplete: {missing} of {total} training stories lack annotations")]
    AnnotationCoverage {
        task: String,
        missing: usize,
        total: usize,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_turns(turns: &[TurnKey]) -> String {
    const SHOWN: usize = 10;
    let mut parts: Vec<String> = turns.iter().take(SHOWN).map(|t| t.to_string()).collect();
    if turns.len() > SHOWN {
        parts.push(format!("... ({} more)", turns.len() - SHOWN));
    }
    parts.join(", ")
}
