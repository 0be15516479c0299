use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use lingreader::annotators::{
    Annotators, HeuristicPosTagger, LexiconNegation, LexiconSentiment, MaskedLm, PosTagger, RuleQuestionClassifier,
    RuleSrl, TableMaskedLm,
};
use lingreader::corpus::InputConfig;
use lingreader::metrics::EvalMode;
use lingreader::reader::{ReaderConfig, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Directory searched for model-backed annotator files when no explicit
/// backend path is given.
pub const MODEL_CACHE_ENV: &str = "LINGREADER_MODEL_CACHE";

const ANNOTATOR_KINDS: [&str; 6] = ["negation", "sentiment", "srl", "question", "pos", "masked-lm"];

/// Contents of the `--config` JSON file. Command-line flags take precedence.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub reader: Option<ReaderConfig>,
    pub train: Option<TrainConfig>,
    pub input: Option<InputConfig>,
    pub eval_mode: Option<EvalMode>,
    pub augment_threshold: Option<f64>,
    pub augment_top_k: Option<usize>,
    pub temperatures: BTreeMap<String, f64>,
    pub backends: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&raw).map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Global settings shared by every subcommand after merging flags and file.
#[derive(Debug, Clone, Serialize)]
pub struct Settings {
    pub seed: u64,
    pub offline: bool,
    pub backends: BTreeMap<String, String>,
    pub file: FileConfig,
}

impl Settings {
    pub fn new(
        file: FileConfig,
        seed: Option<u64>,
        offline: bool,
        backend_flags: &[String],
    ) -> Result<Self, CliError> {
        let mut backends = file.backends.clone();
        for flag in backend_flags {
            let (kind, name) = flag
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--backend expects KIND=NAME, got `{flag}`")))?;
            backends.insert(kind.to_string(), name.to_string());
        }
        if let Some(kind) = backends.keys().find(|k| !ANNOTATOR_KINDS.contains(&k.as_str())) {
            return Err(CliError::Config(format!(
                "unknown annotator kind `{kind}` (expected one of {})",
                ANNOTATOR_KINDS.join(", ")
            )));
        }
        Ok(Settings {
            seed: seed.or(file.seed).unwrap_or(0),
            offline,
            backends,
            file,
        })
    }

    fn backend(&self, kind: &str, default: &str) -> String {
        self.backends.get(kind).cloned().unwrap_or_else(|| default.to_string())
    }

    fn fixed_backend(&self, kind: &str, allowed: &str) -> Result<(), CliError> {
        let name = self.backend(kind, allowed);
        if name == allowed {
            Ok(())
        } else {
            Err(CliError::Config(format!("unknown {kind} backend `{name}` (available: {allowed})")))
        }
    }

    pub fn pos_tagger(&self) -> Result<Box<dyn PosTagger>, CliError> {
        self.fixed_backend("pos", "heuristic")?;
        Ok(Box::new(HeuristicPosTagger::default()))
    }

    /// `None` when surprisal is switched off. Online runs without an
    /// explicit backend look for `masked_lm.json` in the model cache.
    pub fn masked_lm(&self) -> Result<Option<Box<dyn MaskedLm>>, CliError> {
        let default = if self.offline { "none" } else { "table" };
        let name = self.backend("masked-lm", default);
        let path = match name.as_str() {
            "none" => return Ok(None),
            "table" => model_cache_dir().join("masked_lm.json"),
            other => match other.strip_prefix("table:") {
                Some(p) => PathBuf::from(p),
                None => {
                    return Err(CliError::Config(format!(
                        "unknown masked-lm backend `{other}` (available: none, table, table:<path>)"
                    )))
                }
            },
        };
        if !path.exists() {
            return Err(lingreader::Error::ScorerUnavailable(format!("no masked-LM table at {}", path.display())).into());
        }
        Ok(Some(Box::new(TableMaskedLm::load(&path)?)))
    }

    pub fn annotators(&self) -> Result<Annotators, CliError> {
        self.fixed_backend("negation", "lexicon")?;
        self.fixed_backend("sentiment", "lexicon")?;
        self.fixed_backend("srl", "rule")?;
        self.fixed_backend("question", "rule")?;
        let mut annotators = Annotators {
            negation: Box::new(LexiconNegation),
            sentiment: Box::new(LexiconSentiment),
            srl: Box::new(RuleSrl),
            question: Box::new(RuleQuestionClassifier),
            masked_lm: None,
            pos: self.pos_tagger()?,
        };
        annotators.masked_lm = self.masked_lm()?;
        Ok(annotators)
    }
}

pub fn model_cache_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os(MODEL_CACHE_ENV) {
        return PathBuf::from(dir);
    }
    let home = std::env::var_os("HOME").map(PathBuf::from).unwrap_or_default();
    home.join(".cache").join("lingreader")
}

/// Everything that determined an output artifact.
#[derive(Debug, Serialize)]
pub struct RunConfig<'a, A: Serialize> {
    pub command: &'a str,
    pub version: &'a str,
    pub settings: &'a Settings,
    pub args: &'a A,
}

/// Path of the RunConfig written next to `output`: `<output>.run.json`, or
/// `run.json` inside an output directory.
pub fn sidecar_path(output: &Path) -> PathBuf {
    if output.is_dir() {
        return output.join("run.json");
    }
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    output.with_file_name(name)
}

pub fn write_run_config<A: Serialize>(output: &Path, run: &RunConfig<'_, A>) -> Result<(), CliError> {
    let path = sidecar_path(output);
    let mut json = serde_json::to_string_pretty(run).map_err(lingreader::Error::from)?;
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| lingreader::Error::io(&path, e))?;
    Ok(())
}
