use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use lingreader::annotators::{read_annotations, write_annotations, AnnotationSet, AntonymLexicon};
use lingreader::augment::{augment_corpus, write_manifest, DEFAULT_TOP_K};
use lingreader::corpus::{load_corpus, Corpus, Split, SubwordTokenizer, TurnKey};
use lingreader::ensemble::{
    read_prediction_details, select_calibrated, write_prediction_details, write_winner_log, Calibration,
    ModelPredictionSet,
};
use lingreader::metrics::{
    evaluate as score, read_predictions, render_comparison, render_heatmap_svg, render_table, write_predictions,
    EvalMode, EvalReport, PredictionRecord,
};
use lingreader::qa_classes::{class_sizes, read_class_records, tag_corpus, write_class_records};
use lingreader::reader::{
    fit_tokenizer, train_with, AuxTask, EncoderConfig, Prediction, Reader, ReaderConfig, TrainConfig,
};
use lingreader::{Error, Scalar};
use serde::Serialize;

use crate::config::{write_run_config, RunConfig, Settings};
use crate::{
    AnnotateArgs, AugmentArgs, AuxArg, CliError, Dtype, EnsembleArgs, EvaluateArgs, IngestArgs, ModeArg, PredictArgs,
    ReportArgs, SplitArg, TagArgs, TrainArgs,
};

type CliResult = Result<(), CliError>;

fn record<A: Serialize>(command: &str, settings: &Settings, args: &A, outputs: &[&Path]) -> CliResult {
    let run = RunConfig {
        command,
        version: env!("CARGO_PKG_VERSION"),
        settings,
        args,
    };
    for output in outputs {
        write_run_config(output, &run)?;
    }
    Ok(())
}

/// Refuses to write over any input.
fn guard(output: &Path, inputs: &[&Path]) -> CliResult {
    let canonical = |p: &Path| fs::canonicalize(p).ok();
    if let Some(out) = canonical(output) {
        if inputs.iter().any(|i| canonical(i).as_ref() == Some(&out)) {
            return Err(CliError::Config(format!("output {} would overwrite an input", output.display())));
        }
    }
    Ok(())
}

/// `dir/name.json` → `dir/name.<suffix>`.
fn derived(output: &Path, suffix: &str) -> PathBuf {
    let stem = output.file_stem().unwrap_or_default().to_string_lossy();
    output.with_file_name(format!("{stem}.{suffix}"))
}

/// Corpus JSONL, or CoQA JSON read as the dev split.
fn read_corpus(path: &Path) -> Result<Corpus, CliError> {
    let corpus = if path.extension().is_some_and(|e| e == "json") {
        load_corpus(path, Split::Dev)?
    } else {
        Corpus::read_jsonl(path)?
    };
    Ok(corpus)
}

fn write_text(path: &Path, text: &str) -> CliResult {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn read_report(path: &Path) -> Result<EvalReport, CliError> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        record: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(report)
}

/// `ID=PATH` or `PATH` with the file stem as the id.
fn labelled(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((id, path)) if !id.is_empty() => (id.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(spec);
            let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
            (id, path)
        }
    }
}

pub fn ingest(settings: &Settings, args: &IngestArgs) -> CliResult {
    guard(&args.output, &[&args.input])?;
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Dev => Split::Dev,
    };
    let corpus = load_corpus(&args.input, split)?;
    corpus.write_jsonl(&args.output)?;
    record("ingest", settings, args, &[&args.output])?;
    println!("{} stories, {} turns", corpus.stories.len(), corpus.len());
    Ok(())
}

pub fn annotate(settings: &Settings, args: &AnnotateArgs) -> CliResult {
    guard(&args.output, &[&args.corpus])?;
    let corpus = read_corpus(&args.corpus)?;
    let annotators = settings.annotators()?;
    let sets = annotators.annotate_corpus(&corpus)?;
    write_annotations(&args.output, &sets)?;
    record("annotate", settings, args, &[&args.output])?;
    println!("annotated {} stories", sets.len());
    Ok(())
}

fn annotations_for(settings: &Settings, corpus: &Corpus, path: Option<&Path>) -> Result<Vec<AnnotationSet>, CliError> {
    match path {
        Some(p) => Ok(read_annotations(p)?),
        None => Ok(settings.annotators()?.annotate_corpus(corpus)?),
    }
}

pub fn tag_classes(settings: &Settings, args: &TagArgs) -> CliResult {
    let mut inputs = vec![args.corpus.as_path()];
    inputs.extend(args.annotations.as_deref());
    inputs.extend(args.antonyms.as_deref());
    guard(&args.output, &inputs)?;
    let corpus = read_corpus(&args.corpus)?;
    let annotations = annotations_for(settings, &corpus, args.annotations.as_deref())?;
    let loaded;
    let antonyms = match &args.antonyms {
        Some(p) => {
            loaded = AntonymLexicon::load(p)?;
            &loaded
        }
        None => AntonymLexicon::bundled(),
    };
    let records = tag_corpus(&corpus, &annotations, antonyms);
    write_class_records(&args.output, &records)?;
    record("tag-classes", settings, args, &[&args.output])?;
    let by_key: HashMap<TurnKey, _> = records.into_iter().map(|r| (r.key(), r)).collect();
    for (class, size) in class_sizes(&corpus, &by_key) {
        println!("{class:>6} {size}");
    }
    Ok(())
}

fn reader_config(settings: &Settings, args: &TrainArgs) -> ReaderConfig {
    let mut config = settings.file.reader.clone().unwrap_or_default();
    if let Some(task) = args.aux_task {
        config.aux_task = match task {
            AuxArg::None => AuxTask::None,
            AuxArg::Negation => AuxTask::Negation,
            AuxArg::Order => AuxTask::Order,
            AuxArg::Sentiment => AuxTask::Sentiment,
            AuxArg::Srl => AuxTask::Srl,
        };
    }
    if let Some(w) = args.aux_weight {
        config.aux_weight = w;
    }
    if let Some(c) = args.answer_classes {
        config.answer_type_classes = c;
    }
    config
}

fn train_config(settings: &Settings, args: &TrainArgs) -> TrainConfig {
    let mut config = settings.file.train.clone().unwrap_or_default();
    config.seed = settings.seed;
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    config
}

fn train_as<S: Scalar>(
    settings: &Settings,
    args: &TrainArgs,
    corpus: &Corpus,
    annotations: Option<&[AnnotationSet]>,
) -> CliResult {
    let tokenizer = fit_tokenizer(corpus);
    let encoder = EncoderConfig::tiny(SubwordTokenizer::vocab_size(&tokenizer));
    let input = settings.file.input.unwrap_or_default();
    let mut reader = Reader::<S>::new(tokenizer, encoder, reader_config(settings, args), input, settings.seed)?;
    let config = train_config(settings, args);
    train_with(&mut reader, corpus, &config, annotations, |_, log| {
        log::info!("epoch {} total loss {:.4}", log.epoch, log.mean.total);
        true
    })?;
    reader.save(&args.output)?;
    let curve = &reader.training.as_ref().expect("trained").curve;
    if let Some(last) = curve.last() {
        println!("trained {} epochs, final loss {:.4}", curve.len(), last.mean.total);
    }
    Ok(())
}

pub fn train(settings: &Settings, args: &TrainArgs) -> CliResult {
    if !settings.offline {
        return Err(CliError::Config(
            "no pretrained encoder is available in this build; pass --offline to train the tiny encoder".into(),
        ));
    }
    guard(&args.output, &[&args.corpus])?;
    let corpus = read_corpus(&args.corpus)?;
    let task = reader_config(settings, args).aux_task;
    let annotations = match (&args.annotations, task.needs_annotations()) {
        (Some(p), _) => Some(read_annotations(p)?),
        (None, true) => {
            let mut annotators = settings.annotators()?;
            annotators.masked_lm = None;
            Some(annotators.annotate_corpus(&corpus)?)
        }
        (None, false) => None,
    };
    match args.dtype {
        Dtype::F32 => train_as::<f32>(settings, args, &corpus, annotations.as_deref())?,
        Dtype::F64 => train_as::<f64>(settings, args, &corpus, annotations.as_deref())?,
    }
    record("train", settings, args, &[&args.output])
}

fn checkpoint_dtype(dir: &Path) -> Result<String, CliError> {
    let path = dir.join("meta.json");
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let meta: serde_json::Value = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        record: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(meta["dtype"].as_str().unwrap_or("f32").to_string())
}

fn predict_as<S: Scalar>(dir: &Path, corpus: &Corpus) -> Result<BTreeMap<TurnKey, Prediction>, CliError> {
    let reader = Reader::<S>::load(dir)?;
    Ok(reader.predict_corpus(corpus)?)
}

fn coqa_records(predictions: &BTreeMap<TurnKey, Prediction>) -> Vec<PredictionRecord> {
    predictions
        .iter()
        .map(|(k, p)| PredictionRecord {
            id: k.story_id.clone(),
            turn_id: k.turn_id,
            answer: p.answer_text.clone(),
        })
        .collect()
}

pub fn predict(settings: &Settings, args: &PredictArgs) -> CliResult {
    let details = args.details.clone().unwrap_or_else(|| derived(&args.output, "details.jsonl"));
    guard(&args.output, &[&args.corpus])?;
    guard(&details, &[&args.corpus])?;
    let corpus = read_corpus(&args.corpus)?;
    let predictions = match checkpoint_dtype(&args.model)?.as_str() {
        "f64" => predict_as::<f64>(&args.model, &corpus)?,
        _ => predict_as::<f32>(&args.model, &corpus)?,
    };
    write_predictions(&args.output, &coqa_records(&predictions))?;
    write_prediction_details(&details, &predictions)?;
    record("predict", settings, args, &[&args.output, &details])?;
    println!("predicted {} turns", predictions.len());
    Ok(())
}

pub fn evaluate(settings: &Settings, args: &EvaluateArgs) -> CliResult {
    let records = read_predictions(&args.pred)?;
    let mut predictions = HashMap::with_capacity(records.len());
    for r in records {
        let key = TurnKey::new(r.id, r.turn_id);
        if predictions.insert(key.clone(), r.answer).is_some() {
            return Err(Error::Parse {
                record: args.pred.display().to_string(),
                message: format!("duplicate prediction for {key}"),
            }
            .into());
        }
    }
    let corpus = read_corpus(&args.corpus)?;
    let classes: HashMap<TurnKey, _> = match &args.classes {
        Some(p) => read_class_records(p)?.into_iter().map(|r| (r.key(), r)).collect(),
        None => HashMap::new(),
    };
    let mode = match args.mode {
        Some(ModeArg::SimpleMax) => EvalMode::SimpleMax,
        Some(ModeArg::StrictOfficial) => EvalMode::StrictOfficial,
        None => settings.file.eval_mode.unwrap_or_default(),
    };
    let report = score(&predictions, &corpus, &classes, mode)?;
    if let Some(out) = &args.output {
        let mut inputs = vec![args.pred.as_path(), args.corpus.as_path()];
        inputs.extend(args.classes.as_deref());
        guard(out, &inputs)?;
        let mut json = serde_json::to_string_pretty(&report).map_err(Error::from)?;
        json.push('\n');
        write_text(out, &json)?;
        record("evaluate", settings, args, &[out])?;
    }
    print!("{}", render_table(&[(args.name.clone(), report)]));
    Ok(())
}

pub fn augment(settings: &Settings, args: &AugmentArgs) -> CliResult {
    let manifest_path = args.manifest.clone().unwrap_or_else(|| derived(&args.output, "manifest.jsonl"));
    guard(&args.output, &[&args.corpus])?;
    guard(&manifest_path, &[&args.corpus])?;
    let corpus = read_corpus(&args.corpus)?;
    let threshold = args
        .threshold
        .or(settings.file.augment_threshold)
        .unwrap_or(lingreader::annotators::SURPRISAL_THRESHOLD);
    let top_k = args.top_k.or(settings.file.augment_top_k).unwrap_or(DEFAULT_TOP_K);
    let lm = settings
        .masked_lm()?
        .ok_or_else(|| Error::ScorerUnavailable("augmentation needs a masked-lm backend".into()))?;
    let tagger = settings.pos_tagger()?;
    let (augmented, manifest) = augment_corpus(&corpus, threshold, lm.as_ref(), tagger.as_ref(), top_k)?;
    augmented.write_jsonl(&args.output)?;
    write_manifest(&manifest_path, &manifest)?;
    record("augment", settings, args, &[&args.output, &manifest_path])?;
    println!(
        "{} original samples, {} added from {} substitutions",
        manifest.original_samples,
        manifest.added_samples,
        manifest.entries.len()
    );
    Ok(())
}

pub fn ensemble(settings: &Settings, args: &EnsembleArgs) -> CliResult {
    let winners = args.winners.clone().unwrap_or_else(|| derived(&args.output, "winners.jsonl"));
    let specs: Vec<(String, PathBuf)> = args.models.iter().map(|m| labelled(m)).collect();
    let inputs: Vec<&Path> = specs.iter().map(|(_, p)| p.as_path()).collect();
    guard(&args.output, &inputs)?;
    guard(&winners, &inputs)?;
    let mut sets = Vec::with_capacity(specs.len());
    for (id, path) in &specs {
        if sets.iter().any(|s: &ModelPredictionSet| &s.model_id == id) {
            return Err(CliError::Config(format!("model id `{id}` listed twice")));
        }
        sets.push(ModelPredictionSet {
            model_id: id.clone(),
            predictions: read_prediction_details(path)?,
        });
    }
    let mut temperatures: HashMap<String, f64> = settings.file.temperatures.clone().into_iter().collect();
    for t in &args.temperatures {
        let (id, value) = t
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("--temperature expects ID=T, got `{t}`")))?;
        let value: f64 = value
            .parse()
            .map_err(|_| CliError::Config(format!("temperature `{value}` is not a number")))?;
        if !(value > 0.0 && value.is_finite()) {
            return Err(CliError::Config(format!("temperature for {id} must be positive")));
        }
        temperatures.insert(id.to_string(), value);
    }
    let calibration = if temperatures.is_empty() {
        Calibration::Raw
    } else {
        Calibration::Temperature(temperatures)
    };
    let selections = select_calibrated(&sets, &calibration)?;
    let chosen: BTreeMap<TurnKey, Prediction> =
        selections.iter().map(|(k, s)| (k.clone(), s.prediction.clone())).collect();
    write_predictions(&args.output, &coqa_records(&chosen))?;
    write_winner_log(&winners, &selections)?;
    record("ensemble", settings, args, &[&args.output, &winners])?;
    let mut wins: BTreeMap<&str, usize> = sets.iter().map(|s| (s.model_id.as_str(), 0)).collect();
    for s in selections.values() {
        *wins.entry(s.model_id.as_str()).or_default() += 1;
    }
    for set in &sets {
        println!("{:>12} {}", set.model_id, wins[set.model_id.as_str()]);
    }
    Ok(())
}

pub fn report(settings: &Settings, args: &ReportArgs) -> CliResult {
    let mut rows = Vec::new();
    for spec in &args.reports {
        let (name, path) = labelled(spec);
        rows.push((name, read_report(&path)?));
    }
    let mut text = String::new();
    if let Some(paths) = &args.compare {
        let base = read_report(&paths[0])?;
        let enhanced = read_report(&paths[1])?;
        let (bn, en) = (labelled(&paths[0].to_string_lossy()).0, labelled(&paths[1].to_string_lossy()).0);
        text.push_str(&render_comparison((&bn, &base), (&en, &enhanced)));
        if rows.is_empty() {
            rows = vec![(bn, base), (en, enhanced)];
        }
    } else if rows.is_empty() {
        return Err(CliError::Config("report needs --report or --compare".into()));
    } else {
        text.push_str(&render_table(&rows));
    }
    print!("{text}");
    let mut outputs: Vec<&Path> = Vec::new();
    if let Some(out) = &args.output {
        write_text(out, &text)?;
        outputs.push(out);
    }
    if let Some(svg) = &args.svg {
        write_text(svg, &render_heatmap_svg(&rows))?;
        outputs.push(svg);
    }
    record("report", settings, args, &outputs)
}
