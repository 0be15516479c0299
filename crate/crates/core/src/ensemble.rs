//! Per-turn confidence ensembling: every turn takes the prediction of the
//! model that is most confident about it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::TurnKey;
use crate::error::{Error, Result};
use crate::reader::Prediction;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPredictionSet {
    pub model_id: String,
    pub predictions: BTreeMap<TurnKey, Prediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub prediction: Prediction,
    pub model_id: String,
    /// Confidence after calibration, as compared.
    pub confidence: f64,
    /// Later-listed models that matched the winner's confidence exactly.
    pub tied_with: Vec<String>,
}

/// How raw confidences are made comparable across models.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum Calibration {
    /// Use `Prediction::confidence` unchanged.
    #[default]
    Raw,
    /// Per-model temperature applied to the binary reduction
    /// `(p, 1 - p)`: `p^(1/T) / (p^(1/T) + (1-p)^(1/T))`. Models without an
    /// entry keep `T = 1`.
    Temperature(HashMap<String, f64>),
}

impl Calibration {
    pub fn apply(&self, model_id: &str, p: f64) -> f64 {
        match self {
            Calibration::Raw => p,
            Calibration::Temperature(ts) => {
                let t = ts.get(model_id).copied().unwrap_or(1.0);
                if p >= 1.0 {
                    return 1.0;
                }
                let a = p.powf(1.0 / t);
                let b = (1.0 - p).powf(1.0 / t);
                a / (a + b)
            }
        }
    }
}

fn check_coverage(sets: &[ModelPredictionSet]) -> Result<Vec<TurnKey>> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Config("an ensemble needs at least one prediction set".into()))?;
    let union: BTreeSet<&TurnKey> = sets.iter().flat_map(|s| s.predictions.keys()).collect();
    let divergent: Vec<TurnKey> = union
        .iter()
        .filter(|k| sets.iter().any(|s| !s.predictions.contains_key(**k)))
        .map(|k| (*k).clone())
        .collect();
    if !divergent.is_empty() {
        return Err(Error::CoverageMismatch(divergent));
    }
    Ok(first.predictions.keys().cloned().collect())
}

/// Highest raw confidence wins; ties go to the earliest-listed model.
pub fn select(sets: &[ModelPredictionSet]) -> Result<BTreeMap<TurnKey, Selection>> {
    select_with(sets, &|_, p: &Prediction| p.confidence)
}

pub fn select_calibrated(sets: &[ModelPredictionSet], calibration: &Calibration) -> Result<BTreeMap<TurnKey, Selection>> {
    select_with(sets, &|model, p: &Prediction| calibration.apply(model, p.confidence))
}

/// As [`select`] with a caller-supplied confidence function of
/// `(model_id, prediction)`.
pub fn select_with(
    sets: &[ModelPredictionSet],
    confidence: &(dyn Fn(&str, &Prediction) -> f64 + Sync),
) -> Result<BTreeMap<TurnKey, Selection>> {
    let turns = check_coverage(sets)?;
    let out: BTreeMap<TurnKey, Selection> = turns
        .into_par_iter()
        .map(|key| {
            let mut best: Option<(usize, f64)> = None;
            let mut tied = Vec::new();
            for (i, set) in sets.iter().enumerate() {
                let c = confidence(&set.model_id, &set.predictions[&key]);
                match best {
                    Some((_, b)) if c < b => {}
                    Some((_, b)) if c == b => tied.push(set.model_id.clone()),
                    _ => {
                        best = Some((i, c));
                        tied.clear();
                    }
                }
            }
            let (winner, c) = best.expect("at least one set");
            if !tied.is_empty() {
                log::info!("{key}: {} tied with {:?}; keeping the first", sets[winner].model_id, tied);
            }
            let selection = Selection {
                prediction: sets[winner].predictions[&key].clone(),
                model_id: sets[winner].model_id.clone(),
                confidence: c,
                tied_with: tied,
            };
            (key, selection)
        })
        .collect();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DetailRecord {
    id: String,
    turn_id: u32,
    #[serde(flatten)]
    prediction: Prediction,
}

/// Full predictions, including kind and confidence, one JSON object per line.
pub fn write_prediction_details(path: &Path, predictions: &BTreeMap<TurnKey, Prediction>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (key, p) in predictions {
        let record = DetailRecord {
            id: key.story_id.clone(),
            turn_id: key.turn_id,
            prediction: p.clone(),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_prediction_details(path: &Path) -> Result<BTreeMap<TurnKey, Prediction>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: DetailRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            record: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?;
        if out.insert(TurnKey::new(r.id, r.turn_id), r.prediction).is_some() {
            return Err(Error::Parse {
                record: format!("{}:{}", path.display(), i + 1),
                message: "duplicate turn".into(),
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WinnerRecord {
    pub id: String,
    pub turn_id: u32,
    pub model_id: String,
    pub confidence: f64,
    pub tied_with: Vec<String>,
}

pub fn write_winner_log(path: &Path, selections: &BTreeMap<TurnKey, Selection>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (key, s) in selections {
        let record = WinnerRecord {
            id: key.story_id.clone(),
            turn_id: key.turn_id,
            model_id: s.model_id.clone(),
            confidence: s.confidence,
            tied_with: s.tied_with.clone(),
        };
        serde_json::to_writer(&mut w, &record)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reader::PredictionKind;

    fn pred(text: &str, confidence: f64) -> Prediction {
        Prediction {
            answer_text: text.into(),
            kind: PredictionKind::Span,
            span: None,
            confidence,
        }
    }

    fn set(id: &str, confs: &[f64]) -> ModelPredictionSet {
        ModelPredictionSet {
            model_id: id.into(),
            predictions: confs
                .iter()
                .enumerate()
                .map(|(t, &c)| (TurnKey::new("s", t as u32 + 1), pred(&format!("{id}-{t}"), c)))
                .collect(),
        }
    }

    #[test]
    fn single_model_is_identity() {
        let a = set("a", &[0.2, 0.9, 0.5]);
        let out = select(std::slice::from_ref(&a)).unwrap();
        for (k, s) in &out {
            assert_eq!(&s.prediction, &a.predictions[k]);
            assert_eq!(s.model_id, "a");
        }
    }

    #[test]
    fn more_confident_model_wins() {
        let out = select(&[set("a", &[0.7]), set("b", &[0.9])]).unwrap();
        assert_eq!(out[&TurnKey::new("s", 1)].model_id, "b");
    }

    #[test]
    fn exact_tie_goes_to_first_listed() {
        let out = select(&[set("a", &[0.4]), set("b", &[0.6]), set("c", &[0.6])]).unwrap();
        let s = &out[&TurnKey::new("s", 1)];
        assert_eq!(s.model_id, "b");
        assert_eq!(s.tied_with, ["c"]);
    }

    #[test]
    fn coverage_mismatch_lists_turns() {
        let mut b = set("b", &[0.1, 0.2]);
        b.predictions.insert(TurnKey::new("t", 1), pred("x", 0.3));
        match select(&[set("a", &[0.5, 0.5, 0.5]), b]) {
            Err(Error::CoverageMismatch(turns)) => {
                assert_eq!(turns, [TurnKey::new("s", 3), TurnKey::new("t", 1)]);
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(select(&[]), Err(Error::Config(_))));
    }

    #[test]
    fn calibration_is_monotone_and_off_by_default() {
        let c = Calibration::Temperature(HashMap::from([("a".to_string(), 2.0)]));
        assert!((c.apply("a", 0.5) - 0.5).abs() < 1e-12);
        assert!(c.apply("a", 0.9) < 0.9 && c.apply("a", 0.9) > 0.5);
        assert_eq!(c.apply("b", 0.9), 0.9);
        assert_eq!(Calibration::default().apply("a", 0.3), 0.3);
        let out = select_calibrated(&[set("a", &[0.9]), set("b", &[0.85])], &c).unwrap();
        assert_eq!(out[&TurnKey::new("s", 1)].model_id, "b");
    }

    #[test]
    fn details_roundtrip() {
        let a = set("a", &[0.2, 0.9]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        write_prediction_details(&path, &a.predictions).unwrap();
        assert_eq!(read_prediction_details(&path).unwrap(), a.predictions);
    }
}
