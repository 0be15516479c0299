//! The 14 diagnostic QA classes and their assignment from annotations.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotators::{AnnotationSet, AntonymLexicon, QuestionCategory, SrlFrame, SrlRole, SURPRISAL_THRESHOLD};
use crate::corpus::{AnswerType, Corpus, QAExample, Story, TurnKey};
use crate::error::{Error, Result};
use crate::span::CharSpan;
use crate::text::{is_stopword, lower_words, stem};

/// Classes in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum QaClass {
    Num,
    OneToFive,
    Neg,
    Yes,
    No,
    Sent,
    Ant,
    Ord,
    SrlMinus,
    SrlPlus,
    Hum,
    Loc,
    Ent,
    Surp,
}

impl QaClass {
    pub const ALL: [QaClass; 14] = [
        QaClass::Num,
        QaClass::OneToFive,
        QaClass::Neg,
        QaClass::Yes,
        QaClass::No,
        QaClass::Sent,
        QaClass::Ant,
        QaClass::Ord,
        QaClass::SrlMinus,
        QaClass::SrlPlus,
        QaClass::Hum,
        QaClass::Loc,
        QaClass::Ent,
        QaClass::Surp,
    ];

    /// Short column label used in reports.
    pub fn column(self) -> &'static str {
        match self {
            QaClass::Num => "num",
            QaClass::OneToFive => "1-5",
            QaClass::Neg => "neg",
            QaClass::Yes => "yes",
            QaClass::No => "no",
            QaClass::Sent => "sent",
            QaClass::Ant => "ant",
            QaClass::Ord => "ord",
            QaClass::SrlMinus => "srl-",
            QaClass::SrlPlus => "srl+",
            QaClass::Hum => "hum",
            QaClass::Loc => "loc",
            QaClass::Ent => "ent",
            QaClass::Surp => "surp",
        }
    }

    /// Key used in class files.
    pub fn key(self) -> &'static str {
        match self {
            QaClass::Num => "NUM",
            QaClass::OneToFive => "ONE_TO_FIVE",
            QaClass::Neg => "NEG",
            QaClass::Yes => "YES",
            QaClass::No => "NO",
            QaClass::Sent => "SENT",
            QaClass::Ant => "ANT",
            QaClass::Ord => "ORD",
            QaClass::SrlMinus => "SRL_MINUS",
            QaClass::SrlPlus => "SRL_PLUS",
            QaClass::Hum => "HUM",
            QaClass::Loc => "LOC",
            QaClass::Ent => "ENT",
            QaClass::Surp => "SURP",
        }
    }

    pub fn from_key(key: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == key || c.column() == key)
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// One boolean per class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct QAClassVector([bool; 14]);

impl QAClassVector {
    pub fn all(value: bool) -> Self {
        QAClassVector([value; 14])
    }

    pub fn get(&self, class: QaClass) -> bool {
        self.0[class.index()]
    }

    pub fn set(&mut self, class: QaClass, value: bool) {
        self.0[class.index()] = value;
    }

    pub fn with(mut self, classes: &[QaClass]) -> Self {
        for c in classes {
            self.set(*c, true);
        }
        self
    }

    pub fn members(&self) -> impl Iterator<Item = QaClass> + '_ {
        QaClass::ALL.into_iter().filter(|c| self.get(*c))
    }

    /// Checks the mutual-exclusion constraints between classes.
    pub fn is_consistent(&self) -> bool {
        let category = [QaClass::Num, QaClass::Hum, QaClass::Loc, QaClass::Ent]
            .iter()
            .filter(|c| self.get(**c))
            .count();
        !(self.get(QaClass::Yes) && self.get(QaClass::No))
            && !(self.get(QaClass::SrlMinus) && self.get(QaClass::SrlPlus))
            && category <= 1
    }
}

impl Serialize for QAClassVector {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        let mut map = serializer.serialize_map(Some(14))?;
        for c in QaClass::ALL {
            map.serialize_entry(c.key(), &self.get(c))?;
        }
        map.end()
    }
}

impl<'de> Deserialize<'de> for QAClassVector {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw: BTreeMap<String, bool> = BTreeMap::deserialize(deserializer)?;
        let mut v = QAClassVector::default();
        for (k, b) in raw {
            let class = QaClass::from_key(&k).ok_or_else(|| serde::de::Error::custom(format!("unknown class {k}")))?;
            v.set(class, b);
        }
        Ok(v)
    }
}

/// A turn's classes plus which of them could be determined.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassRecord {
    pub story_id: String,
    pub turn_id: u32,
    pub classes: QAClassVector,
    pub defined: QAClassVector,
}

impl ClassRecord {
    pub fn key(&self) -> TurnKey {
        TurnKey::new(self.story_id.clone(), self.turn_id)
    }

    /// Defined and set.
    pub fn is_member(&self, class: QaClass) -> bool {
        self.defined.get(class) && self.classes.get(class)
    }
}

/// Resources class assignment reads besides the annotations.
pub struct ClassContext<'a> {
    pub story: &'a Story,
    pub antonyms: &'a AntonymLexicon,
}

/// Assigns the 14 classes to one turn. `prev_rationale` is the previous
/// turn's rationale span (`None` on turn 1).
pub fn assign_classes(
    example: &QAExample,
    annotations: &AnnotationSet,
    prev_rationale: Option<CharSpan>,
    ctx: &ClassContext<'_>,
) -> ClassRecord {
    let mut classes = QAClassVector::default();
    let mut defined = QAClassVector::all(true);
    let question = annotations.question(example.turn.turn_id);

    match question.map(|q| q.category) {
        Some(QuestionCategory::Num) => classes.set(QaClass::Num, true),
        Some(QuestionCategory::Hum) => classes.set(QaClass::Hum, true),
        Some(QuestionCategory::Loc) => classes.set(QaClass::Loc, true),
        Some(QuestionCategory::Ent) => classes.set(QaClass::Ent, true),
        Some(QuestionCategory::Other) => {}
        None => {
            for c in [QaClass::Num, QaClass::Hum, QaClass::Loc, QaClass::Ent, QaClass::Sent, QaClass::SrlMinus, QaClass::SrlPlus] {
                defined.set(c, false);
            }
        }
    }

    classes.set(QaClass::OneToFive, example.type_label.is_count());
    classes.set(QaClass::Yes, example.type_label == AnswerType::Yes);
    classes.set(QaClass::No, example.type_label == AnswerType::No);

    let anchor = example.answer_anchor();
    classes.set(
        QaClass::Neg,
        anchor.is_some_and(|a| annotations.negation.iter().any(|n| n.scope.iter().any(|s| s.overlaps(&a)))),
    );

    let rationale = example.turn.rationale;
    let rationale_sentence = rationale.and_then(|r| annotations.sentence_at(r.start));
    if let (Some(sentence), Some(q)) = (rationale_sentence, question) {
        classes.set(QaClass::Sent, sentence.polarity != q.polarity);
    }

    classes.set(QaClass::Ant, has_antonym(&example.turn.question, &example.turn.rationale_text, ctx.antonyms));

    classes.set(
        QaClass::Ord,
        matches!((rationale, prev_rationale), (Some(r), Some(p)) if r.start > p.start),
    );

    if let (Some(sentence), Some(q)) = (rationale_sentence, question) {
        let story_frames: Vec<&SrlFrame> = annotations.frames_within(sentence.sentence).collect();
        if let Some(order) = compare_role_order(&example.turn.question, &q.srl, &ctx.story.text, &story_frames) {
            classes.set(if order { QaClass::SrlPlus } else { QaClass::SrlMinus }, true);
        }
    }

    match (&annotations.surprisal, rationale) {
        (None, _) => defined.set(QaClass::Surp, false),
        (Some(scores), Some(r)) => classes.set(
            QaClass::Surp,
            scores.iter().any(|s| r.contains(&s.token) && s.is_surprising(SURPRISAL_THRESHOLD)),
        ),
        (Some(_), None) => {}
    }

    ClassRecord {
        story_id: example.story_id.clone(),
        turn_id: example.turn.turn_id,
        classes,
        defined,
    }
}

fn content_words(text: &str) -> Vec<String> {
    lower_words(text).into_iter().filter(|w| !is_stopword(w)).collect()
}

/// Whether some content word of the question has an antonym among the
/// rationale's words. Both sides are compared as surface forms and stems.
fn has_antonym(question: &str, rationale: &str, lexicon: &AntonymLexicon) -> bool {
    let rationale_forms: HashSet<String> = lower_words(rationale)
        .into_iter()
        .flat_map(|w| {
            let s = stem(&w);
            [w, s]
        })
        .collect();
    content_words(question).iter().any(|w| {
        let mut ants = lexicon.antonyms(w);
        ants.extend(lexicon.antonyms(&stem(w)));
        ants.iter().any(|a| rationale_forms.contains(a))
    })
}

/// Compares argument-role order between the question's main frame and the
/// aligned frame of the rationale sentence. `Some(true)` when every shared
/// pair of roles appears in the same order, `Some(false)` on any inversion,
/// `None` when no frame aligns or fewer than two roles are shared.
fn compare_role_order(question: &str, question_frames: &[SrlFrame], story: &str, candidates: &[&SrlFrame]) -> Option<bool> {
    let main = question_frames.iter().find(|f| core_roles(f).len() >= 2).or(question_frames.first())?;
    let aligned = candidates
        .iter()
        .find(|f| f.predicate_lemma == main.predicate_lemma)
        .or_else(|| {
            let q_words = argument_words(main, question);
            candidates
                .iter()
                .map(|f| (f, argument_words(f, story).intersection(&q_words).count()))
                .filter(|(_, n)| *n > 0)
                .max_by_key(|(_, n)| *n)
                .map(|(f, _)| f)
        })?;
    let q_roles = core_roles(main);
    let s_roles = core_roles(aligned);
    let shared: Vec<SrlRole> = q_roles.iter().copied().filter(|r| s_roles.contains(r)).collect();
    if shared.len() < 2 {
        return None;
    }
    let position = |roles: &[SrlRole], r: SrlRole| roles.iter().position(|x| *x == r);
    let same = shared.iter().enumerate().all(|(i, a)| {
        shared[i + 1..]
            .iter()
            .all(|b| (position(&q_roles, *a) < position(&q_roles, *b)) == (position(&s_roles, *a) < position(&s_roles, *b)))
    });
    Some(same)
}

/// Argument roles in surface order, excluding negation markers.
fn core_roles(frame: &SrlFrame) -> Vec<SrlRole> {
    let mut seen = Vec::new();
    for a in &frame.arguments {
        if a.role != SrlRole::ArgmNeg && !seen.contains(&a.role) {
            seen.push(a.role);
        }
    }
    seen
}

fn argument_words(frame: &SrlFrame, text: &str) -> HashSet<String> {
    frame
        .arguments
        .iter()
        .flat_map(|a| content_words(a.span.slice(text)))
        .map(|w| stem(&w))
        .collect()
}

/// Tags every turn of `corpus`. Turns of stories without annotations get an
/// all-undefined record.
pub fn tag_corpus(corpus: &Corpus, annotations: &[AnnotationSet], antonyms: &AntonymLexicon) -> Vec<ClassRecord> {
    let by_story: HashMap<&str, &AnnotationSet> = annotations.iter().map(|a| (a.story_id.as_str(), a)).collect();
    let mut out = Vec::with_capacity(corpus.len());
    for (story_id, turns) in corpus.dialogues() {
        let Some(story) = corpus.story(story_id) else { continue };
        let ctx = ClassContext { story, antonyms };
        let mut prev: Option<CharSpan> = None;
        for ex in turns {
            let record = match by_story.get(story_id) {
                Some(ann) => assign_classes(ex, ann, prev, &ctx),
                None => ClassRecord {
                    story_id: story_id.to_string(),
                    turn_id: ex.turn.turn_id,
                    classes: QAClassVector::default(),
                    defined: QAClassVector::default(),
                },
            };
            prev = ex.turn.rationale;
            out.push(record);
        }
    }
    out
}

/// Count of member turns per class plus the overall count under `"overall"`.
pub fn class_sizes(corpus: &Corpus, records: &HashMap<TurnKey, ClassRecord>) -> BTreeMap<String, usize> {
    let mut sizes = BTreeMap::new();
    sizes.insert("overall".to_string(), corpus.len());
    for class in QaClass::ALL {
        let n = corpus
            .examples
            .iter()
            .filter(|e| records.get(&e.key()).is_some_and(|r| r.is_member(class)))
            .count();
        sizes.insert(class.column().to_string(), n);
    }
    sizes
}

pub fn write_class_records(path: &Path, records: &[ClassRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_class_records(path: &Path) -> Result<Vec<ClassRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            record: format!("{}:{}", path.display(), i + 1),
            message: e.to_string(),
        })?);
    }
    Ok(out)
}
