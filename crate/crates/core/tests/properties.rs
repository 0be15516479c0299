//! Randomised invariants across the pipeline.

use std::collections::{BTreeMap, HashMap};

use lingreader::annotators::{AnnotationSet, Annotators, AntonymLexicon};
use lingreader::corpus::{
    build_model_input, derive_type_label, AnswerType, Corpus, InputConfig, QAExample, SourceDomain, Story, TurnKey,
    WordTokenizer,
};
use lingreader::ensemble::{select, ModelPredictionSet};
use lingreader::metrics::{evaluate, normalize_text, token_f1, EvalMode};
use lingreader::qa_classes::{tag_corpus, ClassRecord, QaClass};
use lingreader::reader::{decode, type_probabilities, HeadOutputs, Prediction, PredictionKind};
use lingreader::synthetic::toy_corpus;
use lingreader::text::sentence_spans;
use lingreader::CharSpan;
use proptest::prelude::*;
use proptest::sample::select as pick;

const WORDS: &[&str] = &[
    "Anna", "Tom", "the", "a", "dog", "dogs", "red", "ball", "did", "not", "never", "no", "was", "is", "saw", "chased",
    "by", "in", "Paris", "happy", "sad", "angry", "without", "and", "but", "because", "cat", "nobody", "didn't",
    "won't", "three", "5", "it", "park", "gave", "found", "lost", "very", "nothing", "old",
];
const ENDS: &[&str] = &[".", "!", "?", ",", ""];

fn sentence() -> impl Strategy<Value = String> {
    (prop::collection::vec(pick(WORDS), 1..12), pick(ENDS)).prop_map(|(w, end)| format!("{}{end}", w.join(" ")))
}

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(sentence(), 1..6).prop_map(|s| s.join(" "))
}

fn story(id: &str, text: &str) -> Story {
    Story {
        id: id.into(),
        text: text.into(),
        source_domain: SourceDomain::Children,
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Word edges, where the clitic "n't" counts as a word of its own.
fn on_word_boundaries(text: &str, span: CharSpan) -> bool {
    let clitic = text.get(span.start..).is_some_and(|t| t.starts_with("n't"));
    span.start < span.end
        && span.end <= text.len()
        && text.is_char_boundary(span.start)
        && text.is_char_boundary(span.end)
        && (clitic || !text[..span.start].chars().next_back().is_some_and(is_word_char))
        && (text[span.end..].starts_with("n't") || !text[span.end..].chars().next().is_some_and(is_word_char))
}

fn annotate(text: &str) -> AnnotationSet {
    Annotators::offline().annotate_story(&story("t", text), &[]).unwrap()
}

fn encoder_fixture() -> (Corpus, WordTokenizer) {
    let corpus = toy_corpus(3, 5);
    let texts: Vec<&str> = corpus
        .stories
        .iter()
        .map(|s| s.text.as_str())
        .chain(corpus.examples.iter().map(|e| e.turn.question.as_str()))
        .collect();
    let tokenizer = WordTokenizer::fit(texts, 1);
    (corpus, tokenizer)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn f1_symmetric(a in text(), b in text()) {
        prop_assert_eq!(token_f1(&a, &[&b]), token_f1(&b, &[&a]));
    }

    #[test]
    fn f1_of_self_is_one(a in text()) {
        prop_assume!(!normalize_text(&a).is_empty());
        prop_assert_eq!(token_f1(&a, &[&a]), 1.0);
    }

    #[test]
    fn extra_reference_never_lowers_f1(p in text(), refs in prop::collection::vec(text(), 1..4), extra in text()) {
        let before = token_f1(&p, &refs);
        let mut more = refs.clone();
        more.push(extra);
        prop_assert!(token_f1(&p, &more) >= before);
    }

    #[test]
    fn type_label_ignores_normalization(a in prop_oneof![
        text(),
        pick(&["Yes.", "NO!", "unknown", "The one", "Five", "4", "three cats", "an unknown"][..]).prop_map(String::from),
    ]) {
        prop_assert_eq!(derive_type_label(&normalize_text(&a).join(" ")), derive_type_label(&a));
    }

    #[test]
    fn annotation_spans_stay_on_word_boundaries(t in text()) {
        let ann = annotate(&t);
        for neg in &ann.negation {
            prop_assert!(on_word_boundaries(&t, neg.cue), "cue {:?} in {:?}", neg.cue, t);
            for s in &neg.scope {
                prop_assert!(on_word_boundaries(&t, *s), "scope {:?} in {:?}", s, t);
            }
        }
        for frame in &ann.srl {
            prop_assert!(on_word_boundaries(&t, frame.predicate));
            let mut last = 0;
            for arg in &frame.arguments {
                prop_assert!(on_word_boundaries(&t, arg.span), "arg {:?} in {:?}", arg.span, t);
                prop_assert!(arg.span.start >= last, "arguments ordered and disjoint");
                last = arg.span.end;
            }
        }
        let mut at = 0;
        for label in &ann.sentiment {
            prop_assert_eq!(label.sentence.start, at);
            at = label.sentence.end;
        }
        prop_assert_eq!(at, if ann.sentiment.is_empty() { 0 } else { t.len() });
    }

    #[test]
    fn negation_scope_follows_cue_in_its_sentence(t in text()) {
        let sentences = sentence_spans(&t);
        for neg in annotate(&t).negation {
            let sentence = sentences.iter().find(|s| s.contains(&neg.cue)).expect("cue inside a sentence");
            for s in &neg.scope {
                prop_assert!(s.start >= neg.cue.end, "scope {:?} before cue {:?}", s, neg.cue);
                prop_assert!(sentence.contains(s));
            }
        }
    }

    #[test]
    fn annotation_is_independent_of_the_batch(texts in prop::collection::vec(text(), 1..5)) {
        let stories: Vec<Story> = texts.iter().enumerate().map(|(i, t)| story(&format!("s{i}"), t)).collect();
        let batch = Annotators::offline().annotate_corpus(&Corpus::new(stories.clone(), vec![])).unwrap();
        prop_assert_eq!(batch.len(), stories.len());
        for (s, ann) in stories.iter().zip(&batch) {
            let alone = Annotators::offline().annotate_story(s, &[]).unwrap();
            prop_assert_eq!(&alone, ann);
            prop_assert_eq!(&alone, &Annotators::offline().annotate_story(s, &[]).unwrap());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn story_tokens_map_to_contiguous_substrings(seed in 0u64..1000, a in 0usize..400, b in 0usize..400) {
        let (corpus, tokenizer) = encoder_fixture();
        let ex = &corpus.examples[seed as usize % corpus.len()];
        let story = corpus.story(&ex.story_id).unwrap();
        let config = InputConfig { history_token_budget: 16, max_input_tokens: 64 };
        let enc = build_model_input(ex, story, &config, &tokenizer).unwrap();
        let range = enc.story_range();
        prop_assert!(enc.len() <= config.max_input_tokens);
        let mut prev = 0;
        for i in range.clone() {
            let o = enc.offsets[i].expect("story tokens carry offsets");
            prop_assert!(o.start >= prev && o.end <= story.text.len());
            prev = o.end;
        }
        let (i, j) = (range.start + a % range.len(), range.start + b % range.len());
        let (first, last) = (i.min(j), i.max(j));
        let span = enc.story_span(first, last).unwrap();
        let surface = &story.text[span.start..span.end];
        let pieces: Vec<&str> = (first..=last).map(|k| {
            let o = enc.offsets[k].unwrap();
            &story.text[o.start..o.end]
        }).collect();
        prop_assert!(surface.starts_with(pieces[0]) && surface.ends_with(pieces[pieces.len() - 1]));
        prop_assert_eq!(enc.tokens_for_story_span(span), Some((first, last)));
    }

    #[test]
    fn included_history_is_a_suffix(seed in 0u64..1000, budget in 0usize..60) {
        let (corpus, tokenizer) = encoder_fixture();
        let ex = &corpus.examples[seed as usize % corpus.len()];
        let story = corpus.story(&ex.story_id).unwrap();
        let config = InputConfig { history_token_budget: budget, max_input_tokens: 512 };
        let enc = build_model_input(ex, story, &config, &tokenizer).unwrap();
        let k = enc.history_pairs;
        prop_assert!(k <= ex.history.len());
        let expected: Vec<&str> = ex.history[ex.history.len() - k..]
            .iter()
            .flat_map(|p| [p.question.as_str(), p.answer.as_str()])
            .collect();
        prop_assert_eq!(enc.history_text, expected.join(" "));
        let larger = InputConfig { history_token_budget: budget + 8, ..config };
        prop_assert!(build_model_input(ex, story, &larger, &tokenizer).unwrap().history_pairs >= k);
    }
}

fn tagged(corpus: &Corpus) -> HashMap<TurnKey, ClassRecord> {
    let ann = Annotators::offline().annotate_corpus(corpus).unwrap();
    tag_corpus(corpus, &ann, AntonymLexicon::bundled())
        .into_iter()
        .map(|r| (r.key(), r))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn class_tagging_ignores_corpus_order(seed in 0u64..50, order in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let corpus = toy_corpus(4, seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(order);
        let mut stories = corpus.stories.clone();
        let mut examples = corpus.examples.clone();
        stories.shuffle(&mut rng);
        examples.shuffle(&mut rng);
        let shuffled = Corpus::new(stories, examples);
        let a = tagged(&corpus);
        prop_assert_eq!(&a, &tagged(&shuffled));
        for r in a.values() {
            prop_assert!(r.classes.is_consistent());
        }
    }

    #[test]
    fn ord_matches_adjacent_rationale_starts(seed in 0u64..50) {
        let corpus = toy_corpus(5, seed);
        let records = tagged(&corpus);
        for turns in corpus.dialogues().values() {
            let mut expected = 0;
            let mut got = 0;
            for pair in turns.windows(2) {
                if let (Some(p), Some(r)) = (pair[0].turn.rationale, pair[1].turn.rationale) {
                    expected += (r.start > p.start) as usize;
                }
            }
            for ex in turns {
                got += records[&ex.key()].classes.get(QaClass::Ord) as usize;
            }
            prop_assert_eq!(got, expected);
        }
    }

    #[test]
    fn class_scores_equal_subset_scores(seed in 0u64..50, choice in prop::collection::vec(0u8..3, 64)) {
        let corpus = toy_corpus(4, seed);
        let classes = tagged(&corpus);
        let predictions: HashMap<TurnKey, String> = corpus.examples.iter().enumerate().map(|(i, e)| {
            let answer = match choice[i % choice.len()] {
                0 => e.answer().to_string(),
                1 => String::new(),
                _ => format!("{} maybe", e.turn.question),
            };
            (e.key(), answer)
        }).collect();
        for mode in [EvalMode::SimpleMax, EvalMode::StrictOfficial] {
            let report = evaluate(&predictions, &corpus, &classes, mode).unwrap();
            for class in QaClass::ALL {
                let score = report.class(class).unwrap();
                let members = corpus.subset(|e| classes[&e.key()].is_member(class));
                prop_assert_eq!(score.size, members.len());
                if members.is_empty() {
                    prop_assert!(score.f1.is_none());
                    continue;
                }
                let sub = evaluate(&predictions, &members, &HashMap::new(), mode).unwrap();
                let f1 = score.f1.unwrap();
                prop_assert!((f1 - sub.overall_f1).abs() <= 1e-9 * f1.abs().max(1.0));
                prop_assert!((0.0..=100.0).contains(&f1));
            }
        }
    }
}

fn outputs(start: Vec<f64>, end: Vec<f64>, types: Vec<f64>) -> HeadOutputs<f64> {
    HeadOutputs {
        rationale_logits: vec![0.0; start.len()],
        start_logits: start,
        end_logits: end,
        type_logits: types,
        aux_logits: None,
    }
}

fn logits(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-12.0f64..12.0, n)
}

fn canonical(kind: PredictionKind) -> Option<&'static str> {
    Some(match kind {
        PredictionKind::Span => return None,
        PredictionKind::Yes => "yes",
        PredictionKind::No => "no",
        PredictionKind::Unanswerable => "unknown",
        PredictionKind::Count1 => "one",
        PredictionKind::Count2 => "two",
        PredictionKind::Count3 => "three",
        PredictionKind::Count4 => "four",
        PredictionKind::Count5 => "five",
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn decode_stays_in_the_story(
        seed in 0u64..1000,
        raw in (logits(64), logits(64), logits(AnswerType::ALL.len())),
        bump in 0.0f64..20.0,
    ) {
        let (corpus, tokenizer) = encoder_fixture();
        let ex: &QAExample = &corpus.examples[seed as usize % corpus.len()];
        let story = corpus.story(&ex.story_id).unwrap();
        let config = InputConfig { history_token_budget: 16, max_input_tokens: 64 };
        let enc = build_model_input(ex, story, &config, &tokenizer).unwrap();
        let l = enc.len();
        let (start, end, types) = raw;
        let out = outputs(start[..l].to_vec(), end[..l].to_vec(), types.clone());

        let total: f64 = type_probabilities(&out).iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-6);

        let p = decode(&out, &enc, &story.text);
        prop_assert!(p.confidence > 0.0 && p.confidence <= 1.0);
        match p.kind {
            PredictionKind::Span => {
                let span = p.span.expect("span predictions carry a span");
                let (first, last) = enc.tokens_for_story_span(span).expect("span covers story tokens");
                prop_assert_eq!(enc.story_span(first, last), Some(span));
                prop_assert_eq!(&p.answer_text, &story.text[span.start..span.end]);
            }
            kind => {
                prop_assert!(p.span.is_none());
                prop_assert_eq!(Some(p.answer_text.as_str()), canonical(kind));
                let winner = AnswerType::ALL.iter().position(|t| PredictionKind::from_answer_type(*t) == Some(kind)).unwrap();
                let mut raised = types;
                raised[winner] += bump;
                let again = decode(&outputs(start[..l].to_vec(), end[..l].to_vec(), raised), &enc, &story.text);
                prop_assert_eq!(again.kind, kind);
            }
        }
    }
}

fn prediction(model: usize, turn: usize, confidence: f64) -> Prediction {
    Prediction {
        answer_text: format!("m{model}t{turn}"),
        kind: PredictionKind::Span,
        span: None,
        confidence,
    }
}

fn prediction_sets(matrix: &[Vec<f64>]) -> Vec<ModelPredictionSet> {
    matrix
        .iter()
        .enumerate()
        .map(|(m, row)| ModelPredictionSet {
            model_id: format!("m{m}"),
            predictions: row
                .iter()
                .enumerate()
                .map(|(t, &c)| (TurnKey::new("s", t as u32 + 1), prediction(m, t, c)))
                .collect(),
        })
        .collect()
}

fn confidence_matrix() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..5, 1usize..12).prop_flat_map(|(models, turns)| {
        prop::collection::vec(prop::collection::vec(pick(&[0.1, 0.25, 0.5, 0.75, 0.9, 1.0][..]), turns), models)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn ensemble_permutation_changes_only_ties(matrix in confidence_matrix(), perm in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let sets = prediction_sets(&matrix);
        let mut shuffled = sets.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(perm));
        let a = select(&sets).unwrap();
        let b = select(&shuffled).unwrap();
        for (key, x) in &a {
            let y = &b[key];
            prop_assert_eq!(x.confidence, y.confidence);
            if x.tied_with.is_empty() {
                prop_assert_eq!(&x.model_id, &y.model_id);
                prop_assert_eq!(&x.prediction, &y.prediction);
            }
            let best = sets.iter().map(|s| s.predictions[key].confidence).fold(f64::MIN, f64::max);
            prop_assert_eq!(x.confidence, best);
        }
    }

    #[test]
    fn raising_the_winner_keeps_it(matrix in confidence_matrix(), raise in 0.0f64..0.5) {
        let sets = prediction_sets(&matrix);
        let before = select(&sets).unwrap();
        for (key, chosen) in &before {
            let mut raised = sets.clone();
            let winner = raised.iter_mut().find(|s| s.model_id == chosen.model_id).unwrap();
            let p = winner.predictions.get_mut(key).unwrap();
            p.confidence = (p.confidence + raise).min(1.0);
            let after = select(&raised).unwrap();
            prop_assert_eq!(&after[key].model_id, &chosen.model_id);
        }
    }

    #[test]
    fn identical_sets_equal_one_set(row in prop::collection::vec(0.01f64..1.0, 1..20), k in 1usize..6) {
        let single = prediction_sets(&[row]);
        let copies: Vec<ModelPredictionSet> = (0..k)
            .map(|i| ModelPredictionSet { model_id: format!("copy{i}"), ..single[0].clone() })
            .collect();
        let out = select(&copies).unwrap();
        let expected: BTreeMap<TurnKey, Prediction> = single[0].predictions.clone();
        prop_assert_eq!(out.len(), expected.len());
        for (key, s) in out {
            prop_assert_eq!(&s.prediction, &expected[&key]);
            prop_assert_eq!(s.model_id.as_str(), "copy0");
            prop_assert_eq!(s.tied_with.len(), k - 1);
        }
    }
}

#[test]
fn shipped_antonyms_are_symmetric_and_irreflexive() {
    let lex = AntonymLexicon::bundled();
    assert!(!lex.is_empty());
    for (word, opposites) in lex.entries() {
        assert!(!opposites.contains(word), "{word} is its own antonym");
        for o in opposites {
            assert!(lex.are_antonyms(o, word), "{word}/{o} is one-way");
        }
    }
}
