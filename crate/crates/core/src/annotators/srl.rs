use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::lexicon::{is_auxiliary, is_be_form, is_determiner, verb_forms};
use crate::span::CharSpan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SrlRole {
    Arg0,
    Arg1,
    Arg2,
    Arg3,
    Arg4,
    Arg5,
    ArgmTmp,
    ArgmLoc,
    ArgmNeg,
    ArgmMnr,
    ArgmDir,
    Other,
}

impl SrlRole {
    /// Role inventory in the row order used by the SRL auxiliary head.
    pub const INVENTORY: [SrlRole; 12] = [
        SrlRole::Arg0,
        SrlRole::Arg1,
        SrlRole::Arg2,
        SrlRole::Arg3,
        SrlRole::Arg4,
        SrlRole::Arg5,
        SrlRole::ArgmTmp,
        SrlRole::ArgmLoc,
        SrlRole::ArgmNeg,
        SrlRole::ArgmMnr,
        SrlRole::ArgmDir,
        SrlRole::Other,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlArgument {
    pub role: SrlRole,
    pub span: CharSpan,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrlFrame {
    pub predicate: CharSpan,
    pub predicate_lemma: String,
    /// Ordered by span start; spans do not overlap.
    pub arguments: Vec<SrlArgument>,
}

impl SrlFrame {
    pub fn shift(mut self, by: usize) -> Self {
        self.predicate = self.predicate.shift(by);
        for a in &mut self.arguments {
            a.span = a.span.shift(by);
        }
        self
    }
}

pub trait SrlLabeler: Send + Sync {
    fn name(&self) -> &str;
    /// Frames of a single sentence, offsets relative to `sentence`.
    fn frames(&self, sentence: &str) -> Vec<SrlFrame>;
    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// Rule-based stand-in for a trained SRL model: every lexical verb is a
/// predicate, the noun phrase before its verb group is ARG0 and the one
/// after it ARG1; a be-passive with a `by` phrase swaps the two.
#[derive(Debug, Clone, Copy, Default)]
pub struct RuleSrl;

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+(?:['’]\w+)*|[^\w\s]").expect("valid regex"))
}

const CLAUSE_WORDS: &[&str] = &[
    "after", "and", "as", "because", "before", "but", "how", "if", "or", "since", "so", "that", "though", "until",
    "what", "when", "where", "which", "while", "who", "whom", "whose", "why", "yet",
];
const PREPOSITIONS: &[&str] = &[
    "about", "above", "across", "against", "along", "around", "at", "behind", "below", "beside", "between", "by",
    "down", "during", "for", "from", "in", "inside", "into", "near", "off", "on", "onto", "out", "over",
    "through", "to", "toward", "towards", "under", "up", "upon", "with", "within", "without",
];
const WH_ARGUMENTS: &[&str] = &["what", "which", "who", "whom"];

struct Tok {
    span: CharSpan,
    lower: String,
    is_word: bool,
}

impl Tok {
    fn is(&self, words: &[&str]) -> bool {
        words.contains(&self.lower.as_str())
    }

    fn is_negator(&self) -> bool {
        matches!(self.lower.as_str(), "not" | "never") || self.lower.ends_with("n't") || self.lower.ends_with("n’t")
    }

    fn is_adverb(&self) -> bool {
        self.lower.len() > 3 && self.lower.ends_with("ly")
    }
}

impl RuleSrl {
    fn tokens(sentence: &str) -> Vec<Tok> {
        token_regex()
            .find_iter(sentence)
            .map(|m| Tok {
                span: CharSpan::new(m.start(), m.end()),
                lower: m.as_str().to_lowercase(),
                is_word: m.as_str().chars().next().is_some_and(|c| c.is_alphanumeric()),
            })
            .collect()
    }

    fn is_lexical_verb(toks: &[Tok], i: usize) -> bool {
        let t = &toks[i];
        t.is_word
            && !is_auxiliary(&t.lower)
            && verb_forms().contains_key(t.lower.as_str())
            && !(i > 0 && is_determiner(&toks[i - 1].lower))
    }

    fn is_verbal(toks: &[Tok], i: usize) -> bool {
        is_auxiliary(&toks[i].lower) || Self::is_lexical_verb(toks, i)
    }

    fn ends_clause(toks: &[Tok], i: usize) -> bool {
        !toks[i].is_word || toks[i].is(CLAUSE_WORDS)
    }

    /// Noun phrase ending just before `end` (exclusive), scanning backwards.
    fn np_before(toks: &[Tok], end: usize) -> Option<(usize, usize)> {
        let mut k = end;
        while k > 0 {
            let t = &toks[k - 1];
            if Self::ends_clause(toks, k - 1) || Self::is_verbal(toks, k - 1) || (t.is(PREPOSITIONS) && t.lower != "of")
            {
                break;
            }
            k -= 1;
            if is_determiner(&t.lower) {
                break;
            }
        }
        (k < end).then(|| (k, end - 1))
    }

    /// Noun phrase starting at `start`, scanning forwards.
    fn np_after(toks: &[Tok], start: usize) -> Option<(usize, usize)> {
        let mut k = start;
        while k < toks.len() {
            let t = &toks[k];
            if Self::ends_clause(toks, k) || Self::is_verbal(toks, k) || (t.is(PREPOSITIONS) && t.lower != "of") {
                break;
            }
            k += 1;
        }
        (k > start).then(|| (start, k - 1))
    }

    fn frame_for(toks: &[Tok], v: usize, lemma: &str) -> SrlFrame {
        let span_of = |(a, b): (usize, usize)| CharSpan::new(toks[a].span.start, toks[b].span.end);

        // Verb group: auxiliaries, negators and adverbs directly before the verb.
        let mut g = v;
        while g > 0 && (is_auxiliary(&toks[g - 1].lower) || toks[g - 1].is_negator() || toks[g - 1].is_adverb()) {
            g -= 1;
        }
        let group = &toks[g..v];
        let mut arguments = Vec::new();
        for t in group.iter().filter(|t| t.is_negator()) {
            arguments.push(SrlArgument {
                role: SrlRole::ArgmNeg,
                span: t.span,
            });
        }

        let mut subject = Self::np_before(toks, g).map(span_of);
        if subject.is_none() && g > 0 && toks[g - 1].is(WH_ARGUMENTS) {
            subject = Some(toks[g - 1].span);
        }
        let verb = &toks[v];
        let participle = verb.lower != lemma && !verb.lower.ends_with("ing") && !verb.lower.ends_with('s');
        let passive = participle && group.iter().any(|t| is_be_form(&t.lower));
        let object = Self::np_after(toks, v + 1).map(span_of);

        if passive {
            if let Some(s) = subject {
                arguments.push(SrlArgument { role: SrlRole::Arg1, span: s });
            }
            let by = (v + 1..toks.len())
                .take_while(|&i| !(Self::ends_clause(toks, i) && toks[i].lower != "by"))
                .find(|&i| toks[i].lower == "by");
            if let Some(agent) = by.and_then(|b| Self::np_after(toks, b + 1)) {
                arguments.push(SrlArgument {
                    role: SrlRole::Arg0,
                    span: span_of(agent),
                });
            }
        } else {
            if let Some(s) = subject {
                arguments.push(SrlArgument { role: SrlRole::Arg0, span: s });
            }
            match object {
                Some(o) => arguments.push(SrlArgument { role: SrlRole::Arg1, span: o }),
                None => {
                    // Fronted wh-object with do-support: "What did the cat chase?"
                    let fronted = toks.first().filter(|t| t.is(WH_ARGUMENTS) && subject != Some(t.span));
                    if let (Some(wh), true) = (fronted, toks.get(1).is_some_and(|t| is_auxiliary(&t.lower))) {
                        arguments.push(SrlArgument {
                            role: SrlRole::Arg1,
                            span: wh.span,
                        });
                    }
                }
            }
        }
        arguments.sort_by_key(|a| a.span.start);
        SrlFrame {
            predicate: verb.span,
            predicate_lemma: lemma.to_string(),
            arguments,
        }
    }
}

impl SrlLabeler for RuleSrl {
    fn name(&self) -> &str {
        "rule-srl"
    }

    fn frames(&self, sentence: &str) -> Vec<SrlFrame> {
        let toks = Self::tokens(sentence);
        let mut frames = Vec::new();
        for v in 0..toks.len() {
            let t = &toks[v];
            let lemma = if Self::is_lexical_verb(&toks, v) {
                verb_forms()[t.lower.as_str()]
            } else if matches!(t.lower.as_str(), "had" | "has" | "have") {
                // Possessive "have" when no lexical verb follows in the clause.
                let follows = (v + 1..toks.len())
                    .take_while(|&i| !Self::ends_clause(&toks, i))
                    .any(|i| Self::is_lexical_verb(&toks, i));
                if follows {
                    continue;
                }
                "have"
            } else {
                continue;
            };
            frames.push(Self::frame_for(&toks, v, lemma));
        }
        frames
    }
}
