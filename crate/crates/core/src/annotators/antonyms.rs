use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Symmetric, irreflexive antonym table keyed by lowercase lemma.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AntonymLexicon {
    map: HashMap<String, BTreeSet<String>>,
}

impl AntonymLexicon {
    /// Parses `lemma \t antonym` lines; `#` starts a comment. The symmetric
    /// closure is taken and self-pairs are dropped.
    pub fn parse(raw: &str) -> Result<Self> {
        let mut lex = AntonymLexicon::default();
        for (i, line) in raw.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((a, b)) = line.split_once('\t') else {
                return Err(Error::Parse {
                    record: format!("antonym lexicon line {}", i + 1),
                    message: "expected `lemma<TAB>antonym`".into(),
                });
            };
            lex.insert(a.trim(), b.trim());
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&raw)
    }

    /// The WordNet-derived table shipped with the crate.
    pub fn bundled() -> &'static AntonymLexicon {
        static LEX: OnceLock<AntonymLexicon> = OnceLock::new();
        LEX.get_or_init(|| {
            AntonymLexicon::parse(include_str!("../../data/antonyms.tsv")).expect("bundled lexicon parses")
        })
    }

    fn insert(&mut self, a: &str, b: &str) {
        let (a, b) = (a.to_lowercase(), b.to_lowercase());
        if a == b || a.is_empty() || b.is_empty() {
            return;
        }
        self.map.entry(a.clone()).or_default().insert(b.clone());
        self.map.entry(b).or_default().insert(a);
    }

    /// Antonyms of any sense of `word`; empty for unknown words.
    pub fn antonyms(&self, word: &str) -> BTreeSet<String> {
        self.map.get(&word.to_lowercase()).cloned().unwrap_or_default()
    }

    pub fn are_antonyms(&self, a: &str, b: &str) -> bool {
        self.map.get(&a.to_lowercase()).is_some_and(|s| s.contains(&b.to_lowercase()))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_lookups() {
        let lex = AntonymLexicon::bundled();
        assert!(lex.antonyms("good").contains("bad"));
        assert!(lex.antonyms("Good").contains("bad"));
        assert!(lex.antonyms("the").is_empty());
        assert!(lex.antonyms("east").contains("west"));
    }

    #[test]
    fn closure_and_irreflexivity() {
        let lex = AntonymLexicon::parse("hot\tcold\nup\tup\n# comment\n").unwrap();
        assert!(lex.are_antonyms("cold", "hot"));
        assert!(lex.antonyms("up").is_empty());
    }

    #[test]
    fn bundled_is_symmetric_and_irreflexive() {
        let lex = AntonymLexicon::bundled();
        for (word, ants) in lex.entries() {
            for a in ants {
                assert_ne!(word, a);
                assert!(lex.are_antonyms(a, word), "{a} -> {word} missing");
            }
        }
    }

    #[test]
    fn malformed_line() {
        assert!(AntonymLexicon::parse("hot cold").is_err());
    }
}
