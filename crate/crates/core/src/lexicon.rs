//! Polarity lexicon and antonym table, used to synthesize (sentence,
//! antonym-swapped sentence) pairs for the polarity-swap warm-up corpus.
//!
//! File formats, both UTF-8 TSV:
//! - polarity: `word<TAB>pos<TAB>neg` with scores in [0, 1]
//! - antonyms: `word<TAB>ant1,ant2,...`

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::corpus::{
    read_lines, CorpusError, LabeledUtterance, SentencePair, StylePair, Utterance,
};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}:{line}: expected {expected} tab-separated columns, found {found}")]
    BadColumns {
        path: PathBuf,
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("{path}:{line}: cannot parse score: {text}")]
    BadScore {
        path: PathBuf,
        line: usize,
        text: String,
    },
    #[error("{path}:{line}: score {value} outside [0, 1]")]
    ScoreOutOfRange {
        path: PathBuf,
        line: usize,
        value: f64,
    },
    #[error("{path}:{line}: empty antonym list")]
    EmptyAntonyms { path: PathBuf, line: usize },
}

/// Word -> (positive score, negative score), both in [0, 1].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolarityLexicon {
    entries: BTreeMap<String, (f64, f64)>,
}

impl PolarityLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: impl Into<String>, pos: f64, neg: f64) {
        self.entries.insert(word.into(), (pos, neg));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Signed polarity pos - neg, in [-1, 1]. Unknown words score 0.
    pub fn word_polarity(&self, word: &str) -> f64 {
        match self.entries.get(word) {
            Some((pos, neg)) => pos - neg,
            None => 0.0,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let mut lex = PolarityLexicon::new();
        for (idx, line) in read_lines(path)?.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(LexiconError::BadColumns {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    expected: 3,
                    found: cols.len(),
                });
            }
            let mut scores = [0.0f64; 2];
            for (slot, text) in scores.iter_mut().zip(&cols[1..]) {
                let value: f64 = text.parse().map_err(|_| LexiconError::BadScore {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    text: text.to_string(),
                })?;
                if !(0.0..=1.0).contains(&value) {
                    return Err(LexiconError::ScoreOutOfRange {
                        path: path.to_path_buf(),
                        line: idx + 1,
                        value,
                    });
                }
                *slot = value;
            }
            lex.insert(cols[0], scores[0], scores[1]);
        }
        Ok(lex)
    }
}

/// Word -> ordered antonym candidates. Order in the file is preserved; a
/// swap always takes the first entry.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AntonymMap {
    entries: BTreeMap<String, Vec<String>>,
}

impl AntonymMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert<S: AsRef<str>>(&mut self, word: impl Into<String>, antonyms: &[S]) {
        self.entries.insert(
            word.into(),
            antonyms.iter().map(|a| a.as_ref().to_string()).collect(),
        );
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn antonyms(&self, word: &str) -> &[String] {
        self.entries.get(word).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let mut map = AntonymMap::new();
        for (idx, line) in read_lines(path)?.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 2 {
                return Err(LexiconError::BadColumns {
                    path: path.to_path_buf(),
                    line: idx + 1,
                    expected: 2,
                    found: cols.len(),
                });
            }
            let antonyms: Vec<&str> = cols[1]
                .split(',')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .collect();
            if antonyms.is_empty() {
                return Err(LexiconError::EmptyAntonyms {
                    path: path.to_path_buf(),
                    line: idx + 1,
                });
            }
            map.insert(cols[0], &antonyms);
        }
        Ok(map)
    }
}

/// A token whose absolute polarity clears the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct PolarityWord {
    pub index: usize,
    pub word: String,
    pub polarity: f64,
}

pub const DEFAULT_POLARITY_CUTOFF: f64 = 0.5;

/// Tokens with |polarity| >= cutoff, in sentence order.
pub fn find_polarity_words(
    utterance: &Utterance,
    lexicon: &PolarityLexicon,
    cutoff: f64,
) -> Vec<PolarityWord> {
    utterance
        .tokens
        .iter()
        .enumerate()
        .filter_map(|(index, word)| {
            let polarity = lexicon.word_polarity(word);
            (polarity.abs() >= cutoff).then(|| PolarityWord {
                index,
                word: word.clone(),
                polarity,
            })
        })
        .collect()
}

fn is_all_lowercase(token: &str) -> bool {
    !token.is_empty() && token.chars().all(|c| c.is_lowercase())
}

/// Builds a (sentence, opposite-polarity sentence) pair by swapping in an
/// antonym, or `None` when the sentence is not a clean swap candidate.
///
/// A candidate has exactly one polarity word past the cutoff; that word is
/// all-lowercase and has at least one antonym. The first listed antonym
/// replaces it, so input and output differ in exactly that one position.
pub fn synthesize_pair(
    item: &LabeledUtterance,
    styles: &StylePair,
    lexicon: &PolarityLexicon,
    antonyms: &AntonymMap,
    cutoff: f64,
) -> Option<SentencePair> {
    let target_style = styles.opposite(&item.style)?;
    let found = find_polarity_words(&item.utterance, lexicon, cutoff);
    let [hit] = found.as_slice() else {
        return None;
    };
    if !is_all_lowercase(&hit.word) {
        return None;
    }
    let replacement = antonyms.antonyms(&hit.word).first()?;
    let mut tokens = item.utterance.tokens.clone();
    tokens[hit.index] = replacement.clone();
    let swapped = Utterance::from_tokens(&tokens);
    SentencePair::new(
        item.utterance.clone(),
        swapped,
        item.style.clone(),
        target_style.clone(),
    )
    .ok()
}

/// Runs [`synthesize_pair`] over a corpus, keeping the hits.
pub fn build_synthetic_corpus(
    items: &[LabeledUtterance],
    styles: &StylePair,
    lexicon: &PolarityLexicon,
    antonyms: &AntonymMap,
    cutoff: f64,
) -> Vec<SentencePair> {
    items
        .iter()
        .filter_map(|item| synthesize_pair(item, styles, lexicon, antonyms, cutoff))
        .collect()
}
