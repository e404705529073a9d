//! Data model, tokenization, and file I/O for unpaired corpora, parallel
//! pairs, and multi-reference test sets.
//!
//! File conventions:
//! - unpaired: UTF-8 plaintext, one sentence per line, named `{split}.{style}`
//! - pairs: UTF-8 TSV, `source<TAB>target`
//! - scored pairs: UTF-8 TSV, `source<TAB>target<TAB>content<TAB>style_src<TAB>style_tgt`
//! - references: `{split}.src` plus `{split}.ref0..refK`

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty or whitespace-only text cannot become an utterance")]
    EmptyUtterance,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: invalid UTF-8")]
    InvalidUtf8 { path: PathBuf, line: usize },
    #[error("{path}:{line}: expected 2 tab-separated columns, found {found}")]
    BadColumns {
        path: PathBuf,
        line: usize,
        found: usize,
    },
    #[error("{path}:{line}: expected {expected} tab-separated columns, found {found}")]
    BadScoredColumns {
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
    #[error("reference file {path} has {found} lines, expected {expected}")]
    ReferenceLengthMismatch {
        path: PathBuf,
        found: usize,
        expected: usize,
    },
    #[error("a sentence pair must cross styles, got {0} on both sides")]
    SameStylePair(StyleId),
    #[error("a reference set needs at least one reference")]
    NoReferences,
    #[error("score {name} = {value} is not finite")]
    NonFiniteScore { name: String, value: f64 },
}

/// One of the two styles of a task instance, e.g. `informal` / `formal`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StyleId(pub String);

impl StyleId {
    pub fn new(id: impl Into<String>) -> Self {
        StyleId(id.into())
    }
}

impl fmt::Display for StyleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// The two styles a task binds. Always distinct.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StylePair {
    pub s1: StyleId,
    pub s2: StyleId,
}

impl StylePair {
    pub fn new(s1: StyleId, s2: StyleId) -> Self {
        assert_ne!(s1, s2, "a task binds two distinct styles");
        StylePair { s1, s2 }
    }

    /// The style opposite to `s`, or `None` if `s` is not part of the pair.
    pub fn opposite(&self, s: &StyleId) -> Option<&StyleId> {
        if *s == self.s1 {
            Some(&self.s2)
        } else if *s == self.s2 {
            Some(&self.s1)
        } else {
            None
        }
    }

    pub fn contains(&self, s: &StyleId) -> bool {
        *s == self.s1 || *s == self.s2
    }
}

/// A tokenized sentence plus the text it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Utterance {
    pub tokens: Vec<String>,
    pub raw: String,
}

impl Utterance {
    /// Builds an utterance directly from tokens; `raw` is the space-joined text.
    pub fn from_tokens<S: AsRef<str>>(tokens: &[S]) -> Self {
        let tokens: Vec<String> = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        let raw = tokens.join(" ");
        Utterance { tokens, raw }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Space-joined token text. Tokenizing the result reproduces `tokens`.
    pub fn detokenize(&self) -> String {
        self.tokens.join(" ")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledUtterance {
    pub utterance: Utterance,
    pub style: StyleId,
}

/// A (source, target) supervision unit, optionally carrying named quality scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentencePair {
    pub source: Utterance,
    pub target: Utterance,
    pub source_style: StyleId,
    pub target_style: StyleId,
    pub scores: Option<BTreeMap<String, f64>>,
}

impl SentencePair {
    pub fn new(
        source: Utterance,
        target: Utterance,
        source_style: StyleId,
        target_style: StyleId,
    ) -> Result<Self, CorpusError> {
        if source_style == target_style {
            return Err(CorpusError::SameStylePair(source_style));
        }
        Ok(SentencePair {
            source,
            target,
            source_style,
            target_style,
            scores: None,
        })
    }

    pub fn with_scores(mut self, scores: BTreeMap<String, f64>) -> Result<Self, CorpusError> {
        for (name, value) in &scores {
            if !value.is_finite() {
                return Err(CorpusError::NonFiniteScore {
                    name: name.clone(),
                    value: *value,
                });
            }
        }
        self.scores = Some(scores);
        Ok(self)
    }

    pub fn score(&self, name: &str) -> Option<f64> {
        self.scores.as_ref().and_then(|s| s.get(name).copied())
    }
}

/// A source sentence with one or more human references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSet {
    pub source: Utterance,
    pub references: Vec<Utterance>,
}

impl ReferenceSet {
    pub fn new(source: Utterance, references: Vec<Utterance>) -> Result<Self, CorpusError> {
        if references.is_empty() {
            return Err(CorpusError::NoReferences);
        }
        Ok(ReferenceSet { source, references })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    /// Reads the split tag from a `{split}.{style}` style file name.
    /// Unknown prefixes default to `Train`.
    pub fn from_path(path: &Path) -> Split {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        let prefix = name.split('.').next().unwrap_or_default();
        match prefix {
            "valid" | "dev" => Split::Valid,
            "test" => Split::Test,
            _ => Split::Train,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Valid => f.write_str("valid"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// Homogeneous list of corpus items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetItems {
    Unpaired(Vec<LabeledUtterance>),
    Pairs(Vec<SentencePair>),
    References(Vec<ReferenceSet>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub items: DatasetItems,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        match &self.items {
            DatasetItems::Unpaired(v) => v.len(),
            DatasetItems::Pairs(v) => v.len(),
            DatasetItems::References(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn unpaired(&self) -> Option<&[LabeledUtterance]> {
        match &self.items {
            DatasetItems::Unpaired(v) => Some(v),
            _ => None,
        }
    }

    pub fn pairs(&self) -> Option<&[SentencePair]> {
        match &self.items {
            DatasetItems::Pairs(v) => Some(v),
            _ => None,
        }
    }

    pub fn references(&self) -> Option<&[ReferenceSet]> {
        match &self.items {
            DatasetItems::References(v) => Some(v),
            _ => None,
        }
    }
}

/// Token ids 0..4 are reserved in every vocabulary.
pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const UNK: usize = 3;

/// Frequency-capped token vocabulary with fixed special ids. Built
/// deterministically: tokens sorted by (count desc, token asc).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocab {
    pub const SPECIALS: [&'static str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

    /// Builds a vocabulary of at most `max_size` entries (specials included)
    /// from the most frequent tokens.
    pub fn build<'a>(texts: impl Iterator<Item = &'a Utterance>, max_size: usize) -> Vocab {
        assert!(max_size > Self::SPECIALS.len(), "vocab too small for specials");
        let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
        for utt in texts {
            for tok in &utt.tokens {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = counts
            .into_iter()
            .filter(|(t, _)| !Self::SPECIALS.contains(t))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens: Vec<String> = Self::SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(
            ranked
                .into_iter()
                .take(max_size - Self::SPECIALS.len())
                .map(|(t, _)| t.to_string()),
        );
        Vocab::from_tokens(tokens)
    }

    pub fn from_tokens(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Token id, or [`UNK`] for out-of-vocabulary tokens.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, utt: &Utterance) -> Vec<usize> {
        utt.tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Ids back to tokens, dropping specials.
    pub fn decode(&self, ids: &[usize]) -> Utterance {
        let tokens: Vec<&str> = ids
            .iter()
            .filter(|&&id| id >= Self::SPECIALS.len() && id < self.tokens.len())
            .map(|&id| self.tokens[id].as_str())
            .collect();
        Utterance::from_tokens(&tokens)
    }
}

/// Whitespace-plus-punctuation tokenizer with optional lowercasing.
///
/// The rule, frozen by the golden tests below: split on whitespace; within a
/// chunk, ASCII punctuation other than the apostrophe is peeled off both ends
/// one character per token; the remaining core splits at apostrophes with the
/// apostrophe attaching to the following piece ("it's" -> "it", "'s").
/// Sentences longer than `max_len` tokens are truncated with a warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tokenizer {
    pub lowercase: bool,
    pub max_len: usize,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer {
            lowercase: false,
            max_len: 64,
        }
    }
}

fn is_splittable_punct(c: char) -> bool {
    c.is_ascii_punctuation() && c != '\''
}

impl Tokenizer {
    pub fn new(lowercase: bool) -> Self {
        Tokenizer {
            lowercase,
            ..Tokenizer::default()
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<Utterance, CorpusError> {
        let mut tokens: Vec<String> = Vec::new();
        for chunk in text.split_whitespace() {
            let chunk = if self.lowercase {
                chunk.to_lowercase()
            } else {
                chunk.to_string()
            };
            self.split_chunk(&chunk, &mut tokens);
        }
        if tokens.is_empty() {
            return Err(CorpusError::EmptyUtterance);
        }
        if tokens.len() > self.max_len {
            log::warn!(
                "utterance truncated from {} to {} tokens",
                tokens.len(),
                self.max_len
            );
            tokens.truncate(self.max_len);
        }
        Ok(Utterance {
            tokens,
            raw: text.to_string(),
        })
    }

    fn split_chunk(&self, chunk: &str, out: &mut Vec<String>) {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && is_splittable_punct(chars[start]) {
            out.push(chars[start].to_string());
            start += 1;
        }
        let mut trailing: Vec<String> = Vec::new();
        while end > start && is_splittable_punct(chars[end - 1]) {
            trailing.push(chars[end - 1].to_string());
            end -= 1;
        }
        // Core: split at apostrophes, apostrophe attaching to what follows.
        let mut piece = String::new();
        for &c in &chars[start..end] {
            if c == '\'' && !piece.is_empty() {
                out.push(std::mem::take(&mut piece));
            }
            piece.push(c);
        }
        if !piece.is_empty() {
            out.push(piece);
        }
        out.extend(trailing.into_iter().rev());
    }
}

pub(crate) fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines = Vec::new();
    for (idx, raw) in bytes.split(|&b| b == b'\n').enumerate() {
        let raw = raw.strip_suffix(b"\r").unwrap_or(raw);
        let line = std::str::from_utf8(raw).map_err(|_| CorpusError::InvalidUtf8 {
            path: path.to_path_buf(),
            line: idx + 1,
        })?;
        lines.push(line.to_string());
    }
    // A trailing newline yields one final empty line; drop it so counts
    // reflect sentences, not separators.
    if lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    Ok(lines)
}

/// Loads a one-sentence-per-line corpus, skipping blank lines.
pub fn load_unpaired(
    path: impl AsRef<Path>,
    style: &StyleId,
    tok: &Tokenizer,
) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let mut items = Vec::new();
    for line in read_lines(path)? {
        if line.trim().is_empty() {
            continue;
        }
        items.push(LabeledUtterance {
            utterance: tok.tokenize(&line)?,
            style: style.clone(),
        });
    }
    Ok(Dataset {
        items: DatasetItems::Unpaired(items),
        split: Split::from_path(path),
    })
}

/// Loads a two-column TSV of sentence pairs. Blank lines are skipped;
/// any other row without exactly two columns is a positioned error.
pub fn load_pairs(
    path: impl AsRef<Path>,
    source_style: &StyleId,
    target_style: &StyleId,
    tok: &Tokenizer,
) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let mut items = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 2 {
            return Err(CorpusError::BadColumns {
                path: path.to_path_buf(),
                line: idx + 1,
                found: cols.len(),
            });
        }
        items.push(SentencePair::new(
            tok.tokenize(cols[0])?,
            tok.tokenize(cols[1])?,
            source_style.clone(),
            target_style.clone(),
        )?);
    }
    Ok(Dataset {
        items: DatasetItems::Pairs(items),
        split: Split::from_path(path),
    })
}

pub const SCORE_CONTENT: &str = "content";
pub const SCORE_STYLE_SRC: &str = "style_src";
pub const SCORE_STYLE_TGT: &str = "style_tgt";

const SCORED_COLUMNS: usize = 5;

/// Loads the five-column scored-pair TSV written by [`write_scored_pairs`].
pub fn load_scored_pairs(
    path: impl AsRef<Path>,
    source_style: &StyleId,
    target_style: &StyleId,
    tok: &Tokenizer,
) -> Result<Dataset, CorpusError> {
    let path = path.as_ref();
    let mut items = Vec::new();
    for (idx, line) in read_lines(path)?.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != SCORED_COLUMNS {
            return Err(CorpusError::BadScoredColumns {
                path: path.to_path_buf(),
                line: idx + 1,
                expected: SCORED_COLUMNS,
                found: cols.len(),
            });
        }
        let mut scores = BTreeMap::new();
        for (name, text) in [
            (SCORE_CONTENT, cols[2]),
            (SCORE_STYLE_SRC, cols[3]),
            (SCORE_STYLE_TGT, cols[4]),
        ] {
            let value: f64 = text.parse().map_err(|_| CorpusError::BadScore {
                path: path.to_path_buf(),
                line: idx + 1,
                text: text.to_string(),
            })?;
            scores.insert(name.to_string(), value);
        }
        items.push(
            SentencePair::new(
                tok.tokenize(cols[0])?,
                tok.tokenize(cols[1])?,
                source_style.clone(),
                target_style.clone(),
            )?
            .with_scores(scores)?,
        );
    }
    Ok(Dataset {
        items: DatasetItems::Pairs(items),
        split: Split::from_path(path),
    })
}

/// Loads a source file plus K parallel reference files into ReferenceSets.
pub fn load_references(
    source_path: impl AsRef<Path>,
    ref_paths: &[impl AsRef<Path>],
    tok: &Tokenizer,
) -> Result<Dataset, CorpusError> {
    let source_path = source_path.as_ref();
    let sources = read_lines(source_path)?;
    let mut refs_per_file = Vec::new();
    for rp in ref_paths {
        let rp = rp.as_ref();
        let lines = read_lines(rp)?;
        if lines.len() != sources.len() {
            return Err(CorpusError::ReferenceLengthMismatch {
                path: rp.to_path_buf(),
                found: lines.len(),
                expected: sources.len(),
            });
        }
        refs_per_file.push(lines);
    }
    let mut items = Vec::new();
    for (idx, src) in sources.iter().enumerate() {
        if src.trim().is_empty() {
            continue;
        }
        let mut references = Vec::new();
        for lines in &refs_per_file {
            references.push(tok.tokenize(&lines[idx])?);
        }
        items.push(ReferenceSet::new(tok.tokenize(src)?, references)?);
    }
    Ok(Dataset {
        items: DatasetItems::References(items),
        split: Split::from_path(source_path),
    })
}

fn create(path: &Path) -> Result<fs::File, CorpusError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|source| CorpusError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    fs::File::create(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes one detokenized sentence per line.
pub fn write_unpaired(
    items: &[LabeledUtterance],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut f = create(path)?;
    for item in items {
        writeln!(f, "{}", item.utterance.detokenize()).map_err(io_err(path))?;
    }
    Ok(())
}

/// Writes `source<TAB>target` lines.
pub fn write_pairs(items: &[SentencePair], path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut f = create(path)?;
    for pair in items {
        writeln!(f, "{}\t{}", pair.source.detokenize(), pair.target.detokenize())
            .map_err(io_err(path))?;
    }
    Ok(())
}

/// Writes the five-column scored-pair TSV. Missing scores are an error.
pub fn write_scored_pairs(
    items: &[SentencePair],
    path: impl AsRef<Path>,
) -> Result<(), CorpusError> {
    let path = path.as_ref();
    let mut f = create(path)?;
    for pair in items {
        let get = |name: &str| {
            pair.score(name).ok_or_else(|| CorpusError::BadScore {
                path: path.to_path_buf(),
                line: 0,
                text: format!("missing score {name}"),
            })
        };
        writeln!(
            f,
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}",
            pair.source.detokenize(),
            pair.target.detokenize(),
            get(SCORE_CONTENT)?,
            get(SCORE_STYLE_SRC)?,
            get(SCORE_STYLE_TGT)?,
        )
        .map_err(io_err(path))?;
    }
    Ok(())
}

/// Writes `{prefix}.src` plus `{prefix}.ref0..refK`; all sets must hold the
/// same reference count.
pub fn write_references(
    items: &[ReferenceSet],
    dir: impl AsRef<Path>,
    prefix: &str,
) -> Result<Vec<PathBuf>, CorpusError> {
    let dir = dir.as_ref();
    let k = items.first().map(|r| r.references.len()).unwrap_or(0);
    let src_path = dir.join(format!("{prefix}.src"));
    let mut src = create(&src_path)?;
    for item in items {
        writeln!(src, "{}", item.source.detokenize()).map_err(io_err(&src_path))?;
    }
    let mut paths = vec![src_path];
    for r in 0..k {
        let ref_path = dir.join(format!("{prefix}.ref{r}"));
        let mut f = create(&ref_path)?;
        for item in items {
            writeln!(f, "{}", item.references[r].detokenize()).map_err(io_err(&ref_path))?;
        }
        paths.push(ref_path);
    }
    Ok(paths)
}
