//! Evaluation and scoring: corpus BLEU (moses multi-bleu semantics),
//! a smoothed sentence BLEU for rewards, style accuracy, the
//! accuracy/BLEU harmonic mean, Pearson correlation, and pluggable
//! learned content metrics.
//!
//! All scores here live in fractions: BLEU is in [0, 1], not percent.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::PathBuf;
use std::process::{Command, Stdio};

use thiserror::Error;

use crate::classifier::{ClassifierError, StyleClassifier};
use crate::corpus::{ReferenceSet, StyleId, Utterance};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("expected matching lengths, got {left} and {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("correlation is undefined when {side} has zero variance")]
    ZeroVariance { side: &'static str },
    #[error("correlation needs at least two points, got {0}")]
    TooFewPoints(usize),
    #[error("unknown learned metric {0:?}; expected \"desk\" or \"external:<command>\"")]
    UnknownMetric(String),
    #[error("external metric {command:?}: {reason}")]
    External { command: String, reason: String },
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

const MAX_ORDER: usize = 4;

/// Accumulated n-gram statistics over a corpus. Additive: summing the stats
/// of two corpora scores their concatenation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_ORDER],
    pub totals: [u64; MAX_ORDER],
    pub candidate_len: u64,
    pub reference_len: u64,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut counts: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for start in 0..=tokens.len() - n {
            *counts.entry(&tokens[start..start + n]).or_insert(0) += 1;
        }
    }
    counts
}

impl BleuStats {
    /// Adds one candidate scored against one or more references.
    pub fn add(&mut self, candidate: &Utterance, references: &[Utterance]) {
        assert!(!references.is_empty(), "need at least one reference");
        let c = candidate.tokens.len();
        for n in 1..=MAX_ORDER {
            let cand = ngram_counts(&candidate.tokens, n);
            let mut max_ref: HashMap<&[String], u64> = HashMap::new();
            for r in references {
                for (gram, count) in ngram_counts(&r.tokens, n) {
                    let slot = max_ref.entry(gram).or_insert(0);
                    *slot = (*slot).max(count);
                }
            }
            for (gram, count) in cand {
                let clipped = count.min(max_ref.get(gram).copied().unwrap_or(0));
                self.matches[n - 1] += clipped;
            }
            self.totals[n - 1] += (c + 1).saturating_sub(n) as u64;
        }
        self.candidate_len += c as u64;
        // Closest reference length; ties go to the shorter reference.
        let mut closest = references[0].tokens.len();
        for r in &references[1..] {
            let len = r.tokens.len();
            let better = len.abs_diff(c) < closest.abs_diff(c)
                || (len.abs_diff(c) == closest.abs_diff(c) && len < closest);
            if better {
                closest = len;
            }
        }
        self.reference_len += closest as u64;
    }

    /// Geometric mean of the four clipped precisions times the brevity
    /// penalty. Zero whenever any match count is zero.
    pub fn score(&self) -> f64 {
        if self.candidate_len == 0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for n in 0..MAX_ORDER {
            if self.matches[n] == 0 {
                return 0.0;
            }
            log_sum += (self.matches[n] as f64 / self.totals[n] as f64).ln();
        }
        let bp = if self.candidate_len < self.reference_len {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        } else {
            1.0
        };
        bp * (log_sum / MAX_ORDER as f64).exp()
    }
}

/// Corpus BLEU of candidates against aligned multi-reference sets.
pub fn corpus_bleu(
    candidates: &[Utterance],
    references: &[ReferenceSet],
) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut stats = BleuStats::default();
    for (cand, refs) in candidates.iter().zip(references) {
        stats.add(cand, &refs.references);
    }
    Ok(stats.score())
}

/// Corpus BLEU with exactly one reference per candidate.
pub fn corpus_bleu_single(
    candidates: &[Utterance],
    references: &[Utterance],
) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            left: candidates.len(),
            right: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut stats = BleuStats::default();
    for (cand, r) in candidates.iter().zip(references) {
        stats.add(cand, std::slice::from_ref(r));
    }
    Ok(stats.score())
}

/// Per-sentence BLEU for reward shaping. Unigram precision is exact;
/// higher orders get add-one smoothing so single sentences do not collapse
/// to zero the moment one order has no match. Empty or fully disjoint
/// candidates score 0, an exact match scores 1.
pub fn sentence_bleu(candidate: &Utterance, reference: &Utterance) -> f64 {
    let c = candidate.tokens.len();
    let r = reference.tokens.len();
    if c == 0 {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=MAX_ORDER {
        let cand = ngram_counts(&candidate.tokens, n);
        let refs = ngram_counts(&reference.tokens, n);
        let mut matches = 0u64;
        for (gram, count) in &cand {
            matches += count.min(refs.get(gram).unwrap_or(&0));
        }
        let total = (c + 1).saturating_sub(n) as u64;
        let p = if n == 1 {
            if matches == 0 {
                return 0.0;
            }
            matches as f64 / total as f64
        } else {
            (matches + 1) as f64 / (total + 1) as f64
        };
        log_sum += p.ln();
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / MAX_ORDER as f64).exp()
}

/// 2ab / (a + b), or 0 when both are 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b > 0.0 {
        2.0 * a * b / (a + b)
    } else {
        0.0
    }
}

/// Fraction of outputs the classifier assigns to the target style.
pub fn style_accuracy(
    classifier: &StyleClassifier,
    outputs: &[Utterance],
    target: &StyleId,
) -> Result<f64, MetricsError> {
    if outputs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if !classifier.styles.contains(target) {
        return Err(ClassifierError::ForeignStyle(target.clone()).into());
    }
    let hits = outputs
        .iter()
        .filter(|u| classifier.predict_style(u) == target)
        .count();
    Ok(hits as f64 / outputs.len() as f64)
}

/// Pearson correlation coefficient. Errors on length mismatch, fewer than
/// two points, or zero variance on either side.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    if x.len() != y.len() {
        return Err(MetricsError::LengthMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(MetricsError::TooFewPoints(x.len()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        cov += (a - mx) * (b - my);
        vx += (a - mx) * (a - mx);
        vy += (b - my) * (b - my);
    }
    if vx == 0.0 {
        return Err(MetricsError::ZeroVariance { side: "x" });
    }
    if vy == 0.0 {
        return Err(MetricsError::ZeroVariance { side: "y" });
    }
    Ok(cov / (vx.sqrt() * vy.sqrt()))
}

/// Token-bag F1 rescaled to [-1, 1]: identical bags score 1, disjoint -1.
/// Symmetric in its arguments. Stands in for a heavyweight learned content
/// metric wherever one is not plugged in.
pub fn desk_oracle_score(candidate: &Utterance, anchor: &Utterance) -> f64 {
    let mut counts: HashMap<&str, (u64, u64)> = HashMap::new();
    for t in &candidate.tokens {
        counts.entry(t).or_default().0 += 1;
    }
    for t in &anchor.tokens {
        counts.entry(t).or_default().1 += 1;
    }
    let overlap: u64 = counts.values().map(|(a, b)| (*a).min(*b)).sum();
    if overlap == 0 {
        return -1.0;
    }
    let p = overlap as f64 / candidate.tokens.len() as f64;
    let r = overlap as f64 / anchor.tokens.len() as f64;
    let f1 = 2.0 * p * r / (p + r);
    2.0 * f1 - 1.0
}

/// A learned (or learned-shaped) content metric scoring candidate sentences
/// against anchors, higher is better.
pub trait LearnedMetric: Send + Sync {
    /// Stable name recorded in reports and config echoes.
    fn identity(&self) -> String;

    /// Scores each (candidate, anchor) pair.
    fn score_batch(&self, pairs: &[(&Utterance, &Utterance)]) -> Result<Vec<f64>, MetricsError>;

    fn score(&self, candidate: &Utterance, anchor: &Utterance) -> Result<f64, MetricsError> {
        Ok(self.score_batch(&[(candidate, anchor)])?[0])
    }
}

/// The built-in token-overlap metric.
#[derive(Debug, Clone, Default)]
pub struct DeskOracle;

impl LearnedMetric for DeskOracle {
    fn identity(&self) -> String {
        "desk".into()
    }

    fn score_batch(&self, pairs: &[(&Utterance, &Utterance)]) -> Result<Vec<f64>, MetricsError> {
        Ok(pairs
            .iter()
            .map(|(c, a)| desk_oracle_score(c, a))
            .collect())
    }
}

/// Adapter for an external scoring process. Each batch spawns
/// `sh -c <command>`, writes one `candidate<TAB>anchor` line per pair to its
/// stdin, and expects one decimal score per line on stdout.
#[derive(Debug, Clone)]
pub struct ExternalOracle {
    command: String,
}

impl ExternalOracle {
    pub fn new(command: impl Into<String>) -> Self {
        ExternalOracle {
            command: command.into(),
        }
    }

    fn external_err(&self, reason: impl Into<String>) -> MetricsError {
        MetricsError::External {
            command: self.command.clone(),
            reason: reason.into(),
        }
    }
}

impl LearnedMetric for ExternalOracle {
    fn identity(&self) -> String {
        format!("external:{}", self.command)
    }

    fn score_batch(&self, pairs: &[(&Utterance, &Utterance)]) -> Result<Vec<f64>, MetricsError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| self.external_err(format!("failed to spawn: {e}")))?;
        {
            let mut stdin = child.stdin.take().expect("piped stdin");
            for (cand, anchor) in pairs {
                writeln!(stdin, "{}\t{}", cand.detokenize(), anchor.detokenize())
                    .map_err(|e| self.external_err(format!("write failed: {e}")))?;
            }
        }
        let out = child
            .wait_with_output()
            .map_err(|e| self.external_err(format!("wait failed: {e}")))?;
        if !out.status.success() {
            return Err(self.external_err(format!("exited with {}", out.status)));
        }
        let text = String::from_utf8(out.stdout)
            .map_err(|_| self.external_err("non-UTF-8 output"))?;
        let scores: Vec<f64> = text
            .lines()
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| self.external_err(format!("cannot parse score line {l:?}")))
            })
            .collect::<Result<_, _>>()?;
        if scores.len() != pairs.len() {
            return Err(self.external_err(format!(
                "expected {} scores, got {}",
                pairs.len(),
                scores.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
            return Err(self.external_err(format!("non-finite score {bad}")));
        }
        Ok(scores)
    }
}

/// Parses a metric selector: `desk`, or `external:<command>`.
pub fn parse_learned_metric(selector: &str) -> Result<Box<dyn LearnedMetric>, MetricsError> {
    if selector == "desk" {
        Ok(Box::new(DeskOracle))
    } else if let Some(command) = selector.strip_prefix("external:") {
        if command.trim().is_empty() {
            return Err(MetricsError::UnknownMetric(selector.to_string()));
        }
        Ok(Box::new(ExternalOracle::new(command)))
    } else {
        Err(MetricsError::UnknownMetric(selector.to_string()))
    }
}

/// One system's scores on a test set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n: usize,
    pub style_accuracy: f64,
    pub bleu: f64,
    pub harmonic_mean: f64,
    /// Mean learned-metric score, best reference per sentence; `None` when no
    /// learned metric was supplied.
    pub learned: Option<f64>,
}

/// Scores transferred outputs against references: classifier accuracy toward
/// `target`, corpus BLEU, their harmonic mean, and optionally a learned
/// content score (max over each sentence's references, averaged).
pub fn evaluate_system(
    outputs: &[Utterance],
    references: &[ReferenceSet],
    classifier: &StyleClassifier,
    target: &StyleId,
    learned: Option<&dyn LearnedMetric>,
) -> Result<EvalReport, MetricsError> {
    if outputs.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            left: outputs.len(),
            right: references.len(),
        });
    }
    if outputs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let acc = style_accuracy(classifier, outputs, target)?;
    let bleu = corpus_bleu(outputs, references)?;
    let learned_mean = match learned {
        None => None,
        Some(metric) => {
            let mut sum = 0.0;
            for (out, refset) in outputs.iter().zip(references) {
                let pairs: Vec<(&Utterance, &Utterance)> =
                    refset.references.iter().map(|r| (out, r)).collect();
                let scores = metric.score_batch(&pairs)?;
                sum += scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            }
            Some(sum / outputs.len() as f64)
        }
    };
    Ok(EvalReport {
        n: outputs.len(),
        style_accuracy: acc,
        bleu,
        harmonic_mean: harmonic_mean(acc, bleu),
        learned: learned_mean,
    })
}

const REPORT_COLUMNS: [&str; 6] = ["system", "n", "acc", "bleu", "hm", "learned"];

/// Tab-separated report, one labeled system per row. Fixed six-decimal
/// formatting keeps reruns byte-comparable.
pub fn report_tsv(reports: &[(String, EvalReport)]) -> String {
    let mut out = REPORT_COLUMNS.join("\t");
    out.push('\n');
    for (label, r) in reports {
        let learned = r
            .learned
            .map(|v| format!("{v:.6}"))
            .unwrap_or_default();
        out.push_str(&format!(
            "{label}\t{}\t{:.6}\t{:.6}\t{:.6}\t{learned}\n",
            r.n, r.style_accuracy, r.bleu, r.harmonic_mean
        ));
    }
    out
}

/// Space-aligned report for terminals.
pub fn report_table(reports: &[(String, EvalReport)]) -> String {
    let mut rows: Vec<[String; 6]> = vec![REPORT_COLUMNS.map(str::to_string)];
    for (label, r) in reports {
        rows.push([
            label.clone(),
            r.n.to_string(),
            format!("{:.3}", r.style_accuracy),
            format!("{:.3}", r.bleu),
            format!("{:.3}", r.harmonic_mean),
            r.learned.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into()),
        ]);
    }
    let widths: Vec<usize> = (0..REPORT_COLUMNS.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::ClassifierConfig;
    use crate::corpus::{LabeledUtterance, StylePair};
    use proptest::prelude::*;

    fn u(text: &str) -> Utterance {
        Utterance::from_tokens(&text.split(' ').collect::<Vec<_>>())
    }

    fn single_refs(texts: &[&str]) -> Vec<ReferenceSet> {
        texts
            .iter()
            .map(|t| ReferenceSet::new(u(t), vec![u(t)]).unwrap())
            .collect()
    }

    #[test]
    fn corpus_bleu_identity_is_one() {
        let cands = vec![u("the cat sat on the mat"), u("a long sentence goes here")];
        let refs = single_refs(&["the cat sat on the mat", "a long sentence goes here"]);
        assert_eq!(corpus_bleu(&cands, &refs).unwrap(), 1.0);
    }

    #[test]
    fn corpus_bleu_is_zero_without_higher_order_matches() {
        // Unigrams overlap but no bigram does, so the unsmoothed corpus
        // score collapses to zero.
        let cands = vec![u("b a d c f e h g")];
        let refs = single_refs(&["a b c d e f g h"]);
        assert_eq!(corpus_bleu(&cands, &refs).unwrap(), 0.0);
    }

    #[test]
    fn corpus_bleu_clips_repeated_unigrams() {
        let mut stats = BleuStats::default();
        stats.add(&u("the the the the the the the"), &[u("the cat is on the mat")]);
        assert_eq!(stats.matches[0], 2); // "the" appears twice in the reference
        assert_eq!(stats.totals[0], 7);
    }

    #[test]
    fn corpus_bleu_brevity_penalty_matches_hand_value() {
        // Candidate is a 5-token prefix of a 6-token reference: every
        // precision is 1 and only the brevity penalty remains.
        let cands = vec![u("a b c d e")];
        let refs = single_refs(&["a b c d e f"]);
        let got = corpus_bleu(&cands, &refs).unwrap();
        assert!((got - (1.0f64 - 6.0 / 5.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn closest_reference_length_ties_prefer_shorter() {
        // Candidate length 4 sits between references of lengths 3 and 5;
        // the tie goes to 3, so no brevity penalty applies.
        let cand = u("a b c d");
        let refs = vec![ReferenceSet::new(
            cand.clone(),
            vec![u("a b c"), u("a b c d e")],
        )
        .unwrap()];
        assert_eq!(corpus_bleu(&[cand], &refs).unwrap(), 1.0);
    }

    #[test]
    fn corpus_bleu_rejects_mismatched_or_empty_input() {
        let cands = vec![u("a")];
        assert!(matches!(
            corpus_bleu(&cands, &[]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            corpus_bleu(&[], &[]),
            Err(MetricsError::EmptyInput)
        ));
    }

    #[test]
    fn sentence_bleu_hand_value() {
        // p1 = 2/3, p2 = (1+1)/(2+1), p3 = (0+1)/(1+1), p4 = 1/1, BP = 1.
        let got = sentence_bleu(&u("the cat sat"), &u("the cat slept"));
        let want = (2.0f64 / 3.0 * (2.0 / 3.0) * 0.5 * 1.0).powf(0.25);
        assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
    }

    #[test]
    fn sentence_bleu_extremes() {
        assert_eq!(sentence_bleu(&u("exact match here"), &u("exact match here")), 1.0);
        assert_eq!(sentence_bleu(&u("completely different"), &u("nothing shared")), 0.0);
    }

    #[test]
    fn sentence_bleu_penalizes_short_candidates() {
        let full = sentence_bleu(&u("a b c d e f"), &u("a b c d e f"));
        let short = sentence_bleu(&u("a b c"), &u("a b c d e f"));
        assert!(short < full);
        assert!(short > 0.0);
    }

    #[test]
    fn harmonic_mean_basics() {
        assert_eq!(harmonic_mean(0.0, 0.0), 0.0);
        assert_eq!(harmonic_mean(0.0, 0.8), 0.0);
        assert!((harmonic_mean(0.5, 0.5) - 0.5).abs() < 1e-12);
        let hm = harmonic_mean(0.932, 0.553);
        assert!((hm - 2.0 * 0.932 * 0.553 / (0.932 + 0.553)).abs() < 1e-12);
    }

    #[test]
    fn pearson_reference_values() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-12);
        let r = pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 5.0]).unwrap();
        assert!((r - 0.981_980_506_061_965_8).abs() < 1e-12);
    }

    #[test]
    fn pearson_error_cases() {
        assert!(matches!(
            pearson(&[1.0], &[1.0]),
            Err(MetricsError::TooFewPoints(1))
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[1.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            pearson(&[1.0, 1.0], &[1.0, 2.0]),
            Err(MetricsError::ZeroVariance { side: "x" })
        ));
        assert!(matches!(
            pearson(&[1.0, 2.0], &[3.0, 3.0]),
            Err(MetricsError::ZeroVariance { side: "y" })
        ));
    }

    proptest! {
        #[test]
        fn pearson_is_affine_invariant(
            xs in proptest::collection::vec(-100.0f64..100.0, 3..20),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
        ) {
            let ys: Vec<f64> = xs.iter().map(|x| x * 1.7 - 3.0).collect();
            let scaled: Vec<f64> = xs.iter().map(|x| a * x + b).collect();
            let r1 = pearson(&xs, &ys);
            let r2 = pearson(&scaled, &ys);
            if let (Ok(r1), Ok(r2)) = (r1, r2) {
                prop_assert!((r1 - r2).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn desk_oracle_values() {
        assert_eq!(desk_oracle_score(&u("a b c"), &u("a b c")), 1.0);
        assert_eq!(desk_oracle_score(&u("a b"), &u("c d")), -1.0);
        // overlap 1, |c| = 1, |a| = 2: F1 = 2/3, score = 1/3.
        let got = desk_oracle_score(&u("a"), &u("a b"));
        assert!((got - 1.0 / 3.0).abs() < 1e-12);
        // Symmetry.
        assert_eq!(
            desk_oracle_score(&u("x y z"), &u("x q")),
            desk_oracle_score(&u("x q"), &u("x y z"))
        );
    }

    #[test]
    fn parse_learned_metric_selectors() {
        assert_eq!(parse_learned_metric("desk").unwrap().identity(), "desk");
        assert_eq!(
            parse_learned_metric("external:cat").unwrap().identity(),
            "external:cat"
        );
        assert!(matches!(
            parse_learned_metric("bleurt"),
            Err(MetricsError::UnknownMetric(_))
        ));
        assert!(matches!(
            parse_learned_metric("external: "),
            Err(MetricsError::UnknownMetric(_))
        ));
    }

    #[test]
    fn external_oracle_scores_lines() {
        let oracle = ExternalOracle::new("while IFS= read -r line; do echo 0.25; done");
        let a = u("a b");
        let b = u("c d");
        let scores = oracle.score_batch(&[(&a, &b), (&b, &a)]).unwrap();
        assert_eq!(scores, vec![0.25, 0.25]);
    }

    #[test]
    fn external_oracle_failures_are_reported() {
        let fail = ExternalOracle::new("exit 3");
        let a = u("a");
        assert!(matches!(
            fail.score_batch(&[(&a, &a)]),
            Err(MetricsError::External { .. })
        ));
        let short = ExternalOracle::new("echo 1.0");
        assert!(matches!(
            short.score_batch(&[(&a, &a), (&a, &a)]),
            Err(MetricsError::External { .. })
        ));
        let garbage = ExternalOracle::new("echo not-a-number");
        assert!(matches!(
            garbage.score_batch(&[(&a, &a)]),
            Err(MetricsError::External { .. })
        ));
    }

    fn marker_classifier() -> (StyleClassifier, StylePair) {
        let styles = StylePair::new(StyleId::new("informal"), StyleId::new("formal"));
        let fillers = ["give", "me", "the", "report", "now", "soon"];
        let mut data = Vec::new();
        for i in 0..12 {
            let a = fillers[i % fillers.len()];
            data.push(LabeledUtterance {
                utterance: Utterance::from_tokens(&["plz", a]),
                style: styles.s1.clone(),
            });
            data.push(LabeledUtterance {
                utterance: Utterance::from_tokens(&["please", a]),
                style: styles.s2.clone(),
            });
        }
        let cfg = ClassifierConfig {
            embed_dim: 8,
            filter_widths: vec![2, 3],
            filters_per_width: 4,
            vocab_size: 50,
            lr: 5e-3,
            epochs: 12,
            batch_size: 4,
            seed: 1,
        };
        (StyleClassifier::train(cfg, &data, styles.clone()).unwrap(), styles)
    }

    #[test]
    fn evaluate_system_produces_consistent_report() {
        let (clf, styles) = marker_classifier();
        let outputs = vec![u("please give me the report"), u("please the report now soon")];
        let refs = vec![
            ReferenceSet::new(u("plz give me the report"), vec![u("please give me the report")])
                .unwrap(),
            ReferenceSet::new(u("plz the report now soon"), vec![u("please the report now soon")])
                .unwrap(),
        ];
        let report =
            evaluate_system(&outputs, &refs, &clf, &styles.s2, Some(&DeskOracle)).unwrap();
        assert_eq!(report.n, 2);
        assert_eq!(report.bleu, 1.0);
        assert_eq!(
            report.harmonic_mean,
            harmonic_mean(report.style_accuracy, report.bleu)
        );
        assert_eq!(report.learned, Some(1.0));
    }

    #[test]
    fn report_emitters_are_stable() {
        let report = EvalReport {
            n: 2,
            style_accuracy: 0.5,
            bleu: 0.25,
            harmonic_mean: harmonic_mean(0.5, 0.25),
            learned: None,
        };
        let tsv = report_tsv(&[("sys".into(), report.clone())]);
        assert!(tsv.starts_with("system\tn\tacc\tbleu\thm\tlearned\n"));
        assert!(tsv.contains("sys\t2\t0.500000\t0.250000\t0.333333\t\n"));
        let table = report_table(&[("sys".into(), report)]);
        assert!(table.contains("system"));
        assert!(table.contains("0.333"));
    }
}
