//! A synthetic two-style task small enough to train end to end in seconds.
//!
//! Sentences are `marker filler*`: the style lives entirely in the marker
//! token (slot 0), drawn from a fixed informal/formal pairing, and the
//! remaining slots are shared content fillers. Swapping the marker for its
//! counterpart is therefore the exact gold transfer, which gives the tests
//! perfect references, a learnable classifier signal, and a clean gap
//! between a model that merely copies and one that actually restyles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{
    LabeledUtterance, ReferenceSet, SentencePair, StyleId, StylePair, Utterance,
};

const MARKERS: [(&str, &str); 5] = [
    ("plz", "please"),
    ("u", "you"),
    ("gonna", "going"),
    ("wanna", "wishing"),
    ("thx", "thanks"),
];

const FILLERS: [&str; 8] = [
    "send", "the", "report", "today", "now", "team", "update", "meeting",
];

/// Content tokens per sentence after the marker.
const BODY_LEN: usize = 5;

#[derive(Debug, Clone)]
pub struct ToyTask {
    pub styles: StylePair,
}

impl Default for ToyTask {
    fn default() -> Self {
        ToyTask {
            styles: StylePair::new(StyleId::new("informal"), StyleId::new("formal")),
        }
    }
}

impl ToyTask {
    pub fn new() -> Self {
        Self::default()
    }

    /// Every token either side of the task can produce.
    pub fn full_vocab(&self) -> Vec<Utterance> {
        let mut tokens: Vec<&str> = Vec::new();
        for (a, b) in MARKERS {
            tokens.push(a);
            tokens.push(b);
        }
        tokens.extend(FILLERS);
        vec![Utterance::from_tokens(&tokens)]
    }

    fn sentence(&self, rng: &mut ChaCha8Rng) -> (Utterance, Utterance) {
        let (informal_marker, formal_marker) = MARKERS[rng.gen_range(0..MARKERS.len())];
        let mut informal = vec![informal_marker];
        let mut formal = vec![formal_marker];
        for _ in 0..BODY_LEN {
            let f = FILLERS[rng.gen_range(0..FILLERS.len())];
            informal.push(f);
            formal.push(f);
        }
        (
            Utterance::from_tokens(&informal),
            Utterance::from_tokens(&formal),
        )
    }

    fn style_side(&self, style: &StyleId) -> bool {
        assert!(self.styles.contains(style), "unknown toy style {style}");
        *style == self.styles.s1
    }

    /// Unpaired corpus of one style.
    pub fn unpaired(&self, style: &StyleId, n: usize, seed: u64) -> Vec<LabeledUtterance> {
        let informal_side = self.style_side(style);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (inf, fml) = self.sentence(&mut rng);
                LabeledUtterance {
                    utterance: if informal_side { inf } else { fml },
                    style: style.clone(),
                }
            })
            .collect()
    }

    /// Labeled data for classifier training: n sentences per style.
    pub fn classifier_data(&self, n_per_style: usize, seed: u64) -> Vec<LabeledUtterance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(2 * n_per_style);
        for _ in 0..n_per_style {
            let (inf, fml) = self.sentence(&mut rng);
            out.push(LabeledUtterance {
                utterance: inf,
                style: self.styles.s1.clone(),
            });
            out.push(LabeledUtterance {
                utterance: fml,
                style: self.styles.s2.clone(),
            });
        }
        out
    }

    /// Same-sentence pairs labeled across styles: reconstruction warm-up
    /// material that never reveals the marker mapping.
    pub fn identity_pairs(&self, from: &StyleId, n: usize, seed: u64) -> Vec<SentencePair> {
        let informal_side = self.style_side(from);
        let to = self.styles.opposite(from).expect("checked").clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (inf, fml) = self.sentence(&mut rng);
                let x = if informal_side { inf } else { fml };
                SentencePair::new(x.clone(), x, from.clone(), to.clone()).unwrap()
            })
            .collect()
    }

    /// Synthetic transfer pairs covering only the first `known` markers:
    /// the toy analog of antonym-swap pair synthesis, where a real lexicon
    /// covers some style carriers and misses the rest. Sentences whose
    /// marker falls outside the covered set yield no pair, so a model
    /// warmed up on this data transfers the covered markers and has never
    /// seen the others.
    pub fn swap_pairs(
        &self,
        from: &StyleId,
        known: usize,
        n: usize,
        seed: u64,
    ) -> Vec<SentencePair> {
        assert!(known >= 1 && known <= MARKERS.len());
        let informal_side = self.style_side(from);
        let to = self.styles.opposite(from).expect("checked").clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let (inf, fml) = self.sentence(&mut rng);
            let marker = if informal_side { &inf } else { &fml };
            let covered = MARKERS[..known]
                .iter()
                .any(|(a, b)| marker.tokens[0] == *a || marker.tokens[0] == *b);
            if !covered {
                continue;
            }
            let (src, tgt) = if informal_side {
                (inf, fml)
            } else {
                (fml, inf)
            };
            out.push(SentencePair::new(src, tgt, from.clone(), to.clone()).unwrap());
        }
        out
    }

    /// Gold test material: sources in `from` style with the exact
    /// marker-swapped sentence as the single reference.
    pub fn references(&self, from: &StyleId, n: usize, seed: u64) -> Vec<ReferenceSet> {
        let informal_side = self.style_side(from);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (inf, fml) = self.sentence(&mut rng);
                let (src, gold) = if informal_side {
                    (inf, fml)
                } else {
                    (fml, inf)
                };
                ReferenceSet::new(src, vec![gold]).unwrap()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_differ_only_in_the_marker_slot() {
        let task = ToyTask::new();
        let refs = task.references(&task.styles.s1, 50, 3);
        for set in &refs {
            let gold = &set.references[0];
            assert_eq!(set.source.len(), gold.len());
            let diffs = set
                .source
                .tokens
                .iter()
                .zip(&gold.tokens)
                .filter(|(a, b)| a != b)
                .count();
            assert_eq!(diffs, 1);
            assert_ne!(set.source.tokens[0], gold.tokens[0]);
        }
    }

    #[test]
    fn generation_is_seeded() {
        let task = ToyTask::new();
        assert_eq!(
            task.unpaired(&task.styles.s2, 10, 7),
            task.unpaired(&task.styles.s2, 10, 7)
        );
        assert_ne!(
            task.unpaired(&task.styles.s2, 10, 7),
            task.unpaired(&task.styles.s2, 10, 8)
        );
    }

    #[test]
    fn identity_pairs_copy_and_cross_style_labels() {
        let task = ToyTask::new();
        let pairs = task.identity_pairs(&task.styles.s1, 5, 1);
        for p in pairs {
            assert_eq!(p.source, p.target);
            assert_eq!(p.source_style, task.styles.s1);
            assert_eq!(p.target_style, task.styles.s2);
            assert!(MARKERS.iter().any(|(a, _)| *a == p.source.tokens[0]));
        }
    }

    #[test]
    fn classifier_data_is_balanced() {
        let task = ToyTask::new();
        let data = task.classifier_data(20, 2);
        let informal = data.iter().filter(|d| d.style == task.styles.s1).count();
        assert_eq!(informal, 20);
        assert_eq!(data.len(), 40);
    }

    #[test]
    fn swap_pairs_swap_covered_markers_and_never_emit_the_rest() {
        let task = ToyTask::new();
        let known = 3;
        for from in [&task.styles.s1, &task.styles.s2] {
            let pairs = task.swap_pairs(from, known, 60, 4);
            assert_eq!(pairs.len(), 60);
            for p in &pairs {
                let (covered_src, covered_tgt): (Vec<_>, Vec<_>) = if *from == task.styles.s1 {
                    MARKERS[..known].iter().copied().unzip()
                } else {
                    let (a, b): (Vec<_>, Vec<_>) = MARKERS[..known].iter().copied().unzip();
                    (b, a)
                };
                let si = covered_src
                    .iter()
                    .position(|m| *m == p.source.tokens[0])
                    .expect("source marker is covered");
                assert_eq!(p.target.tokens[0], covered_tgt[si]);
                assert_eq!(p.source.tokens[1..], p.target.tokens[1..]);
            }
        }
    }
}
