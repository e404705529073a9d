//! Convolutional style classifier: embeddings, parallel convolution widths,
//! max-over-time pooling, and a 2-way softmax head. Trained once on labeled
//! style data, then used frozen — as the style reward, as the paraphrase
//! gate, and for evaluation. Everything downstream takes it by shared
//! reference, so training code cannot touch its weights.

use std::path::Path;

use ndarray::{s, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::{self, CheckpointError, CheckpointKind};
use crate::corpus::{LabeledUtterance, SentencePair, StyleId, StylePair, Utterance, Vocab, PAD};
use crate::nn::layers::{Embedding, Linear, Relu};
use crate::nn::{grad_norm, softmax_rows, weighted_nll, Adam, Param};

#[derive(Debug, Error)]
pub enum ClassifierError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("utterance labeled {found} does not belong to the style pair {s1}/{s2}")]
    UnknownStyle {
        found: StyleId,
        s1: StyleId,
        s2: StyleId,
    },
    #[error("style {0} is not one of this classifier's styles")]
    ForeignStyle(StyleId),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub embed_dim: usize,
    pub filter_widths: Vec<usize>,
    pub filters_per_width: usize,
    pub vocab_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            embed_dim: 128,
            filter_widths: vec![3, 4, 5],
            filters_per_width: 100,
            vocab_size: 8000,
            lr: 1e-3,
            epochs: 3,
            batch_size: 32,
            seed: 0,
        }
    }
}

/// One convolution width: windows unfold into rows, a shared linear filter
/// bank scores them, and max-over-time keeps the strongest activation per
/// filter.
#[derive(Debug, Clone)]
struct ConvBlock {
    width: usize,
    lin: Linear,
    relu: Relu,
    argmax: Vec<usize>,
    rows: usize,
    emb_rows: usize,
}

impl ConvBlock {
    fn new(width: usize, embed_dim: usize, filters: usize, rng: &mut impl rand::Rng) -> Self {
        ConvBlock {
            width,
            lin: Linear::new(width * embed_dim, filters, rng),
            relu: Relu::new(),
            argmax: Vec::new(),
            rows: 0,
            emb_rows: 0,
        }
    }

    fn unfold(&self, emb: &Array2<f64>) -> Array2<f64> {
        let n = emb.nrows();
        let d = emb.ncols();
        let rows = n + 1 - self.width;
        let mut out = Array2::zeros((rows, self.width * d));
        for i in 0..rows {
            for k in 0..self.width {
                out.slice_mut(s![i, k * d..(k + 1) * d]).assign(&emb.row(i + k));
            }
        }
        out
    }

    fn pool(activ: &Array2<f64>) -> (Array2<f64>, Vec<usize>) {
        let filters = activ.ncols();
        let mut out = Array2::zeros((1, filters));
        let mut argmax = vec![0usize; filters];
        for f in 0..filters {
            let col = activ.column(f);
            let (mut best_i, mut best) = (0usize, col[0]);
            for (i, &v) in col.iter().enumerate().skip(1) {
                if v > best {
                    best = v;
                    best_i = i;
                }
            }
            out[[0, f]] = best;
            argmax[f] = best_i;
        }
        (out, argmax)
    }

    fn forward(&mut self, emb: &Array2<f64>) -> Array2<f64> {
        let windows = self.unfold(emb);
        self.rows = windows.nrows();
        self.emb_rows = emb.nrows();
        let a = self.relu.forward(&self.lin.forward(&windows));
        let (pooled, argmax) = Self::pool(&a);
        self.argmax = argmax;
        pooled
    }

    fn apply(&self, emb: &Array2<f64>) -> Array2<f64> {
        let a = self.relu.apply(&self.lin.apply(&self.unfold(emb)));
        Self::pool(&a).0
    }

    fn backward(&mut self, dpool: &Array2<f64>) -> Array2<f64> {
        let mut da = Array2::zeros((self.rows, dpool.ncols()));
        for (f, &row) in self.argmax.iter().enumerate() {
            da[[row, f]] = dpool[[0, f]];
        }
        let dwin = self.lin.backward(&self.relu.backward(&da));
        let d = dwin.ncols() / self.width;
        let mut demb = Array2::zeros((self.emb_rows, d));
        for i in 0..dwin.nrows() {
            for k in 0..self.width {
                let mut slot = demb.slice_mut(s![i + k, ..]);
                slot += &dwin.slice(s![i, k * d..(k + 1) * d]);
            }
        }
        demb
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ClassifierHeader {
    config: ClassifierConfig,
    styles: StylePair,
    vocab: Vocab,
}

#[derive(Debug)]
pub struct StyleClassifier {
    pub styles: StylePair,
    config: ClassifierConfig,
    vocab: Vocab,
    emb: Embedding,
    blocks: Vec<ConvBlock>,
    out: Linear,
}

impl StyleClassifier {
    fn build(config: ClassifierConfig, styles: StylePair, vocab: Vocab) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let emb = Embedding::new(vocab.len(), config.embed_dim, &mut rng);
        let blocks = config
            .filter_widths
            .iter()
            .map(|&w| ConvBlock::new(w, config.embed_dim, config.filters_per_width, &mut rng))
            .collect();
        let concat = config.filter_widths.len() * config.filters_per_width;
        let out = Linear::new(concat, 2, &mut rng);
        StyleClassifier {
            styles,
            config,
            vocab,
            emb,
            blocks,
            out,
        }
    }

    /// Trains from scratch on labeled utterances of both styles.
    pub fn train(
        config: ClassifierConfig,
        data: &[LabeledUtterance],
        styles: StylePair,
    ) -> Result<Self, ClassifierError> {
        if data.is_empty() {
            return Err(ClassifierError::EmptyTrainingSet);
        }
        let labels: Vec<usize> = data
            .iter()
            .map(|item| Self::label_of(&styles, &item.style))
            .collect::<Result<_, _>>()?;
        let vocab = Vocab::build(data.iter().map(|d| &d.utterance), config.vocab_size);
        let mut clf = Self::build(config, styles, vocab);

        let mut rng = ChaCha8Rng::seed_from_u64(clf.config.seed ^ 0x5eed);
        let mut opt = Adam::new(clf.config.lr);
        let mut order: Vec<usize> = (0..data.len()).collect();
        for epoch in 0..clf.config.epochs {
            order.shuffle(&mut rng);
            let mut epoch_loss = 0.0;
            for batch in order.chunks(clf.config.batch_size) {
                crate::nn::zero_grads(clf.params_mut());
                let w = 1.0 / batch.len() as f64;
                for &i in batch {
                    let logits = clf.forward_train(&data[i].utterance);
                    let (loss, dlogits) = weighted_nll(&logits, &[labels[i]], &[w]);
                    epoch_loss += loss;
                    clf.backward(&dlogits);
                }
                opt.step(clf.params_mut());
            }
            log::debug!(
                "classifier epoch {epoch}: loss {:.4}, grad norm {:.4}",
                epoch_loss / (data.len() as f64 / clf.config.batch_size as f64),
                grad_norm(&clf.params())
            );
        }
        Ok(clf)
    }

    fn label_of(styles: &StylePair, style: &StyleId) -> Result<usize, ClassifierError> {
        if *style == styles.s1 {
            Ok(0)
        } else if *style == styles.s2 {
            Ok(1)
        } else {
            Err(ClassifierError::UnknownStyle {
                found: style.clone(),
                s1: styles.s1.clone(),
                s2: styles.s2.clone(),
            })
        }
    }

    /// Pads with `<pad>` up to the widest filter so every width yields at
    /// least one window.
    fn ids_for(&self, utt: &Utterance) -> Vec<usize> {
        let mut ids = self.vocab.encode(utt);
        let min_len = self.config.filter_widths.iter().copied().max().unwrap_or(1);
        while ids.len() < min_len {
            ids.push(PAD);
        }
        ids
    }

    fn forward_train(&mut self, utt: &Utterance) -> Array2<f64> {
        let ids = self.ids_for(utt);
        let emb = self.emb.forward(&ids);
        let pooled: Vec<Array2<f64>> = self.blocks.iter_mut().map(|b| b.forward(&emb)).collect();
        let concat = concat_cols(&pooled);
        self.out.forward(&concat)
    }

    fn backward(&mut self, dlogits: &Array2<f64>) {
        let dconcat = self.out.backward(dlogits);
        let f = self.config.filters_per_width;
        let mut demb: Option<Array2<f64>> = None;
        for (bi, block) in self.blocks.iter_mut().enumerate() {
            let dpool = dconcat.slice(s![.., bi * f..(bi + 1) * f]).to_owned();
            let d = block.backward(&dpool);
            demb = Some(match demb {
                Some(acc) => acc + d,
                None => d,
            });
        }
        self.emb.backward(&demb.expect("at least one filter width"));
    }

    fn logits(&self, utt: &Utterance) -> Array2<f64> {
        let ids = self.ids_for(utt);
        let emb = self.emb.lookup(&ids);
        let pooled: Vec<Array2<f64>> = self.blocks.iter().map(|b| b.apply(&emb)).collect();
        self.out.apply(&concat_cols(&pooled))
    }

    /// Softmax probabilities ordered (s1, s2).
    pub fn predict_probs(&self, utt: &Utterance) -> [f64; 2] {
        let p = softmax_rows(&self.logits(utt));
        [p[[0, 0]], p[[0, 1]]]
    }

    /// p(style | utterance) for one of the two bound styles.
    pub fn prob(&self, utt: &Utterance, style: &StyleId) -> Result<f64, ClassifierError> {
        let probs = self.predict_probs(utt);
        match Self::label_of(&self.styles, style) {
            Ok(idx) => Ok(probs[idx]),
            Err(_) => Err(ClassifierError::ForeignStyle(style.clone())),
        }
    }

    /// The likelier style; ties go to s1.
    pub fn predict_style(&self, utt: &Utterance) -> &StyleId {
        let probs = self.predict_probs(utt);
        if probs[1] > probs[0] {
            &self.styles.s2
        } else {
            &self.styles.s1
        }
    }

    /// Fraction of items whose predicted style matches their label.
    pub fn accuracy(&self, data: &[LabeledUtterance]) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = data
            .iter()
            .filter(|item| *self.predict_style(&item.utterance) == item.style)
            .count();
        hits as f64 / data.len() as f64
    }

    /// Keeps pairs whose sides both look like their declared styles:
    /// mean of p(source style | source) and p(target style | target)
    /// strictly above `sigma`.
    pub fn filter_paraphrases(
        &self,
        pairs: &[SentencePair],
        sigma: f64,
    ) -> Result<Vec<SentencePair>, ClassifierError> {
        let mut kept = Vec::new();
        for pair in pairs {
            let p_src = self.prob(&pair.source, &pair.source_style)?;
            let p_tgt = self.prob(&pair.target, &pair.target_style)?;
            if (p_src + p_tgt) / 2.0 > sigma {
                kept.push(pair.clone());
            }
        }
        Ok(kept)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.emb.params();
        for b in &self.blocks {
            p.extend(b.lin.params());
        }
        p.extend(self.out.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.emb.params_mut();
        for b in &mut self.blocks {
            p.extend(b.lin.params_mut());
        }
        p.extend(self.out.params_mut());
        p
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ClassifierError> {
        let header = ClassifierHeader {
            config: self.config.clone(),
            styles: self.styles.clone(),
            vocab: self.vocab.clone(),
        };
        let values: Vec<&Array2<f64>> = self.params().iter().map(|p| &p.value).collect();
        checkpoint::save(path, CheckpointKind::Classifier, &header, &values)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ClassifierError> {
        let (mut header, values): (ClassifierHeader, _) =
            checkpoint::load(path, CheckpointKind::Classifier)?;
        header.vocab.reindex();
        let mut clf = Self::build(header.config, header.styles, header.vocab);
        for (param, value) in clf.params_mut().into_iter().zip(values) {
            param.value = value;
        }
        Ok(clf)
    }

    /// Serialized weights, for exact-identity comparisons.
    pub fn fingerprint(&self) -> Vec<u8> {
        let header = ClassifierHeader {
            config: self.config.clone(),
            styles: self.styles.clone(),
            vocab: self.vocab.clone(),
        };
        let values: Vec<&Array2<f64>> = self.params().iter().map(|p| &p.value).collect();
        checkpoint::encode(CheckpointKind::Classifier, &header, &values)
            .expect("in-memory encode cannot fail")
    }
}

fn concat_cols(parts: &[Array2<f64>]) -> Array2<f64> {
    let total: usize = parts.iter().map(|p| p.ncols()).sum();
    let mut out = Array2::zeros((1, total));
    let mut at = 0;
    for p in parts {
        out.slice_mut(s![.., at..at + p.ncols()]).assign(p);
        at += p.ncols();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{assert_close, finite_diff_grad};

    fn tiny_config() -> ClassifierConfig {
        ClassifierConfig {
            embed_dim: 8,
            filter_widths: vec![2, 3],
            filters_per_width: 4,
            vocab_size: 50,
            lr: 5e-3,
            epochs: 12,
            batch_size: 4,
            seed: 1,
        }
    }

    fn marker_data(n_per_style: usize) -> (Vec<LabeledUtterance>, StylePair) {
        // Style is carried by one marker word; everything else is shared.
        let styles = StylePair::new(StyleId::new("informal"), StyleId::new("formal"));
        let fillers = ["give", "me", "the", "report", "now", "soon", "today"];
        let mut data = Vec::new();
        for i in 0..n_per_style {
            let a = fillers[i % fillers.len()];
            let b = fillers[(i * 3 + 1) % fillers.len()];
            data.push(LabeledUtterance {
                utterance: Utterance::from_tokens(&["plz", a, b]),
                style: styles.s1.clone(),
            });
            data.push(LabeledUtterance {
                utterance: Utterance::from_tokens(&["please", a, b]),
                style: styles.s2.clone(),
            });
        }
        (data, styles)
    }

    #[test]
    fn probs_sum_to_one() {
        let (data, styles) = marker_data(8);
        let clf = StyleClassifier::train(tiny_config(), &data, styles).unwrap();
        let p = clf.predict_probs(&Utterance::from_tokens(&["plz", "give", "me"]));
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn learns_marker_task() {
        let (data, styles) = marker_data(16);
        let clf = StyleClassifier::train(tiny_config(), &data, styles).unwrap();
        assert!(clf.accuracy(&data) >= 0.95, "got {}", clf.accuracy(&data));
        let informal = Utterance::from_tokens(&["plz", "report", "today"]);
        assert_eq!(clf.predict_style(&informal).0, "informal");
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let (data, styles) = marker_data(6);
        let a = StyleClassifier::train(tiny_config(), &data, styles.clone()).unwrap();
        let b = StyleClassifier::train(tiny_config(), &data, styles).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
    }

    #[test]
    fn rejects_bad_inputs() {
        let (mut data, styles) = marker_data(2);
        assert!(matches!(
            StyleClassifier::train(tiny_config(), &[], styles.clone()),
            Err(ClassifierError::EmptyTrainingSet)
        ));
        data[0].style = StyleId::new("pirate");
        assert!(matches!(
            StyleClassifier::train(tiny_config(), &data, styles.clone()),
            Err(ClassifierError::UnknownStyle { .. })
        ));
        let (data, _) = marker_data(2);
        let clf = StyleClassifier::train(tiny_config(), &data, styles).unwrap();
        assert!(matches!(
            clf.prob(&data[0].utterance, &StyleId::new("pirate")),
            Err(ClassifierError::ForeignStyle(_))
        ));
    }

    #[test]
    fn short_sentences_are_padded_to_widest_filter() {
        let (data, styles) = marker_data(4);
        let clf = StyleClassifier::train(tiny_config(), &data, styles).unwrap();
        // One token, narrower than both widths; must not panic.
        let p = clf.predict_probs(&Utterance::from_tokens(&["plz"]));
        assert!(p[0].is_finite());
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let (data, styles) = marker_data(6);
        let clf = StyleClassifier::train(tiny_config(), &data, styles).unwrap();
        let path = dir.path().join("clf.ckpt");
        clf.save(&path).unwrap();
        let loaded = StyleClassifier::load(&path).unwrap();
        for item in &data {
            let a = clf.predict_probs(&item.utterance);
            let b = loaded.predict_probs(&item.utterance);
            assert_eq!(a[0].to_bits(), b[0].to_bits());
            assert_eq!(a[1].to_bits(), b[1].to_bits());
        }
        assert_eq!(clf.fingerprint(), loaded.fingerprint());
    }

    #[test]
    fn loading_a_model_checkpoint_as_classifier_fails_with_kind_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        let arr = ndarray::array![[1.0]];
        checkpoint::save(&path, CheckpointKind::Model, &serde_json::json!({}), &[&arr]).unwrap();
        assert!(matches!(
            StyleClassifier::load(&path),
            Err(ClassifierError::Checkpoint(CheckpointError::WrongKind { .. }))
        ));
    }

    #[test]
    fn filter_keeps_only_confident_pairs_strictly_above_sigma() {
        let (data, styles) = marker_data(16);
        let clf = StyleClassifier::train(tiny_config(), &data, styles.clone()).unwrap();
        let confident = SentencePair::new(
            Utterance::from_tokens(&["plz", "give", "me"]),
            Utterance::from_tokens(&["please", "give", "me"]),
            styles.s1.clone(),
            styles.s2.clone(),
        )
        .unwrap();
        let wrong_way = SentencePair::new(
            Utterance::from_tokens(&["please", "give", "me"]),
            Utterance::from_tokens(&["plz", "give", "me"]),
            styles.s1.clone(),
            styles.s2.clone(),
        )
        .unwrap();
        let kept = clf
            .filter_paraphrases(&[confident.clone(), wrong_way], 0.85)
            .unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].source, confident.source);
        // sigma = 1.0 can never be strictly exceeded.
        assert!(clf.filter_paraphrases(&[confident], 1.0).unwrap().is_empty());
    }

    #[test]
    fn conv_block_gradients_match_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut block = ConvBlock::new(2, 3, 4, &mut rng);
        let emb = Array2::from_shape_fn((5, 3), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64 + 0.05);
        let w = Array2::from_shape_fn((1, 4), |(_, j)| j as f64 - 1.5);

        block.forward(&emb);
        let demb = block.backward(&w);

        let probe = block.clone();
        let mut ev = emb.clone();
        let num = finite_diff_grad(&mut ev, |cand| {
            probe.apply(cand).iter().zip(w.iter()).map(|(a, b)| a * b).sum()
        });
        assert_close(&demb, &num, 1e-5);
    }
}
