//! A deliberately small encoder-decoder transformer, sized so the whole
//! training loop runs on a laptop CPU in minutes. Pre-norm residual blocks,
//! sinusoidal positions, separate encoder/decoder embeddings, an untied
//! output head, and Adam. All math is f64 and single-threaded, so a fixed
//! seed reproduces training bit for bit.

use std::path::Path;

use ndarray::{concatenate, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{self, CheckpointError, CheckpointKind};
use crate::corpus::{SentencePair, Utterance, Vocab, BOS, EOS, PAD, UNK};
use crate::nn::attention::{
    causal_padding_mask, key_padding_mask, MultiHeadAttention, MASK_OFF,
};
use crate::nn::layers::{Embedding, FeedForward, LayerNorm, Linear, PositionalEncoding};
use crate::nn::{grad_norm, log_softmax_rows, weighted_nll, zero_grads, Adam, Param};
use crate::rewards::DecodeOutcome;

use super::{LossTerm, ModelError, Seq2Seq, StepStats};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub vocab_size: usize,
    pub dim: usize,
    pub heads: usize,
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub ffn_hidden: usize,
    pub max_len: usize,
    pub max_decode_len: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab_size: 1000,
            dim: 128,
            heads: 4,
            enc_layers: 2,
            dec_layers: 2,
            ffn_hidden: 256,
            max_len: 64,
            max_decode_len: 64,
            lr: 3e-4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct EncoderLayer {
    ln1: LayerNorm,
    attn: MultiHeadAttention,
    ln2: LayerNorm,
    ffn: FeedForward,
}

impl EncoderLayer {
    fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        EncoderLayer {
            ln1: LayerNorm::new(cfg.dim),
            attn: MultiHeadAttention::new(cfg.dim, cfg.heads, rng),
            ln2: LayerNorm::new(cfg.dim),
            ffn: FeedForward::new(cfg.dim, cfg.ffn_hidden, rng),
        }
    }

    fn forward(&mut self, x: &Array2<f64>, batch: usize, masks: &[Array2<f64>]) -> Array2<f64> {
        let a = self.ln1.forward(x);
        let x1 = x + &self.attn.forward(&a, &a, batch, masks);
        let b = self.ln2.forward(&x1);
        &x1 + &self.ffn.forward(&b)
    }

    fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let db = self.ffn.backward(dy);
        let dx1 = dy + &self.ln2.backward(&db);
        let (dq, dkv) = self.attn.backward(&dx1);
        &dx1 + &self.ln1.backward(&(dq + dkv))
    }

    /// Cache-free single-sentence forward for decoding.
    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let a = self.ln1.apply(x);
        let (k, v) = self.attn.project_kv(&a);
        let x1 = x + &self.attn.attend(&a, &k, &v, None);
        let b = self.ln2.apply(&x1);
        &x1 + &self.ffn.apply(&b)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.ln1.params_mut();
        p.extend(self.attn.params_mut());
        p.extend(self.ln2.params_mut());
        p.extend(self.ffn.params_mut());
        p
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.ln1.params();
        p.extend(self.attn.params());
        p.extend(self.ln2.params());
        p.extend(self.ffn.params());
        p
    }
}

#[derive(Debug, Clone)]
struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: MultiHeadAttention,
    ln2: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln3: LayerNorm,
    ffn: FeedForward,
}

impl DecoderLayer {
    fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        DecoderLayer {
            ln1: LayerNorm::new(cfg.dim),
            self_attn: MultiHeadAttention::new(cfg.dim, cfg.heads, rng),
            ln2: LayerNorm::new(cfg.dim),
            cross_attn: MultiHeadAttention::new(cfg.dim, cfg.heads, rng),
            ln3: LayerNorm::new(cfg.dim),
            ffn: FeedForward::new(cfg.dim, cfg.ffn_hidden, rng),
        }
    }

    fn forward(
        &mut self,
        x: &Array2<f64>,
        enc_out: &Array2<f64>,
        batch: usize,
        self_masks: &[Array2<f64>],
        cross_masks: &[Array2<f64>],
    ) -> Array2<f64> {
        let a = self.ln1.forward(x);
        let x1 = x + &self.self_attn.forward(&a, &a, batch, self_masks);
        let b = self.ln2.forward(&x1);
        let x2 = &x1 + &self.cross_attn.forward(&b, enc_out, batch, cross_masks);
        let c = self.ln3.forward(&x2);
        &x2 + &self.ffn.forward(&c)
    }

    /// Returns (d input, d encoder output).
    fn backward(&mut self, dy: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let dc = self.ffn.backward(dy);
        let dx2 = dy + &self.ln3.backward(&dc);
        let (db, denc) = self.cross_attn.backward(&dx2);
        let dx1 = &dx2 + &self.ln2.backward(&db);
        let (dq, dkv) = self.self_attn.backward(&dx1);
        let dx = &dx1 + &self.ln1.backward(&(dq + dkv));
        (dx, denc)
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.ln1.params_mut();
        p.extend(self.self_attn.params_mut());
        p.extend(self.ln2.params_mut());
        p.extend(self.cross_attn.params_mut());
        p.extend(self.ln3.params_mut());
        p.extend(self.ffn.params_mut());
        p
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.ln1.params();
        p.extend(self.self_attn.params());
        p.extend(self.ln2.params());
        p.extend(self.cross_attn.params());
        p.extend(self.ln3.params());
        p.extend(self.ffn.params());
        p
    }
}

/// Per-layer growing key/value cache for incremental decoding.
struct DecodeLayerState {
    self_k: Option<Array2<f64>>,
    self_v: Option<Array2<f64>>,
    enc_k: Array2<f64>,
    enc_v: Array2<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TinyHeader {
    backbone: String,
    config: ModelConfig,
    vocab: Vocab,
}

#[derive(Debug, Clone)]
pub struct TinyTransformer {
    config: ModelConfig,
    vocab: Vocab,
    enc_emb: Embedding,
    dec_emb: Embedding,
    posenc: PositionalEncoding,
    enc_layers: Vec<EncoderLayer>,
    enc_ln: LayerNorm,
    dec_layers: Vec<DecoderLayer>,
    dec_ln: LayerNorm,
    head: Linear,
    opt: Adam,
}

impl TinyTransformer {
    pub fn new(config: ModelConfig, vocab: Vocab) -> Self {
        assert!(vocab.len() >= Vocab::SPECIALS.len());
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let enc_emb = Embedding::new(vocab.len(), config.dim, &mut rng);
        let dec_emb = Embedding::new(vocab.len(), config.dim, &mut rng);
        let posenc =
            PositionalEncoding::new(config.max_len.max(config.max_decode_len) + 2, config.dim);
        let enc_layers = (0..config.enc_layers)
            .map(|_| EncoderLayer::new(&config, &mut rng))
            .collect();
        let enc_ln = LayerNorm::new(config.dim);
        let dec_layers = (0..config.dec_layers)
            .map(|_| DecoderLayer::new(&config, &mut rng))
            .collect();
        let dec_ln = LayerNorm::new(config.dim);
        let head = Linear::new(config.dim, vocab.len(), &mut rng);
        let opt = Adam::new(config.lr);
        TinyTransformer {
            config,
            vocab,
            enc_emb,
            dec_emb,
            posenc,
            enc_layers,
            enc_ln,
            dec_layers,
            dec_ln,
            head,
            opt,
        }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Source token ids: tokens truncated to fit, then end-of-sequence.
    fn source_ids(&self, source: &Utterance) -> Vec<usize> {
        let mut ids = self.vocab.encode(source);
        ids.truncate(self.config.max_len - 1);
        ids.push(EOS);
        ids
    }

    /// Target-side ids: (decoder input with BOS, training targets with EOS).
    fn target_ids(&self, target: &Utterance) -> (Vec<usize>, Vec<usize>) {
        let mut ids = self.vocab.encode(target);
        ids.truncate(self.config.max_len - 1);
        let mut dec_in = Vec::with_capacity(ids.len() + 1);
        dec_in.push(BOS);
        dec_in.extend(&ids);
        let mut dec_out = ids;
        dec_out.push(EOS);
        (dec_in, dec_out)
    }

    /// Teacher-forced batch forward producing the weighted NLL and, when
    /// `backprop` is set, parameter gradients.
    fn forward_batch(&mut self, terms: &[LossTerm], backprop: bool) -> Result<f64, ModelError> {
        if terms.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        for t in terms {
            if !t.weight.is_finite() {
                return Err(ModelError::BadWeight(t.weight));
            }
        }
        let batch = terms.len();
        let srcs: Vec<Vec<usize>> = terms.iter().map(|t| self.source_ids(&t.pair.source)).collect();
        let tgts: Vec<(Vec<usize>, Vec<usize>)> =
            terms.iter().map(|t| self.target_ids(&t.pair.target)).collect();
        let n_s = srcs.iter().map(Vec::len).max().unwrap();
        let n_t = tgts.iter().map(|(i, _)| i.len()).max().unwrap();

        let mut enc_ids = Vec::with_capacity(batch * n_s);
        let mut dec_ids = Vec::with_capacity(batch * n_t);
        let mut targets = Vec::with_capacity(batch * n_t);
        let mut weights = Vec::with_capacity(batch * n_t);
        let mut enc_masks = Vec::with_capacity(batch);
        let mut self_masks = Vec::with_capacity(batch);
        let mut cross_masks = Vec::with_capacity(batch);
        for (i, term) in terms.iter().enumerate() {
            let src = &srcs[i];
            let (dec_in, dec_out) = &tgts[i];
            enc_ids.extend(src);
            enc_ids.extend(std::iter::repeat(PAD).take(n_s - src.len()));
            dec_ids.extend(dec_in);
            dec_ids.extend(std::iter::repeat(PAD).take(n_t - dec_in.len()));
            targets.extend(dec_out);
            targets.extend(std::iter::repeat(PAD).take(n_t - dec_out.len()));
            weights.extend(std::iter::repeat(term.weight).take(dec_out.len()));
            weights.extend(std::iter::repeat(0.0).take(n_t - dec_out.len()));
            enc_masks.push(key_padding_mask(n_s, n_s, src.len()));
            self_masks.push(causal_padding_mask(n_t, dec_in.len()));
            cross_masks.push(key_padding_mask(n_t, n_s, src.len()));
        }

        let mut x = self.enc_emb.forward(&enc_ids);
        self.posenc.add(&mut x, n_s);
        for layer in &mut self.enc_layers {
            x = layer.forward(&x, batch, &enc_masks);
        }
        let enc_out = self.enc_ln.forward(&x);

        let mut y = self.dec_emb.forward(&dec_ids);
        self.posenc.add(&mut y, n_t);
        for layer in &mut self.dec_layers {
            y = layer.forward(&y, &enc_out, batch, &self_masks, &cross_masks);
        }
        let y = self.dec_ln.forward(&y);
        let logits = self.head.forward(&y);
        let (loss, dlogits) = weighted_nll(&logits, &targets, &weights);

        if backprop {
            let dy = self.head.backward(&dlogits);
            let mut dy = self.dec_ln.backward(&dy);
            let mut denc = Array2::zeros(enc_out.raw_dim());
            for layer in self.dec_layers.iter_mut().rev() {
                let (d, de) = layer.backward(&dy);
                dy = d;
                denc += &de;
            }
            self.dec_emb.backward(&dy);
            let mut dx = self.enc_ln.backward(&denc);
            for layer in self.enc_layers.iter_mut().rev() {
                dx = layer.backward(&dx);
            }
            self.enc_emb.backward(&dx);
        }
        Ok(loss)
    }

    fn encode_single(&self, src_ids: &[usize]) -> Array2<f64> {
        let mut x = self.enc_emb.lookup(src_ids);
        self.posenc.add(&mut x, src_ids.len());
        for layer in &self.enc_layers {
            x = layer.apply(&x);
        }
        self.enc_ln.apply(&x)
    }

    /// One decoder step for one sentence; grows each layer's KV cache.
    fn decode_step(
        &self,
        prev_id: usize,
        pos: usize,
        states: &mut [DecodeLayerState],
    ) -> Array2<f64> {
        let mut x = self.dec_emb.lookup(&[prev_id]);
        {
            let mut row = x.row_mut(0);
            row += &self.posenc.at(pos);
        }
        for (layer, state) in self.dec_layers.iter().zip(states.iter_mut()) {
            let a = layer.ln1.apply(&x);
            let (k_new, v_new) = layer.self_attn.project_kv(&a);
            state.self_k = Some(match state.self_k.take() {
                Some(k) => concatenate(Axis(0), &[k.view(), k_new.view()]).unwrap(),
                None => k_new,
            });
            state.self_v = Some(match state.self_v.take() {
                Some(v) => concatenate(Axis(0), &[v.view(), v_new.view()]).unwrap(),
                None => v_new,
            });
            let k = state.self_k.as_ref().unwrap();
            let v = state.self_v.as_ref().unwrap();
            let x1 = &x + &layer.self_attn.attend(&a, k, v, None);
            let b = layer.ln2.apply(&x1);
            let x2 = &x1 + &layer.cross_attn.attend(&b, &state.enc_k, &state.enc_v, None);
            let c = layer.ln3.apply(&x2);
            x = &x2 + &layer.ffn.apply(&c);
        }
        self.head.apply(&self.dec_ln.apply(&x))
    }

    /// Runs one full decode. `rng` drives ancestral sampling; `None` is
    /// greedy. Returns generated ids (specials excluded) and the per-step
    /// log-probabilities of every chosen token, end token included.
    fn decode_ids(
        &self,
        enc_out: &Array2<f64>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> (Vec<usize>, Vec<f64>) {
        let mut states: Vec<DecodeLayerState> = self
            .dec_layers
            .iter()
            .map(|layer| {
                let (enc_k, enc_v) = layer.cross_attn.project_kv(enc_out);
                DecodeLayerState {
                    self_k: None,
                    self_v: None,
                    enc_k,
                    enc_v,
                }
            })
            .collect();
        let mut ids = Vec::new();
        let mut logprobs = Vec::new();
        let mut prev = BOS;
        for pos in 0..self.config.max_decode_len + 1 {
            let mut logits = self.decode_step(prev, pos, &mut states);
            // The model must emit real tokens or stop; never padding,
            // start, or unknown markers.
            for special in [PAD, BOS, UNK] {
                logits[[0, special]] += MASK_OFF;
            }
            let logp = log_softmax_rows(&logits);
            let row = logp.row(0);
            let chosen = match rng.as_deref_mut() {
                None => {
                    let mut best = 0usize;
                    for (i, &v) in row.iter().enumerate() {
                        if v > row[best] {
                            best = i;
                        }
                    }
                    best
                }
                Some(r) => {
                    let draw: f64 = r.gen();
                    let mut cum = 0.0;
                    let mut chosen = EOS;
                    for (i, &v) in row.iter().enumerate() {
                        cum += v.exp();
                        if draw < cum {
                            chosen = i;
                            break;
                        }
                    }
                    chosen
                }
            };
            logprobs.push(row[chosen]);
            if chosen == EOS {
                break;
            }
            ids.push(chosen);
            prev = chosen;
        }
        (ids, logprobs)
    }

    fn ids_to_utterance(&self, ids: &[usize]) -> Utterance {
        self.vocab.decode(ids)
    }

    fn params(&self) -> Vec<&Param> {
        let mut p = self.enc_emb.params();
        p.extend(self.dec_emb.params());
        for l in &self.enc_layers {
            p.extend(l.params());
        }
        p.extend(self.enc_ln.params());
        for l in &self.dec_layers {
            p.extend(l.params());
        }
        p.extend(self.dec_ln.params());
        p.extend(self.head.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.enc_emb.params_mut();
        p.extend(self.dec_emb.params_mut());
        for l in &mut self.enc_layers {
            p.extend(l.params_mut());
        }
        p.extend(self.enc_ln.params_mut());
        for l in &mut self.dec_layers {
            p.extend(l.params_mut());
        }
        p.extend(self.dec_ln.params_mut());
        p.extend(self.head.params_mut());
        p
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let (header, values): (serde_json::Value, Vec<Array2<f64>>) =
            checkpoint::load(path, CheckpointKind::Model)?;
        let backbone = header
            .get("backbone")
            .and_then(|b| b.as_str())
            .unwrap_or("")
            .to_string();
        if backbone != "tiny" {
            return Err(ModelError::UnsupportedBackbone { found: backbone });
        }
        let mut header: TinyHeader =
            serde_json::from_value(header).map_err(|e| CheckpointError::CorruptHeader {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
        header.vocab.reindex();
        let mut model = TinyTransformer::new(header.config, header.vocab);
        let expected = model.params().len();
        if values.len() != expected {
            return Err(ModelError::ParamCountMismatch {
                expected,
                found: values.len(),
            });
        }
        for (index, (param, value)) in model.params_mut().into_iter().zip(values).enumerate() {
            let expected = (param.value.nrows(), param.value.ncols());
            let found = (value.nrows(), value.ncols());
            if expected != found {
                return Err(ModelError::ParamShapeMismatch {
                    index,
                    expected,
                    found,
                });
            }
            param.value = value;
        }
        Ok(model)
    }

    /// Numerical self-check in the spirit of `torch.autograd.gradcheck`:
    /// compares the backward pass against central differences at `probes`
    /// randomly chosen parameter entries and returns the worst relative
    /// error. The weights are left exactly as they were.
    pub fn gradient_check(
        &mut self,
        terms: &[LossTerm],
        probes: usize,
        seed: u64,
    ) -> Result<f64, ModelError> {
        zero_grads(self.params_mut());
        self.forward_batch(terms, true)?;
        let analytic: Vec<Array2<f64>> = self.params().iter().map(|p| p.grad.clone()).collect();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 1e-5;
        let mut worst = 0.0f64;
        for _ in 0..probes {
            let which = rng.gen_range(0..analytic.len());
            let (rows, cols) = analytic[which].dim();
            let at = [rng.gen_range(0..rows), rng.gen_range(0..cols)];
            let original = self.params()[which].value[at];

            self.params_mut()[which].value[at] = original + h;
            let up = self.forward_batch(terms, false)?;
            self.params_mut()[which].value[at] = original - h;
            let down = self.forward_batch(terms, false)?;
            self.params_mut()[which].value[at] = original;

            let numeric = (up - down) / (2.0 * h);
            let exact = analytic[which][at];
            let scale = exact.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((exact - numeric).abs() / scale);
        }
        Ok(worst)
    }

    /// Serialized weights, for exact-identity comparisons.
    pub fn fingerprint(&self) -> Vec<u8> {
        let header = TinyHeader {
            backbone: "tiny".into(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        };
        let values: Vec<&Array2<f64>> = self.params().iter().map(|p| &p.value).collect();
        checkpoint::encode(CheckpointKind::Model, &header, &values)
            .expect("in-memory encode cannot fail")
    }
}

impl Seq2Seq for TinyTransformer {
    fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    fn nll_loss(&mut self, pairs: &[SentencePair]) -> Result<f64, ModelError> {
        if pairs.is_empty() {
            return Err(ModelError::EmptyBatch);
        }
        let w = 1.0 / pairs.len() as f64;
        let terms: Vec<LossTerm> = pairs.iter().map(|pair| LossTerm { pair, weight: w }).collect();
        self.forward_batch(&terms, false)
    }

    fn greedy_decode(&self, source: &Utterance) -> Result<Utterance, ModelError> {
        let enc_out = self.encode_single(&self.source_ids(source));
        let (ids, _) = self.decode_ids(&enc_out, None);
        Ok(self.ids_to_utterance(&ids))
    }

    fn sample_decode(&self, source: &Utterance, seed: u64) -> Result<DecodeOutcome, ModelError> {
        let enc_out = self.encode_single(&self.source_ids(source));
        let (greedy_ids, _) = self.decode_ids(&enc_out, None);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (sampled_ids, logprobs) = self.decode_ids(&enc_out, Some(&mut rng));
        Ok(DecodeOutcome {
            greedy: self.ids_to_utterance(&greedy_ids),
            sampled: self.ids_to_utterance(&sampled_ids),
            sampled_logprobs: logprobs,
        })
    }

    fn train_step(&mut self, terms: &[LossTerm]) -> Result<StepStats, ModelError> {
        zero_grads(self.params_mut());
        let loss = self.forward_batch(terms, true)?;
        let grad_norm = grad_norm(&self.params());
        let mut opt = self.opt.clone();
        opt.step(self.params_mut());
        self.opt = opt;
        Ok(StepStats { loss, grad_norm })
    }

    fn save(&self, path: &Path) -> Result<(), ModelError> {
        let header = TinyHeader {
            backbone: "tiny".into(),
            config: self.config.clone(),
            vocab: self.vocab.clone(),
        };
        let values: Vec<&Array2<f64>> = self.params().iter().map(|p| &p.value).collect();
        checkpoint::save(path, CheckpointKind::Model, &header, &values)?;
        Ok(())
    }

    fn restore(&mut self, path: &Path) -> Result<(), ModelError> {
        *self = TinyTransformer::load(path)?;
        Ok(())
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.numel()).sum()
    }
}
