//! Multi-head scaled dot-product attention over batches of equal-length
//! (padded) sentences, with explicit backward.

use ndarray::{s, Array2};
use rand::Rng;

use super::layers::Linear;
use super::{softmax_rows, Param};

/// Additive mask value for positions attention must not see. Large and
/// finite, so a fully padded row still softmaxes without NaN.
pub const MASK_OFF: f64 = -1e30;

#[derive(Debug, Clone)]
struct AttnCache {
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>, // indexed by b * heads + h
    batch: usize,
    nq: usize,
    nk: usize,
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub wq: Linear,
    pub wk: Linear,
    pub wv: Linear,
    pub wo: Linear,
    pub heads: usize,
    dim: usize,
    cache: Option<AttnCache>,
}

impl MultiHeadAttention {
    pub fn new(dim: usize, heads: usize, rng: &mut impl Rng) -> Self {
        assert_eq!(dim % heads, 0, "model dim must divide into heads");
        MultiHeadAttention {
            wq: Linear::new(dim, dim, rng),
            wk: Linear::new(dim, dim, rng),
            wv: Linear::new(dim, dim, rng),
            wo: Linear::new(dim, dim, rng),
            heads,
            dim,
            cache: None,
        }
    }

    /// Batched training forward. `q_in` is `batch` sentences of `nq` rows
    /// laid out contiguously, `kv_in` likewise with `nk` rows. `masks` holds
    /// one additive [nq, nk] bias per sentence (0 = visible, [`MASK_OFF`] =
    /// hidden). For self-attention pass the same array as both inputs and sum
    /// the two gradients backward returns.
    pub fn forward(
        &mut self,
        q_in: &Array2<f64>,
        kv_in: &Array2<f64>,
        batch: usize,
        masks: &[Array2<f64>],
    ) -> Array2<f64> {
        assert_eq!(masks.len(), batch);
        let nq = q_in.nrows() / batch;
        let nk = kv_in.nrows() / batch;
        let q = self.wq.forward(q_in);
        let k = self.wk.forward(kv_in);
        let v = self.wv.forward(kv_in);
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut ctx = Array2::zeros((batch * nq, self.dim));
        let mut probs = Vec::with_capacity(batch * self.heads);
        for b in 0..batch {
            for h in 0..self.heads {
                let qs = q.slice(s![b * nq..(b + 1) * nq, h * dh..(h + 1) * dh]);
                let ks = k.slice(s![b * nk..(b + 1) * nk, h * dh..(h + 1) * dh]);
                let vs = v.slice(s![b * nk..(b + 1) * nk, h * dh..(h + 1) * dh]);
                let scores = qs.dot(&ks.t()) * scale + &masks[b];
                let a = softmax_rows(&scores);
                ctx.slice_mut(s![b * nq..(b + 1) * nq, h * dh..(h + 1) * dh])
                    .assign(&a.dot(&vs));
                probs.push(a);
            }
        }
        self.cache = Some(AttnCache {
            q,
            k,
            v,
            probs,
            batch,
            nq,
            nk,
        });
        self.wo.forward(&ctx)
    }

    /// Returns (d q_in, d kv_in).
    pub fn backward(&mut self, dy: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let dctx = self.wo.backward(dy);
        let cache = self.cache.take().expect("forward before backward");
        let AttnCache {
            q,
            k,
            v,
            probs,
            batch,
            nq,
            nk,
        } = cache;
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut dq = Array2::zeros(q.raw_dim());
        let mut dk = Array2::zeros(k.raw_dim());
        let mut dv = Array2::zeros(v.raw_dim());
        for b in 0..batch {
            for h in 0..self.heads {
                let a = &probs[b * self.heads + h];
                let qs = q.slice(s![b * nq..(b + 1) * nq, h * dh..(h + 1) * dh]);
                let ks = k.slice(s![b * nk..(b + 1) * nk, h * dh..(h + 1) * dh]);
                let vs = v.slice(s![b * nk..(b + 1) * nk, h * dh..(h + 1) * dh]);
                let dctx_s = dctx.slice(s![b * nq..(b + 1) * nq, h * dh..(h + 1) * dh]);

                let da = dctx_s.dot(&vs.t());
                let dvs = a.t().dot(&dctx_s);
                // Softmax backward per row: a * (da - sum(da * a)).
                let mut dscores = &da * a;
                for (mut drow, arow) in dscores
                    .axis_iter_mut(ndarray::Axis(0))
                    .zip(a.axis_iter(ndarray::Axis(0)))
                {
                    let dot: f64 = drow.sum();
                    drow.zip_mut_with(&arow.to_owned(), |d, &av| *d -= dot * av);
                }
                dscores *= scale;

                dq.slice_mut(s![b * nq..(b + 1) * nq, h * dh..(h + 1) * dh])
                    .assign(&dscores.dot(&ks));
                dk.slice_mut(s![b * nk..(b + 1) * nk, h * dh..(h + 1) * dh])
                    .assign(&dscores.t().dot(&qs));
                dv.slice_mut(s![b * nk..(b + 1) * nk, h * dh..(h + 1) * dh])
                    .assign(&dvs);
            }
        }
        let dq_in = self.wq.backward(&dq);
        let dk_in = self.wk.backward(&dk);
        let dv_in = self.wv.backward(&dv);
        (dq_in, dk_in + dv_in)
    }

    /// Inference: projects keys and values once, for reuse across decode steps.
    pub fn project_kv(&self, kv_in: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        (self.wk.apply(kv_in), self.wv.apply(kv_in))
    }

    /// Inference attention for one sentence given already-projected K and V.
    pub fn attend(
        &self,
        q_in: &Array2<f64>,
        k: &Array2<f64>,
        v: &Array2<f64>,
        mask: Option<&Array2<f64>>,
    ) -> Array2<f64> {
        let q = self.wq.apply(q_in);
        let dh = self.dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut ctx = Array2::zeros((q.nrows(), self.dim));
        for h in 0..self.heads {
            let qs = q.slice(s![.., h * dh..(h + 1) * dh]);
            let ks = k.slice(s![.., h * dh..(h + 1) * dh]);
            let vs = v.slice(s![.., h * dh..(h + 1) * dh]);
            let mut scores = qs.dot(&ks.t()) * scale;
            if let Some(m) = mask {
                scores += m;
            }
            let a = softmax_rows(&scores);
            ctx.slice_mut(s![.., h * dh..(h + 1) * dh]).assign(&a.dot(&vs));
        }
        self.wo.apply(&ctx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.wq.params_mut();
        p.extend(self.wk.params_mut());
        p.extend(self.wv.params_mut());
        p.extend(self.wo.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.wq.params();
        p.extend(self.wk.params());
        p.extend(self.wv.params());
        p.extend(self.wo.params());
        p
    }
}

/// [n, n] additive causal mask: row i sees columns 0..=i.
pub fn causal_mask(n: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| if j <= i { 0.0 } else { MASK_OFF })
}

/// [nq, nk] additive mask hiding key positions at or past `valid` (padding).
pub fn key_padding_mask(nq: usize, nk: usize, valid: usize) -> Array2<f64> {
    Array2::from_shape_fn((nq, nk), |(_, j)| if j < valid { 0.0 } else { MASK_OFF })
}

/// Causal mask that additionally hides padded key positions.
pub fn causal_padding_mask(n: usize, valid: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, n), |(i, j)| {
        if j <= i && j < valid {
            0.0
        } else {
            MASK_OFF
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{assert_close, finite_diff_grad};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(11)
    }

    #[test]
    fn single_head_identity_projections_average_values() {
        // With identity-ish tiny weights and uniform scores the output is the
        // mean of V rows; verify the plumbing with zeroed Q so scores are flat.
        let mut mha = MultiHeadAttention::new(2, 1, &mut rng());
        mha.wq.w.value.fill(0.0);
        mha.wq.b.value.fill(0.0);
        mha.wk.w.value = ndarray::Array2::eye(2);
        mha.wk.b.value.fill(0.0);
        mha.wv.w.value = ndarray::Array2::eye(2);
        mha.wv.b.value.fill(0.0);
        mha.wo.w.value = ndarray::Array2::eye(2);
        mha.wo.b.value.fill(0.0);
        let x = ndarray::array![[2.0, 0.0], [0.0, 4.0]];
        let mask = Array2::zeros((2, 2));
        let y = mha.forward(&x.clone(), &x, 1, &[mask]);
        for row in y.rows() {
            assert!((row[0] - 1.0).abs() < 1e-12);
            assert!((row[1] - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn causal_mask_blocks_future_positions() {
        let m = causal_mask(3);
        assert_eq!(m[[0, 0]], 0.0);
        assert_eq!(m[[0, 1]], MASK_OFF);
        assert_eq!(m[[2, 1]], 0.0);

        let kp = key_padding_mask(2, 4, 3);
        assert_eq!(kp[[1, 2]], 0.0);
        assert_eq!(kp[[1, 3]], MASK_OFF);

        let cp = causal_padding_mask(3, 2);
        assert_eq!(cp[[2, 1]], 0.0);
        assert_eq!(cp[[2, 2]], MASK_OFF);
    }

    #[test]
    fn masked_positions_get_no_gradient_and_no_weight() {
        let mut mha = MultiHeadAttention::new(4, 2, &mut rng());
        let q = Array2::from_shape_fn((3, 4), |(i, j)| (i + j) as f64 * 0.1);
        let kv = Array2::from_shape_fn((3, 4), |(i, j)| (i as f64 - j as f64) * 0.2);
        // Hide key 2 entirely.
        let mask = key_padding_mask(3, 3, 2);
        mha.forward(&q, &kv, 1, &[mask]);
        let cache = mha.cache.as_ref().unwrap();
        for a in &cache.probs {
            assert!(a.column(2).iter().all(|&p| p < 1e-12));
        }
        let dy = Array2::ones((3, 4));
        let (_, dkv) = mha.backward(&dy);
        // The hidden key row receives gradient only through the value/key
        // projections' inputs being shared rows; with probs ~0 its dv is ~0.
        assert!(dkv.row(2).iter().all(|&g| g.abs() < 1e-9));
    }

    #[test]
    fn cross_attention_gradients_match_finite_difference() {
        let mut mha = MultiHeadAttention::new(4, 2, &mut rng());
        let q_in = Array2::from_shape_fn((2, 4), |(i, j)| 0.3 * i as f64 - 0.2 * j as f64 + 0.1);
        let kv_in = Array2::from_shape_fn((3, 4), |(i, j)| 0.15 * (i * 4 + j) as f64 - 0.4);
        let w = Array2::from_shape_fn((2, 4), |(i, j)| ((i * 3 + j) % 4) as f64 - 1.5);
        let mask = Array2::zeros((2, 3));

        mha.forward(&q_in, &kv_in, 1, std::slice::from_ref(&mask));
        let (dq_in, dkv_in) = mha.backward(&w);

        let probe = mha.clone();
        let loss = |qi: &Array2<f64>, kvi: &Array2<f64>| -> f64 {
            let (k, v) = probe.project_kv(kvi);
            probe
                .attend(qi, &k, &v, Some(&mask))
                .iter()
                .zip(w.iter())
                .map(|(a, b)| a * b)
                .sum()
        };

        let mut qv = q_in.clone();
        let num_dq = finite_diff_grad(&mut qv, |cand| loss(cand, &kv_in));
        assert_close(&dq_in, &num_dq, 1e-5);

        let mut kvv = kv_in.clone();
        let num_dkv = finite_diff_grad(&mut kvv, |cand| loss(&q_in, cand));
        assert_close(&dkv_in, &num_dkv, 1e-5);
    }

    #[test]
    fn batched_forward_equals_per_sentence_forward() {
        let mut mha = MultiHeadAttention::new(4, 2, &mut rng());
        let a = Array2::from_shape_fn((3, 4), |(i, j)| 0.2 * i as f64 + 0.1 * j as f64);
        let b = Array2::from_shape_fn((3, 4), |(i, j)| -0.1 * i as f64 + 0.3 * j as f64);
        let mask = causal_mask(3);

        let mut stacked = Array2::zeros((6, 4));
        stacked.slice_mut(s![0..3, ..]).assign(&a);
        stacked.slice_mut(s![3..6, ..]).assign(&b);
        let batched = mha.forward(&stacked.clone(), &stacked, 2, &[mask.clone(), mask.clone()]);

        let ya = mha.forward(&a.clone(), &a, 1, std::slice::from_ref(&mask));
        let yb = mha.forward(&b.clone(), &b, 1, std::slice::from_ref(&mask));
        assert_close(&batched.slice(s![0..3, ..]).to_owned(), &ya, 1e-12);
        assert_close(&batched.slice(s![3..6, ..]).to_owned(), &yb, 1e-12);
    }
}
