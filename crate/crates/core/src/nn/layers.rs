//! Layers with explicit forward/backward passes. Each layer caches what its
//! own backward needs from the most recent forward, so call order matters:
//! forward, then backward, once per step.

use ndarray::{Array2, Axis};
use rand::Rng;

use super::Param;

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Param,
    pub b: Param,
    cache_x: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(dim_in: usize, dim_out: usize, rng: &mut impl Rng) -> Self {
        Linear {
            w: Param::xavier(dim_in, dim_out, rng),
            b: Param::zeros(1, dim_out),
            cache_x: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        self.cache_x = Some(x.clone());
        x.dot(&self.w.value) + &self.b.value
    }

    /// Inference-only forward: no cache, immutable.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.w.value) + &self.b.value
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache_x.as_ref().expect("forward before backward");
        self.w.grad += &x.t().dot(dy);
        self.b.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        dy.dot(&self.w.value.t())
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.w, &mut self.b]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.w, &self.b]
    }
}

/// Token-id lookup table. Rows of ids map to rows of the output.
#[derive(Debug, Clone)]
pub struct Embedding {
    pub table: Param,
    cache_ids: Option<Vec<usize>>,
}

impl Embedding {
    pub fn new(vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Embedding {
            table: Param::xavier(vocab, dim, rng),
            cache_ids: None,
        }
    }

    pub fn forward(&mut self, ids: &[usize]) -> Array2<f64> {
        self.cache_ids = Some(ids.to_vec());
        self.lookup(ids)
    }

    pub fn lookup(&self, ids: &[usize]) -> Array2<f64> {
        let dim = self.table.value.ncols();
        let mut out = Array2::zeros((ids.len(), dim));
        for (row, &id) in ids.iter().enumerate() {
            out.row_mut(row).assign(&self.table.value.row(id));
        }
        out
    }

    pub fn backward(&mut self, dy: &Array2<f64>) {
        let ids = self.cache_ids.as_ref().expect("forward before backward");
        for (row, &id) in ids.iter().enumerate() {
            let mut g = self.table.grad.row_mut(id);
            g += &dy.row(row);
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.table]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.table]
    }
}

/// Per-row layer normalization with learned scale and shift.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: Param,
    pub beta: Param,
    eps: f64,
    cache: Option<(Array2<f64>, Vec<f64>)>, // normalized x, per-row 1/std
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Param::new(Array2::ones((1, dim))),
            beta: Param::zeros(1, dim),
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let (norm, inv_std) = self.normalize(x);
        let out = &norm * &self.gamma.value + &self.beta.value;
        self.cache = Some((norm, inv_std));
        out
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let (norm, _) = self.normalize(x);
        &norm * &self.gamma.value + &self.beta.value
    }

    fn normalize(&self, x: &Array2<f64>) -> (Array2<f64>, Vec<f64>) {
        let d = x.ncols() as f64;
        let mut norm = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        for mut row in norm.axis_iter_mut(Axis(0)) {
            let mean = row.sum() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let is = 1.0 / (var + self.eps).sqrt();
            row.mapv_inplace(|v| (v - mean) * is);
            inv_std.push(is);
        }
        (norm, inv_std)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let (norm, inv_std) = self.cache.as_ref().expect("forward before backward");
        let d = dy.ncols() as f64;
        self.gamma.grad += &(dy * norm).sum_axis(Axis(0)).insert_axis(Axis(0));
        self.beta.grad += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
        let mut dx = Array2::zeros(dy.raw_dim());
        for i in 0..dy.nrows() {
            let dnorm: Vec<f64> = dy
                .row(i)
                .iter()
                .zip(self.gamma.value.row(0))
                .map(|(g, gam)| g * gam)
                .collect();
            let n = norm.row(i);
            let sum_dnorm: f64 = dnorm.iter().sum();
            let sum_dnorm_norm: f64 = dnorm.iter().zip(n).map(|(a, b)| a * b).sum();
            for (j, out) in dx.row_mut(i).iter_mut().enumerate() {
                *out = inv_std[i] * (dnorm[j] - sum_dnorm / d - n[j] * sum_dnorm_norm / d);
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> Vec<&Param> {
        vec![&self.gamma, &self.beta]
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Option<Array2<f64>>,
}

impl Relu {
    pub fn new() -> Self {
        Relu::default()
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let mask = x.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let out = x * &mask;
        self.mask = Some(mask);
        out
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.mapv(|v| v.max(0.0))
    }

    pub fn backward(&self, dy: &Array2<f64>) -> Array2<f64> {
        dy * self.mask.as_ref().expect("forward before backward")
    }
}

/// Position-wise feed-forward block: Linear -> ReLU -> Linear.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub lin1: Linear,
    pub lin2: Linear,
    relu: Relu,
}

impl FeedForward {
    pub fn new(dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        FeedForward {
            lin1: Linear::new(dim, hidden, rng),
            lin2: Linear::new(hidden, dim, rng),
            relu: Relu::new(),
        }
    }

    pub fn forward(&mut self, x: &Array2<f64>) -> Array2<f64> {
        let h = self.lin1.forward(x);
        let a = self.relu.forward(&h);
        self.lin2.forward(&a)
    }

    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        self.lin2.apply(&self.relu.apply(&self.lin1.apply(x)))
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let da = self.lin2.backward(dy);
        let dh = self.relu.backward(&da);
        self.lin1.backward(&dh)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut p = self.lin1.params_mut();
        p.extend(self.lin2.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut p = self.lin1.params();
        p.extend(self.lin2.params());
        p
    }
}

/// Sinusoidal position table, added to embeddings. No trainable state.
#[derive(Debug, Clone)]
pub struct PositionalEncoding {
    table: Array2<f64>,
}

impl PositionalEncoding {
    pub fn new(max_len: usize, dim: usize) -> Self {
        let mut table = Array2::zeros((max_len, dim));
        for pos in 0..max_len {
            for i in 0..dim {
                let angle = pos as f64 / 10_000f64.powf((2 * (i / 2)) as f64 / dim as f64);
                table[[pos, i]] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
            }
        }
        PositionalEncoding { table }
    }

    /// Adds position rows to `x`, whose rows are `batch` sentences of length
    /// `len` laid out contiguously.
    pub fn add(&self, x: &mut Array2<f64>, len: usize) {
        for (row, mut out) in x.axis_iter_mut(Axis(0)).enumerate() {
            out += &self.table.row(row % len);
        }
    }

    /// The encoding row for one absolute position.
    pub fn at(&self, pos: usize) -> ndarray::ArrayView1<'_, f64> {
        self.table.row(pos)
    }

    pub fn max_len(&self) -> usize {
        self.table.nrows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{assert_close, finite_diff_grad};
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(42)
    }

    // Scalar objective for gradient checks: weighted sum of outputs, so
    // d(loss)/d(out) is just the weight matrix.
    fn weights(rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |(i, j)| ((i * 7 + j * 3) % 5) as f64 - 2.0)
    }

    #[test]
    fn linear_forward_matches_hand_math() {
        let mut lin = Linear::new(2, 2, &mut rng());
        lin.w.value = array![[1.0, 2.0], [3.0, 4.0]];
        lin.b.value = array![[0.5, -0.5]];
        let y = lin.forward(&array![[1.0, 1.0]]);
        assert_eq!(y, array![[4.5, 5.5]]);
    }

    #[test]
    fn linear_gradients_match_finite_difference() {
        let mut lin = Linear::new(3, 2, &mut rng());
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let w = weights(4, 2);

        let y = lin.forward(&x);
        let dx = lin.backward(&w);
        assert_eq!(y.nrows(), 4);

        let mut wv = lin.w.value.clone();
        let num_dw = finite_diff_grad(&mut wv, |cand| {
            (x.dot(cand) + &lin.b.value).iter().zip(w.iter()).map(|(a, b)| a * b).sum()
        });
        assert_close(&lin.w.grad, &num_dw, 1e-6);

        let mut xv = x.clone();
        let num_dx = finite_diff_grad(&mut xv, |cand| {
            (cand.dot(&lin.w.value) + &lin.b.value)
                .iter()
                .zip(w.iter())
                .map(|(a, b)| a * b)
                .sum()
        });
        assert_close(&dx, &num_dx, 1e-6);
    }

    #[test]
    fn embedding_accumulates_grads_for_repeated_ids() {
        let mut emb = Embedding::new(5, 3, &mut rng());
        let ids = [2usize, 2, 4];
        let out = emb.forward(&ids);
        assert_eq!(out.nrows(), 3);
        let dy = Array2::ones((3, 3));
        emb.backward(&dy);
        assert!(emb.table.grad.row(2).iter().all(|&g| (g - 2.0).abs() < 1e-12));
        assert!(emb.table.grad.row(4).iter().all(|&g| (g - 1.0).abs() < 1e-12));
        assert!(emb.table.grad.row(0).iter().all(|&g| g == 0.0));
    }

    #[test]
    fn layernorm_rows_have_zero_mean_unit_var() {
        let mut ln = LayerNorm::new(4);
        let x = array![[1.0, 2.0, 3.0, 4.0], [-5.0, 0.0, 5.0, 10.0]];
        let y = ln.forward(&x);
        for row in y.axis_iter(Axis(0)) {
            let mean = row.sum() / 4.0;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
            assert!(mean.abs() < 1e-9);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn layernorm_gradients_match_finite_difference() {
        let mut ln = LayerNorm::new(5);
        ln.gamma.value = array![[1.1, 0.9, 1.3, 0.7, 1.0]];
        ln.beta.value = array![[0.1, -0.2, 0.0, 0.3, -0.1]];
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64 * 0.17 - 1.0);
        let w = weights(3, 5);

        ln.forward(&x);
        let dx = ln.backward(&w);

        let mut xv = x.clone();
        let num_dx = finite_diff_grad(&mut xv, |cand| {
            ln.apply(cand).iter().zip(w.iter()).map(|(a, b)| a * b).sum()
        });
        assert_close(&dx, &num_dx, 1e-5);

        let mut gv = ln.gamma.value.clone();
        let beta = ln.beta.value.clone();
        let eps = ln.eps;
        let num_dgamma = finite_diff_grad(&mut gv, |cand| {
            let probe = LayerNorm {
                gamma: Param::new(cand.clone()),
                beta: Param::new(beta.clone()),
                eps,
                cache: None,
            };
            probe.apply(&x).iter().zip(w.iter()).map(|(a, b)| a * b).sum()
        });
        assert_close(&ln.gamma.grad, &num_dgamma, 1e-5);
    }

    #[test]
    fn feedforward_gradients_match_finite_difference() {
        let mut ff = FeedForward::new(3, 6, &mut rng());
        let x = Array2::from_shape_fn((2, 3), |(i, j)| 0.4 * (i as f64 + 1.0) - 0.3 * j as f64);
        let w = weights(2, 3);
        ff.forward(&x);
        let dx = ff.backward(&w);
        let mut xv = x.clone();
        let num_dx = finite_diff_grad(&mut xv, |cand| {
            ff.apply(cand).iter().zip(w.iter()).map(|(a, b)| a * b).sum()
        });
        assert_close(&dx, &num_dx, 1e-5);
    }

    #[test]
    fn positional_encoding_repeats_per_sentence() {
        let pe = PositionalEncoding::new(8, 4);
        let mut x = Array2::zeros((6, 4)); // two sentences of length 3
        pe.add(&mut x, 3);
        let first = x.row(0).to_owned();
        let fourth = x.row(3).to_owned();
        assert_eq!(first, fourth);
        assert_ne!(x.row(0).to_owned(), x.row(1).to_owned());
    }
}
