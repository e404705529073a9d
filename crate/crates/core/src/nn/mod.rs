//! Minimal layer-wise neural net plumbing: parameters with gradients, Adam,
//! stable softmax/log-softmax, and initialization.
//!
//! Everything is f64 and every parameter is a 2-D matrix, which keeps the
//! backward passes hand-checkable and the finite-difference tests tight.

pub mod attention;
pub mod layers;

use ndarray::{Array2, Axis};
use rand::Rng;

/// A trainable matrix with its gradient and Adam state.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
    m: Array2<f64>,
    v: Array2<f64>,
}

impl Param {
    pub fn new(value: Array2<f64>) -> Self {
        let shape = value.raw_dim();
        Param {
            value,
            grad: Array2::zeros(shape),
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param::new(Array2::zeros((rows, cols)))
    }

    /// Uniform Xavier/Glorot init over (fan_in + fan_out).
    pub fn xavier(rows: usize, cols: usize, rng: &mut impl Rng) -> Self {
        let a = (6.0 / (rows + cols) as f64).sqrt();
        Param::new(Array2::from_shape_fn((rows, cols), |_| {
            rng.gen_range(-a..a)
        }))
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }

    pub fn numel(&self) -> usize {
        self.value.len()
    }
}

/// Adam with bias correction. One instance per model; `step` advances the
/// shared timestep once and updates every parameter it is handed.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
        }
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for p in params {
            p.m.zip_mut_with(&p.grad, |m, &g| *m = self.beta1 * *m + (1.0 - self.beta1) * g);
            p.v.zip_mut_with(&p.grad, |v, &g| *v = self.beta2 * *v + (1.0 - self.beta2) * g * g);
            let lr = self.lr;
            let eps = self.eps;
            ndarray::Zip::from(&mut p.value)
                .and(&p.m)
                .and(&p.v)
                .for_each(|w, &m, &v| {
                    *w -= lr * (m / bc1) / ((v / bc2).sqrt() + eps);
                });
        }
    }
}

/// L2 norm over all gradients, the usual training-health signal.
pub fn grad_norm(params: &[&Param]) -> f64 {
    params
        .iter()
        .map(|p| p.grad.iter().map(|g| g * g).sum::<f64>())
        .sum::<f64>()
        .sqrt()
}

pub fn zero_grads(params: Vec<&mut Param>) {
    for p in params {
        p.zero_grad();
    }
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum: f64 = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Row-wise log-softmax, numerically stable.
pub fn log_softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.axis_iter_mut(Axis(0)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        row.mapv_inplace(|v| v - lse);
    }
    out
}

/// Per-row negative log-likelihood of `targets` under softmax(logits),
/// weighted per row, plus d(loss)/d(logits) for the same weighting.
/// Rows with weight 0 contribute nothing to either.
pub fn weighted_nll(
    logits: &Array2<f64>,
    targets: &[usize],
    weights: &[f64],
) -> (f64, Array2<f64>) {
    assert_eq!(logits.nrows(), targets.len());
    assert_eq!(logits.nrows(), weights.len());
    let logp = log_softmax_rows(logits);
    let mut loss = 0.0;
    let mut dlogits = Array2::zeros(logits.raw_dim());
    for (i, (&t, &w)) in targets.iter().zip(weights).enumerate() {
        if w == 0.0 {
            continue;
        }
        loss -= w * logp[[i, t]];
        // d(-w log softmax_t)/dlogits = w (softmax - onehot_t)
        let row_logp = logp.row(i);
        let mut drow = dlogits.row_mut(i);
        for (j, d) in drow.iter_mut().enumerate() {
            *d = w * row_logp[j].exp();
        }
        drow[t] -= w;
    }
    (loss, dlogits)
}

#[cfg(test)]
pub(crate) fn finite_diff_grad(
    param: &mut Array2<f64>,
    mut loss_fn: impl FnMut(&Array2<f64>) -> f64,
) -> Array2<f64> {
    let h = 1e-5;
    let mut grad = Array2::zeros(param.raw_dim());
    for idx in 0..param.len() {
        let (r, c) = (idx / param.ncols(), idx % param.ncols());
        let orig = param[[r, c]];
        param[[r, c]] = orig + h;
        let up = loss_fn(param);
        param[[r, c]] = orig - h;
        let down = loss_fn(param);
        param[[r, c]] = orig;
        grad[[r, c]] = (up - down) / (2.0 * h);
    }
    grad
}

#[cfg(test)]
pub(crate) fn assert_close(a: &Array2<f64>, b: &Array2<f64>, rel: f64) {
    assert_eq!(a.shape(), b.shape());
    for (x, y) in a.iter().zip(b.iter()) {
        let denom = x.abs().max(y.abs()).max(1e-8);
        assert!(
            (x - y).abs() / denom < rel,
            "mismatch: {x} vs {y} (rel {})",
            (x - y).abs() / denom
        );
    }
}
