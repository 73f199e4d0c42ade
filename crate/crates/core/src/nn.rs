//! Small dense neural-network kit with hand-written backward passes.
//!
//! Activations are row vectors (`&[f64]`); a dense layer computes
//! `y = x·W + b` with `W` stored row-major as `in × out`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NnError {
    #[error("invalid shape: {0}")]
    InvalidShape(String),
    #[error("empty input sequence")]
    EmptySequence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { shape: [rows, cols], data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NnError> {
        if data.len() != rows * cols {
            return Err(NnError::InvalidShape(format!("{} values for {rows}x{cols}", data.len())));
        }
        Ok(Tensor { shape: [rows, cols], data })
    }

    pub fn rows(&self) -> usize {
        self.shape[0]
    }

    pub fn cols(&self) -> usize {
        self.shape[1]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Param {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Param { value: Tensor::zeros(rows, cols), grad: Tensor::zeros(rows, cols) }
    }

    pub fn uniform(rows: usize, cols: usize, scale: f64, rng: &mut impl Rng) -> Self {
        let data = (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect();
        Param { value: Tensor { shape: [rows, cols], data }, grad: Tensor::zeros(rows, cols) }
    }

    pub fn from_tensor(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data.iter_mut().for_each(|g| *g = 0.0);
    }
}

#[inline(always)]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &mut y[..n]);
    let mut cy = y.chunks_exact_mut(8);
    let mut cx = x.chunks_exact(8);
    for (yc, xc) in (&mut cy).zip(&mut cx) {
        for k in 0..8 {
            yc[k] += a * xc[k];
        }
    }
    for (yi, xi) in cy.into_remainder().iter_mut().zip(cx.remainder()) {
        *yi += a * xi;
    }
}

/// Eight independent partial sums so the reduction pipelines.
#[inline(always)]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    acc.iter().sum::<f64>() + tail
}

/// `out += x·W` for `W: in × out`.
fn vec_mat_acc(x: &[f64], w: &Tensor, out: &mut [f64]) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just detected.
        return unsafe { vec_mat_acc_avx2(x, w, out) };
    }
    vec_mat_acc_generic(x, w, out)
}

/// `dx += dy·Wᵀ` and `dW += xᵀ·dy`.
fn vec_mat_backward(x: &[f64], w: &mut Param, dy: &[f64], dx: Option<&mut [f64]>) {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx2") {
        // SAFETY: AVX2 support was just detected.
        return unsafe { vec_mat_backward_avx2(x, w, dy, dx) };
    }
    vec_mat_backward_generic(x, w, dy, dx)
}

// Wider registers only; no fused multiply-add, so results match the
// generic path bit for bit.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn vec_mat_acc_avx2(x: &[f64], w: &Tensor, out: &mut [f64]) {
    vec_mat_acc_generic(x, w, out)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2")]
unsafe fn vec_mat_backward_avx2(x: &[f64], w: &mut Param, dy: &[f64], dx: Option<&mut [f64]>) {
    vec_mat_backward_generic(x, w, dy, dx)
}

#[inline(always)]
fn vec_mat_acc_generic(x: &[f64], w: &Tensor, out: &mut [f64]) {
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, w.row(i), out);
        }
    }
}

#[inline(always)]
fn vec_mat_backward_generic(x: &[f64], w: &mut Param, dy: &[f64], dx: Option<&mut [f64]>) {
    if let Some(dx) = dx {
        for (i, d) in dx.iter_mut().enumerate() {
            *d += dot(w.value.row(i), dy);
        }
    }
    for (i, &xi) in x.iter().enumerate() {
        if xi != 0.0 {
            axpy(xi, dy, w.grad.row_mut(i));
        }
    }
}

// ---------------------------------------------------------------------------
// Embedding

/// `vocab × dim` lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub e: Param,
}

impl Embedding {
    pub fn new(vocab: usize, dim: usize, rng: &mut impl Rng) -> Self {
        Embedding { e: Param::uniform(vocab, dim, INIT_SCALE, rng) }
    }

    pub fn vocab(&self) -> usize {
        self.e.value.rows()
    }

    pub fn dim(&self) -> usize {
        self.e.value.cols()
    }

    pub fn lookup(&self, id: usize) -> &[f64] {
        self.e.value.row(id)
    }

    pub fn lookup_backward(&mut self, id: usize, grad: &[f64]) {
        axpy(1.0, grad, self.e.grad.row_mut(id));
    }

    /// `Σ_w count(w)·E[w]`; the zero vector for no words.
    pub fn bow(&self, counts: &[(usize, f64)]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for &(id, c) in counts {
            axpy(c, self.e.value.row(id), &mut out);
        }
        out
    }

    pub fn bow_backward(&mut self, counts: &[(usize, f64)], grad: &[f64]) {
        for &(id, c) in counts {
            axpy(c, grad, self.e.grad.row_mut(id));
        }
    }
}

/// Word counts of a sequence of ids, sorted by id.
pub fn word_counts(ids: &[usize]) -> Vec<(usize, f64)> {
    let mut sorted = ids.to_vec();
    sorted.sort_unstable();
    let mut out: Vec<(usize, f64)> = Vec::new();
    for id in sorted {
        match out.last_mut() {
            Some((last, c)) if *last == id => *c += 1.0,
            _ => out.push((id, 1.0)),
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Dense

pub const INIT_SCALE: f64 = 0.08;

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Param,
    pub b: Param,
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut impl Rng) -> Self {
        Dense { w: Param::uniform(input, output, INIT_SCALE, rng), b: Param::uniform(1, output, INIT_SCALE, rng) }
    }

    pub fn input(&self) -> usize {
        self.w.value.rows()
    }

    pub fn output(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.input());
        let mut y = self.b.value.data.clone();
        vec_mat_acc(x, &self.w.value, &mut y);
        y
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[f64], dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input()];
        vec_mat_backward(x, &mut self.w, dy, Some(&mut dx));
        axpy(1.0, dy, &mut self.b.grad.data);
        dx
    }
}

pub fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through ReLU given its output.
pub fn relu_backward(y: &[f64], dy: &[f64]) -> Vec<f64> {
    y.iter().zip(dy).map(|(&y, &d)| if y > 0.0 { d } else { 0.0 }).collect()
}

/// Max-subtracted softmax.
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>, NnError> {
    if logits.is_empty() {
        return Err(NnError::InvalidShape("softmax of zero-length logits".into()));
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / z).collect())
}

/// `-ln p[target]`.
pub fn cross_entropy(probs: &[f64], target: usize) -> Result<f64, NnError> {
    let p = probs.get(target).ok_or_else(|| NnError::InvalidShape(format!("target {target} of {}", probs.len())))?;
    Ok(-p.max(f64::MIN_POSITIVE).ln())
}

/// Gradient of `cross_entropy(softmax(logits), target)` w.r.t. the logits.
pub fn softmax_cross_entropy_backward(probs: &[f64], target: usize) -> Vec<f64> {
    let mut g = probs.to_vec();
    g[target] -= 1.0;
    g
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

// ---------------------------------------------------------------------------
// Dropout

/// Inverted dropout. Returns the output and the per-unit scale applied
/// (0 or `1/(1-p)` when training, all ones otherwise).
pub fn dropout(v: &[f64], p: f64, train: bool, rng: &mut impl Rng) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..1.0).contains(&p), "dropout probability must lie in [0, 1)");
    if !train || p == 0.0 {
        return (v.to_vec(), vec![1.0; v.len()]);
    }
    let keep = 1.0 / (1.0 - p);
    let mask: Vec<f64> = v.iter().map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
    (v.iter().zip(&mask).map(|(x, m)| x * m).collect(), mask)
}

pub fn dropout_backward(mask: &[f64], dy: &[f64]) -> Vec<f64> {
    mask.iter().zip(dy).map(|(m, d)| m * d).collect()
}

// ---------------------------------------------------------------------------
// GRU

/// Gated recurrent unit:
///
/// ```text
/// z = σ(x·W_z + h·U_z + b_z)
/// r = σ(x·W_r + h·U_r + b_r)
/// n = tanh(x·W_h + (r ⊙ h)·U_h + b_n)
/// h' = (1 - z) ⊙ h + z ⊙ n
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct Gru {
    pub w_z: Param,
    pub u_z: Param,
    pub b_z: Param,
    pub w_r: Param,
    pub u_r: Param,
    pub b_r: Param,
    pub w_h: Param,
    pub u_h: Param,
    pub b_n: Param,
}

/// Intermediates of one step, kept for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GruStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub h: Vec<f64>,
}

impl Gru {
    pub fn new(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut p = |r, c| Param::uniform(r, c, INIT_SCALE, rng);
        Gru {
            w_z: p(input, hidden),
            u_z: p(hidden, hidden),
            b_z: p(1, hidden),
            w_r: p(input, hidden),
            u_r: p(hidden, hidden),
            b_r: p(1, hidden),
            w_h: p(input, hidden),
            u_h: p(hidden, hidden),
            b_n: p(1, hidden),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let p = Param::zeros;
        Gru {
            w_z: p(input, hidden),
            u_z: p(hidden, hidden),
            b_z: p(1, hidden),
            w_r: p(input, hidden),
            u_r: p(hidden, hidden),
            b_r: p(1, hidden),
            w_h: p(input, hidden),
            u_h: p(hidden, hidden),
            b_n: p(1, hidden),
        }
    }

    pub fn input(&self) -> usize {
        self.w_z.value.rows()
    }

    pub fn hidden(&self) -> usize {
        self.u_z.value.rows()
    }

    pub fn params_mut(&mut self) -> [&mut Param; 9] {
        [
            &mut self.w_z,
            &mut self.u_z,
            &mut self.b_z,
            &mut self.w_r,
            &mut self.u_r,
            &mut self.b_r,
            &mut self.w_h,
            &mut self.u_h,
            &mut self.b_n,
        ]
    }

    pub fn step(&self, x: &[f64], h_prev: &[f64]) -> GruStep {
        let gate = |w: &Param, u: &Param, b: &Param, h: &[f64]| {
            let mut a = b.value.data.clone();
            vec_mat_acc(x, &w.value, &mut a);
            vec_mat_acc(h, &u.value, &mut a);
            a
        };
        let z: Vec<f64> = gate(&self.w_z, &self.u_z, &self.b_z, h_prev).into_iter().map(sigmoid).collect();
        let r: Vec<f64> = gate(&self.w_r, &self.u_r, &self.b_r, h_prev).into_iter().map(sigmoid).collect();
        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(r, h)| r * h).collect();
        let n: Vec<f64> = gate(&self.w_h, &self.u_h, &self.b_n, &rh).into_iter().map(f64::tanh).collect();
        let h = (0..z.len()).map(|k| (1.0 - z[k]) * h_prev[k] + z[k] * n[k]).collect();
        GruStep { x: x.to_vec(), h_prev: h_prev.to_vec(), z, r, n, h }
    }

    /// Accumulates parameter gradients for one step; returns `(dx, dh_prev)`.
    pub fn step_backward(&mut self, s: &GruStep, dh: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let hd = self.hidden();
        let mut dx = vec![0.0; self.input()];
        let mut dh_prev: Vec<f64> = (0..hd).map(|k| dh[k] * (1.0 - s.z[k])).collect();

        let a_n: Vec<f64> = (0..hd).map(|k| dh[k] * s.z[k] * (1.0 - s.n[k] * s.n[k])).collect();
        let a_z: Vec<f64> = (0..hd).map(|k| dh[k] * (s.n[k] - s.h_prev[k]) * s.z[k] * (1.0 - s.z[k])).collect();

        let rh: Vec<f64> = s.r.iter().zip(&s.h_prev).map(|(r, h)| r * h).collect();
        let mut d_rh = vec![0.0; hd];
        vec_mat_backward(&s.x, &mut self.w_h, &a_n, Some(&mut dx));
        vec_mat_backward(&rh, &mut self.u_h, &a_n, Some(&mut d_rh));
        axpy(1.0, &a_n, &mut self.b_n.grad.data);
        let a_r: Vec<f64> = (0..hd).map(|k| d_rh[k] * s.h_prev[k] * s.r[k] * (1.0 - s.r[k])).collect();
        for k in 0..hd {
            dh_prev[k] += d_rh[k] * s.r[k];
        }

        vec_mat_backward(&s.x, &mut self.w_z, &a_z, Some(&mut dx));
        vec_mat_backward(&s.h_prev, &mut self.u_z, &a_z, Some(&mut dh_prev));
        axpy(1.0, &a_z, &mut self.b_z.grad.data);
        vec_mat_backward(&s.x, &mut self.w_r, &a_r, Some(&mut dx));
        vec_mat_backward(&s.h_prev, &mut self.u_r, &a_r, Some(&mut dh_prev));
        axpy(1.0, &a_r, &mut self.b_r.grad.data);
        (dx, dh_prev)
    }

    /// Folds [`Gru::step`] left to right from `h_0 = 0`.
    pub fn encode(&self, xs: &[Vec<f64>]) -> Result<Vec<GruStep>, NnError> {
        if xs.is_empty() {
            return Err(NnError::EmptySequence);
        }
        let mut steps: Vec<GruStep> = Vec::with_capacity(xs.len());
        let mut h = vec![0.0; self.hidden()];
        for x in xs {
            let s = self.step(x, &h);
            h.clone_from(&s.h);
            steps.push(s);
        }
        Ok(steps)
    }

    /// Backpropagates through time from the final hidden state; returns
    /// the gradient for every input.
    pub fn encode_backward(&mut self, steps: &[GruStep], dh_final: &[f64]) -> Vec<Vec<f64>> {
        let mut dh = dh_final.to_vec();
        let mut dxs = vec![Vec::new(); steps.len()];
        for (t, s) in steps.iter().enumerate().rev() {
            let (dx, dh_prev) = self.step_backward(s, &dh);
            dxs[t] = dx;
            dh = dh_prev;
        }
        dxs
    }
}

// ---------------------------------------------------------------------------
// Adam

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: Vec::new(), v: Vec::new() }
    }

    /// One bias-corrected step on every parameter from its `grad`.
    pub fn update(&mut self, params: &mut [&mut Param]) {
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.value.data.len()]).collect();
            self.v = self.m.clone();
        }
        assert_eq!(self.m.len(), params.len(), "parameter list changed between steps");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            for k in 0..p.value.data.len() {
                let g = p.grad.data[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                p.value.data[k] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_basics() {
        assert_eq!(softmax(&[0.0, 0.0]).unwrap(), vec![0.5, 0.5]);
        assert!(softmax(&[]).is_err());
        let p = softmax(&[1000.0, -1000.0, 3.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(relu(&[-2.0, 3.0]), vec![0.0, 3.0]);
    }

    #[test]
    fn bag_of_words() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = Embedding::new(4, 3, &mut rng);
        assert_eq!(e.bow(&[(2, 1.0)]), e.lookup(2));
        let twice: Vec<f64> = e.lookup(1).iter().map(|x| 2.0 * x).collect();
        assert_eq!(e.bow(&word_counts(&[1, 1])), twice);
        assert_eq!(e.bow(&[]), vec![0.0; 3]);
    }

    #[test]
    fn zero_gru() {
        let g = Gru::zeros(2, 3);
        let s = g.step(&[1.0, -1.0], &[0.4, 0.2, -0.6]);
        assert_eq!(s.z, vec![0.5; 3]);
        assert_eq!(s.n, vec![0.0; 3]);
        assert_eq!(s.h, vec![0.2, 0.1, -0.3]);
        let s = g.step(&[1.0, -1.0], &[0.0; 3]);
        assert_eq!(s.h, vec![0.0; 3]);
        assert_eq!(g.encode(&[]), Err(NnError::EmptySequence));
        assert_eq!(g.encode(&[vec![0.3, 0.1]]).unwrap().last().unwrap().h, vec![0.0; 3]);
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v = vec![1.0, 2.0, 3.0];
        assert_eq!(dropout(&v, 0.0, true, &mut rng).0, v);
        assert_eq!(dropout(&v, 0.5, false, &mut rng).0, v);
        let (out, _) = dropout(&v, 0.5, true, &mut rng);
        assert!(out.iter().zip(&v).all(|(o, x)| *o == 0.0 || *o == 2.0 * x));
    }

    #[test]
    fn adam_steps() {
        let mut p = Param::from_tensor(Tensor::from_vec(1, 2, vec![1.0, -1.0]).unwrap());
        let mut adam = Adam::new(0.001);
        adam.update(&mut [&mut p]);
        assert_eq!(p.value.data, vec![1.0, -1.0]);
        p.grad.data = vec![0.5, -3.0];
        let mut adam = Adam::new(0.001);
        adam.update(&mut [&mut p]);
        assert!((p.value.data[0] - (1.0 - 0.001)).abs() < 1e-9);
        assert!((p.value.data[1] - (-1.0 + 0.001)).abs() < 1e-9);
    }
}
