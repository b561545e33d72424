//! Dense tanh networks with exact backpropagation, Adam, and the factored
//! categorical policy head.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::NnError;

/// Multilayer perceptron: affine + tanh on hidden layers, affine output.
///
/// Parameters are stored flat, layer by layer, each as a row-major weight
/// matrix (out x in) followed by the bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Activations kept by [`Mlp::forward_cached`] for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    /// Layer inputs; `acts[0]` is the network input, last is the output.
    acts: Vec<Vec<f64>>,
}

impl Cache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(|v| v.as_slice()).unwrap_or(&[])
    }
}

impl Mlp {
    /// All-zero network with the given widths `[in, h1, ..., out]`.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output widths");
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            params: vec![0.0; n],
        }
    }

    /// Orthogonal weights scaled by `hidden_gain` (hidden layers) and
    /// `output_gain` (last layer); zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(sizes: &[usize], hidden_gain: f64, output_gain: f64, rng: &mut R) -> Self {
        let mut net = Self::zeros(sizes);
        let layers = net.num_layers();
        for layer in 0..layers {
            let (i, o) = (net.sizes[layer], net.sizes[layer + 1]);
            let gain = if layer + 1 == layers { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(o, i, rng);
            let off = net.offset(layer);
            for (p, v) in net.params[off..off + o * i].iter_mut().zip(w) {
                *p = gain * v;
            }
        }
        net
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self, NnError> {
        let net = Self::zeros(sizes);
        if params.len() != net.params.len() {
            return Err(NnError::Width {
                expected: net.params.len(),
                got: params.len(),
            });
        }
        Ok(Self {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn offset(&self, layer: usize) -> usize {
        self.sizes[..=layer].windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    fn check_input(&self, x: &[f64]) -> Result<(), NnError> {
        if x.len() == self.input_dim() {
            Ok(())
        } else {
            Err(NnError::Width {
                expected: self.input_dim(),
                got: x.len(),
            })
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.check_input(x)?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        let mut off = 0;
        let layers = self.num_layers();
        for layer in 0..layers {
            let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
            affine(&self.params[off..off + o * i + o], &cur, i, o, &mut next);
            if layer + 1 < layers {
                next.iter_mut().for_each(|v| *v = v.tanh());
            }
            std::mem::swap(&mut cur, &mut next);
            off += o * i + o;
        }
        Ok(cur)
    }

    /// Row-wise forward over `n` stacked inputs.
    pub fn forward_batch(&self, xs: &[f64]) -> Result<Vec<f64>, NnError> {
        let d = self.input_dim();
        if xs.len() % d != 0 {
            return Err(NnError::Width {
                expected: d,
                got: xs.len() % d,
            });
        }
        let mut out = Vec::with_capacity(xs.len() / d * self.output_dim());
        for row in xs.chunks(d) {
            out.extend(self.forward(row)?);
        }
        Ok(out)
    }

    /// Forward pass that keeps every layer's activation in `cache`.
    pub fn forward_cached(&self, x: &[f64], cache: &mut Cache) -> Result<(), NnError> {
        self.check_input(x)?;
        let layers = self.num_layers();
        cache.acts.resize_with(layers + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let mut off = 0;
        for layer in 0..layers {
            let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
            let (head, tail) = cache.acts.split_at_mut(layer + 1);
            let out = &mut tail[0];
            affine(&self.params[off..off + o * i + o], &head[layer], i, o, out);
            if layer + 1 < layers {
                out.iter_mut().for_each(|v| *v = v.tanh());
            }
            off += o * i + o;
        }
        Ok(())
    }

    /// Accumulate into `grads` the gradient of `sum_j grad_out[j] * y_j`
    /// with respect to the parameters, for the input held in `cache`.
    pub fn backward(&self, cache: &Cache, grad_out: &[f64], grads: &mut [f64]) {
        assert_eq!(grad_out.len(), self.output_dim());
        assert_eq!(grads.len(), self.params.len());
        let layers = self.num_layers();
        let mut delta = grad_out.to_vec();
        let mut prev = Vec::new();
        let mut off = self.params.len();
        for layer in (0..layers).rev() {
            let (i, o) = (self.sizes[layer], self.sizes[layer + 1]);
            off -= o * i + o;
            let input = &cache.acts[layer];
            let w = &self.params[off..off + o * i];
            let (gw, gb) = grads[off..off + o * i + o].split_at_mut(o * i);
            for r in 0..o {
                let d = delta[r];
                gb[r] += d;
                if d != 0.0 {
                    for (g, &x) in gw[r * i..(r + 1) * i].iter_mut().zip(input) {
                        *g += d * x;
                    }
                }
            }
            if layer == 0 {
                break;
            }
            prev.clear();
            prev.resize(i, 0.0);
            for r in 0..o {
                let d = delta[r];
                if d != 0.0 {
                    for (p, &wv) in prev.iter_mut().zip(&w[r * i..(r + 1) * i]) {
                        *p += d * wv;
                    }
                }
            }
            // input to this layer is tanh output of the previous one
            for (p, &a) in prev.iter_mut().zip(input) {
                *p *= 1.0 - a * a;
            }
            std::mem::swap(&mut delta, &mut prev);
        }
    }
}

fn affine(layer: &[f64], x: &[f64], i: usize, o: usize, out: &mut Vec<f64>) {
    let (w, b) = layer.split_at(o * i);
    out.clear();
    out.extend((0..o).map(|r| {
        let row = &w[r * i..(r + 1) * i];
        b[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
    }));
}

/// `rows x cols` matrix with orthonormal rows (or columns, whichever is
/// fewer), row-major.
fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (n, d) = if rows <= cols { (rows, cols) } else { (cols, rows) };
    // Gram-Schmidt on n random d-vectors
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|x| *x /= norm);
            basis.push(v);
        }
    }
    let mut m = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            m[r * cols + c] = if rows <= cols { basis[r][c] } else { basis[c][r] };
        }
    }
    m
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(n: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for j in 0..params.len() {
            let g = grads[j];
            self.m[j] = self.beta1 * self.m[j] + (1.0 - self.beta1) * g;
            self.v[j] = self.beta2 * self.v[j] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[j] / c1;
            let vhat = self.v[j] / c2;
            params[j] -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// Rescale `grads` so their L2 norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

/// Max-shifted log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// Head sizes of the factored policy: antenna delta, then sleep mode.
pub const HEADS: [usize; 2] = [3, 4];
pub const POLICY_OUTPUTS: usize = 7;

/// Two independent categorical distributions over (antenna delta, sleep
/// mode). Joint action index is `antenna * 4 + sleep`.
#[derive(Debug, Clone, PartialEq)]
pub struct FactoredCategorical {
    logp: [Vec<f64>; 2],
}

impl FactoredCategorical {
    pub fn from_logits(logits: &[f64]) -> Self {
        assert_eq!(logits.len(), POLICY_OUTPUTS);
        Self {
            logp: [log_softmax(&logits[..3]), log_softmax(&logits[3..])],
        }
    }

    pub fn head_log_probs(&self, head: usize) -> &[f64] {
        &self.logp[head]
    }

    pub fn split(action: usize) -> [usize; 2] {
        [action / 4, action % 4]
    }

    pub fn log_prob(&self, action: usize) -> f64 {
        let [a, s] = Self::split(action);
        self.logp[0][a] + self.logp[1][s]
    }

    pub fn entropy(&self) -> f64 {
        self.logp
            .iter()
            .map(|lp| -lp.iter().map(|&l| if l == f64::NEG_INFINITY { 0.0 } else { l.exp() * l }).sum::<f64>())
            .sum()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let mut pick = |lp: &[f64]| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (j, &l) in lp.iter().enumerate() {
                acc += l.exp();
                if u < acc {
                    return j;
                }
            }
            lp.len() - 1
        };
        let a = pick(&self.logp[0]);
        let s = pick(&self.logp[1]);
        a * 4 + s
    }

    /// Most likely action of each head (lowest index on ties).
    pub fn greedy(&self) -> usize {
        let arg = |lp: &[f64]| {
            let mut best = 0;
            for j in 1..lp.len() {
                if lp[j] > lp[best] {
                    best = j;
                }
            }
            best
        };
        arg(&self.logp[0]) * 4 + arg(&self.logp[1])
    }

    /// Gradient w.r.t. the 7 logits of `c_lp * log pi(action) + c_h * H`.
    pub fn logit_grad(&self, action: usize, c_lp: f64, c_h: f64, out: &mut [f64]) {
        assert_eq!(out.len(), POLICY_OUTPUTS);
        let chosen = Self::split(action);
        let mut o = 0;
        for (h, lp) in self.logp.iter().enumerate() {
            let ent: f64 = -lp.iter().map(|&l| l.exp() * l).sum::<f64>();
            for (j, &l) in lp.iter().enumerate() {
                let p = l.exp();
                let d_lp = if j == chosen[h] { 1.0 } else { 0.0 } - p;
                let d_h = -p * (l + ent);
                out[o + j] = c_lp * d_lp + c_h * d_h;
            }
            o += lp.len();
        }
    }
}
