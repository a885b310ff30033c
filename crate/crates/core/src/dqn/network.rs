//! Fully connected Q-network with hand-written backpropagation.

use rand::Rng;

use crate::error::{Error, Result};

/// Dense layer, weights stored row-major as `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Dense {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: vec![0.0; outputs],
        }
    }

    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for (row, &b) in self.weights.chunks_exact(self.inputs).zip(&self.biases) {
            let mut acc = b;
            for (w, v) in row.iter().zip(x) {
                acc += w * v;
            }
            out.push(acc);
        }
    }
}

/// Multilayer perceptron: rectifier on hidden layers, identity on the output.
#[derive(Debug, Clone, PartialEq)]
pub struct QNetwork {
    layers: Vec<Dense>,
}

impl QNetwork {
    /// All-zero network with the given layer sizes (input first, output last).
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::config(format!("invalid layer sizes {sizes:?}")));
        }
        Ok(Self {
            layers: sizes.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect(),
        })
    }

    /// Uniform ±sqrt(6 / (fan_in + fan_out)) weights, zero biases.
    pub fn glorot<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        for layer in &mut net.layers {
            let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
            for w in &mut layer.weights {
                *w = rng.random_range(-bound..bound);
            }
        }
        Ok(net)
    }

    pub fn from_layers(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::config("network needs at least one layer"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.inputs == 0 || l.outputs == 0 || l.weights.len() != l.inputs * l.outputs || l.biases.len() != l.outputs {
                return Err(Error::config(format!("layer {i} has inconsistent shapes")));
            }
            if i > 0 && layers[i - 1].outputs != l.inputs {
                return Err(Error::config(format!("layer {i} input does not match previous output")));
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![self.layers[0].inputs];
        s.extend(self.layers.iter().map(|l| l.outputs));
        s
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_len(&self) -> usize {
        self.layers.last().map_or(0, |l| l.outputs)
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    /// Parameters flattened layer by layer, weights then biases.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.num_params());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Argument(format!(
                "{} parameters for a network of {}",
                params.len(),
                self.num_params()
            )));
        }
        let mut rest = params;
        for l in &mut self.layers {
            let (w, r) = rest.split_at(l.weights.len());
            let (b, r) = r.split_at(l.biases.len());
            l.weights.copy_from_slice(w);
            l.biases.copy_from_slice(b);
            rest = r;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|v| v.is_finite()))
    }

    fn check_input(&self, obs: &[f64]) -> Result<()> {
        if obs.len() != self.input_len() {
            return Err(Error::Argument(format!(
                "observation has {} entries, network expects {}",
                obs.len(),
                self.input_len()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, obs: &[f64]) -> Result<Vec<f64>> {
        self.check_input(obs)?;
        let mut x = obs.to_vec();
        let mut y = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.apply(&x, &mut y);
            if i < last {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            std::mem::swap(&mut x, &mut y);
        }
        Ok(x)
    }
}

/// Gradient with the same shape as a [`QNetwork`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

impl Gradients {
    pub fn zeros_like(net: &QNetwork) -> Self {
        Self {
            layers: net.layers.iter().map(|l| Dense::zeros(l.inputs, l.outputs)).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut p = Vec::new();
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.biases);
        }
        p
    }
}

/// One replayed experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub terminal: bool,
}

/// Row-major `c (m x n) = a (m x k) * b (k x n) + beta * c`, with explicit
/// strides so transposed operands need no copies.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_strides: (usize, usize), b: &[f64], b_strides: (usize, usize), beta: f64, c: &mut [f64]) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: every operand slice covers the index range implied by its
    // dimensions and strides (checked by the callers' shapes).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            a_strides.0 as isize,
            a_strides.1 as isize,
            b.as_ptr(),
            b_strides.0 as isize,
            b_strides.1 as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl QNetwork {
    /// Batched forward pass over `rows` inputs stored row-major in `acts[0]`;
    /// fills `acts[l]` with the activation of layer `l`.
    fn forward_batch(&self, rows: usize, acts: &mut Vec<Vec<f64>>) {
        acts.resize(self.layers.len() + 1, Vec::new());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let (done, rest) = acts.split_at_mut(i + 1);
            let out = &mut rest[0];
            out.clear();
            out.resize(rows * layer.outputs, 0.0);
            // z = x * W^T
            gemm(rows, layer.inputs, layer.outputs, &done[i], (layer.inputs, 1), &layer.weights, (1, layer.inputs), 0.0, out);
            for row in out.chunks_exact_mut(layer.outputs) {
                for (v, b) in row.iter_mut().zip(&layer.biases) {
                    *v += b;
                    if i < last && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }
}

/// Mean squared temporal-difference error of `batch` and its gradient with
/// respect to the online parameters. The bootstrap target uses `target` and
/// is dropped on terminal transitions.
pub fn td_loss_and_gradient(
    online: &QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    gamma: f64,
    grads: &mut Gradients,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Argument("empty training batch".into()));
    }
    let rows = batch.len();
    let n_in = online.input_len();
    let n_out = online.output_len();
    let mut acts = vec![Vec::with_capacity(rows * n_in)];
    let mut next = vec![Vec::with_capacity(rows * n_in)];
    for tr in batch {
        online.check_input(&tr.obs)?;
        target.check_input(&tr.next_obs)?;
        if tr.action >= n_out {
            return Err(Error::Argument(format!("action {} out of range", tr.action)));
        }
        acts[0].extend_from_slice(&tr.obs);
        next[0].extend_from_slice(&tr.next_obs);
    }
    target.forward_batch(rows, &mut next);
    online.forward_batch(rows, &mut acts);
    let q_next = &next[target.layers.len()];
    let q = &acts[online.layers.len()];

    let scale = rows as f64;
    let mut delta = vec![0.0; rows * n_out];
    let mut loss = 0.0;
    for (b, tr) in batch.iter().enumerate() {
        let y = if tr.terminal {
            tr.reward
        } else {
            let best = q_next[b * n_out..(b + 1) * n_out].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            tr.reward + gamma * best
        };
        let err = q[b * n_out + tr.action] - y;
        loss += err * err;
        delta[b * n_out + tr.action] = 2.0 * err / scale;
    }

    let mut prev = Vec::new();
    for (i, layer) in online.layers.iter().enumerate().rev() {
        let input = &acts[i];
        let g = &mut grads.layers[i];
        // dW = delta^T * input
        gemm(layer.outputs, rows, layer.inputs, &delta, (1, layer.outputs), input, (layer.inputs, 1), 0.0, &mut g.weights);
        g.biases.iter_mut().for_each(|v| *v = 0.0);
        for row in delta.chunks_exact(layer.outputs) {
            for (gb, d) in g.biases.iter_mut().zip(row) {
                *gb += d;
            }
        }
        if i == 0 {
            break;
        }
        // delta_prev = delta * W, masked by the rectifier
        prev.clear();
        prev.resize(rows * layer.inputs, 0.0);
        gemm(rows, layer.outputs, layer.inputs, &delta, (layer.outputs, 1), &layer.weights, (layer.inputs, 1), 0.0, &mut prev);
        for (p, &a) in prev.iter_mut().zip(input) {
            if a <= 0.0 {
                *p = 0.0;
            }
        }
        std::mem::swap(&mut delta, &mut prev);
    }
    Ok(loss / scale)
}

/// Adaptive moment estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub steps: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, num_params: usize) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            steps: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn update(&mut self, net: &mut QNetwork, grads: &Gradients) {
        self.steps += 1;
        let t = self.steps as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let mut k = 0;
        for (layer, g) in net.layers.iter_mut().zip(&grads.layers) {
            let pairs = layer
                .weights
                .iter_mut()
                .zip(&g.weights)
                .chain(layer.biases.iter_mut().zip(&g.biases));
            for (p, &gi) in pairs {
                let m = &mut self.m[k];
                let v = &mut self.v[k];
                *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
                *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
                *p -= self.learning_rate * (*m / c1) / ((*v / c2).sqrt() + self.eps);
                k += 1;
            }
        }
    }
}

/// One optimizer step on the TD loss; returns the batch loss before the
/// update.
pub fn train_step(
    online: &mut QNetwork,
    target: &QNetwork,
    batch: &[&Transition],
    gamma: f64,
    optimizer: &mut Adam,
    grads: &mut Gradients,
) -> Result<f64> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Argument(format!("gamma {gamma} outside (0, 1]")));
    }
    let loss = td_loss_and_gradient(online, target, batch, gamma, grads)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("training loss is {loss}")));
    }
    optimizer.update(online, grads);
    if !online.all_finite() {
        return Err(Error::Numeric("network parameters became non-finite".into()));
    }
    Ok(loss)
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
