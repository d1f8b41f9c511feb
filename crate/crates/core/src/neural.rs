//! Differentiable building blocks for the fixed classifier architectures:
//! dense layers, LSTM cells, bidirectional LSTMs, 1-D convolution with
//! max-pooling, dropout, softmax cross-entropy and the Adam optimizer.
//!
//! There is no general autodiff graph. Each layer exposes `forward`, which
//! returns its output together with a trace of intermediate values, and
//! `backward`, which consumes that trace and the upstream gradient,
//! accumulates parameter gradients and returns the gradient with respect to
//! the layer input. Everything is `f64`.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                format!("{shape:?} ({expected} values)"),
                format!("{} values", data.len()),
            ));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Uniform entries in `[-bound, bound]`.
    pub fn uniform(shape: &[usize], bound: f64, rng: &mut Rng) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|_| rng.gen_range(-bound..=bound)).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row `r` of a 2-D tensor.
    pub fn row(&self, r: usize) -> &[f64] {
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        let cols = self.shape[1];
        &mut self.data[r * cols..(r + 1) * cols]
    }
}

/// A trainable value with its accumulated gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter {
            value,
            grad,
            trainable: true,
        }
    }

    pub fn frozen(value: Tensor) -> Self {
        Parameter {
            trainable: false,
            ..Parameter::new(value)
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale_grad(&mut self, factor: f64) {
        self.grad.data_mut().iter_mut().for_each(|g| *g *= factor);
    }
}

fn glorot(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Relu,
    Tanh,
    /// Clamp to [-1, 1].
    HardTanh,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::HardTanh => x.clamp(-1.0, 1.0),
        }
    }

    /// Derivative at pre-activation `x`.
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => f64::from(x > 0.0),
            Activation::Tanh => 1.0 - x.tanh().powi(2),
            Activation::HardTanh => f64::from(x.abs() < 1.0),
        }
    }

    /// Distance from `x` to the nearest non-differentiable point.
    pub fn kink_distance(self, x: f64) -> f64 {
        match self {
            Activation::Identity | Activation::Tanh => f64::INFINITY,
            Activation::Relu => x.abs(),
            Activation::HardTanh => (x.abs() - 1.0).abs(),
        }
    }
}

/// `y = act(W x + b)` without any parameter bookkeeping.
pub fn dense_apply(w: &Tensor, b: &Tensor, x: &[f64], activation: Activation) -> Result<Vec<f64>> {
    let [out, inp] = w.shape()[..] else {
        return Err(Error::shape("2-D weight", format!("{:?}", w.shape())));
    };
    if x.len() != inp || b.len() != out {
        return Err(Error::shape(
            format!("x of {inp}, b of {out}"),
            format!("x of {}, b of {}", x.len(), b.len()),
        ));
    }
    Ok((0..out)
        .map(|o| activation.apply(dot(w.row(o), x) + b.data()[o]))
        .collect())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Parameter,
    pub bias: Parameter,
    pub activation: Activation,
}

/// Pre-activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseTrace {
    pub pre: Vec<f64>,
}

impl Dense {
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut Rng) -> Self {
        Dense {
            weight: Parameter::new(Tensor::uniform(&[output, input], glorot(input, output), rng)),
            bias: Parameter::new(Tensor::zeros(&[output])),
            activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, DenseTrace)> {
        let pre = dense_apply(&self.weight.value, &self.bias.value, x, Activation::Identity)?;
        let y = pre.iter().map(|&v| self.activation.apply(v)).collect();
        Ok((y, DenseTrace { pre }))
    }

    /// Accumulates parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, x: &[f64], trace: &DenseTrace, dy: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; x.len()];
        for (o, (&g, &pre)) in dy.iter().zip(&trace.pre).enumerate() {
            let delta = g * self.activation.derivative(pre);
            if delta == 0.0 {
                continue;
            }
            self.bias.grad.data_mut()[o] += delta;
            axpy(delta, x, self.weight.grad.row_mut(o));
            axpy(delta, self.weight.value.row(o), &mut dx);
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.weight, &mut self.bias]
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Single-layer LSTM. Gate blocks in the stacked weights are ordered input,
/// forget, candidate, output. The initial hidden and cell states are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    /// `4h × d`
    pub w_input: Parameter,
    /// `4h × h`
    pub w_hidden: Parameter,
    /// `4h`
    pub bias: Parameter,
}

/// Per-step activations of one LSTM pass.
#[derive(Debug, Clone)]
pub struct LstmTrace {
    inputs: Vec<f64>,
    /// Post-nonlinearity gates `[i f g o]` per step, `4h` each.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hiddens: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmOutput {
    /// `T × h`, row-major.
    pub hidden_states: Vec<f64>,
    pub final_hidden: Vec<f64>,
    pub final_cell: Vec<f64>,
}

impl Lstm {
    pub fn new(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        let mut bias = Tensor::zeros(&[4 * hidden]);
        bias.data_mut()[hidden..2 * hidden].fill(1.0);
        Lstm {
            w_input: Parameter::new(Tensor::uniform(
                &[4 * hidden, input],
                glorot(input, hidden),
                rng,
            )),
            w_hidden: Parameter::new(Tensor::uniform(
                &[4 * hidden, hidden],
                glorot(hidden, hidden),
                rng,
            )),
            bias: Parameter::new(bias),
        }
    }

    /// All-zero weights and biases.
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Lstm {
            w_input: Parameter::new(Tensor::zeros(&[4 * hidden, input])),
            w_hidden: Parameter::new(Tensor::zeros(&[4 * hidden, hidden])),
            bias: Parameter::new(Tensor::zeros(&[4 * hidden])),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_hidden.value.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_input.value.shape()[1]
    }

    fn gates(&self, x: &[f64], h_prev: &[f64]) -> Vec<f64> {
        let h = self.hidden_dim();
        let mut z: Vec<f64> = (0..4 * h)
            .map(|r| {
                dot(self.w_input.value.row(r), x)
                    + dot(self.w_hidden.value.row(r), h_prev)
                    + self.bias.value.data()[r]
            })
            .collect();
        for (r, v) in z.iter_mut().enumerate() {
            *v = if (2 * h..3 * h).contains(&r) {
                v.tanh()
            } else {
                sigmoid(*v)
            };
        }
        z
    }

    /// One recurrence step: returns `(h_t, c_t)`.
    pub fn cell_step(&self, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let h = self.hidden_dim();
        let z = self.gates(x, h_prev);
        let c: Vec<f64> = (0..h)
            .map(|k| z[h + k] * c_prev[k] + z[k] * z[2 * h + k])
            .collect();
        let hidden = (0..h).map(|k| z[3 * h + k] * c[k].tanh()).collect();
        (hidden, c)
    }

    /// Runs the recurrence over a `T × d` input.
    pub fn forward(&self, inputs: &[f64]) -> Result<(LstmOutput, LstmTrace)> {
        let d = self.input_dim();
        let h = self.hidden_dim();
        if inputs.is_empty() || inputs.len() % d != 0 {
            return Err(Error::shape(
                format!("T x {d} input with T >= 1"),
                format!("{} values", inputs.len()),
            ));
        }
        let steps = inputs.len() / d;
        let mut trace = LstmTrace {
            inputs: inputs.to_vec(),
            gates: Vec::with_capacity(steps),
            cells: Vec::with_capacity(steps),
            hiddens: Vec::with_capacity(steps),
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        let mut hidden_states = Vec::with_capacity(steps * h);
        for t in 0..steps {
            let x = &inputs[t * d..(t + 1) * d];
            let z = self.gates(x, &h_prev);
            let c: Vec<f64> = (0..h)
                .map(|k| z[h + k] * c_prev[k] + z[k] * z[2 * h + k])
                .collect();
            let hid: Vec<f64> = (0..h).map(|k| z[3 * h + k] * c[k].tanh()).collect();
            hidden_states.extend_from_slice(&hid);
            trace.gates.push(z);
            trace.cells.push(c.clone());
            trace.hiddens.push(hid.clone());
            h_prev = hid;
            c_prev = c;
        }
        Ok((
            LstmOutput {
                hidden_states,
                final_hidden: h_prev,
                final_cell: c_prev,
            },
            trace,
        ))
    }

    /// Backpropagation through time. `d_hidden` holds `dL/dh_t` for every
    /// step (`T × h`); returns `dL/dx` (`T × d`).
    pub fn backward(&mut self, trace: &LstmTrace, d_hidden: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        let h = self.hidden_dim();
        let steps = trace.gates.len();
        let mut dx = vec![0.0; steps * d];
        let mut dh_next = vec![0.0; h];
        let mut dc_next = vec![0.0; h];
        let zeros = vec![0.0; h];
        let mut dz = vec![0.0; 4 * h];
        for t in (0..steps).rev() {
            let z = &trace.gates[t];
            let c = &trace.cells[t];
            let c_prev = if t > 0 { &trace.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &trace.hiddens[t - 1] } else { &zeros };
            for k in 0..h {
                let dh = d_hidden[t * h + k] + dh_next[k];
                let (i, f, g, o) = (z[k], z[h + k], z[2 * h + k], z[3 * h + k]);
                let tc = c[k].tanh();
                let dc = dh * o * (1.0 - tc * tc) + dc_next[k];
                dz[k] = dc * g * i * (1.0 - i);
                dz[h + k] = dc * c_prev[k] * f * (1.0 - f);
                dz[2 * h + k] = dc * i * (1.0 - g * g);
                dz[3 * h + k] = dh * tc * o * (1.0 - o);
                dc_next[k] = dc * f;
            }
            let x = &trace.inputs[t * d..(t + 1) * d];
            dh_next.iter_mut().for_each(|v| *v = 0.0);
            for (r, &delta) in dz.iter().enumerate() {
                if delta == 0.0 {
                    continue;
                }
                self.bias.grad.data_mut()[r] += delta;
                axpy(delta, x, self.w_input.grad.row_mut(r));
                axpy(delta, h_prev, self.w_hidden.grad.row_mut(r));
                axpy(delta, self.w_input.value.row(r), &mut dx[t * d..(t + 1) * d]);
                axpy(delta, self.w_hidden.value.row(r), &mut dh_next);
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}

/// Trace of a bidirectional pass.
#[derive(Debug, Clone)]
pub struct BiLstmTrace {
    forward: LstmTrace,
    backward: LstmTrace,
}

/// Runs `fwd` over the input and `bwd` over the reversed input, returning
/// `[fwd final; bwd final]` (length `2h`).
pub fn bilstm_forward(fwd: &Lstm, bwd: &Lstm, inputs: &[f64]) -> Result<(Vec<f64>, BiLstmTrace)> {
    let d = fwd.input_dim();
    if bwd.input_dim() != d {
        return Err(Error::shape(
            format!("backward input dim {d}"),
            bwd.input_dim(),
        ));
    }
    let (out_f, tr_f) = fwd.forward(inputs)?;
    let reversed = reverse_rows(inputs, d);
    let (out_b, tr_b) = bwd.forward(&reversed)?;
    let mut out = out_f.final_hidden;
    out.extend(out_b.final_hidden);
    Ok((
        out,
        BiLstmTrace {
            forward: tr_f,
            backward: tr_b,
        },
    ))
}

/// Gradient of [`bilstm_forward`] given `dL/d(output)`; returns `dL/dx`.
pub fn bilstm_backward(fwd: &mut Lstm, bwd: &mut Lstm, trace: &BiLstmTrace, d_out: &[f64]) -> Vec<f64> {
    let d = fwd.input_dim();
    let hf = fwd.hidden_dim();
    let hb = bwd.hidden_dim();
    let steps = trace.forward.gates.len();
    let mut dh_f = vec![0.0; steps * hf];
    dh_f[(steps - 1) * hf..].copy_from_slice(&d_out[..hf]);
    let mut dh_b = vec![0.0; steps * hb];
    dh_b[(steps - 1) * hb..].copy_from_slice(&d_out[hf..hf + hb]);
    let mut dx = fwd.backward(&trace.forward, &dh_f);
    let dx_rev = reverse_rows(&bwd.backward(&trace.backward, &dh_b), d);
    for (a, b) in dx.iter_mut().zip(dx_rev) {
        *a += b;
    }
    dx
}

fn reverse_rows(x: &[f64], cols: usize) -> Vec<f64> {
    x.chunks(cols).rev().flatten().copied().collect()
}

/// Valid 1-D convolution over token positions with `filters` output channels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conv1d {
    pub width: usize,
    /// `filters × (width · d)`
    pub weight: Parameter,
    pub bias: Parameter,
}

impl Conv1d {
    pub fn new(width: usize, input: usize, filters: usize, rng: &mut Rng) -> Self {
        let fan_in = width * input;
        Conv1d {
            width,
            weight: Parameter::new(Tensor::uniform(
                &[filters, fan_in],
                glorot(fan_in, filters),
                rng,
            )),
            bias: Parameter::new(Tensor::zeros(&[filters])),
        }
    }

    pub fn filters(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn input_dim(&self) -> usize {
        self.weight.value.shape()[1] / self.width
    }
}

/// Width-2, stride-2 max-pooling. A trailing odd position forms its own window.
pub const POOL_SIZE: usize = 2;

/// Convolutions of several widths, each followed by max-pooling; the pooled
/// maps are flattened (position-major) and concatenated in filter-bank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvPool {
    pub convs: Vec<Conv1d>,
}

#[derive(Debug, Clone)]
pub struct ConvPoolTrace {
    input: Vec<f64>,
    steps: usize,
    valid: usize,
    /// Per conv: the conv position selected by each pooled output.
    argmax: Vec<Vec<Option<usize>>>,
    /// Per conv: raw conv outputs (`positions × filters`).
    conv_out: Vec<Vec<f64>>,
}

impl ConvPool {
    pub fn new(widths: &[usize], input: usize, filters: usize, rng: &mut Rng) -> Self {
        ConvPool {
            convs: widths
                .iter()
                .map(|&w| Conv1d::new(w, input, filters, rng))
                .collect(),
        }
    }

    pub fn max_width(&self) -> usize {
        self.convs.iter().map(|c| c.width).max().unwrap_or(0)
    }

    /// Output length for an `n`-step input.
    pub fn output_dim(&self, n: usize) -> usize {
        self.convs
            .iter()
            .map(|c| (n + 1 - c.width).div_ceil(POOL_SIZE) * c.filters())
            .sum()
    }

    /// Applies the filter banks to an `n × d` input whose rows past `valid`
    /// are padding. Windows starting inside the padding are masked to zero.
    pub fn forward(&self, input: &[f64], valid: usize) -> Result<(Vec<f64>, ConvPoolTrace)> {
        let d = self.convs.first().map(Conv1d::input_dim).unwrap_or(1);
        if input.len() % d != 0 {
            return Err(Error::shape(format!("n x {d}"), format!("{} values", input.len())));
        }
        let steps = input.len() / d;
        if steps < self.max_width() {
            return Err(Error::invalid(format!(
                "input of {steps} steps is shorter than the widest filter ({})",
                self.max_width()
            )));
        }
        let mut features = Vec::with_capacity(self.output_dim(steps));
        let mut trace = ConvPoolTrace {
            input: input.to_vec(),
            steps,
            valid,
            argmax: Vec::new(),
            conv_out: Vec::new(),
        };
        for conv in &self.convs {
            let filters = conv.filters();
            let positions = steps + 1 - conv.width;
            let mut out = vec![0.0; positions * filters];
            for p in 0..positions {
                if p >= valid {
                    continue;
                }
                let window = &input[p * d..(p + conv.width) * d];
                for f in 0..filters {
                    out[p * filters + f] = dot(conv.weight.value.row(f), window) + conv.bias.value.data()[f];
                }
            }
            let pooled_len = positions.div_ceil(POOL_SIZE);
            let mut argmax = Vec::with_capacity(pooled_len * filters);
            for q in 0..pooled_len {
                for f in 0..filters {
                    let mut best: Option<usize> = None;
                    for p in q * POOL_SIZE..((q + 1) * POOL_SIZE).min(positions) {
                        if best.is_none_or(|b| out[p * filters + f] > out[b * filters + f]) {
                            best = Some(p);
                        }
                    }
                    let b = best.expect("non-empty pool window");
                    features.push(out[b * filters + f]);
                    argmax.push((b < valid).then_some(b));
                }
            }
            trace.argmax.push(argmax);
            trace.conv_out.push(out);
        }
        Ok((features, trace))
    }

    /// Accumulates filter gradients and returns `dL/d(input)`.
    pub fn backward(&mut self, trace: &ConvPoolTrace, d_features: &[f64]) -> Vec<f64> {
        let d = self.convs.first().map(Conv1d::input_dim).unwrap_or(1);
        let mut dx = vec![0.0; trace.steps * d];
        let mut offset = 0;
        for (ci, conv) in self.convs.iter_mut().enumerate() {
            let filters = conv.filters();
            let argmax = &trace.argmax[ci];
            for (k, choice) in argmax.iter().enumerate() {
                let g = d_features[offset + k];
                let Some(p) = *choice else { continue };
                if g == 0.0 {
                    continue;
                }
                let f = k % filters;
                let window = &trace.input[p * d..(p + conv.width) * d];
                conv.bias.grad.data_mut()[f] += g;
                axpy(g, window, conv.weight.grad.row_mut(f));
                axpy(g, conv.weight.value.row(f), &mut dx[p * d..(p + conv.width) * d]);
            }
            offset += argmax.len();
        }
        debug_assert!(trace.valid <= trace.steps);
        dx
    }

    /// Smallest gap between a selected pool value and its competitor; small
    /// gaps make finite differences unreliable.
    pub fn pool_margin(&self, trace: &ConvPoolTrace) -> f64 {
        let mut margin = f64::INFINITY;
        for (ci, conv) in self.convs.iter().enumerate() {
            let filters = conv.filters();
            let out = &trace.conv_out[ci];
            let positions = out.len() / filters;
            for q in 0..positions.div_ceil(POOL_SIZE) {
                let p0 = q * POOL_SIZE;
                if p0 + 1 < positions {
                    for f in 0..filters {
                        let gap = (out[p0 * filters + f] - out[(p0 + 1) * filters + f]).abs();
                        margin = margin.min(gap);
                    }
                }
            }
        }
        margin
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.convs
            .iter_mut()
            .flat_map(|c| [&mut c.weight, &mut c.bias])
            .collect()
    }
}

/// Numerically stable softmax and `-ln p[gold]`.
pub fn softmax_xent(logits: &[f64], gold: usize) -> Result<(Vec<f64>, f64)> {
    if gold >= logits.len() {
        return Err(Error::invalid(format!(
            "gold class {gold} outside {} classes",
            logits.len()
        )));
    }
    let probs = softmax(logits);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_z = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
    Ok((probs, log_z - logits[gold]))
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `p − onehot(gold)`.
pub fn softmax_xent_backward(probs: &[f64], gold: usize) -> Vec<f64> {
    let mut g = probs.to_vec();
    g[gold] -= 1.0;
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Inverted dropout. Returns the output and the multiplicative mask applied
/// (0 or `1/(1-p)` per element in training, 1 in inference).
pub fn dropout_apply(x: &[f64], p: f64, mode: Mode, rng: &mut Rng) -> (Vec<f64>, Vec<f64>) {
    assert!((0.0..1.0).contains(&p), "dropout rate must lie in [0, 1)");
    if mode == Mode::Inference || p == 0.0 {
        return (x.to_vec(), vec![1.0; x.len()]);
    }
    let scale = 1.0 / (1.0 - p);
    let mask: Vec<f64> = x
        .iter()
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { scale })
        .collect();
    (x.iter().zip(&mask).map(|(v, m)| v * m).collect(), mask)
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Self {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Updates every trainable parameter from its gradient. The parameter
    /// list must keep the same order and shapes across calls.
    pub fn step(&mut self, params: &mut [&mut Parameter]) {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| vec![0.0; p.value.len()]).collect();
            self.second = self.first.clone();
        }
        assert_eq!(self.first.len(), params.len(), "parameter list changed");
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, p) in params.iter_mut().enumerate() {
            if !p.trainable {
                continue;
            }
            let m = &mut self.first[k];
            let v = &mut self.second[k];
            assert_eq!(m.len(), p.value.len(), "parameter shape changed");
            let Parameter { value, grad, .. } = &mut **p;
            for ((w, &g), (mi, vi)) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

/// Adam for embedding tables with sparse row gradients: only rows present in
/// the gradient are updated, each using the optimizer's global step count for
/// bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowAdam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl RowAdam {
    pub fn new(learning_rate: f64) -> Self {
        let dense = Adam::new(learning_rate);
        RowAdam {
            learning_rate,
            beta1: dense.beta1,
            beta2: dense.beta2,
            epsilon: dense.epsilon,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn step(&mut self, table: &mut Tensor, rows: &std::collections::BTreeMap<usize, Vec<f64>>) {
        if self.first.is_empty() {
            self.first = vec![0.0; table.len()];
            self.second = vec![0.0; table.len()];
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let cols = table.shape()[1];
        for (&r, grad) in rows {
            let span = r * cols..(r + 1) * cols;
            let m = &mut self.first[span.clone()];
            let v = &mut self.second[span];
            for (((w, &g), mi), vi) in table.row_mut(r).iter_mut().zip(grad).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                *w -= self.learning_rate * (*mi / c1) / ((*vi / c2).sqrt() + self.epsilon);
            }
        }
    }
}

/// Central finite-difference gradient checking.
pub mod gradcheck {
    /// Step used for central differences.
    pub const STEP: f64 = 1e-5;
    /// Magnitudes below this are compared absolutely rather than relatively.
    pub const FLOOR: f64 = 1e-6;

    /// `(f(x + h e_i) − f(x − h e_i)) / 2h` for every coordinate.
    pub fn numeric_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        let mut probe = x.to_vec();
        (0..x.len())
            .map(|i| {
                let orig = probe[i];
                probe[i] = orig + h;
                let up = f(&probe);
                probe[i] = orig - h;
                let down = f(&probe);
                probe[i] = orig;
                (up - down) / (2.0 * h)
            })
            .collect()
    }

    /// `|a − n| / max(|a|, |n|, FLOOR)`.
    pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
        (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
    }

    pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
        assert_eq!(analytic.len(), numeric.len());
        analytic
            .iter()
            .zip(numeric)
            .map(|(&a, &n)| relative_error(a, n))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::gradcheck::*;
    use super::*;
    use crate::rng::seeded;

    fn rand_vec(n: usize, bound: f64, rng: &mut Rng) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
    }

    #[test]
    fn dense_identity_and_scalar() {
        let mut w = Tensor::zeros(&[3, 3]);
        for i in 0..3 {
            w.data_mut()[i * 3 + i] = 1.0;
        }
        let x = [0.3, -2.0, 5.0];
        assert_eq!(dense_apply(&w, &Tensor::zeros(&[3]), &x, Activation::Identity).unwrap(), x);
        let w = Tensor::from_vec(&[1, 1], vec![2.0]).unwrap();
        let b = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        assert_eq!(dense_apply(&w, &b, &[3.0], Activation::Identity).unwrap(), [7.0]);
        assert!(dense_apply(&w, &b, &[3.0, 1.0], Activation::Identity).is_err());
    }

    #[test]
    fn dense_gradient_matches_finite_differences() {
        for seed in 0..20 {
            let mut rng = seeded(seed);
            let mut layer = Dense::new(4, 3, Activation::Tanh, &mut rng);
            let x = rand_vec(4, 1.0, &mut rng);
            let up = rand_vec(3, 1.0, &mut rng);
            let (_, tr) = layer.forward(&x).unwrap();
            let dx = layer.backward(&x, &tr, &up);
            let probe = layer.clone();
            let num = numeric_gradient(
                |xv| dot(&probe.forward(xv).unwrap().0, &up),
                &x,
                STEP,
            );
            assert!(max_relative_error(&dx, &num) < 1e-4);
        }
    }

    #[test]
    fn zero_lstm_gives_zero_states() {
        let lstm = Lstm::zeros(3, 4);
        let (out, _) = lstm.forward(&[1.0, -2.0, 0.5, 3.0, 0.1, 0.2]).unwrap();
        assert!(out.hidden_states.iter().all(|&v| v == 0.0));
        assert!(lstm.forward(&[]).is_err());
    }

    #[test]
    fn lstm_forward_equals_manual_cell_steps() {
        let mut rng = seeded(3);
        let lstm = Lstm::new(4, 5, &mut rng);
        let x = rand_vec(12, 2.0, &mut rng);
        let (out, _) = lstm.forward(&x).unwrap();
        let (mut h, mut c) = (vec![0.0; 5], vec![0.0; 5]);
        for t in 0..3 {
            let (h2, c2) = lstm.cell_step(&x[t * 4..(t + 1) * 4], &h, &c);
            assert_eq!(&out.hidden_states[t * 5..(t + 1) * 5], &h2[..]);
            h = h2;
            c = c2;
        }
        assert_eq!(out.final_hidden, h);
        assert_eq!(out.final_cell, c);
    }

    #[test]
    fn bilstm_decomposition_and_symmetry() {
        let mut rng = seeded(4);
        let fwd = Lstm::new(2, 3, &mut rng);
        let x = rand_vec(8, 1.0, &mut rng);
        let (out, _) = bilstm_forward(&fwd, &Lstm::zeros(2, 3), &x).unwrap();
        let (single, _) = fwd.forward(&x).unwrap();
        assert_eq!(&out[..3], &single.final_hidden[..]);
        assert!(out[3..].iter().all(|&v| v == 0.0));

        let pal = [0.1, 0.2, -0.5, 0.3, -0.5, 0.3, 0.1, 0.2];
        let (out, _) = bilstm_forward(&fwd, &fwd.clone(), &pal).unwrap();
        assert_eq!(&out[..3], &out[3..]);
    }

    #[test]
    fn conv_pool_hand_example() {
        let mut rng = seeded(0);
        let mut cp = ConvPool::new(&[2], 1, 1, &mut rng);
        cp.convs[0].weight.value.data_mut().fill(1.0);
        let (feat, _) = cp.forward(&[1.0, 2.0, 3.0, 4.0], 4).unwrap();
        assert_eq!(feat, vec![5.0, 7.0]);

        let mut zero = ConvPool::new(&[2, 3, 4], 2, 3, &mut rng);
        for p in zero.params_mut() {
            p.value.data_mut().fill(0.0);
        }
        let (feat, _) = zero.forward(&rand_vec(12, 1.0, &mut rng), 6).unwrap();
        assert_eq!(feat.len(), zero.output_dim(6));
        assert!(feat.iter().all(|&v| v == 0.0));
        assert!(zero.forward(&[0.0; 6], 3).is_err());
    }

    #[test]
    fn softmax_cases() {
        let (p, loss) = softmax_xent(&[0.0; 4], 2).unwrap();
        assert!(p.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!((loss - 4f64.ln()).abs() < 1e-15);
        let (p, loss) = softmax_xent(&[1000.0, 0.0], 0).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-12 && p[1] < 1e-300);
        assert!(loss.is_finite());
        assert!(softmax_xent(&[0.0, 1.0], 2).is_err());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = seeded(1);
        let x = rand_vec(50, 3.0, &mut rng);
        assert_eq!(dropout_apply(&x, 0.5, Mode::Inference, &mut rng).0, x);
        assert_eq!(dropout_apply(&x, 0.0, Mode::Train, &mut rng).0, x);
        let ones = vec![1.0; 100_000];
        let (y, _) = dropout_apply(&ones, 0.5, Mode::Train, &mut rng);
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn adam_first_step_and_zero_gradient() {
        let mut p = Parameter::new(Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap());
        let mut adam = Adam::new(0.01);
        adam.step(&mut [&mut p]);
        assert_eq!(p.value.data(), &[1.0, -1.0]);

        let mut q = Parameter::new(Tensor::from_vec(&[1], vec![0.5]).unwrap());
        q.grad.data_mut()[0] = 3.0;
        let mut adam = Adam::new(0.01);
        adam.step(&mut [&mut q]);
        let delta = 0.5 - q.value.data()[0];
        assert!((delta - 0.01).abs() < 1e-9, "delta {delta}");
    }
}
