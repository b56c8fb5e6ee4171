//! Stacked recurrent encoder, attention aggregator and softmax output head.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::attention::{attention_backward, attention_trace, weighted_sum, AttentionParams, AttentionTrace};
use super::cell::{scan_backward, scan_forward, xavier, CellKind, CellParams, CellTrace};
use super::matrix::{softmax, Matrix};
use crate::embed::FeatureSequence;
use crate::error::{Error, Result};
use crate::train::dropout::dropout_mask;

/// Architecture hyperparameters for one classifier level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub cell: CellKind,
    /// Embedding dimension.
    pub input_dim: usize,
    /// Units per direction per layer.
    pub hidden_dim: usize,
    pub layers: usize,
    pub bidirectional: bool,
    pub attention: bool,
    /// Sequence length `d` the feature pipeline produces.
    pub seq_len: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            cell: CellKind::Gru,
            input_dim: 50,
            hidden_dim: 128,
            layers: 2,
            bidirectional: true,
            attention: true,
            seq_len: crate::features::DEFAULT_SEQ_LEN,
        }
    }
}

impl ModelSpec {
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of each layer's per-timestep output.
    pub fn output_width(&self) -> usize {
        self.hidden_dim * self.directions()
    }

    pub fn layer_input_dim(&self, layer: usize) -> usize {
        if layer == 0 {
            self.input_dim
        } else {
            self.output_width()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden_dim == 0 || self.layers == 0 || self.seq_len == 0 {
            return Err(Error::Config(
                "input_dim, hidden_dim, layers and seq_len must all be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrentLayer {
    pub forward: CellParams,
    pub backward: Option<CellParams>,
}

/// All learnable tensors of one classifier. Also used as the gradient container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub spec: ModelSpec,
    pub layers: Vec<RecurrentLayer>,
    pub attention: Option<AttentionParams>,
    /// `classes x width`
    pub output_w: Matrix,
    /// `classes x 1`
    pub output_b: Matrix,
    pub label_names: Vec<String>,
}

impl ModelParams {
    pub fn zeros(spec: &ModelSpec, label_names: Vec<String>) -> Result<Self> {
        spec.validate()?;
        if label_names.is_empty() {
            return Err(Error::Config("a model needs at least one class".into()));
        }
        let layers = (0..spec.layers)
            .map(|l| {
                let input = spec.layer_input_dim(l);
                RecurrentLayer {
                    forward: CellParams::zeros(spec.cell, input, spec.hidden_dim),
                    backward: spec
                        .bidirectional
                        .then(|| CellParams::zeros(spec.cell, input, spec.hidden_dim)),
                }
            })
            .collect();
        let width = spec.output_width();
        Ok(ModelParams {
            spec: spec.clone(),
            layers,
            attention: spec.attention.then(|| AttentionParams::zeros(width)),
            output_w: Matrix::zeros(label_names.len(), width),
            output_b: Matrix::column(label_names.len()),
            label_names,
        })
    }

    /// Randomly initialized parameters; biases start at zero.
    pub fn init<R: Rng + ?Sized>(spec: &ModelSpec, label_names: Vec<String>, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(spec, label_names)?;
        for (l, layer) in m.layers.iter_mut().enumerate() {
            let input = spec.layer_input_dim(l);
            layer.forward = CellParams::init(spec.cell, input, spec.hidden_dim, rng);
            if let Some(b) = layer.backward.as_mut() {
                *b = CellParams::init(spec.cell, input, spec.hidden_dim, rng);
            }
        }
        let width = spec.output_width();
        if let Some(a) = m.attention.as_mut() {
            *a = AttentionParams::init(width, rng);
        }
        let classes = m.num_classes();
        xavier(&mut m.output_w, width, classes, rng);
        Ok(m)
    }

    /// Same shapes, all zeros.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
        z
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    /// Named tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.forward.tensors(&format!("layer{l}.fwd"), &mut out);
            if let Some(b) = &layer.backward {
                b.tensors(&format!("layer{l}.bwd"), &mut out);
            }
        }
        if let Some(a) = &self.attention {
            out.push(("attention.W".into(), &a.w));
            out.push(("attention.b".into(), &a.b));
            out.push(("attention.context".into(), &a.context));
        }
        out.push(("output.W".into(), &self.output_w));
        out.push(("output.b".into(), &self.output_b));
        out
    }

    /// Mutable tensors, same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            layer.forward.tensors_mut(&mut out);
            if let Some(b) = &mut layer.backward {
                b.tensors_mut(&mut out);
            }
        }
        if let Some(a) = &mut self.attention {
            out.push(&mut a.w);
            out.push(&mut a.b);
            out.push(&mut a.context);
        }
        out.push(&mut self.output_w);
        out.push(&mut self.output_b);
        out
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &ModelParams) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            a.add_assign(b.1);
        }
    }

    pub fn scale(&mut self, k: f64) {
        self.tensors_mut().into_iter().for_each(|t| t.scale(k));
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.is_finite())
    }
}

#[derive(Debug, Clone)]
pub struct LayerTrace {
    /// Layer input, real prefix only.
    pub input: Matrix,
    pub forward: CellTrace,
    /// Trace of the backward cell, indexed in its own (reversed) scan order.
    pub backward: Option<CellTrace>,
    /// `d x width` layer output before dropout. Rows past the real prefix are zero.
    pub output: Matrix,
    /// Inverted-dropout factors applied to `output`, when training.
    pub dropout: Option<Vec<f64>>,
}

impl LayerTrace {
    /// Output after dropout, the tensor the next stage consumes.
    pub fn emitted(&self) -> Matrix {
        match &self.dropout {
            None => self.output.clone(),
            Some(mask) => {
                let data = self.output.as_slice().iter().zip(mask).map(|(a, m)| a * m).collect();
                Matrix::from_vec(self.output.rows(), self.output.cols(), data)
            }
        }
    }
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub mask: Vec<bool>,
    /// Timesteps covered by the recurrent scans (up to the last real token).
    pub real_len: usize,
    pub layers: Vec<LayerTrace>,
    /// Present when the model has attention; otherwise `alpha` is uniform over real tokens.
    pub attention: Option<AttentionTrace>,
    pub alpha: Vec<f64>,
    /// Aggregated abstract vector.
    pub v: Vec<f64>,
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub true_class: Option<usize>,
    pub loss: Option<f64>,
}

impl ForwardTrace {
    pub fn predicted(&self) -> usize {
        argmax(&self.probabilities)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn run_layer(layer: &RecurrentLayer, input: &Matrix, d: usize, hidden: usize) -> LayerTrace {
    let n = input.rows();
    let forward = scan_forward(&layer.forward, input);
    let backward = layer
        .backward
        .as_ref()
        .map(|cell| scan_forward(cell, &input.reversed_rows()));
    let width = if backward.is_some() { 2 * hidden } else { hidden };
    let mut output = Matrix::zeros(d, width);
    for t in 0..n {
        let row = output.row_mut(t);
        row[..hidden].copy_from_slice(forward.hidden.row(t));
        if let Some(b) = &backward {
            row[hidden..].copy_from_slice(b.hidden.row(n - 1 - t));
        }
    }
    LayerTrace {
        input: input.clone(),
        forward,
        backward,
        output,
        dropout: None,
    }
}

fn check_input(seq: &FeatureSequence, m: &ModelParams) -> Result<()> {
    if seq.dim() != m.spec.input_dim {
        return Err(Error::shape("feature row width", m.spec.input_dim, seq.dim()));
    }
    if seq.matrix.rows() != seq.mask.len() {
        return Err(Error::shape("feature mask", seq.matrix.rows(), seq.mask.len()));
    }
    Ok(())
}

fn encode(
    seq: &FeatureSequence,
    m: &ModelParams,
    mut dropout: Option<(f64, &mut dyn RngCore)>,
) -> Vec<LayerTrace> {
    let d = seq.len();
    let n = seq.real_prefix();
    let mut input = seq.matrix.top_rows(n);
    let mut traces = Vec::with_capacity(m.layers.len());
    for layer in &m.layers {
        let mut trace = run_layer(layer, &input, d, m.spec.hidden_dim);
        if let Some((rate, rng)) = dropout.as_mut() {
            if *rate > 0.0 {
                trace.dropout = Some(dropout_mask(trace.output.len(), *rate, &mut **rng));
            }
        }
        input = trace.emitted().top_rows(n);
        traces.push(trace);
    }
    traces
}

/// Per-timestep representations after the full recurrent stack (no dropout).
///
/// Forward cells scan the real-token prefix left to right, backward cells right
/// to left, both from a zero state; rows for trailing PAD positions are zero.
pub fn run_bidirectional_stack(seq: &FeatureSequence, m: &ModelParams) -> Result<Matrix> {
    check_input(seq, m)?;
    let traces = encode(seq, m, None);
    Ok(traces.last().expect("at least one layer").output.clone())
}

/// Logits, probabilities and, when `true_class` is given, the cross-entropy loss.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputResult {
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub loss: Option<f64>,
    pub predicted: usize,
}

pub fn output_layer(v: &[f64], m: &ModelParams, true_class: Option<usize>) -> Result<OutputResult> {
    if v.len() != m.output_w.cols() {
        return Err(Error::shape("abstract vector width", m.output_w.cols(), v.len()));
    }
    if let Some(c) = true_class {
        if c >= m.num_classes() {
            return Err(Error::ClassOutOfRange {
                index: c,
                classes: m.num_classes(),
            });
        }
    }
    let mut logits = m.output_b.as_slice().to_vec();
    m.output_w.mul_vec_add(v, &mut logits);
    if logits.iter().any(|l| !l.is_finite()) {
        return Err(Error::NonFinite("logits".into()));
    }
    let probabilities = softmax(&logits);
    let loss = true_class.map(|c| {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        lse - logits[c]
    });
    let predicted = argmax(&probabilities);
    Ok(OutputResult {
        logits,
        probabilities,
        loss,
        predicted,
    })
}

pub fn model_forward(seq: &FeatureSequence, m: &ModelParams, true_class: Option<usize>) -> Result<ForwardTrace> {
    forward_impl(seq, m, true_class, None)
}

/// Training-mode forward pass with inverted dropout after every recurrent layer.
pub fn model_forward_train(
    seq: &FeatureSequence,
    m: &ModelParams,
    true_class: Option<usize>,
    dropout_rate: f64,
    rng: &mut dyn RngCore,
) -> Result<ForwardTrace> {
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(Error::Config(format!("dropout rate {dropout_rate} not in [0, 1)")));
    }
    forward_impl(seq, m, true_class, Some((dropout_rate, rng)))
}

fn forward_impl(
    seq: &FeatureSequence,
    m: &ModelParams,
    true_class: Option<usize>,
    dropout: Option<(f64, &mut dyn RngCore)>,
) -> Result<ForwardTrace> {
    check_input(seq, m)?;
    if !seq.mask.iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }
    let layers = encode(seq, m, dropout);
    let top = layers.last().expect("at least one layer").emitted();

    let (attention, alpha, v) = match &m.attention {
        Some(a) => {
            let trace = attention_trace(&top, &seq.mask, a)?;
            let alpha = trace.alpha.clone();
            let v = trace.v.clone();
            (Some(trace), alpha, v)
        }
        None => {
            let real = seq.mask.iter().filter(|&&b| b).count() as f64;
            let alpha: Vec<f64> = seq.mask.iter().map(|&b| if b { 1.0 / real } else { 0.0 }).collect();
            let v = weighted_sum(&top, &alpha);
            (None, alpha, v)
        }
    };

    let out = output_layer(&v, m, true_class)?;
    Ok(ForwardTrace {
        mask: seq.mask.clone(),
        real_len: seq.real_prefix(),
        layers,
        attention,
        alpha,
        v,
        logits: out.logits,
        probabilities: out.probabilities,
        true_class,
        loss: out.loss,
    })
}

/// Exact gradients of the cross-entropy loss for one forward trace.
pub fn model_backward(trace: &ForwardTrace, m: &ModelParams) -> Result<ModelParams> {
    let mut grad = m.zeros_like();
    accumulate_gradients(trace, m, &mut grad)?;
    Ok(grad)
}

/// Adds the gradients of one trace into `grad`.
pub fn accumulate_gradients(trace: &ForwardTrace, m: &ModelParams, grad: &mut ModelParams) -> Result<()> {
    let class = trace.true_class.ok_or(Error::MissingLoss)?;
    if trace.loss.is_none() {
        return Err(Error::MissingLoss);
    }
    let mut dlogits = trace.probabilities.clone();
    dlogits[class] -= 1.0;

    grad.output_w.add_outer(&dlogits, &trace.v);
    grad.output_b.add_slice(&dlogits);
    let mut dv = vec![0.0; trace.v.len()];
    m.output_w.mul_t_vec_add(&dlogits, &mut dv);

    let top = trace.layers.last().expect("at least one layer").emitted();
    let mut d_emitted = match (&m.attention, &trace.attention) {
        (Some(a), Some(at)) => {
            let ga = grad.attention.as_mut().expect("gradient has attention");
            attention_backward(&top, &trace.mask, a, at, &dv, ga)
        }
        _ => {
            let mut dh = Matrix::zeros(top.rows(), top.cols());
            for (t, &alpha) in trace.alpha.iter().enumerate() {
                if alpha != 0.0 {
                    super::matrix::axpy(alpha, &dv, dh.row_mut(t));
                }
            }
            dh
        }
    };

    let n = trace.real_len;
    let hidden = m.spec.hidden_dim;
    for (l, lt) in trace.layers.iter().enumerate().rev() {
        if let Some(mask) = &lt.dropout {
            for (g, k) in d_emitted.as_mut_slice().iter_mut().zip(mask) {
                *g *= k;
            }
        }
        let layer = &m.layers[l];
        let glayer = &mut grad.layers[l];

        let mut dh_fwd = Matrix::zeros(n, hidden);
        for t in 0..n {
            dh_fwd.row_mut(t).copy_from_slice(&d_emitted.row(t)[..hidden]);
        }
        let mut dx = scan_backward(&layer.forward, &lt.input, &lt.forward, &dh_fwd, &mut glayer.forward);

        if let (Some(cell), Some(bt)) = (&layer.backward, &lt.backward) {
            let mut dh_bwd = Matrix::zeros(n, hidden);
            for t in 0..n {
                dh_bwd.row_mut(n - 1 - t).copy_from_slice(&d_emitted.row(t)[hidden..]);
            }
            let reversed = lt.input.reversed_rows();
            let gcell = glayer.backward.as_mut().expect("gradient has backward cell");
            let dx_rev = scan_backward(cell, &reversed, bt, &dh_bwd, gcell);
            dx.add_assign(&dx_rev.reversed_rows());
        }

        if l > 0 {
            let mut next = Matrix::zeros(trace.mask.len(), dx.cols());
            for t in 0..n {
                next.row_mut(t).copy_from_slice(dx.row(t));
            }
            d_emitted = next;
        }
    }
    Ok(())
}
