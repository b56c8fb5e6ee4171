//! LSTM and GRU cells with sequence-level forward and backpropagation through time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{sigmoid, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Lstm,
    Gru,
}

impl CellKind {
    /// Gate order used for parameter storage and tensor names.
    pub fn gate_names(self) -> &'static [&'static str] {
        match self {
            // input, forget, candidate, output
            CellKind::Lstm => &["i", "f", "z", "o"],
            // update, reset, candidate
            CellKind::Gru => &["z", "r", "h"],
        }
    }

    pub fn gate_count(self) -> usize {
        self.gate_names().len()
    }
}

impl std::str::FromStr for CellKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lstm" => Ok(CellKind::Lstm),
            "gru" => Ok(CellKind::Gru),
            other => Err(Error::Config(format!("unknown cell kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// `hidden x input`
    pub w: Matrix,
    /// `hidden x hidden`
    pub u: Matrix,
    /// `hidden x 1`
    pub b: Matrix,
}

impl GateParams {
    fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        GateParams {
            w: Matrix::zeros(hidden_dim, input_dim),
            u: Matrix::zeros(hidden_dim, hidden_dim),
            b: Matrix::column(hidden_dim),
        }
    }

    /// `out = b + W x + U h`
    fn preactivation(&self, x: &[f64], h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.b.as_slice());
        self.w.mul_vec_add(x, out);
        self.u.mul_vec_add(h, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub gates: Vec<GateParams>,
}

pub(crate) fn xavier<R: Rng + ?Sized>(m: &mut Matrix, fan_in: usize, fan_out: usize, rng: &mut R) {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for v in m.as_mut_slice() {
        *v = rng.gen_range(-bound..=bound);
    }
}

impl CellParams {
    pub fn zeros(kind: CellKind, input_dim: usize, hidden_dim: usize) -> Self {
        CellParams {
            kind,
            input_dim,
            hidden_dim,
            gates: (0..kind.gate_count())
                .map(|_| GateParams::zeros(input_dim, hidden_dim))
                .collect(),
        }
    }

    /// Uniform `+-sqrt(6 / (fan_in + fan_out))` weights, zero biases.
    pub fn init<R: Rng + ?Sized>(
        kind: CellKind,
        input_dim: usize,
        hidden_dim: usize,
        rng: &mut R,
    ) -> Self {
        let mut p = Self::zeros(kind, input_dim, hidden_dim);
        for g in &mut p.gates {
            xavier(&mut g.w, input_dim, hidden_dim, rng);
            xavier(&mut g.u, hidden_dim, hidden_dim, rng);
        }
        p
    }

    pub fn gate(&self, name: &str) -> Option<&GateParams> {
        let idx = self.kind.gate_names().iter().position(|g| *g == name)?;
        self.gates.get(idx)
    }

    pub fn gate_mut(&mut self, name: &str) -> Option<&mut GateParams> {
        let idx = self.kind.gate_names().iter().position(|g| *g == name)?;
        self.gates.get_mut(idx)
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<(String, &'a Matrix)>) {
        for (g, name) in self.gates.iter().zip(self.kind.gate_names()) {
            out.push((format!("{prefix}.W_{name}"), &g.w));
            out.push((format!("{prefix}.U_{name}"), &g.u));
            out.push((format!("{prefix}.b_{name}"), &g.b));
        }
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, out: &mut Vec<&'a mut Matrix>) {
        for g in &mut self.gates {
            out.push(&mut g.w);
            out.push(&mut g.u);
            out.push(&mut g.b);
        }
    }

    fn check(&self, x: &[f64], h: &[f64], c: Option<&[f64]>, kind: CellKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::shape("cell kind", format!("{kind:?}"), format!("{:?}", self.kind)));
        }
        if x.len() != self.input_dim {
            return Err(Error::shape("cell input", self.input_dim, x.len()));
        }
        if h.len() != self.hidden_dim {
            return Err(Error::shape("hidden state", self.hidden_dim, h.len()));
        }
        if let Some(c) = c {
            if c.len() != self.hidden_dim {
                return Err(Error::shape("cell state", self.hidden_dim, c.len()));
            }
        }
        Ok(())
    }
}

/// One LSTM step, returning `(h_t, c_t)`.
pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &CellParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    p.check(x, h_prev, Some(c_prev), CellKind::Lstm)?;
    let mut scratch = StepScratch::new(p.hidden_dim, 4);
    let mut h = vec![0.0; p.hidden_dim];
    let mut c = vec![0.0; p.hidden_dim];
    lstm_step(p, x, h_prev, c_prev, &mut scratch, &mut h, &mut c);
    Ok((h, c))
}

/// One GRU step, returning `h_t`.
pub fn gru_cell_forward(x: &[f64], h_prev: &[f64], p: &CellParams) -> Result<Vec<f64>> {
    p.check(x, h_prev, None, CellKind::Gru)?;
    let mut scratch = StepScratch::new(p.hidden_dim, 3);
    let mut h = vec![0.0; p.hidden_dim];
    gru_step(p, x, h_prev, &mut scratch, &mut h);
    Ok(h)
}

struct StepScratch {
    acts: Vec<Vec<f64>>,
    tmp: Vec<f64>,
}

impl StepScratch {
    fn new(hidden: usize, gates: usize) -> Self {
        StepScratch {
            acts: vec![vec![0.0; hidden]; gates],
            tmp: vec![0.0; hidden],
        }
    }
}

fn lstm_step(
    p: &CellParams,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    s: &mut StepScratch,
    h_out: &mut [f64],
    c_out: &mut [f64],
) {
    for (g, act) in p.gates.iter().zip(s.acts.iter_mut()) {
        g.preactivation(x, h_prev, act);
    }
    let [i, f, z, o] = &mut s.acts[..] else {
        unreachable!("lstm has four gates")
    };
    for k in 0..p.hidden_dim {
        i[k] = sigmoid(i[k]);
        f[k] = sigmoid(f[k]);
        z[k] = z[k].tanh();
        o[k] = sigmoid(o[k]);
        c_out[k] = z[k] * i[k] + c_prev[k] * f[k];
        h_out[k] = c_out[k].tanh() * o[k];
    }
}

fn gru_step(p: &CellParams, x: &[f64], h_prev: &[f64], s: &mut StepScratch, h_out: &mut [f64]) {
    let (zr, cand) = s.acts.split_at_mut(2);
    let (z, r) = zr.split_at_mut(1);
    let (z, r, cand) = (&mut z[0], &mut r[0], &mut cand[0]);
    p.gates[0].preactivation(x, h_prev, z);
    p.gates[1].preactivation(x, h_prev, r);
    for k in 0..p.hidden_dim {
        z[k] = sigmoid(z[k]);
        r[k] = sigmoid(r[k]);
        s.tmp[k] = r[k] * h_prev[k];
    }
    p.gates[2].preactivation(x, &s.tmp, cand);
    for k in 0..p.hidden_dim {
        cand[k] = cand[k].tanh();
        h_out[k] = (1.0 - z[k]) * h_prev[k] + z[k] * cand[k];
    }
}

/// Per-timestep activations of one cell scanned over a sequence.
#[derive(Debug, Clone)]
pub struct CellTrace {
    /// Gate activations, one `steps x hidden` matrix per gate.
    pub gates: Vec<Matrix>,
    /// Cell states (LSTM only).
    pub cell: Option<Matrix>,
    pub hidden: Matrix,
}

impl CellTrace {
    pub fn steps(&self) -> usize {
        self.hidden.rows()
    }
}

/// Scans `xs` (one row per timestep) from a zero initial state.
pub fn scan_forward(p: &CellParams, xs: &Matrix) -> CellTrace {
    let steps = xs.rows();
    let hd = p.hidden_dim;
    let gc = p.kind.gate_count();
    let mut gates = vec![Matrix::zeros(steps, hd); gc];
    let mut cell = (p.kind == CellKind::Lstm).then(|| Matrix::zeros(steps, hd));
    let mut hidden = Matrix::zeros(steps, hd);
    let mut scratch = StepScratch::new(hd, gc);
    let zeros = vec![0.0; hd];
    let mut h_prev = zeros.clone();
    let mut c_prev = zeros;
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];

    for t in 0..steps {
        let x = xs.row(t);
        match p.kind {
            CellKind::Lstm => {
                lstm_step(p, x, &h_prev, &c_prev, &mut scratch, &mut h, &mut c);
                cell.as_mut().expect("lstm cell state").row_mut(t).copy_from_slice(&c);
                std::mem::swap(&mut c_prev, &mut c);
            }
            CellKind::Gru => gru_step(p, x, &h_prev, &mut scratch, &mut h),
        }
        for (g, act) in gates.iter_mut().zip(&scratch.acts) {
            g.row_mut(t).copy_from_slice(act);
        }
        hidden.row_mut(t).copy_from_slice(&h);
        std::mem::swap(&mut h_prev, &mut h);
    }
    CellTrace {
        gates,
        cell,
        hidden,
    }
}

/// Backpropagation through time. `dh_out` holds the loss gradient for every
/// emitted hidden state; parameter gradients accumulate into `grad`, and the
/// returned matrix is the gradient with respect to `xs`.
pub fn scan_backward(
    p: &CellParams,
    xs: &Matrix,
    trace: &CellTrace,
    dh_out: &Matrix,
    grad: &mut CellParams,
) -> Matrix {
    let steps = xs.rows();
    let hd = p.hidden_dim;
    let mut dx = Matrix::zeros(steps, p.input_dim);
    let mut dh_next = vec![0.0; hd];
    let mut dc_next = vec![0.0; hd];
    let zeros = vec![0.0; hd];
    let mut dh = vec![0.0; hd];
    let mut dh_prev = vec![0.0; hd];
    let mut da: Vec<Vec<f64>> = vec![vec![0.0; hd]; p.kind.gate_count()];
    let mut tmp = vec![0.0; hd];

    for t in (0..steps).rev() {
        let x = xs.row(t);
        let h_prev: &[f64] = if t > 0 { trace.hidden.row(t - 1) } else { &zeros };
        for k in 0..hd {
            dh[k] = dh_out.get(t, k) + dh_next[k];
        }
        dh_prev.iter_mut().for_each(|v| *v = 0.0);

        match p.kind {
            CellKind::Lstm => {
                let cell = trace.cell.as_ref().expect("lstm trace has cell states");
                let c = cell.row(t);
                let c_prev: &[f64] = if t > 0 { cell.row(t - 1) } else { &zeros };
                let (i, f, z, o) = (
                    trace.gates[0].row(t),
                    trace.gates[1].row(t),
                    trace.gates[2].row(t),
                    trace.gates[3].row(t),
                );
                for k in 0..hd {
                    let tc = c[k].tanh();
                    let d_o = dh[k] * tc;
                    let dc = dh[k] * o[k] * (1.0 - tc * tc) + dc_next[k];
                    da[0][k] = dc * z[k] * i[k] * (1.0 - i[k]);
                    da[1][k] = dc * c_prev[k] * f[k] * (1.0 - f[k]);
                    da[2][k] = dc * i[k] * (1.0 - z[k] * z[k]);
                    da[3][k] = d_o * o[k] * (1.0 - o[k]);
                    dc_next[k] = dc * f[k];
                }
                for (g, (gp, d)) in grad.gates.iter_mut().zip(&da).enumerate() {
                    gp.w.add_outer(d, x);
                    gp.u.add_outer(d, h_prev);
                    gp.b.add_slice(d);
                    p.gates[g].w.mul_t_vec_add(d, dx.row_mut(t));
                    p.gates[g].u.mul_t_vec_add(d, &mut dh_prev);
                }
            }
            CellKind::Gru => {
                let (z, r, cand) = (
                    trace.gates[0].row(t),
                    trace.gates[1].row(t),
                    trace.gates[2].row(t),
                );
                for k in 0..hd {
                    let dz = dh[k] * (cand[k] - h_prev[k]);
                    dh_prev[k] = dh[k] * (1.0 - z[k]);
                    da[2][k] = dh[k] * z[k] * (1.0 - cand[k] * cand[k]);
                    da[0][k] = dz * z[k] * (1.0 - z[k]);
                    tmp[k] = r[k] * h_prev[k];
                }
                grad.gates[2].w.add_outer(&da[2], x);
                grad.gates[2].u.add_outer(&da[2], &tmp);
                grad.gates[2].b.add_slice(&da[2]);
                p.gates[2].w.mul_t_vec_add(&da[2], dx.row_mut(t));
                // tmp becomes d(r * h_prev)
                tmp.iter_mut().for_each(|v| *v = 0.0);
                p.gates[2].u.mul_t_vec_add(&da[2], &mut tmp);
                for k in 0..hd {
                    da[1][k] = tmp[k] * h_prev[k] * r[k] * (1.0 - r[k]);
                    dh_prev[k] += tmp[k] * r[k];
                }
                for g in 0..2 {
                    grad.gates[g].w.add_outer(&da[g], x);
                    grad.gates[g].u.add_outer(&da[g], h_prev);
                    grad.gates[g].b.add_slice(&da[g]);
                    p.gates[g].w.mul_t_vec_add(&da[g], dx.row_mut(t));
                    p.gates[g].u.mul_t_vec_add(&da[g], &mut dh_prev);
                }
            }
        }
        std::mem::swap(&mut dh_next, &mut dh_prev);
    }
    dx
}
