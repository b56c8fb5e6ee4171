//! Additive attention over per-word representations.
//!
//! `u_t = tanh(W h_t + b)`, `score_t = u_t . context`, `alpha = softmax(score)`
//! restricted to mask-true positions, and `v = sum_t alpha_t h_t`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::cell::xavier;
use super::matrix::{dot, softmax, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// `width x width`
    pub w: Matrix,
    /// `width x 1`
    pub b: Matrix,
    /// `width x 1`
    pub context: Matrix,
}

impl AttentionParams {
    pub fn zeros(width: usize) -> Self {
        AttentionParams {
            w: Matrix::zeros(width, width),
            b: Matrix::column(width),
            context: Matrix::column(width),
        }
    }

    pub fn init<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        let mut a = Self::zeros(width);
        xavier(&mut a.w, width, width, rng);
        xavier(&mut a.context, width, 1, rng);
        a
    }

    pub fn width(&self) -> usize {
        self.w.rows()
    }
}

/// Intermediates kept for the backward pass.
#[derive(Debug, Clone)]
pub struct AttentionTrace {
    /// `d x width` projected representations (rows for masked positions are zero).
    pub u: Matrix,
    pub scores: Vec<f64>,
    pub alpha: Vec<f64>,
    pub v: Vec<f64>,
}

pub(crate) fn masked_softmax(scores: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    let live: Vec<f64> = scores
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .map(|(s, _)| *s)
        .collect();
    if live.is_empty() {
        return Err(Error::EmptyMask);
    }
    let mut probs = softmax(&live).into_iter();
    Ok(mask
        .iter()
        .map(|&m| if m { probs.next().unwrap_or(0.0) } else { 0.0 })
        .collect())
}

pub(crate) fn weighted_sum(h: &Matrix, alpha: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; h.cols()];
    for (t, &a) in alpha.iter().enumerate() {
        if a != 0.0 {
            super::matrix::axpy(a, h.row(t), &mut v);
        }
    }
    v
}

pub(crate) fn attention_trace(h: &Matrix, mask: &[bool], a: &AttentionParams) -> Result<AttentionTrace> {
    let k = a.width();
    if h.cols() != k {
        return Err(Error::shape("attention input width", k, h.cols()));
    }
    if h.rows() != mask.len() {
        return Err(Error::shape("attention mask length", h.rows(), mask.len()));
    }
    let mut u = Matrix::zeros(h.rows(), k);
    let mut scores = vec![0.0; h.rows()];
    for t in 0..h.rows() {
        if !mask[t] {
            continue;
        }
        let row = u.row_mut(t);
        row.copy_from_slice(a.b.as_slice());
        a.w.mul_vec_add(h.row(t), row);
        row.iter_mut().for_each(|x| *x = x.tanh());
        scores[t] = dot(row, a.context.as_slice());
    }
    let alpha = masked_softmax(&scores, mask)?;
    let v = weighted_sum(h, &alpha);
    Ok(AttentionTrace { u, scores, alpha, v })
}

/// Attention weights and the aggregated vector.
pub fn attention_forward(
    h: &Matrix,
    mask: &[bool],
    a: &AttentionParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let trace = attention_trace(h, mask, a)?;
    Ok((trace.alpha, trace.v))
}

/// Given `dv`, accumulates parameter gradients and returns `dH`.
pub(crate) fn attention_backward(
    h: &Matrix,
    mask: &[bool],
    a: &AttentionParams,
    trace: &AttentionTrace,
    dv: &[f64],
    grad: &mut AttentionParams,
) -> Matrix {
    let k = a.width();
    let mut dh = Matrix::zeros(h.rows(), k);
    let dalpha: Vec<f64> = (0..h.rows())
        .map(|t| if mask[t] { dot(h.row(t), dv) } else { 0.0 })
        .collect();
    let mean: f64 = trace.alpha.iter().zip(&dalpha).map(|(a, d)| a * d).sum();
    let mut da = vec![0.0; k];
    for t in 0..h.rows() {
        if !mask[t] {
            continue;
        }
        let alpha = trace.alpha[t];
        super::matrix::axpy(alpha, dv, dh.row_mut(t));
        let ds = alpha * (dalpha[t] - mean);
        let u = trace.u.row(t);
        grad.context.add_slice(&u.iter().map(|x| ds * x).collect::<Vec<_>>());
        for j in 0..k {
            da[j] = ds * a.context.as_slice()[j] * (1.0 - u[j] * u[j]);
        }
        grad.w.add_outer(&da, h.row(t));
        grad.b.add_slice(&da);
        a.w.mul_t_vec_add(&da, dh.row_mut(t));
    }
    dh
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_scores_give_uniform_weights() {
        let a = AttentionParams::zeros(2);
        let h = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![3.0, 3.0]]);
        let (alpha, v) = attention_forward(&h, &[true, true, false], &a).unwrap();
        assert_eq!(alpha, vec![0.5, 0.5, 0.0]);
        assert_eq!(v, vec![0.5, 0.5]);
    }

    #[test]
    fn dominant_score() {
        let alpha = masked_softmax(&[10.0, 0.0, 0.0], &[true; 3]).unwrap();
        assert!((alpha[0] - 0.999909).abs() < 1e-6);
        assert!((alpha.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_mask_is_an_error() {
        let a = AttentionParams::zeros(2);
        let h = Matrix::zeros(2, 2);
        assert!(matches!(
            attention_forward(&h, &[false, false], &a),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn width_mismatch_is_an_error() {
        let a = AttentionParams::zeros(3);
        assert!(attention_forward(&Matrix::zeros(2, 2), &[true, true], &a).is_err());
    }
}
