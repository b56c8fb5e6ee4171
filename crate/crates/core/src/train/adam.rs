use crate::net::ModelParams;

use super::TrainConfig;

/// First and second moment accumulators mirroring the parameter tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: ModelParams,
    pub v: ModelParams,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        AdamState {
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(cfg: &TrainConfig) -> Self {
        AdamHyper {
            learning_rate: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }
}

/// Bias-corrected Adam update on flat slices; `t` is the 1-based step number.
pub fn adam_update(theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, h: AdamHyper) {
    let c1 = 1.0 - h.beta1.powi(t as i32);
    let c2 = 1.0 - h.beta2.powi(t as i32);
    for i in 0..theta.len() {
        m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
        v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= h.learning_rate * m_hat / (v_hat.sqrt() + h.epsilon);
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &ModelParams, state: &mut AdamState, h: AdamHyper) {
    state.t += 1;
    let t = state.t;
    let gs = grads.tensors();
    let ms = state.m.tensors_mut();
    let vs = state.v.tensors_mut();
    for (((p, (_, g)), m), v) in params.tensors_mut().into_iter().zip(gs).zip(ms).zip(vs) {
        adam_update(
            p.as_mut_slice(),
            g.as_slice(),
            m.as_mut_slice(),
            v.as_mut_slice(),
            t,
            h,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::{CellKind, ModelSpec};
    use rand::SeedableRng;

    fn hyper() -> AdamHyper {
        AdamHyper {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let (mut th, mut m, mut v) = ([0.0], [0.0], [0.0]);
        adam_update(&mut th, &[0.5], &mut m, &mut v, 1, hyper());
        assert!((th[0] + 1e-3 * 0.5 / (0.5 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut th, mut m, mut v) = ([0.25], [0.0], [0.0]);
        adam_update(&mut th, &[0.0], &mut m, &mut v, 1, hyper());
        assert_eq!(th[0], 0.25);
    }

    #[test]
    fn three_step_sequence_matches_reference() {
        // reference recurrence evaluated independently in double precision
        let expected = [-0.0009999999900000003, -0.000947368411578948, -0.0012831617661545937];
        let (mut th, mut m, mut v) = ([0.0], [0.0], [0.0]);
        for (t, (g, want)) in [1.0, -1.0, 1.0].iter().zip(expected).enumerate() {
            adam_update(&mut th, &[*g], &mut m, &mut v, t as u64 + 1, hyper());
            assert!((th[0] - want).abs() < 1e-12, "step {t}: {} vs {want}", th[0]);
        }
    }

    #[test]
    fn constant_gradients_keep_steps_bounded() {
        let (mut th, mut m, mut v) = ([0.0], [0.0], [0.0]);
        for t in 1..200 {
            let before = th[0];
            adam_update(&mut th, &[3.7], &mut m, &mut v, t, hyper());
            assert!((before - th[0]).abs() <= 1e-3 * (1.0 + 1e-9));
        }
    }

    #[test]
    fn step_updates_every_tensor() {
        let spec = ModelSpec {
            cell: CellKind::Gru,
            input_dim: 2,
            hidden_dim: 2,
            layers: 1,
            bidirectional: true,
            attention: true,
            seq_len: 3,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let mut p = ModelParams::init(&spec, vec!["a".into(), "b".into()], &mut rng).unwrap();
        let before = p.clone();
        let mut g = p.zeros_like();
        g.tensors_mut().into_iter().for_each(|t| t.fill(1.0));
        let mut state = AdamState::new(&p);
        adam_step(&mut p, &g, &mut state, hyper());
        assert_eq!(state.t, 1);
        for ((_, a), (_, b)) in p.tensors().into_iter().zip(before.tensors()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((y - x - 1e-3).abs() < 1e-9);
            }
        }
    }
}
