use rand::{Rng, RngCore};

/// Dropout is active only while training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout scale factors: 0 with probability `rate`, else `1 / (1 - rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut dyn RngCore) -> Vec<f64> {
    debug_assert!((0.0..1.0).contains(&rate));
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

pub fn apply_dropout(activations: &[f64], rate: f64, mode: Mode, rng: &mut dyn RngCore) -> Vec<f64> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if mode == Mode::Eval || rate == 0.0 {
        return activations.to_vec();
    }
    let mask = dropout_mask(activations.len(), rate, rng);
    activations.iter().zip(mask).map(|(a, m)| a * m).collect()
}
