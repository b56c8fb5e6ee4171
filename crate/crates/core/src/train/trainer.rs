use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamHyper, AdamState};
use super::TrainConfig;
use crate::embed::FeatureSequence;
use crate::error::{Error, Result};
use crate::net::{accumulate_gradients, model_forward, model_forward_train, ModelParams, ModelSpec};

/// One featurized training or test sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub seq: FeatureSequence,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub test_micro_f1: Option<f64>,
    pub wall_seconds: f64,
}

/// Argmax class for every sequence.
pub fn predict(m: &ModelParams, seqs: &[&FeatureSequence]) -> Result<Vec<usize>> {
    seqs.par_iter()
        .map(|s| Ok(model_forward(s, m, None)?.predicted()))
        .collect()
}

/// Mean loss and micro-F1 (accuracy, for single-label data) over `examples`.
pub fn evaluate_examples(m: &ModelParams, examples: &[Example]) -> Result<(f64, f64)> {
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let results: Vec<(f64, bool)> = examples
        .par_iter()
        .map(|ex| {
            let t = model_forward(&ex.seq, m, Some(ex.class))?;
            Ok((t.loss.unwrap_or(f64::NAN), t.predicted() == ex.class))
        })
        .collect::<Result<_>>()?;
    let n = results.len() as f64;
    let loss = results.iter().map(|r| r.0).sum::<f64>() / n;
    let hits = results.iter().filter(|r| r.1).count() as f64;
    Ok((loss, hits / n))
}

struct SampleGrad {
    loss: f64,
    grad: ModelParams,
}

fn sample_gradient(
    m: &ModelParams,
    ex: &Example,
    dropout: f64,
    seed: u64,
    stream: u64,
) -> Result<SampleGrad> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let trace = model_forward_train(&ex.seq, m, Some(ex.class), dropout, &mut rng)?;
    let mut grad = m.zeros_like();
    accumulate_gradients(&trace, m, &mut grad)?;
    Ok(SampleGrad {
        loss: trace.loss.expect("loss present with a true class"),
        grad,
    })
}

/// Trains freshly initialized parameters. Initialization, shuffling and
/// dropout all derive from `cfg.seed`.
pub fn train_model(
    train: &[Example],
    test: &[Example],
    cfg: &TrainConfig,
    spec: &ModelSpec,
    label_names: Vec<String>,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let params = ModelParams::init(spec, label_names, &mut rng)?;
    train_from(params, train, test, cfg)
}

/// Runs `cfg.epochs` epochs of shuffled mini-batch Adam on mean cross-entropy.
///
/// Per-sample gradients may be computed on any number of rayon workers; they
/// are summed in batch order, so results do not depend on the pool size.
pub fn train_from(
    mut params: ModelParams,
    train: &[Example],
    test: &[Example],
    cfg: &TrainConfig,
) -> Result<(ModelParams, Vec<EpochLog>)> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for ex in train.iter().chain(test) {
        if ex.class >= params.num_classes() {
            return Err(Error::ClassOutOfRange {
                index: ex.class,
                classes: params.num_classes(),
            });
        }
    }

    let hyper = AdamHyper::from(cfg);
    let mut state = AdamState::new(&params);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let dropout_seed = cfg.seed.wrapping_add(2);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut sample_counter: u64 = 0;

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;

        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            let base = sample_counter;
            sample_counter += batch.len() as u64;
            let grads: Vec<SampleGrad> = batch
                .par_iter()
                .enumerate()
                .map(|(k, &i)| sample_gradient(&params, &train[i], cfg.dropout_rate, dropout_seed, base + k as u64))
                .collect::<Result<_>>()?;

            let mut total = params.zeros_like();
            let mut batch_loss = 0.0;
            for g in &grads {
                total.add_assign(&g.grad);
                batch_loss += g.loss;
            }
            if !batch_loss.is_finite() || !total.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                    loss: batch_loss,
                });
            }
            total.scale(1.0 / batch.len() as f64);
            adam_step(&mut params, &total, &mut state, hyper);
            loss_sum += batch_loss;
        }

        let test_micro_f1 = if test.is_empty() {
            None
        } else {
            Some(evaluate_examples(&params, test)?.1)
        };
        log.push(EpochLog {
            epoch,
            mean_loss: loss_sum / train.len() as f64,
            test_micro_f1,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok((params, log))
}
