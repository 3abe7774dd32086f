//! Mini-batch Adam on pixel-mean binary cross-entropy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{LayerGrad, NetParams};
use crate::error::{Error, Result};
use crate::imgproc::{GrayFrame, WallMask};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub rng_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, batch_size: 32, epochs: 25, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, rng_seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // lr = 0 is allowed: it freezes the parameters.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", format!("must be a finite non-negative number, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config("beta1", "Adam betas must lie in [0, 1)"));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        Ok(())
    }
}

struct Adam {
    m: Vec<LayerGrad>,
    v: Vec<LayerGrad>,
    step: i32,
}

impl Adam {
    fn update(&mut self, params: &mut NetParams, grads: &[LayerGrad], cfg: &TrainConfig) {
        self.step += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.step);
        let c2 = 1.0 - cfg.beta2.powi(self.step);
        for (((layer, g), m), v) in params.layers.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let pairs = [(&mut layer.weights, &g.weights, &mut m.weights, &mut v.weights), (&mut layer.bias, &g.bias, &mut m.bias, &mut v.bias)];
            for (p, g, m, v) in pairs {
                for i in 0..p.len() {
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    p[i] -= cfg.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + cfg.epsilon);
                }
            }
        }
    }
}

/// Trains in place on a copy of `params`. Samples are reshuffled every
/// epoch; the history holds the mean per-sample loss seen during each
/// epoch (measured before that batch's update).
pub fn train(params: &NetParams, dataset: &[(GrayFrame, WallMask)], cfg: &TrainConfig) -> Result<(NetParams, Vec<f64>)> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut params = params.clone();
    let mut adam = Adam { m: params.zero_grad(), v: params.zero_grad(), step: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut losses = vec![0.0; dataset.len()];
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let frames: Vec<&GrayFrame> = idx.iter().map(|&i| &dataset[i].0).collect();
            let masks: Vec<&WallMask> = idx.iter().map(|&i| &dataset[i].1).collect();
            let (batch_losses, grads) = params.loss_and_grad(&frames, &masks)?;
            if batch_losses.iter().any(|l| !l.is_finite()) {
                return Err(Error::Divergence { epoch, batch });
            }
            for (&i, l) in idx.iter().zip(batch_losses) {
                losses[i] = l;
            }
            adam.update(&mut params, &grads, cfg);
            if !params.all_finite() {
                return Err(Error::Divergence { epoch, batch });
            }
        }
        let mean = losses.iter().sum::<f64>() / losses.len() as f64;
        log::debug!("epoch {}: loss {mean:.6}", epoch + 1);
        history.push(mean);
    }
    Ok((params, history))
}

/// `epoch,loss` rows, epochs counted from 1.
pub fn loss_csv(history: &[f64]) -> String {
    let mut s = String::from("epoch,loss\n");
    for (i, l) in history.iter().enumerate() {
        s.push_str(&format!("{},{l}\n", i + 1));
    }
    s
}
