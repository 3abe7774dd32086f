//! Central finite-difference gradient checks.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::NetParams;
use crate::error::Result;
use crate::imgproc::{GrayFrame, WallMask};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheck {
    pub max_relative_error: f64,
    pub probes: usize,
    /// No probes were taken; the error value carries no information.
    pub vacuous: bool,
}

/// Compares `analytic[i]` with `(f(i, +eps) - f(i, -eps)) / 2eps` for every
/// probed index. `loss_at(i, d)` evaluates the loss with parameter `i`
/// shifted by `d`.
pub fn check_gradient(analytic: &[f64], probes: &[usize], epsilon: f64, mut loss_at: impl FnMut(usize, f64) -> f64) -> GradCheck {
    let mut worst: f64 = 0.0;
    for &i in probes {
        let fd = (loss_at(i, epsilon) - loss_at(i, -epsilon)) / (2.0 * epsilon);
        let ga = analytic[i];
        let rel = (ga - fd).abs() / ga.abs().max(fd.abs()).max(1e-12);
        worst = worst.max(rel);
    }
    if probes.is_empty() {
        log::warn!("gradient check ran with zero probes");
    }
    GradCheck { max_relative_error: worst, probes: probes.len(), vacuous: probes.is_empty() }
}

/// Gradient check of the network loss on one sample over `n_probes`
/// distinct randomly chosen parameters (all of them if there are fewer).
pub fn gradient_check(params: &NetParams, sample_pair: (&GrayFrame, &WallMask), epsilon: f64, n_probes: usize, seed: u64) -> Result<GradCheck> {
    let (frame, mask) = sample_pair;
    let (_, grads) = params.loss_and_grad(&[frame], &[mask])?;
    let analytic: Vec<f64> = grads.iter().flat_map(|g| g.weights.iter().chain(&g.bias).copied()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probes = sample(&mut rng, analytic.len(), n_probes.min(analytic.len())).into_vec();
    probes.sort_unstable();
    let mut work = params.clone();
    let mut failure = None;
    let report = check_gradient(&analytic, &probes, epsilon, |i, d| {
        let orig = *work.param_mut(i);
        *work.param_mut(i) = orig + d;
        let loss = work.loss(&[frame], &[mask]);
        *work.param_mut(i) = orig;
        match loss {
            Ok(l) => l[0],
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    match failure {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
