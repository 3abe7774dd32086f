//! C-SVC with an RBF kernel, trained by SMO with second-order working
//! set selection.

use crate::error::{Error, Result};

pub const DEFAULT_COST: f64 = 10.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-3;

/// Gap below which the kernel curvature along a working pair counts as zero.
const TAU: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct Svm {
    pub gamma: f64,
    pub rho: f64,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` per support vector.
    pub coefficients: Vec<f64>,
}

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Dual solution on the training set, kept for diagnostics.
#[derive(Clone, Debug)]
pub struct SvmSolution {
    pub model: Svm,
    pub alpha: Vec<f64>,
    pub iterations: usize,
}

impl Svm {
    pub fn fit(x: &[Vec<f64>], y: &[bool], cost: f64, gamma: f64, tolerance: f64) -> Result<Self> {
        Ok(Self::solve(x, y, cost, gamma, tolerance)?.model)
    }

    pub fn solve(x: &[Vec<f64>], y: &[bool], cost: f64, gamma: f64, tolerance: f64) -> Result<SvmSolution> {
        super::tree::check_two_classes(y)?;
        if !(cost > 0.0 && cost.is_finite()) {
            return Err(Error::config("svm_cost", format!("must be positive, got {cost}")));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::config("svm_gamma", format!("must be positive, got {gamma}")));
        }
        let n = x.len();
        let ys: Vec<f64> = y.iter().map(|&v| if v { 1.0 } else { -1.0 }).collect();
        let k: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| rbf(gamma, &x[i], &x[j])).collect()).collect();
        let mut alpha = vec![0.0; n];
        // Gradient of ½αᵀQα − eᵀα with Q_ij = y_i y_j K_ij.
        let mut grad = vec![-1.0; n];
        let max_iter = (100 * n).max(10_000_000);
        let mut iterations = 0;
        let up = |a: f64, yi: f64| (yi > 0.0 && a < cost) || (yi < 0.0 && a > 0.0);
        let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < cost);
        while iterations < max_iter {
            // i maximises -y G over the up set.
            let mut gmax = f64::NEG_INFINITY;
            let mut i = usize::MAX;
            for t in 0..n {
                if up(alpha[t], ys[t]) && -ys[t] * grad[t] >= gmax {
                    gmax = -ys[t] * grad[t];
                    i = t;
                }
            }
            let mut gmax2 = f64::NEG_INFINITY;
            let mut j = usize::MAX;
            let mut obj_min = f64::INFINITY;
            for t in 0..n {
                if !low(alpha[t], ys[t]) {
                    continue;
                }
                gmax2 = gmax2.max(ys[t] * grad[t]);
                if i == usize::MAX {
                    continue;
                }
                let b = gmax + ys[t] * grad[t];
                if b > 0.0 {
                    let a = k[i][i] + k[t][t] - 2.0 * k[i][t];
                    let obj = -(b * b) / if a > 0.0 { a } else { TAU };
                    if obj <= obj_min {
                        obj_min = obj;
                        j = t;
                    }
                }
            }
            if gmax + gmax2 < tolerance || j == usize::MAX {
                break;
            }
            iterations += 1;
            let (old_i, old_j) = (alpha[i], alpha[j]);
            let quad = (k[i][i] + k[j][j] - 2.0 * k[i][j]).max(TAU);
            if ys[i] != ys[j] {
                let delta = (-grad[i] - grad[j]) / quad;
                let diff = alpha[i] - alpha[j];
                alpha[i] += delta;
                alpha[j] += delta;
                if diff > 0.0 {
                    if alpha[j] < 0.0 {
                        alpha[j] = 0.0;
                        alpha[i] = diff;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = -diff;
                }
                if diff > 0.0 {
                    if alpha[i] > cost {
                        alpha[i] = cost;
                        alpha[j] = cost - diff;
                    }
                } else if alpha[j] > cost {
                    alpha[j] = cost;
                    alpha[i] = cost + diff;
                }
            } else {
                let delta = (grad[i] - grad[j]) / quad;
                let sum = alpha[i] + alpha[j];
                alpha[i] -= delta;
                alpha[j] += delta;
                if sum > cost {
                    if alpha[i] > cost {
                        alpha[i] = cost;
                        alpha[j] = sum - cost;
                    }
                } else if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = sum;
                }
                if sum > cost {
                    if alpha[j] > cost {
                        alpha[j] = cost;
                        alpha[i] = sum - cost;
                    }
                } else if alpha[i] < 0.0 {
                    alpha[i] = 0.0;
                    alpha[j] = sum;
                }
            }
            let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
            for t in 0..n {
                grad[t] += ys[t] * (ys[i] * k[i][t] * di + ys[j] * k[j][t] * dj);
            }
        }
        if iterations >= max_iter {
            log::warn!("SMO stopped at the iteration cap ({max_iter}) before reaching tolerance {tolerance}");
        }
        // rho: mean of y G over free vectors, else the middle of the feasible interval.
        let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut sum_free, mut n_free) = (0.0, 0usize);
        for t in 0..n {
            let yg = ys[t] * grad[t];
            let at_upper = alpha[t] >= cost;
            let at_lower = alpha[t] <= 0.0;
            if at_upper {
                if ys[t] < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if at_lower {
                if ys[t] > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                sum_free += yg;
                n_free += 1;
            }
        }
        let rho = if n_free > 0 { sum_free / n_free as f64 } else { (ub + lb) / 2.0 };
        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        for t in 0..n {
            if alpha[t] > 0.0 {
                support_vectors.push(x[t].clone());
                coefficients.push(alpha[t] * ys[t]);
            }
        }
        Ok(SvmSolution { model: Svm { gamma, rho, support_vectors, coefficients }, alpha, iterations })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors.iter().zip(&self.coefficients).map(|(sv, c)| c * rbf(self.gamma, sv, x)).sum::<f64>() - self.rho
    }

    /// Decision value ≥ 0 is positive.
    pub fn predict(&self, x: &[f64]) -> bool {
        self.decision(x) >= 0.0
    }
}

/// Largest KKT violation of a dual solution, measured on the margin
/// `y f(x)`: free vectors sit on 1, vectors at 0 are outside, vectors at
/// C inside.
pub fn kkt_residual(solution: &SvmSolution, x: &[Vec<f64>], y: &[bool], cost: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for ((row, &label), &a) in x.iter().zip(y).zip(&solution.alpha) {
        let margin = if label { 1.0 } else { -1.0 } * solution.model.decision(row);
        let r = if a <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if a >= cost {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(r);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn blobs(seed: u64, n: usize, gap: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 2 == 0;
            let c = if label { gap } else { -gap };
            x.push(vec![c + rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]);
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn separable_blobs_train_perfectly_within_tolerance() {
        for seed in 0..5 {
            let (x, y) = blobs(seed, 40, 1.5);
            let sol = Svm::solve(&x, &y, DEFAULT_COST, 0.5, DEFAULT_TOLERANCE).unwrap();
            for (row, &label) in x.iter().zip(&y) {
                assert_eq!(sol.model.predict(row), label);
            }
            assert!(kkt_residual(&sol, &x, &y, DEFAULT_COST) <= DEFAULT_TOLERANCE);
        }
    }

    #[test]
    fn two_points_have_symmetric_solution() {
        let x = vec![vec![0.0], vec![1.0]];
        let sol = Svm::solve(&x, &[false, true], 10.0, 1.0, 1e-6).unwrap();
        // Closed form: alpha = 2 / (2 - 2 e^-1) for both, rho = 0.
        let a = 1.0 / (1.0 - (-1.0f64).exp());
        for v in &sol.alpha {
            assert!((v - a).abs() < 1e-9, "{v} vs {a}");
        }
        assert!(sol.model.rho.abs() < 1e-12);
    }

    #[test]
    fn zero_decision_is_positive() {
        let m = Svm { gamma: 1.0, rho: 0.0, support_vectors: vec![vec![0.0], vec![1.0]], coefficients: vec![-2.0, 2.0] };
        assert_eq!(m.decision(&[0.5]), 0.0);
        assert!(m.predict(&[0.5]));
    }

    #[test]
    fn overlapping_classes_bound_alphas() {
        let (x, y) = blobs(9, 60, 0.2);
        let sol = Svm::solve(&x, &y, 1.0, 1.0, DEFAULT_TOLERANCE).unwrap();
        assert!(sol.alpha.iter().all(|&a| (0.0..=1.0).contains(&a)));
        let sum: f64 = sol.alpha.iter().zip(&y).map(|(a, &l)| if l { *a } else { -a }).sum();
        assert!(sum.abs() < 1e-9);
        assert!(kkt_residual(&sol, &x, &y, 1.0) <= DEFAULT_TOLERANCE);
    }
}
