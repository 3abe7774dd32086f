//! Linear discriminant with a pseudo-inverse pooled covariance and
//! uniform class priors.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Lda {
    /// `S⁺ (μ₊ − μ₋)`.
    pub weights: Vec<f64>,
    /// `(μ₊ + μ₋) / 2`.
    pub midpoint: Vec<f64>,
}

impl Lda {
    pub fn fit(x: &[Vec<f64>], y: &[bool]) -> Result<Self> {
        let d = x.first().map_or(0, Vec::len);
        let (mut mu_pos, mut mu_neg) = (DVector::zeros(d), DVector::zeros(d));
        let (mut n_pos, mut n_neg) = (0usize, 0usize);
        for (row, &label) in x.iter().zip(y) {
            let v = DVector::from_column_slice(row);
            if label {
                mu_pos += v;
                n_pos += 1;
            } else {
                mu_neg += v;
                n_neg += 1;
            }
        }
        if n_pos == 0 || n_neg == 0 {
            return Err(Error::SingleClass);
        }
        mu_pos /= n_pos as f64;
        mu_neg /= n_neg as f64;
        let mut scatter = DMatrix::zeros(d, d);
        for (row, &label) in x.iter().zip(y) {
            let c = DVector::from_column_slice(row) - if label { &mu_pos } else { &mu_neg };
            scatter.ger(1.0, &c, &c, 1.0);
        }
        let dof = (x.len() as f64 - 2.0).max(1.0);
        let cov = scatter / dof;
        let pinv = pseudo_inverse(cov);
        let weights = &pinv * (&mu_pos - &mu_neg);
        let midpoint = (&mu_pos + &mu_neg) / 2.0;
        Ok(Self { weights: weights.as_slice().to_vec(), midpoint: midpoint.as_slice().to_vec() })
    }

    /// Difference of the two class discriminants; ≥ 0 is positive.
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.weights.iter().zip(x.iter().zip(&self.midpoint)).map(|(w, (v, m))| w * (v - m)).sum()
    }
}

/// Moore-Penrose inverse with singular values below
/// `max(sv) · dim · ε` treated as zero.
fn pseudo_inverse(m: DMatrix<f64>) -> DMatrix<f64> {
    let dim = m.nrows().max(1);
    let svd = m.svd(true, true);
    let top = svd.singular_values.max();
    if top == 0.0 {
        return DMatrix::zeros(dim, dim);
    }
    let tol = top * dim as f64 * f64::EPSILON;
    svd.pseudo_inverse(tol).expect("u and v were computed")
}
