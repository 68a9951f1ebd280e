use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use super::linalg::symmetrize;
use crate::error::{Error, Result};

/// Result of collapsing `Σ_i -½ (x - m_i)ᵀ C_i⁻¹ (x - m_i)` into one quadratic in `x`.
///
/// The sum equals `-½ (x - mean)ᵀ cov⁻¹ (x - mean) + constant`.
#[derive(Debug, Clone)]
pub struct QuadraticSum {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub constant: f64,
}

pub fn sum_quadratic_forms(terms: &[(DVector<f64>, DMatrix<f64>)]) -> Result<QuadraticSum> {
    let Some((m0, _)) = terms.first() else {
        return Err(Error::Empty("quadratic forms"));
    };
    let d = m0.len();
    let mut precision = DMatrix::zeros(d, d);
    let mut info = DVector::zeros(d);
    let mut inverses = Vec::with_capacity(terms.len());
    for (m, c) in terms {
        if m.len() != d || c.nrows() != d || c.ncols() != d {
            return Err(Error::Dimension {
                what: "quadratic form",
                expected: d,
                got: m.len(),
            });
        }
        let ci = c
            .clone()
            .try_inverse()
            .ok_or(Error::Degenerate("quadratic form matrix is singular"))?;
        precision += &ci;
        info += &ci * m;
        inverses.push(ci);
    }
    let cov = symmetrize(
        &precision
            .clone()
            .try_inverse()
            .ok_or(Error::Degenerate("summed precision is singular"))?,
    );
    let mean = &cov * &info;
    let mut constant = 0.5 * mean.dot(&(&precision * &mean));
    for ((m, _), ci) in terms.iter().zip(&inverses) {
        constant -= 0.5 * m.dot(&(ci * m));
    }
    Ok(QuadraticSum { mean, cov, constant })
}

/// Special case `Σ_i ω_i · (-½ (x - m_i)ᵀ C⁻¹ (x - m_i))` with a shared `C` and positive weights.
pub fn sum_weighted_quadratic_forms(means: &[DVector<f64>], weights: &[f64], c: &DMatrix<f64>) -> Result<QuadraticSum> {
    if means.len() != weights.len() {
        return Err(Error::Dimension {
            what: "weights",
            expected: means.len(),
            got: weights.len(),
        });
    }
    let mut terms = Vec::with_capacity(means.len());
    for (m, &w) in means.iter().zip(weights) {
        if !(w > 0.0) || !w.is_finite() {
            return Err(Error::Domain {
                what: "quadratic form weight",
                value: w,
            });
        }
        terms.push((m.clone(), c / w));
    }
    sum_quadratic_forms(&terms)
}
