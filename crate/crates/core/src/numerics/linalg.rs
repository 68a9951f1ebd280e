//! Small dense helpers for symmetric positive-definite matrices.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::math::{ln, LN_2PI};

/// Cholesky factor with cached log-determinant.
#[derive(Debug, Clone)]
pub struct SpdFactor {
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
}

impl SpdFactor {
    pub fn new(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension {
                what: "square matrix",
                expected: m.nrows(),
                got: m.ncols(),
            });
        }
        let sym = symmetrize(m);
        let chol = Cholesky::new(sym).ok_or(Error::Degenerate("Cholesky factorisation failed"))?;
        let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|d| ln(*d)).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::Degenerate("non-finite log-determinant"));
        }
        Ok(Self { chol, log_det })
    }

    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        symmetrize(&self.chol.inverse())
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(b)
    }

    /// `vᵀ M⁻¹ v`.
    pub fn quad(&self, v: &DVector<f64>) -> f64 {
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(v)
            .expect("Cholesky factor has a nonzero diagonal");
        z.norm_squared()
    }

    /// Same as [`quad`](Self::quad) for a borrowed slice.
    pub fn quad_slice(&self, v: &[f64]) -> f64 {
        self.quad(&DVector::from_column_slice(v))
    }

    /// `log N(v; 0, M)`.
    pub fn log_density(&self, v: &DVector<f64>) -> f64 {
        -0.5 * (self.dim() as f64 * LN_2PI + self.log_det + self.quad(v))
    }
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `log N(y; mean, cov)`.
pub fn gaussian_log_density(y: &DVector<f64>, mean: &DVector<f64>, cov: &DMatrix<f64>) -> Result<f64> {
    let f = SpdFactor::new(cov)?;
    Ok(f.log_density(&(y - mean)))
}
