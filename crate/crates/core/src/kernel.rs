//! Allocation-free Gaussian log-density evaluation for the per-measurement hot loops.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::math::LN_2PI;
use crate::numerics::SpdFactor;

/// `log N(y; mean, cov) + offset` with the precision matrix cached row-major.
#[derive(Debug, Clone)]
pub(crate) struct GaussKernel {
    mean: Vec<f64>,
    prec: Vec<f64>,
    log_norm: f64,
}

impl GaussKernel {
    pub(crate) fn new(mean: &DVector<f64>, cov: &DMatrix<f64>, offset: f64) -> Result<Self> {
        let f = SpdFactor::new(cov)?;
        Ok(Self::from_factor(mean, &f, offset))
    }

    pub(crate) fn from_factor(mean: &DVector<f64>, f: &SpdFactor, offset: f64) -> Self {
        let d = mean.len();
        let p = f.inverse();
        let mut prec = Vec::with_capacity(d * d);
        for a in 0..d {
            for b in 0..d {
                prec.push(p[(a, b)]);
            }
        }
        Self {
            mean: mean.iter().copied().collect(),
            prec,
            log_norm: offset - 0.5 * (d as f64 * LN_2PI + f.log_det()),
        }
    }

    #[inline]
    pub(crate) fn quad(&self, y: &[f64]) -> f64 {
        let d = self.mean.len();
        let mut s = 0.0;
        for a in 0..d {
            let da = y[a] - self.mean[a];
            let row = &self.prec[a * d..(a + 1) * d];
            let mut t = 0.0;
            for b in 0..d {
                t += row[b] * (y[b] - self.mean[b]);
            }
            s += da * t;
        }
        s
    }

    #[inline]
    pub(crate) fn eval(&self, y: &[f64]) -> f64 {
        self.log_norm - 0.5 * self.quad(y)
    }
}
