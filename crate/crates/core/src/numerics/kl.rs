use nalgebra::DMatrix;

use super::linalg::SpdFactor;
use super::params::{GammaParams, GaussianParams};
use super::special::{digamma, ln_gamma};
use crate::error::{Error, Result};
use crate::math::ln;

/// `KL(q || p)` between two Gamma distributions.
pub fn kl_gamma(q: &GammaParams, p: &GammaParams) -> Result<f64> {
    let q = GammaParams::new(q.shape, q.scale)?;
    let p = GammaParams::new(p.shape, p.scale)?;
    Ok((q.shape - p.shape) * digamma(q.shape)? - ln_gamma(q.shape)?
        + ln_gamma(p.shape)?
        + p.shape * ln(p.scale / q.scale)
        + q.shape * (q.scale / p.scale - 1.0))
}

/// `KL(q || p)` between two multivariate normals.
pub fn kl_gaussian(q: &GaussianParams, p: &GaussianParams) -> Result<f64> {
    if q.dim() != p.dim() {
        return Err(Error::Dimension {
            what: "Gaussian KL",
            expected: p.dim(),
            got: q.dim(),
        });
    }
    let fp = SpdFactor::new(&p.cov)?;
    let fq = SpdFactor::new(&q.cov)?;
    let trace: f64 = fp.solve_mat(&q.cov).trace();
    let diff = &p.mean - &q.mean;
    let d = q.dim() as f64;
    Ok(0.5 * (trace + fp.quad(&diff) - d + fp.log_det() - fq.log_det()))
}

/// Same as [`kl_gaussian`] with a prebuilt factor for `p`.
pub(crate) fn kl_gaussian_factored(
    q_mean: &nalgebra::DVector<f64>,
    q_cov: &DMatrix<f64>,
    p_mean: &nalgebra::DVector<f64>,
    fp: &SpdFactor,
) -> Result<f64> {
    let fq = SpdFactor::new(q_cov)?;
    let trace: f64 = fp.solve_mat(q_cov).trace();
    let diff = p_mean - q_mean;
    let d = q_mean.len() as f64;
    Ok(0.5 * (trace + fp.quad(&diff) - d + fp.log_det() - fq.log_det()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};

    #[test]
    fn gamma_kl_zero_at_equality() {
        let a = GammaParams::new(3.2, 0.7).unwrap();
        assert!(kl_gamma(&a, &a).unwrap().abs() < 1e-14);
    }

    #[test]
    fn gamma_kl_closed_form_example() {
        let q = GammaParams::new(1.0, 2.0).unwrap();
        let p = GammaParams::new(1.0, 1.0).unwrap();
        let want = 1.0 - core::f64::consts::LN_2;
        assert!((kl_gamma(&q, &p).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn gaussian_kl_zero_at_equality() {
        let g = GaussianParams::new(
            DVector::from_vec(vec![1.0, -2.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        assert!(kl_gaussian(&g, &g).unwrap().abs() < 1e-12);
    }

    #[test]
    fn rejects_non_spd() {
        let g = GaussianParams::new(DVector::zeros(2), DMatrix::identity(2, 2)).unwrap();
        let bad = GaussianParams::new(DVector::zeros(2), DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0])).unwrap();
        assert!(kl_gaussian(&g, &bad).is_err());
    }
}
