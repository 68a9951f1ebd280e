//! Poisson CDF and a monotone continuous extension of it that can be inverted.

use alloc::vec::Vec;

use super::special::ln_gamma;
use crate::error::{Error, Result};
use crate::math::{ceil, exp, floor, ln, sqrt};

/// Exact Poisson CDF `P(N <= n)` for rate `lambda`.
pub fn poisson_cdf(n: u64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain {
            what: "Poisson rate",
            value: lambda,
        });
    }
    let mut acc = 0.0;
    let ll = ln(lambda);
    for k in 0..=n {
        let kf = k as f64;
        let lp = kf * ll - lambda - ln_gamma(kf + 1.0)?;
        acc += exp(lp);
        if lp < -800.0 && kf > lambda {
            break;
        }
    }
    Ok(acc.min(1.0))
}

/// Piecewise-cubic monotone interpolant through `(n, P(N <= n))` on integer knots.
///
/// Past the last knot the value is held at the last knot value.
#[derive(Debug, Clone)]
pub struct InterpolatedPoissonCdf {
    lambda: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl InterpolatedPoissonCdf {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::Domain {
                what: "Poisson rate",
                value: lambda,
            });
        }
        let last = ceil(lambda + 12.0 * sqrt(lambda) + 20.0) as usize;
        let ll = ln(lambda);
        let mut values = Vec::with_capacity(last + 1);
        let mut acc = 0.0;
        for k in 0..=last {
            let kf = k as f64;
            acc += exp(kf * ll - lambda - ln_gamma(kf + 1.0)?);
            values.push(acc.min(1.0));
        }
        let slopes = pchip_slopes(&values);
        Ok(Self { lambda, values, slopes })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Largest knot; the interpolant is constant beyond it.
    pub fn upper(&self) -> f64 {
        (self.values.len() - 1) as f64
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return self.values[0];
        }
        let last = self.values.len() - 1;
        if x >= last as f64 {
            return self.values[last];
        }
        let i = floor(x) as usize;
        let t = x - i as f64;
        hermite(
            self.values[i],
            self.values[i + 1],
            self.slopes[i],
            self.slopes[i + 1],
            t,
        )
    }

    /// Solves `evaluate(x) = p` for `x`.
    ///
    /// `p` must lie strictly between `evaluate(0)` and 1.
    pub fn invert(&self, p: f64) -> Result<f64> {
        let lo_val = self.values[0];
        let hi_val = *self.values.last().unwrap();
        if !(p > lo_val && p < 1.0) || p > hi_val {
            return Err(Error::OutOfRange { p, lo: lo_val, hi: 1.0 });
        }
        // First knot whose value reaches p.
        let j = self.values.partition_point(|&v| v < p);
        let i = j - 1;
        let (a, b) = (self.values[i], self.values[j]);
        let (da, db) = (self.slopes[i], self.slopes[j]);
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if hermite(a, b, da, db, mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        Ok(i as f64 + 0.5 * (lo + hi))
    }
}

fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, t: f64) -> f64 {
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * d0 + h01 * y1 + h11 * d1
}

// Fritsch-Carlson slopes for unit knot spacing.
fn pchip_slopes(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    let mut d = alloc::vec![0.0; n];
    if n < 2 {
        return d;
    }
    let delta: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    if n == 2 {
        d[0] = delta[0];
        d[1] = delta[0];
        return d;
    }
    for i in 1..n - 1 {
        let (a, b) = (delta[i - 1], delta[i]);
        d[i] = if a > 0.0 && b > 0.0 { 2.0 * a * b / (a + b) } else { 0.0 };
    }
    d[0] = end_slope(delta[0], delta[1]);
    d[n - 1] = end_slope(delta[n - 2], delta[n - 3]);
    d
}

fn end_slope(near: f64, far: f64) -> f64 {
    let d = (3.0 * near - far) / 2.0;
    if d <= 0.0 || near <= 0.0 {
        0.0
    } else if far <= 0.0 && d > 3.0 * near {
        3.0 * near
    } else {
        d
    }
}
