//! Digamma and log-gamma on the positive reals.

use crate::error::{Error, Result};
use crate::math::{ln, LN_2PI};

const SHIFT_TO: f64 = 10.0;

// B_{2k} / (2k) for k = 1..7.
const PSI_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

// B_{2k} / (2k (2k - 1)) for k = 1..7.
const STIRLING_SERIES: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
];

fn check(what: &'static str, x: f64) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain { what, value: x });
    }
    Ok(())
}

/// ψ(x) for finite x > 0.
pub fn digamma(x: f64) -> Result<f64> {
    check("digamma argument", x)?;
    let mut acc = 0.0;
    let mut z = x;
    while z < SHIFT_TO {
        acc -= 1.0 / z;
        z += 1.0;
    }
    let inv2 = 1.0 / (z * z);
    let mut pow = inv2;
    let mut tail = 0.0;
    for c in PSI_SERIES {
        tail += c * pow;
        pow *= inv2;
    }
    Ok(acc + ln(z) - 0.5 / z - tail)
}

/// ln Γ(x) for finite x > 0.
pub fn ln_gamma(x: f64) -> Result<f64> {
    check("log-gamma argument", x)?;
    if x == 1.0 || x == 2.0 {
        return Ok(0.0);
    }
    let mut prod = 1.0;
    let mut z = x;
    while z < SHIFT_TO {
        prod *= z;
        z += 1.0;
    }
    let inv = 1.0 / z;
    let inv2 = inv * inv;
    let mut pow = inv;
    let mut tail = 0.0;
    for c in STIRLING_SERIES {
        tail += c * pow;
        pow *= inv2;
    }
    let stirling = (z - 0.5) * ln(z) - z + 0.5 * LN_2PI + tail;
    Ok(if prod == 1.0 { stirling } else { stirling - ln(prod) })
}
