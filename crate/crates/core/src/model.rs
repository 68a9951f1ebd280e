//! Object dynamics, the Poisson measurement model, and the containers passed between stages.
//!
//! Component index 0 is clutter; object `k >= 1` is stored at position `k - 1`
//! of any per-object vector.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::math::{ln, log_sum_exp};
use crate::numerics::{ln_gamma, GaussianParams, SpdFactor};

/// Axis-aligned box in measurement space.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::Dimension {
                what: "region bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        for (l, u) in lower.iter().zip(&upper) {
            if !(u > l) || !l.is_finite() || !u.is_finite() {
                return Err(Error::Config("region bounds must be finite with upper > lower".into()));
            }
        }
        Ok(Self { lower, upper })
    }

    /// Square of the given side centred at the origin.
    pub fn centered_square(side: f64) -> Result<Self> {
        let h = side / 2.0;
        Self::new(vec![-h, -h], vec![h, h])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn volume(&self) -> f64 {
        self.lower.iter().zip(&self.upper).map(|(l, u)| u - l).product()
    }

    pub fn contains(&self, y: &[f64]) -> bool {
        y.len() == self.dim()
            && y.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }
}

/// Per-object linear Gaussian dynamics `x_n = F x_{n-1} + B + v`, `v ~ N(0, Q)`.
#[derive(Debug, Clone)]
pub struct TransitionModel {
    f: Vec<DMatrix<f64>>,
    b: Vec<DVector<f64>>,
    q: Vec<DMatrix<f64>>,
}

impl TransitionModel {
    pub fn new(f: Vec<DMatrix<f64>>, b: Vec<DVector<f64>>, q: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = f.len();
        if b.len() != k || q.len() != k {
            return Err(Error::Dimension {
                what: "transition model object count",
                expected: k,
                got: b.len().min(q.len()),
            });
        }
        for i in 0..k {
            let n = f[i].nrows();
            if f[i].ncols() != n || b[i].len() != n || q[i].nrows() != n || q[i].ncols() != n {
                return Err(Error::Dimension {
                    what: "transition model matrices",
                    expected: n,
                    got: b[i].len(),
                });
            }
        }
        Ok(Self { f, b, q })
    }

    /// Nearly-constant-velocity model in 2-D with state `[x, vx, y, vy]`.
    pub fn constant_velocity(num_objects: usize, dt: f64, accel_var: f64) -> Self {
        let (f, q) = cv_blocks(dt, accel_var);
        Self {
            f: vec![f; num_objects],
            b: vec![DVector::zeros(4); num_objects],
            q: vec![q; num_objects],
        }
    }

    pub fn num_objects(&self) -> usize {
        self.f.len()
    }

    pub fn f(&self, k: usize) -> &DMatrix<f64> {
        &self.f[k - 1]
    }

    pub fn b(&self, k: usize) -> &DVector<f64> {
        &self.b[k - 1]
    }

    pub fn q(&self, k: usize) -> &DMatrix<f64> {
        &self.q[k - 1]
    }

    /// Push a Gaussian belief on object `k` through the dynamics.
    pub fn predict(&self, k: usize, belief: &GaussianParams) -> GaussianParams {
        let f = self.f(k);
        let mean = f * &belief.mean + self.b(k);
        let cov = f * &belief.cov * f.transpose() + self.q(k);
        GaussianParams {
            mean,
            cov: crate::numerics::linalg::symmetrize(&cov),
        }
    }
}

fn cv_blocks(dt: f64, accel_var: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut f = DMatrix::identity(4, 4);
    f[(0, 1)] = dt;
    f[(2, 3)] = dt;
    let (a, b, c) = (dt * dt * dt / 3.0, dt * dt / 2.0, dt);
    let mut q = DMatrix::zeros(4, 4);
    for o in [0, 2] {
        q[(o, o)] = accel_var * a;
        q[(o, o + 1)] = accel_var * b;
        q[(o + 1, o)] = accel_var * b;
        q[(o + 1, o + 1)] = accel_var * c;
    }
    (f, q)
}

/// Linear Gaussian object measurements plus uniform clutter over `region`.
#[derive(Debug, Clone)]
pub struct MeasurementModel {
    h: DMatrix<f64>,
    r: Vec<DMatrix<f64>>,
    r_factor: Vec<SpdFactor>,
    region: Region,
}

impl MeasurementModel {
    pub fn new(h: DMatrix<f64>, r: Vec<DMatrix<f64>>, region: Region) -> Result<Self> {
        let d = h.nrows();
        if region.dim() != d {
            return Err(Error::Dimension {
                what: "region dimension",
                expected: d,
                got: region.dim(),
            });
        }
        let mut r_factor = Vec::with_capacity(r.len());
        for rk in &r {
            if rk.nrows() != d || rk.ncols() != d {
                return Err(Error::Dimension {
                    what: "measurement noise",
                    expected: d,
                    got: rk.nrows(),
                });
            }
            r_factor.push(SpdFactor::new(rk)?);
        }
        Ok(Self { h, r, r_factor, region })
    }

    /// Position-only measurements of the `[x, vx, y, vy]` state with isotropic noise.
    pub fn positional(num_objects: usize, noise_var: f64, region: Region) -> Result<Self> {
        let mut h = DMatrix::zeros(2, 4);
        h[(0, 0)] = 1.0;
        h[(1, 2)] = 1.0;
        let r = DMatrix::identity(2, 2) * noise_var;
        Self::new(h, vec![r; num_objects], region)
    }

    pub fn num_objects(&self) -> usize {
        self.r.len()
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    pub fn state_dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self, k: usize) -> &DMatrix<f64> {
        &self.r[k - 1]
    }

    pub(crate) fn r_factor(&self, k: usize) -> &SpdFactor {
        &self.r_factor[k - 1]
    }

    pub fn region(&self) -> &Region {
        &self.region
    }

    /// `ln ℓ(y | x_k)`; `k = 0` is clutter and ignores `x`.
    pub fn emission_log_likelihood(&self, y: &[f64], k: usize, x: Option<&DVector<f64>>) -> Result<f64> {
        if y.len() != self.dim() {
            return Err(Error::Dimension {
                what: "measurement",
                expected: self.dim(),
                got: y.len(),
            });
        }
        if k == 0 {
            return Ok(-ln(self.region.volume()));
        }
        if k > self.num_objects() {
            return Err(Error::Dimension {
                what: "object index",
                expected: self.num_objects(),
                got: k,
            });
        }
        let x = x.ok_or(Error::Config("object emission needs a state".into()))?;
        if x.len() != self.state_dim() {
            return Err(Error::Dimension {
                what: "state",
                expected: self.state_dim(),
                got: x.len(),
            });
        }
        let resid = DVector::from_column_slice(y) - &self.h * x;
        Ok(self.r_factor(k).log_density(&resid))
    }
}

/// The measurements observed at one time step, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementFrame {
    step: usize,
    dim: usize,
    data: Vec<f64>,
}

impl MeasurementFrame {
    pub fn new(step: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                what: "frame data length",
                expected: dim,
                got: data.len(),
            });
        }
        Ok(Self { step, dim, data })
    }

    pub fn from_points(step: usize, dim: usize, points: &[Vec<f64>]) -> Result<Self> {
        let mut data = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::Dimension {
                    what: "measurement",
                    expected: dim,
                    got: p.len(),
                });
            }
            data.extend_from_slice(p);
        }
        Self::new(step, dim, data)
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Poisson rates, clutter first.
#[derive(Debug, Clone, PartialEq)]
pub struct RateVector(Vec<f64>);

impl RateVector {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Empty("rate vector"));
        }
        for &r in &rates {
            if !(r >= 0.0) || !r.is_finite() {
                return Err(Error::Domain {
                    what: "Poisson rate",
                    value: r,
                });
            }
        }
        Ok(Self(rates))
    }

    pub fn clutter(&self) -> f64 {
        self.0[0]
    }

    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn num_objects(&self) -> usize {
        self.0.len() - 1
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }
}

/// Row-stochastic matrix of association probabilities, one row per measurement
/// and one column per component (clutter in column 0).
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationWeights {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AssociationWeights {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols || cols == 0 {
            return Err(Error::Dimension {
                what: "association weights",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    /// Normalise each row of log-weights. A row with no finite entry goes to clutter.
    pub fn from_log_weights(rows: usize, cols: usize, mut logw: Vec<f64>) -> Result<Self> {
        if logw.len() != rows * cols || cols == 0 {
            return Err(Error::Dimension {
                what: "association log-weights",
                expected: rows * cols,
                got: logw.len(),
            });
        }
        for row in logw.chunks_exact_mut(cols) {
            normalize_log_row(row);
        }
        Ok(Self { rows, cols, data: logw })
    }

    pub fn num_measurements(&self) -> usize {
        self.rows
    }

    pub fn num_components(&self) -> usize {
        self.cols
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.cols + k]
    }

    pub fn set(&mut self, j: usize, k: usize, v: f64) {
        self.data[j * self.cols + k] = v;
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.cols..(j + 1) * self.cols]
    }

    /// `Σ_j q_jk`: the expected number of measurements from component `k`.
    pub fn column_sum(&self, k: usize) -> f64 {
        (0..self.rows).map(|j| self.get(j, k)).sum()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for row in self.data.chunks_exact(self.cols) {
            for (a, b) in s.iter_mut().zip(row) {
                *a += b;
            }
        }
        s
    }
}

/// Turns a row of log-weights into probabilities in place.
pub(crate) fn normalize_log_row(row: &mut [f64]) {
    let z = log_sum_exp(row);
    if !z.is_finite() {
        log::warn!("association row has no finite weight; assigning it to clutter");
        for v in row.iter_mut() {
            *v = 0.0;
        }
        row[0] = 1.0;
        return;
    }
    for v in row.iter_mut() {
        *v = crate::math::exp(*v - z);
    }
}

/// `ln p(Y, M | X, Λ)` with associations summed out.
///
/// `states[k - 1]` is the state of object `k`.
pub fn joint_nhpp_log_likelihood(
    frame: &MeasurementFrame,
    states: &[DVector<f64>],
    rates: &RateVector,
    model: &MeasurementModel,
) -> Result<f64> {
    if states.len() != model.num_objects() || rates.num_objects() != model.num_objects() {
        return Err(Error::Dimension {
            what: "object count",
            expected: model.num_objects(),
            got: states.len(),
        });
    }
    let total = rates.total();
    let m = frame.len();
    if m > 0 && total <= 0.0 {
        return Err(Error::ZeroTotalRate);
    }
    let mut acc = -total - ln_gamma(m as f64 + 1.0)?;
    let mut terms = vec![0.0; states.len() + 1];
    for y in frame.iter() {
        for (k, t) in terms.iter_mut().enumerate() {
            let rate = rates.get(k);
            *t = if rate > 0.0 {
                let x = if k == 0 { None } else { Some(&states[k - 1]) };
                ln(rate) + model.emission_log_likelihood(y, k, x)?
            } else {
                f64::NEG_INFINITY
            };
        }
        acc += log_sum_exp(&terms);
    }
    Ok(acc)
}
