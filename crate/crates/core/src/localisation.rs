//! Multi-start variational search for objects whose track has been lost.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::cavi::{known_log_rates, object_kernel, update_associations, CaviConfig, EVIDENCE_FLOOR};
use crate::error::{Error, Result};
use crate::kernel::GaussKernel;
use crate::math::{exp, ln, log_sum_exp, sqrt, xlogx};
use crate::model::{AssociationWeights, MeasurementFrame, MeasurementModel, RateVector, Region};
use crate::numerics::linalg::symmetrize;
use crate::numerics::{kl_gaussian, GaussianParams, SpdFactor};

/// 95% quantile of the chi-square distribution with two degrees of freedom.
pub const CHI2_95_2D: f64 = 5.991_464_547_107_979;

/// Centres `m_s` of the initialisation Gaussians `N(m_s, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitGrid {
    centers: Vec<DVector<f64>>,
    cov: DMatrix<f64>,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
}

impl InitGrid {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[DVector<f64>] {
        &self.centers
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    /// Whether `y` lies in the 95% ellipse of init `s`.
    pub fn covers(&self, s: usize, y: &[f64]) -> bool {
        let f = SpdFactor::new(&self.cov).expect("validated at construction");
        let d = DVector::from_column_slice(y) - &self.centers[s];
        f.quad(&d) <= CHI2_95_2D
    }
}

fn check_2x2(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.nrows() != 2 || m.ncols() != 2 {
        return Err(Error::Dimension {
            what,
            expected: 2,
            got: m.nrows(),
        });
    }
    Ok(())
}

/// Hexagonal covering of the prior's 95% ellipse by 95% ellipses of `N(m_s, C)`.
///
/// The plane is whitened by `C` first, so the lattice has spacing `r√3` for the
/// whitened radius `r`. A centre is kept when its ellipse meets the prior ellipse.
pub fn build_init_grid(prior_mean: &DVector<f64>, prior_cov: &DMatrix<f64>, c: &DMatrix<f64>) -> Result<InitGrid> {
    check_2x2(c, "initialisation covariance")?;
    check_2x2(prior_cov, "prior positional covariance")?;
    if prior_mean.len() != 2 {
        return Err(Error::Dimension {
            what: "prior positional mean",
            expected: 2,
            got: prior_mean.len(),
        });
    }
    SpdFactor::new(prior_cov)?;
    let l = nalgebra::Cholesky::new(symmetrize(c))
        .ok_or(Error::Degenerate("initialisation covariance is not positive definite"))?
        .l();
    let linv = l
        .clone()
        .try_inverse()
        .ok_or(Error::Degenerate("initialisation covariance is singular"))?;
    let mw = &linv * prior_mean;
    let pw = symmetrize(&(&linv * prior_cov * linv.transpose()));
    let r = sqrt(CHI2_95_2D);
    let grid = |centers: Vec<DVector<f64>>| InitGrid {
        centers,
        cov: c.clone(),
        prior_mean: prior_mean.clone(),
        prior_cov: prior_cov.clone(),
    };
    let eig = pw.clone().symmetric_eigen();
    if eig.eigenvalues.max() <= 1.0 {
        return Ok(grid(vec![prior_mean.clone()]));
    }
    let pw_factor = SpdFactor::new(&pw)?;
    // Boundary of the whitened prior ellipse.
    let a = nalgebra::Cholesky::new(pw.clone())
        .ok_or(Error::Degenerate("prior covariance is not positive definite"))?
        .l();
    let samples = 2048;
    let boundary: Vec<(f64, f64)> = (0..samples)
        .map(|i| {
            let t = core::f64::consts::TAU * i as f64 / samples as f64;
            let u = DVector::from_vec(vec![r * crate::math::cos(t), r * crate::math::sin(t)]);
            let p = &mw + &a * u;
            (p[0], p[1])
        })
        .collect();
    let step = boundary
        .iter()
        .zip(boundary.iter().cycle().skip(1))
        .map(|(p, q)| sqrt((p.0 - q.0) * (p.0 - q.0) + (p.1 - q.1) * (p.1 - q.1)))
        .fold(0.0, f64::max);
    let reach = r + step;
    let spacing = r * sqrt(3.0);
    let row_h = spacing * sqrt(3.0) / 2.0;
    let half_x = sqrt(CHI2_95_2D * pw[(0, 0)]) + r;
    let half_y = sqrt(CHI2_95_2D * pw[(1, 1)]) + r;
    let rows = crate::math::ceil(half_y / row_h) as i64 + 1;
    let cols = crate::math::ceil(half_x / spacing) as i64 + 2;
    let mut centers = Vec::new();
    for b in -rows..=rows {
        let shift = if b.rem_euclid(2) == 1 { spacing / 2.0 } else { 0.0 };
        for a_idx in -cols..=cols {
            let z = DVector::from_vec(vec![mw[0] + a_idx as f64 * spacing + shift, mw[1] + b as f64 * row_h]);
            let inside = pw_factor.quad(&(&z - &mw)) <= CHI2_95_2D;
            let near = inside
                || boundary
                    .iter()
                    .any(|p| (p.0 - z[0]) * (p.0 - z[0]) + (p.1 - z[1]) * (p.1 - z[1]) <= reach * reach);
            if near {
                centers.push(&l * z);
            }
        }
    }
    Ok(grid(centers))
}

/// Indices of inits whose 95% ellipse contains at least `min_count` measurements.
pub fn filter_eligible_inits(grid: &InitGrid, frame: &MeasurementFrame, min_count: f64) -> Result<Vec<usize>> {
    if frame.dim() != 2 {
        return Err(Error::Dimension {
            what: "frame dimension",
            expected: 2,
            got: frame.dim(),
        });
    }
    let f = SpdFactor::new(&grid.cov)?;
    let mut out = Vec::new();
    for (s, m) in grid.centers.iter().enumerate() {
        let kern = GaussKernel::from_factor(m, &f, 0.0);
        let count = frame.iter().filter(|y| kern.quad(y) <= CHI2_95_2D).count();
        if count as f64 >= min_count {
            out.push(s);
        }
    }
    Ok(out)
}

/// Prior for a lost object: positional Gaussian around `anchor`, zero-mean
/// velocity, shrunk where its 95% box would leave `region`.
///
/// `h` must select position components, as in the positional measurement model.
pub fn relocation_prior(
    anchor: &[f64],
    pos_std: f64,
    vel_var: f64,
    h: &DMatrix<f64>,
    region: &Region,
) -> Result<GaussianParams> {
    let d = h.nrows();
    if anchor.len() != d || region.dim() != d {
        return Err(Error::Dimension {
            what: "relocation anchor",
            expected: d,
            got: anchor.len(),
        });
    }
    if !(pos_std > 0.0) || !(vel_var > 0.0) {
        return Err(Error::Config("relocation prior needs positive spreads".into()));
    }
    let q = sqrt(CHI2_95_2D);
    let r = pos_std * q;
    let mut centre = vec![0.0; d];
    let mut stds = vec![0.0; d];
    for i in 0..d {
        let (lo, hi) = (region.lower()[i], region.upper()[i]);
        let a = (anchor[i] - r).max(lo);
        let b = (anchor[i] + r).min(hi);
        if b > a {
            centre[i] = 0.5 * (a + b);
            stds[i] = (0.5 * (b - a) / q).min(pos_std);
        } else {
            centre[i] = anchor[i].clamp(lo, hi);
            stds[i] = pos_std;
        }
    }
    let n = h.ncols();
    let mean = h.transpose() * DVector::from_vec(centre);
    let pos_cov = DMatrix::from_diagonal(&DVector::from_iterator(d, stds.iter().map(|s| s * s)));
    let selector = h.transpose() * h;
    let cov = h.transpose() * pos_cov * h + (DMatrix::identity(n, n) - selector) * vel_var;
    GaussianParams::new(mean, symmetrize(&cov))
}

#[derive(Debug, Clone, Copy)]
struct RowRest {
    // log-sum-exp over k != h of the row's log-weights
    lse: f64,
    // Σ_k s_k (b_k - ln s_k) under the normalised weights s of the same components
    entropy_term: f64,
}

/// The parts of the relocation problem for object `h` that stay fixed across inits.
#[derive(Debug, Clone)]
pub struct RelocationProblem<'a> {
    frame: &'a MeasurementFrame,
    model: &'a MeasurementModel,
    h: usize,
    prior: GaussianParams,
    prior_factor: SpdFactor,
    log_rate_h: f64,
    log_total: f64,
    init_rest: Vec<RowRest>,
    rest: Vec<RowRest>,
}

/// One CAVI run from one initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalisationRun {
    pub posterior: GaussianParams,
    /// `q(θ_j = h)` for every measurement, from the sweep that produced `posterior`.
    pub q_h: Vec<f64>,
    pub elbo: f64,
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl LocalisationRun {
    pub fn evidence(&self) -> f64 {
        self.q_h.iter().sum()
    }
}

impl<'a> RelocationProblem<'a> {
    /// `predictive` and `fixed` hold one belief per object; entry `h - 1` is ignored.
    pub fn new(
        frame: &'a MeasurementFrame,
        model: &'a MeasurementModel,
        rates: &RateVector,
        h: usize,
        predictive: &[GaussianParams],
        fixed: &[GaussianParams],
        prior: GaussianParams,
    ) -> Result<Self> {
        let k = model.num_objects();
        if h == 0 || h > k || predictive.len() != k || fixed.len() != k || rates.num_objects() != k {
            return Err(Error::Dimension {
                what: "relocation inputs",
                expected: k,
                got: fixed.len(),
            });
        }
        if frame.dim() != model.dim() {
            return Err(Error::Dimension {
                what: "frame dimension",
                expected: model.dim(),
                got: frame.dim(),
            });
        }
        let total = rates.total();
        if !frame.is_empty() && !(total > 0.0) {
            return Err(Error::ZeroTotalRate);
        }
        let lr = known_log_rates(rates);
        let hm = model.h();
        let clutter = lr[0] - ln(model.region().volume());
        let mut init_k = Vec::with_capacity(k - 1);
        let mut post_k = Vec::with_capacity(k - 1);
        for i in 1..=k {
            if i == h {
                continue;
            }
            let p = &predictive[i - 1];
            let cov = hm * &p.cov * hm.transpose() + model.r(i);
            init_k.push(GaussKernel::new(&(hm * &p.mean), &cov, lr[i])?);
            post_k.push(object_kernel(i, &fixed[i - 1], lr[i], model));
        }
        let mut init_rest = Vec::with_capacity(frame.len());
        let mut rest = Vec::with_capacity(frame.len());
        let mut b0 = vec![0.0; k];
        let mut b = vec![0.0; k];
        for y in frame.iter() {
            b0[0] = clutter;
            b[0] = clutter;
            for (i, (ki, kp)) in init_k.iter().zip(&post_k).enumerate() {
                b0[i + 1] = ki.eval(y);
                b[i + 1] = kp.eval(y);
            }
            init_rest.push(summarise_row(&b0, &b));
            rest.push(summarise_row(&b, &b));
        }
        let prior_factor = SpdFactor::new(&prior.cov)?;
        Ok(Self {
            frame,
            model,
            h,
            prior,
            prior_factor,
            log_rate_h: lr[h],
            log_total: ln(total),
            init_rest,
            rest,
        })
    }

    pub fn object(&self) -> usize {
        self.h
    }

    pub fn prior(&self) -> &GaussianParams {
        &self.prior
    }

    /// Runs CAVI from `N(m_s, C)`.
    pub fn localise(&self, m_s: &DVector<f64>, c: &DMatrix<f64>, cfg: &CaviConfig) -> Result<LocalisationRun> {
        let model = self.model;
        let h = self.h;
        let cov0 = c + model.r(h);
        let k0 = GaussKernel::new(m_s, &cov0, self.log_rate_h)?;
        let mut q: Vec<f64> = self
            .frame
            .iter()
            .zip(&self.init_rest)
            .map(|(y, r)| share(k0.eval(y), r.lse))
            .collect();
        let mut first = true;
        let mut trace = Vec::new();
        let mut prev = f64::NEG_INFINITY;
        let mut converged = false;
        let mut last: Option<(GaussianParams, Vec<f64>)> = None;
        for i in 1..=cfg.max_iters.max(1) {
            let post = self.update_state(&q)?;
            let rows = if first { &self.init_rest } else { &self.rest };
            let f = self.elbo_rows(&q, &post, rows)?;
            trace.push(f);
            let done = i >= 2 && f - prev < cfg.tolerance;
            prev = f;
            if done {
                converged = true;
                last = Some((post, q));
                break;
            }
            let kern = object_kernel(h, &post, self.log_rate_h, model);
            let next: Vec<f64> = self
                .frame
                .iter()
                .zip(&self.rest)
                .map(|(y, r)| share(kern.eval(y), r.lse))
                .collect();
            last = Some((post, core::mem::replace(&mut q, next)));
            first = false;
        }
        let (posterior, q_h) = last.expect("at least one sweep");
        Ok(LocalisationRun {
            posterior,
            q_h,
            elbo: prev,
            trace,
            converged,
        })
    }

    fn update_state(&self, q: &[f64]) -> Result<GaussianParams> {
        let d = self.frame.dim();
        let w: f64 = q.iter().sum();
        if w < EVIDENCE_FLOOR {
            return Ok(self.prior.clone());
        }
        let mut ybar = DVector::zeros(d);
        for (y, &qj) in self.frame.iter().zip(q) {
            for a in 0..d {
                ybar[a] += qj * y[a];
            }
        }
        ybar /= w;
        let hm = self.model.h();
        let p = &self.prior;
        let ph = &p.cov * hm.transpose();
        let s = symmetrize(&(hm * &ph + self.model.r(self.h) / w));
        let sf = SpdFactor::new(&s)?;
        let gain = sf.solve_mat(&ph.transpose()).transpose();
        let mean = &p.mean + &gain * (ybar - hm * &p.mean);
        let n = p.mean.len();
        let cov = symmetrize(&((DMatrix::identity(n, n) - &gain * hm) * &p.cov));
        Ok(GaussianParams { mean, cov })
    }

    fn elbo_rows(&self, q: &[f64], post: &GaussianParams, rows: &[RowRest]) -> Result<f64> {
        let kern = object_kernel(self.h, post, self.log_rate_h, self.model);
        let mut f = 0.0;
        for ((y, &qh), r) in self.frame.iter().zip(q).zip(rows) {
            let rest = 1.0 - qh;
            if rest > 0.0 {
                f += rest * r.entropy_term - xlogx(rest);
            }
            if qh > 0.0 {
                f += qh * kern.eval(y) - xlogx(qh);
            }
            f -= self.log_total;
        }
        let kl = crate::numerics::kl_gaussian_factored(&post.mean, &post.cov, &self.prior.mean, &self.prior_factor)?;
        Ok(f - kl)
    }

    /// Full association matrix implied by `q_h` after the first sweep.
    pub fn full_weights(
        &self,
        fixed: &[GaussianParams],
        q_h: &[f64],
        rates: &RateVector,
    ) -> Result<AssociationWeights> {
        let k = self.model.num_objects();
        let lr = known_log_rates(rates);
        let clutter = lr[0] - ln(self.model.region().volume());
        let kernels: Vec<Option<GaussKernel>> = (1..=k)
            .map(|i| (i != self.h).then(|| object_kernel(i, &fixed[i - 1], lr[i], self.model)))
            .collect();
        let mut data = Vec::with_capacity(self.frame.len() * (k + 1));
        for ((y, &qh), r) in self.frame.iter().zip(q_h).zip(&self.rest) {
            let rest = 1.0 - qh;
            data.push(if r.lse.is_finite() {
                rest * exp(clutter - r.lse)
            } else {
                0.0
            });
            for kern in &kernels {
                data.push(match kern {
                    None => qh,
                    Some(kk) if r.lse.is_finite() => rest * exp(kk.eval(y) - r.lse),
                    Some(_) => 0.0,
                });
            }
        }
        AssociationWeights::new(self.frame.len(), k + 1, data)
    }
}

// Probability of the object component given its log-weight and the others' log-sum-exp.
fn share(bh: f64, rest_lse: f64) -> f64 {
    if rest_lse == f64::NEG_INFINITY {
        return if bh == f64::NEG_INFINITY { 0.0 } else { 1.0 };
    }
    if bh == f64::NEG_INFINITY {
        return 0.0;
    }
    let m = bh.max(rest_lse);
    exp(bh - m) / (exp(bh - m) + exp(rest_lse - m))
}

fn summarise_row(weights_from: &[f64], values: &[f64]) -> RowRest {
    let lse = log_sum_exp(weights_from);
    if !lse.is_finite() {
        return RowRest { lse, entropy_term: 0.0 };
    }
    let mut t = 0.0;
    for (&w, &v) in weights_from.iter().zip(values) {
        if w == f64::NEG_INFINITY {
            continue;
        }
        let ls = w - lse;
        t += exp(ls) * (v - ls);
    }
    RowRest { lse, entropy_term: t }
}

/// Relocation objective for object `h` for an arbitrary association matrix.
///
/// Equals `E[ln p(Y | θ, X)] + E[ln p(θ | M, Λ)] - E[ln q(θ)] - KL(q(X_h) || p̃)`,
/// with `fixed[k - 1]` standing in for every object `k != h`.
#[allow(clippy::too_many_arguments)]
pub fn reloc_elbo(
    h: usize,
    frame: &MeasurementFrame,
    weights: &AssociationWeights,
    q_h: &GaussianParams,
    fixed: &[GaussianParams],
    prior: &GaussianParams,
    rates: &RateVector,
    model: &MeasurementModel,
) -> Result<f64> {
    let k = model.num_objects();
    if h == 0
        || h > k
        || fixed.len() != k
        || weights.num_components() != k + 1
        || weights.num_measurements() != frame.len()
    {
        return Err(Error::Dimension {
            what: "relocation ELBO inputs",
            expected: k,
            got: fixed.len(),
        });
    }
    let lr = known_log_rates(rates);
    let log_total = ln(rates.total());
    let clutter = -ln(model.region().volume());
    let kernels: Vec<GaussKernel> = (1..=k)
        .map(|i| {
            let b = if i == h { q_h } else { &fixed[i - 1] };
            object_kernel(i, b, 0.0, model)
        })
        .collect();
    let mut f = 0.0;
    for (j, y) in frame.iter().enumerate() {
        for (c, &q) in weights.row(j).iter().enumerate() {
            if q <= 0.0 {
                continue;
            }
            let ll = if c == 0 { clutter } else { kernels[c - 1].eval(y) };
            f += q * (lr[c] - log_total + ll) - xlogx(q);
        }
    }
    Ok(f - kl_gaussian(q_h, prior)?)
}

/// Relocation request for one missed object.
#[derive(Debug, Clone, PartialEq)]
pub struct MissedObject {
    pub h: usize,
    pub prior: GaussianParams,
    pub min_init_count: f64,
    pub min_evidence: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocationOutcome {
    pub h: usize,
    pub grid_size: usize,
    /// Final ELBO per grid index, `-inf` for inits that were not eligible.
    pub init_elbos: Vec<f64>,
    pub winner: Option<usize>,
    pub winner_belief: Option<GaussianParams>,
    pub evidence: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocationResult {
    pub posteriors: Vec<GaussianParams>,
    pub weights: AssociationWeights,
    pub relocated: Vec<usize>,
    pub outcomes: Vec<RelocationOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelocationConfig {
    pub init_cov: DMatrix<f64>,
    pub cavi: CaviConfig,
}

/// Runs every eligible init and returns `(index, run)` pairs in index order.
pub fn run_inits(
    problem: &RelocationProblem<'_>,
    grid: &InitGrid,
    eligible: &[usize],
    cfg: &CaviConfig,
) -> Result<Vec<(usize, LocalisationRun)>> {
    let c = grid.cov();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        eligible
            .par_iter()
            .map(|&s| problem.localise(&grid.centers()[s], c, cfg).map(|r| (s, r)))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        eligible
            .iter()
            .map(|&s| problem.localise(&grid.centers()[s], c, cfg).map(|r| (s, r)))
            .collect()
    }
}

/// Relocates each missed object in turn, then refreshes the associations.
///
/// `predictive` and `posterior` are the standard tracker's beliefs for all objects.
pub fn relocate_all(
    frame: &MeasurementFrame,
    missed: &[MissedObject],
    predictive: &[GaussianParams],
    posterior: &[GaussianParams],
    rates: &RateVector,
    model: &MeasurementModel,
    cfg: &RelocationConfig,
) -> Result<RelocationResult> {
    let mut fixed = posterior.to_vec();
    let mut relocated = Vec::new();
    let mut outcomes = Vec::with_capacity(missed.len());
    let hm = model.h();
    for m in missed {
        let problem = RelocationProblem::new(frame, model, rates, m.h, predictive, &fixed, m.prior.clone())?;
        let pos_mean = hm * &m.prior.mean;
        let pos_cov = hm * &m.prior.cov * hm.transpose();
        let grid = build_init_grid(&pos_mean, &pos_cov, &cfg.init_cov)?;
        let eligible = filter_eligible_inits(&grid, frame, m.min_init_count)?;
        let runs = run_inits(&problem, &grid, &eligible, &cfg.cavi)?;
        let mut init_elbos = vec![f64::NEG_INFINITY; grid.len()];
        let mut best: Option<(usize, &LocalisationRun)> = None;
        for (s, run) in &runs {
            init_elbos[*s] = run.elbo;
            if best.is_none_or(|(_, b)| run.elbo > b.elbo) {
                best = Some((*s, run));
            }
        }
        let (winner, belief, evidence) = match best {
            Some((s, run)) => (Some(s), Some(run.posterior.clone()), run.evidence()),
            None => (None, None, 0.0),
        };
        let accepted = winner.is_some() && evidence >= m.min_evidence;
        if accepted {
            fixed[m.h - 1] = belief.clone().unwrap();
            relocated.push(m.h);
        } else {
            fixed[m.h - 1] = m.prior.clone();
        }
        outcomes.push(RelocationOutcome {
            h: m.h,
            grid_size: grid.len(),
            init_elbos,
            winner,
            winner_belief: belief,
            evidence,
            accepted,
        });
    }
    let weights = update_associations(frame, &fixed, &known_log_rates(rates), model)?;
    Ok(RelocationResult {
        posteriors: fixed,
        weights,
        relocated,
        outcomes,
    })
}
