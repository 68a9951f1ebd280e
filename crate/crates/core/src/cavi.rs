//! Per-step coordinate-ascent variational filter.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel::GaussKernel;
use crate::math::{ln, powf, xlogx, LN_2PI};
use crate::model::{
    normalize_log_row, AssociationWeights, MeasurementFrame, MeasurementModel, RateVector, TransitionModel,
};
use crate::numerics::linalg::symmetrize;
use crate::numerics::{kl_gamma, ln_gamma, GammaParams, GaussianParams, SpdFactor};

/// Below this total weight an object is treated as having received no measurements.
pub const EVIDENCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum RateBelief {
    Learned(Vec<GammaParams>),
    Known(RateVector),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerBeliefs {
    pub objects: Vec<GaussianParams>,
    pub rates: RateBelief,
}

impl TrackerBeliefs {
    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    /// Point estimate of the rates: the Gamma means, or the known values.
    pub fn rate_estimate(&self) -> Vec<f64> {
        match &self.rates {
            RateBelief::Learned(g) => g.iter().map(|p| p.mean()).collect(),
            RateBelief::Known(r) => r.as_slice().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveBeliefs {
    pub objects: Vec<GaussianParams>,
    pub rates: Option<Vec<GammaParams>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CaviConfig {
    pub max_iters: usize,
    pub tolerance: f64,
}

impl Default for CaviConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tolerance: 0.01,
        }
    }
}

/// Forgetting factor γ_n applied when predicting the rate posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForgettingSchedule {
    Constant(f64),
    /// `1 - amplitude * max(1, n - delay)^(-exponent)`.
    PowerDecay {
        amplitude: f64,
        delay: f64,
        exponent: f64,
    },
}

impl ForgettingSchedule {
    /// 0.9 for the first eleven steps, then creeping towards 1.
    pub const fn standard() -> Self {
        Self::PowerDecay {
            amplitude: 0.1,
            delay: 10.0,
            exponent: 0.9,
        }
    }

    pub fn gamma(&self, n: usize) -> f64 {
        match *self {
            Self::Constant(g) => g,
            Self::PowerDecay {
                amplitude,
                delay,
                exponent,
            } => {
                let base = (n as f64 - delay).max(1.0);
                1.0 - amplitude * powf(base, -exponent)
            }
        }
    }
}

impl Default for ForgettingSchedule {
    fn default() -> Self {
        Self::standard()
    }
}

/// Everything a tracker needs besides its beliefs.
#[derive(Debug, Clone)]
pub struct TrackerContext {
    pub transition: TransitionModel,
    pub measurement: MeasurementModel,
    pub cavi: CaviConfig,
    pub forgetting: ForgettingSchedule,
}

impl TrackerContext {
    pub fn new(transition: TransitionModel, measurement: MeasurementModel) -> Result<Self> {
        if transition.num_objects() != measurement.num_objects() {
            return Err(Error::Dimension {
                what: "object count",
                expected: measurement.num_objects(),
                got: transition.num_objects(),
            });
        }
        Ok(Self {
            transition,
            measurement,
            cavi: CaviConfig::default(),
            forgetting: ForgettingSchedule::standard(),
        })
    }
}

/// Beliefs after processing frame `step`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackerState {
    pub step: usize,
    pub beliefs: TrackerBeliefs,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoSummary {
    pub weight: f64,
    pub evidence: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub elbo_trace: Vec<f64>,
    pub converged: bool,
    /// True when the ELBO is evaluated with fixed rates and the Poisson total term left out.
    pub rate_terms_omitted: bool,
    pub pseudo: Vec<PseudoSummary>,
    pub elapsed: Option<core::time::Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: TrackerState,
    pub predictive: PredictiveBeliefs,
    pub weights: AssociationWeights,
    pub diagnostics: StepDiagnostics,
}

pub fn predict_beliefs(
    beliefs: &TrackerBeliefs,
    transition: &TransitionModel,
    gamma: f64,
) -> Result<PredictiveBeliefs> {
    if !(gamma > 0.0 && gamma <= 1.0) {
        return Err(Error::Domain {
            what: "forgetting factor",
            value: gamma,
        });
    }
    if beliefs.num_objects() != transition.num_objects() {
        return Err(Error::Dimension {
            what: "object count",
            expected: transition.num_objects(),
            got: beliefs.num_objects(),
        });
    }
    let objects = beliefs
        .objects
        .iter()
        .enumerate()
        .map(|(i, b)| transition.predict(i + 1, b))
        .collect();
    let rates = match &beliefs.rates {
        RateBelief::Learned(g) => Some(
            g.iter()
                .map(|p| GammaParams {
                    shape: p.shape * gamma - gamma + 1.0,
                    scale: p.scale / gamma,
                })
                .collect(),
        ),
        RateBelief::Known(_) => None,
    };
    Ok(PredictiveBeliefs { objects, rates })
}

fn log_rate(r: f64) -> f64 {
    if r > 0.0 {
        ln(r)
    } else {
        f64::NEG_INFINITY
    }
}

/// `ψ(η) + ln ρ` per component.
pub fn expected_log_rates(rates: &[GammaParams]) -> Vec<f64> {
    rates.iter().map(|g| g.expected_log()).collect()
}

/// `ln Λ` per component, `-inf` for zero rates.
pub fn known_log_rates(rates: &RateVector) -> Vec<f64> {
    rates.as_slice().iter().map(|&r| log_rate(r)).collect()
}

fn check_frame(frame: &MeasurementFrame, model: &MeasurementModel) -> Result<()> {
    if frame.dim() != model.dim() {
        return Err(Error::Dimension {
            what: "frame dimension",
            expected: model.dim(),
            got: frame.dim(),
        });
    }
    Ok(())
}

fn fill_weights(frame: &MeasurementFrame, clutter_log: f64, kernels: &[GaussKernel]) -> Result<AssociationWeights> {
    let cols = kernels.len() + 1;
    let m = frame.len();
    let mut logw = vec![0.0; m * cols];
    for (row, y) in logw.chunks_exact_mut(cols).zip(frame.iter()) {
        row[0] = clutter_log;
        for (slot, kern) in row[1..].iter_mut().zip(kernels) {
            *slot = kern.eval(y);
        }
        normalize_log_row(row);
    }
    AssociationWeights::new(m, cols, logw)
}

/// Initial association probabilities from the predictive beliefs.
///
/// `rates[k]` is the rate point estimate used for component `k`.
pub fn init_associations(
    frame: &MeasurementFrame,
    predictive: &[GaussianParams],
    rates: &[f64],
    model: &MeasurementModel,
) -> Result<AssociationWeights> {
    check_frame(frame, model)?;
    check_counts(predictive.len(), rates.len(), model)?;
    let h = model.h();
    let mut kernels = Vec::with_capacity(predictive.len());
    for (i, p) in predictive.iter().enumerate() {
        let k = i + 1;
        let cov = h * &p.cov * h.transpose() + model.r(k);
        kernels.push(GaussKernel::new(&(h * &p.mean), &cov, log_rate(rates[k]))?);
    }
    let clutter = log_rate(rates[0]) - ln(model.region().volume());
    fill_weights(frame, clutter, &kernels)
}

fn check_counts(objects: usize, rates: usize, model: &MeasurementModel) -> Result<()> {
    if objects != model.num_objects() || rates != objects + 1 {
        return Err(Error::Dimension {
            what: "object count",
            expected: model.num_objects(),
            got: objects,
        });
    }
    Ok(())
}

/// Association update given posterior states and `E[ln Λ_k]` (or `ln Λ_k`).
pub fn update_associations(
    frame: &MeasurementFrame,
    posterior: &[GaussianParams],
    log_rates: &[f64],
    model: &MeasurementModel,
) -> Result<AssociationWeights> {
    check_frame(frame, model)?;
    check_counts(posterior.len(), log_rates.len(), model)?;
    let mut kernels = Vec::with_capacity(posterior.len());
    for (i, p) in posterior.iter().enumerate() {
        kernels.push(object_kernel(i + 1, p, log_rates[i + 1], model));
    }
    let clutter = log_rates[0] - ln(model.region().volume());
    fill_weights(frame, clutter, &kernels)
}

/// `ln Λ + ln N(y; Hμ, R) - ½ tr(R⁻¹ H Σ Hᵀ)` as a kernel in `y`.
pub(crate) fn object_kernel(k: usize, belief: &GaussianParams, log_rate: f64, model: &MeasurementModel) -> GaussKernel {
    let h = model.h();
    let rf = model.r_factor(k);
    let trace = rf.solve_mat(&(h * &belief.cov * h.transpose())).trace();
    GaussKernel::from_factor(&(h * &belief.mean), rf, log_rate - 0.5 * trace)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PseudoMeasurement {
    NoEvidence {
        weight: f64,
    },
    Evidence {
        weight: f64,
        mean: DVector<f64>,
        cov: DMatrix<f64>,
    },
}

impl PseudoMeasurement {
    pub fn weight(&self) -> f64 {
        match self {
            Self::NoEvidence { weight } | Self::Evidence { weight, .. } => *weight,
        }
    }
}

/// Collapses the measurements weighted towards object `k` into one Gaussian observation.
pub fn pseudo_measurements(
    frame: &MeasurementFrame,
    weights: &AssociationWeights,
    k: usize,
    model: &MeasurementModel,
) -> Result<PseudoMeasurement> {
    check_frame(frame, model)?;
    if weights.num_measurements() != frame.len() || k == 0 || k >= weights.num_components() {
        return Err(Error::Dimension {
            what: "association weights",
            expected: frame.len(),
            got: weights.num_measurements(),
        });
    }
    let d = frame.dim();
    let mut w = 0.0;
    let mut sum = DVector::zeros(d);
    for (j, y) in frame.iter().enumerate() {
        let q = weights.get(j, k);
        w += q;
        for a in 0..d {
            sum[a] += q * y[a];
        }
    }
    if w < EVIDENCE_FLOOR {
        return Ok(PseudoMeasurement::NoEvidence { weight: w });
    }
    Ok(PseudoMeasurement::Evidence {
        weight: w,
        mean: sum / w,
        cov: model.r(k) / w,
    })
}

/// Innovation `T = Ȳ - Hμ*` and its covariance `S = HΣ*Hᵀ + R̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub residual: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Kalman update of every object against its pseudo-measurement.
pub fn update_states(
    predictive: &[GaussianParams],
    pseudo: &[PseudoMeasurement],
    model: &MeasurementModel,
) -> Result<(Vec<GaussianParams>, Vec<Option<Innovation>>)> {
    if predictive.len() != pseudo.len() {
        return Err(Error::Dimension {
            what: "pseudo-measurement count",
            expected: predictive.len(),
            got: pseudo.len(),
        });
    }
    let h = model.h();
    let mut post = Vec::with_capacity(predictive.len());
    let mut innov = Vec::with_capacity(predictive.len());
    for (p, pm) in predictive.iter().zip(pseudo) {
        match pm {
            PseudoMeasurement::NoEvidence { .. } => {
                post.push(p.clone());
                innov.push(None);
            }
            PseudoMeasurement::Evidence { mean, cov, .. } => {
                let t = mean - h * &p.mean;
                let ph = &p.cov * h.transpose();
                let s = symmetrize(&(h * &ph + cov));
                let sf = SpdFactor::new(&s)?;
                let gain = sf.solve_mat(&ph.transpose()).transpose();
                let m = &p.mean + &gain * &t;
                let n = p.mean.len();
                let c = symmetrize(&((DMatrix::identity(n, n) - &gain * h) * &p.cov));
                post.push(GaussianParams { mean: m, cov: c });
                innov.push(Some(Innovation { residual: t, cov: s }));
            }
        }
    }
    Ok((post, innov))
}

/// Conjugate Gamma update of every component given the association weights.
pub fn update_rates(predictive: &[GammaParams], weights: &AssociationWeights) -> Result<Vec<GammaParams>> {
    if predictive.len() != weights.num_components() {
        return Err(Error::Dimension {
            what: "rate component count",
            expected: weights.num_components(),
            got: predictive.len(),
        });
    }
    let w = weights.column_sums();
    Ok(predictive
        .iter()
        .zip(w)
        .map(|(p, wk)| GammaParams {
            shape: p.shape + wk,
            scale: p.scale / (p.scale + 1.0),
        })
        .collect())
}

/// Rate inputs to the ELBO.
#[derive(Debug, Clone, Copy)]
pub enum ElboRates<'a> {
    Learned {
        posterior: &'a [GammaParams],
        predictive: &'a [GammaParams],
    },
    /// Fixed rates; the constant `-Λ_sum` is left out.
    Known(&'a RateVector),
}

/// Evidence lower bound right after a state update.
///
/// `posterior`, `pseudo` and `innovations` must come from the same
/// [`update_states`] call driven by `weights`.
pub fn compute_elbo(
    frame: &MeasurementFrame,
    posterior: &[GaussianParams],
    pseudo: &[PseudoMeasurement],
    innovations: &[Option<Innovation>],
    rates: ElboRates<'_>,
    weights: &AssociationWeights,
    model: &MeasurementModel,
) -> Result<f64> {
    check_frame(frame, model)?;
    let kobj = posterior.len();
    if pseudo.len() != kobj || innovations.len() != kobj || weights.num_components() != kobj + 1 {
        return Err(Error::Dimension {
            what: "ELBO inputs",
            expected: kobj,
            got: pseudo.len(),
        });
    }
    let m = frame.len();
    let d = frame.dim() as f64;
    let log_rates = match rates {
        ElboRates::Learned { posterior, .. } => expected_log_rates(posterior),
        ElboRates::Known(r) => known_log_rates(r),
    };
    let mut f = 0.0;
    for j in 0..m {
        for (k, &q) in weights.row(j).iter().enumerate() {
            if q > 0.0 {
                f += q * log_rates[k] - xlogx(q);
            }
        }
    }
    let h = model.h();
    for k in 1..=kobj {
        let rf = model.r_factor(k);
        let w = pseudo[k - 1].weight();
        match (&pseudo[k - 1], &innovations[k - 1]) {
            (PseudoMeasurement::Evidence { mean, cov, .. }, Some(inn)) => {
                let centre = GaussKernel::from_factor(mean, rf, 0.0);
                let mut spread = 0.0;
                for (j, y) in frame.iter().enumerate() {
                    let q = weights.get(j, k);
                    if q > 0.0 {
                        spread += q * centre.quad(y);
                    }
                }
                let sf = SpdFactor::new(&inn.cov)?;
                let rbar = SpdFactor::new(cov)?;
                f += -0.5 * spread - 0.5 * w * rf.log_det() - 0.5 * sf.quad(&inn.residual)
                    + 0.5 * (rbar.log_det() - sf.log_det());
            }
            _ => {
                // Posterior equals the prior here, so take the expectation directly.
                let b = &posterior[k - 1];
                let trace = rf.solve_mat(&(h * &b.cov * h.transpose())).trace();
                let plain = GaussKernel::from_factor(&(h * &b.mean), rf, 0.0);
                for (j, y) in frame.iter().enumerate() {
                    let q = weights.get(j, k);
                    if q > 0.0 {
                        f += q * (-0.5 * (plain.quad(y) + trace + rf.log_det()));
                    }
                }
            }
        }
    }
    let w0 = weights.column_sum(0);
    f += (0.5 * d * LN_2PI - ln(model.region().volume())) * w0;
    if let ElboRates::Learned { posterior, predictive } = rates {
        for (q, p) in posterior.iter().zip(predictive) {
            f -= q.mean();
            f -= kl_gamma(q, p)?;
        }
    }
    f -= 0.5 * d * m as f64 * LN_2PI + ln_gamma(m as f64 + 1.0)?;
    Ok(f)
}

fn elapsed_since(_start: &Timer) -> Option<core::time::Duration> {
    #[cfg(feature = "std")]
    {
        Some(_start.0.elapsed())
    }
    #[cfg(not(feature = "std"))]
    {
        None
    }
}

struct Timer(#[cfg(feature = "std")] std::time::Instant);

impl Timer {
    fn start() -> Self {
        Timer(
            #[cfg(feature = "std")]
            std::time::Instant::now(),
        )
    }
}

enum Mode<'a> {
    Learned(&'a [GammaParams]),
    Known(&'a RateVector),
}

fn run_cavi(
    ctx: &TrackerContext,
    frame: &MeasurementFrame,
    predictive: &PredictiveBeliefs,
    mode: Mode<'_>,
    init_rates: &[f64],
) -> Result<(Vec<GaussianParams>, RateBelief, AssociationWeights, StepDiagnostics)> {
    let timer = Timer::start();
    let model = &ctx.measurement;
    let kobj = predictive.objects.len();
    let mut weights = init_associations(frame, &predictive.objects, init_rates, model)?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut prev = f64::NEG_INFINITY;
    let mut last = None;
    let max_iters = ctx.cavi.max_iters.max(1);
    for i in 1..=max_iters {
        let rate_post = match mode {
            Mode::Learned(pred) => Some(update_rates(pred, &weights)?),
            Mode::Known(_) => None,
        };
        let mut pseudo = Vec::with_capacity(kobj);
        for k in 1..=kobj {
            pseudo.push(pseudo_measurements(frame, &weights, k, model)?);
        }
        let (post, innov) = update_states(&predictive.objects, &pseudo, model)?;
        let elbo_rates = match (&mode, &rate_post) {
            (Mode::Learned(pred), Some(q)) => ElboRates::Learned {
                posterior: q,
                predictive: pred,
            },
            (Mode::Known(r), _) => ElboRates::Known(r),
            _ => unreachable!(),
        };
        let f = compute_elbo(frame, &post, &pseudo, &innov, elbo_rates, &weights, model)?;
        trace.push(f);
        let done = i >= 2 && f - prev < ctx.cavi.tolerance;
        prev = f;
        let log_rates = match (&mode, &rate_post) {
            (Mode::Learned(_), Some(q)) => expected_log_rates(q),
            (Mode::Known(r), _) => known_log_rates(r),
            _ => unreachable!(),
        };
        let summary = pseudo
            .iter()
            .map(|p| PseudoSummary {
                weight: p.weight(),
                evidence: matches!(p, PseudoMeasurement::Evidence { .. }),
            })
            .collect();
        last = Some((post, rate_post, summary));
        if done {
            converged = true;
            break;
        }
        let (post, _, _) = last.as_ref().unwrap();
        weights = update_associations(frame, post, &log_rates, model)?;
    }
    let (post, rate_post, summary) = last.expect("at least one sweep");
    let rates = match mode {
        Mode::Learned(_) => RateBelief::Learned(rate_post.unwrap()),
        Mode::Known(r) => RateBelief::Known(r.clone()),
    };
    let diagnostics = StepDiagnostics {
        iterations: trace.len(),
        elbo_trace: trace,
        converged,
        rate_terms_omitted: matches!(mode, Mode::Known(_)),
        pseudo: summary,
        elapsed: elapsed_since(&timer),
    };
    Ok((post, rates, weights, diagnostics))
}

/// One filtering step with joint rate learning.
pub fn tracker_step(ctx: &TrackerContext, state: &TrackerState, frame: &MeasurementFrame) -> Result<StepOutput> {
    let RateBelief::Learned(prev_rates) = &state.beliefs.rates else {
        return Err(Error::Config("rate-learning step needs Gamma rate beliefs".into()));
    };
    if prev_rates.len() != state.beliefs.num_objects() + 1 {
        return Err(Error::Dimension {
            what: "rate component count",
            expected: state.beliefs.num_objects() + 1,
            got: prev_rates.len(),
        });
    }
    let gamma = ctx.forgetting.gamma(state.step);
    let predictive = predict_beliefs(&state.beliefs, &ctx.transition, gamma)?;
    let rate_hat: Vec<f64> = prev_rates.iter().map(|g| g.mean()).collect();
    let pred_rates = predictive.rates.clone().expect("learned rates predict");
    let (objects, rates, weights, diagnostics) =
        run_cavi(ctx, frame, &predictive, Mode::Learned(&pred_rates), &rate_hat)?;
    Ok(StepOutput {
        state: TrackerState {
            step: frame.step(),
            beliefs: TrackerBeliefs { objects, rates },
        },
        predictive,
        weights,
        diagnostics,
    })
}

/// One filtering step with the rates held at `rates`.
pub fn known_rate_step(
    ctx: &TrackerContext,
    state: &TrackerState,
    frame: &MeasurementFrame,
    rates: &RateVector,
) -> Result<StepOutput> {
    if rates.num_objects() != state.beliefs.num_objects() {
        return Err(Error::Dimension {
            what: "rate component count",
            expected: state.beliefs.num_objects() + 1,
            got: rates.as_slice().len(),
        });
    }
    let beliefs = TrackerBeliefs {
        objects: state.beliefs.objects.clone(),
        rates: RateBelief::Known(rates.clone()),
    };
    let predictive = predict_beliefs(&beliefs, &ctx.transition, 1.0)?;
    let (objects, rates_out, weights, diagnostics) =
        run_cavi(ctx, frame, &predictive, Mode::Known(rates), rates.as_slice())?;
    Ok(StepOutput {
        state: TrackerState {
            step: frame.step(),
            beliefs: TrackerBeliefs {
                objects,
                rates: rates_out,
            },
        },
        predictive,
        weights,
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Region;

    fn model1() -> MeasurementModel {
        MeasurementModel::positional(1, 100.0, Region::centered_square(1000.0).unwrap()).unwrap()
    }

    #[test]
    fn predict_rates() {
        let b = TrackerBeliefs {
            objects: vec![GaussianParams {
                mean: DVector::from_vec(vec![0.0, 30.0, 0.0, 0.0]),
                cov: DMatrix::identity(4, 4),
            }],
            rates: RateBelief::Learned(vec![GammaParams::new(10.0, 0.5).unwrap(); 2]),
        };
        let t = TransitionModel::constant_velocity(1, 1.0, 25.0);
        let p = predict_beliefs(&b, &t, 0.9).unwrap();
        let r = p.rates.unwrap();
        assert!((r[0].shape - 9.1).abs() < 1e-12);
        assert!((r[0].scale - 0.5 / 0.9).abs() < 1e-12);
        assert!((p.objects[0].mean[0] - 30.0).abs() < 1e-12);
        assert!(predict_beliefs(&b, &t, 0.0).is_err());
        assert!(predict_beliefs(&b, &t, 1.5).is_err());
    }

    #[test]
    fn init_hand_example() {
        // HΣ*Hᵀ + R = 200 I with R = 100 I.
        let m = model1();
        let pred = vec![GaussianParams {
            mean: DVector::zeros(4),
            cov: DMatrix::identity(4, 4) * 100.0,
        }];
        let f = MeasurementFrame::new(1, 2, vec![0.0, 0.0]).unwrap();
        let w = init_associations(&f, &pred, &[100.0, 4.0], &m).unwrap();
        let a = 4.0 / (400.0 * core::f64::consts::PI);
        let want = a / (a + 100.0 / 1e6);
        assert!((w.get(0, 1) - want).abs() < 1e-12);
        assert!((w.get(0, 1) - 0.9696).abs() < 1e-4);
    }

    #[test]
    fn no_clutter_component() {
        let m = model1();
        let pred = vec![GaussianParams {
            mean: DVector::zeros(4),
            cov: DMatrix::identity(4, 4),
        }];
        let f = MeasurementFrame::new(1, 2, vec![400.0, -400.0, 1.0, 2.0]).unwrap();
        let w = init_associations(&f, &pred, &[0.0, 4.0], &m).unwrap();
        assert_eq!(w.get(0, 1), 1.0);
        assert_eq!(w.get(1, 1), 1.0);
    }

    #[test]
    fn pseudo_examples() {
        let m = model1();
        let f = MeasurementFrame::new(1, 2, vec![0.0, 0.0, 2.0, 0.0]).unwrap();
        let w = AssociationWeights::new(2, 2, vec![0.5, 0.5, 0.5, 0.5]).unwrap();
        let PseudoMeasurement::Evidence { weight, mean, cov } = pseudo_measurements(&f, &w, 1, &m).unwrap() else {
            panic!("expected evidence");
        };
        assert!((weight - 1.0).abs() < 1e-15);
        assert!((mean[0] - 1.0).abs() < 1e-15 && mean[1].abs() < 1e-15);
        assert!((cov[(0, 0)] - 100.0).abs() < 1e-12);
        let w0 = AssociationWeights::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        assert!(matches!(
            pseudo_measurements(&f, &w0, 1, &m).unwrap(),
            PseudoMeasurement::NoEvidence { .. }
        ));
    }

    #[test]
    fn kalman_halves_covariance() {
        let m = model1();
        let pred = vec![GaussianParams {
            mean: DVector::zeros(4),
            cov: DMatrix::identity(4, 4) * 100.0,
        }];
        let pm = PseudoMeasurement::Evidence {
            weight: 1.0,
            mean: DVector::from_vec(vec![10.0, 0.0]),
            cov: DMatrix::identity(2, 2) * 100.0,
        };
        let (post, _) = update_states(&pred, &[pm], &m).unwrap();
        assert!((post[0].mean[0] - 5.0).abs() < 1e-12);
        assert!(post[0].mean[2].abs() < 1e-12);
        assert!((post[0].cov[(0, 0)] - 50.0).abs() < 1e-12);
        assert!((post[0].cov[(2, 2)] - 50.0).abs() < 1e-12);
    }

    #[test]
    fn rate_update_example() {
        let w = AssociationWeights::new(1, 2, vec![0.0, 1.0]).unwrap();
        let p = [GammaParams::new(2.0, 1.0).unwrap(), GammaParams::new(2.0, 1.0).unwrap()];
        let q = update_rates(&p, &w).unwrap();
        assert_eq!(q[0].shape, 2.0);
        assert_eq!(q[1].shape, 3.0);
        assert_eq!(q[1].scale, 0.5);
    }

    #[test]
    fn standard_schedule() {
        let s = ForgettingSchedule::standard();
        assert!((s.gamma(1) - 0.9).abs() < 1e-15);
        assert!((s.gamma(11) - 0.9).abs() < 1e-15);
        assert!(s.gamma(12) > 0.9 && s.gamma(200) < 1.0);
    }
}
