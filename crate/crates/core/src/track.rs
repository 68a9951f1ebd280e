//! Track-loss detection, threshold selection and the tracker step with relocation.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::cavi::{known_rate_step, CaviConfig, StepOutput, TrackerContext, TrackerState};
use crate::error::{Error, Result};
use crate::localisation::{relocate_all, relocation_prior, MissedObject, RelocationConfig, RelocationResult};
use crate::math::{ceil, ln};
use crate::model::{AssociationWeights, MeasurementFrame, RateVector};
use crate::numerics::InterpolatedPoissonCdf;

/// `M̂_k = Σ_j q(θ_j = k)` for objects `k = 1..K`.
pub fn estimate_counts(weights: &AssociationWeights) -> Vec<f64> {
    (1..weights.num_components()).map(|k| weights.column_sum(k)).collect()
}

/// Inclusive: a window sum equal to the threshold counts as lost.
pub fn detect_loss(window_sum: f64, m_los: f64) -> bool {
    window_sum <= m_los
}

fn check_probability(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfRange { p, lo: 0.0, hi: 1.0 });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParams {
    pub tau: usize,
    pub m_los: f64,
}

/// Shortest window whose zero-count probability is at most `p`, and the count
/// threshold at which the interpolated CDF of the window total equals `p`.
pub fn select_loss_params(lambda: f64, p: f64) -> Result<LossParams> {
    check_probability(p)?;
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Domain {
            what: "Poisson rate",
            value: lambda,
        });
    }
    let tau = (ceil(ln(1.0 / p) / lambda) as usize).max(1);
    let cdf = InterpolatedPoissonCdf::new(tau as f64 * lambda)?;
    let m_los = if p <= cdf.evaluate(0.0) { 0.0 } else { cdf.invert(p)? };
    Ok(LossParams { tau, m_los })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelocThresholds {
    pub m_reloc: f64,
    pub m_init: f64,
}

/// `M^reloc` solves `F̃_Λ(M) = 1 - p`; `M^init = max(0, M^reloc - gap)`.
pub fn select_reloc_thresholds(lambda: f64, p: f64, gap: f64) -> Result<RelocThresholds> {
    check_probability(p)?;
    if !(gap > 0.0) {
        return Err(Error::Config("init gap must be positive".into()));
    }
    let cdf = InterpolatedPoissonCdf::new(lambda)?;
    let target = 1.0 - p;
    let m_reloc = if target <= cdf.evaluate(0.0) {
        0.0
    } else {
        cdf.invert(target)?
    };
    Ok(RelocThresholds {
        m_reloc,
        m_init: (m_reloc - gap).max(0.0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectThresholds {
    pub tau: usize,
    pub m_los: f64,
    pub m_reloc: f64,
    pub m_init: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossDetectorConfig {
    pub p_los: f64,
    pub p_reloc: f64,
    pub gap: f64,
    pub objects: Vec<ObjectThresholds>,
}

impl LossDetectorConfig {
    pub fn from_rates(rates: &RateVector, p_los: f64, p_reloc: f64, gap: f64) -> Result<Self> {
        let objects = (1..=rates.num_objects())
            .map(|k| {
                let l = select_loss_params(rates.get(k), p_los)?;
                let r = select_reloc_thresholds(rates.get(k), p_reloc, gap)?;
                Ok(ObjectThresholds {
                    tau: l.tau,
                    m_los: l.m_los,
                    m_reloc: r.m_reloc,
                    m_init: r.m_init,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            p_los,
            p_reloc,
            gap,
            objects,
        })
    }
}

/// Recent count estimates per object plus the tracked/missed split.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackHealth {
    history: Vec<VecDeque<f64>>,
    missed: Vec<bool>,
    anchors: Vec<Option<DVector<f64>>>,
}

impl TrackHealth {
    /// Buffers start full of `Λ_k` so detection works from the first step.
    pub fn new(config: &LossDetectorConfig, rates: &RateVector) -> Result<Self> {
        let k = config.objects.len();
        if rates.num_objects() != k {
            return Err(Error::Dimension {
                what: "loss detector objects",
                expected: rates.num_objects(),
                got: k,
            });
        }
        let history = config
            .objects
            .iter()
            .enumerate()
            .map(|(i, o)| core::iter::repeat_n(rates.get(i + 1), o.tau.max(1)).collect())
            .collect();
        Ok(Self {
            history,
            missed: vec![false; k],
            anchors: vec![None; k],
        })
    }

    pub fn num_objects(&self) -> usize {
        self.missed.len()
    }

    pub fn push(&mut self, k: usize, count: f64) {
        let h = &mut self.history[k - 1];
        h.pop_front();
        h.push_back(count);
    }

    /// Overwrites the most recent entry.
    pub fn set_latest(&mut self, k: usize, count: f64) {
        if let Some(last) = self.history[k - 1].back_mut() {
            *last = count;
        }
    }

    pub fn window(&self, k: usize) -> &VecDeque<f64> {
        &self.history[k - 1]
    }

    pub fn window_sum(&self, k: usize) -> f64 {
        self.history[k - 1].iter().sum()
    }

    pub fn is_missed(&self, k: usize) -> bool {
        self.missed[k - 1]
    }

    pub fn tracked(&self) -> Vec<usize> {
        (1..=self.missed.len()).filter(|&k| !self.missed[k - 1]).collect()
    }

    pub fn missed(&self) -> Vec<usize> {
        (1..=self.missed.len()).filter(|&k| self.missed[k - 1]).collect()
    }

    /// Last position the object was tracked at, kept while it is missed.
    pub fn anchor(&self, k: usize) -> Option<&DVector<f64>> {
        self.anchors[k - 1].as_ref()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReloConfig {
    pub detector: LossDetectorConfig,
    pub init_cov: DMatrix<f64>,
    pub new_loss_std: f64,
    pub old_loss_std: f64,
    pub velocity_var: f64,
    pub relocation_cavi: CaviConfig,
}

impl ReloConfig {
    pub fn new(detector: LossDetectorConfig, init_std: f64) -> Self {
        Self {
            detector,
            init_cov: DMatrix::identity(2, 2) * (init_std * init_std),
            new_loss_std: 200.0,
            old_loss_std: 700.0,
            velocity_var: 1600.0,
            relocation_cavi: CaviConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReloState {
    pub tracker: TrackerState,
    pub health: TrackHealth,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReloDiagnostics {
    /// Output of the known-rate step before any relocation.
    pub standard: StepOutput,
    pub counts_before: Vec<f64>,
    pub newly_lost: Vec<usize>,
    /// Objects searched for this step, in index order.
    pub searched: Vec<usize>,
    pub relocation: Option<RelocationResult>,
    pub weights: AssociationWeights,
    pub counts: Vec<f64>,
    pub relocated: Vec<usize>,
    pub missed_after: Vec<usize>,
}

/// One tracker step with loss detection and relocation, rates known.
pub fn relo_step(
    ctx: &TrackerContext,
    cfg: &ReloConfig,
    state: &ReloState,
    frame: &MeasurementFrame,
    rates: &RateVector,
) -> Result<(ReloState, ReloDiagnostics)> {
    let k = state.health.num_objects();
    if cfg.detector.objects.len() != k || state.tracker.beliefs.num_objects() != k {
        return Err(Error::Dimension {
            what: "relocation tracker objects",
            expected: k,
            got: cfg.detector.objects.len(),
        });
    }
    let standard = known_rate_step(ctx, &state.tracker, frame, rates)?;
    let counts_before = estimate_counts(&standard.weights);
    let mut health = state.health.clone();
    let mut objects = standard.state.beliefs.objects.clone();
    let hm = ctx.measurement.h();

    let mut newly_lost = Vec::new();
    for i in 1..=k {
        health.push(i, counts_before[i - 1]);
        if health.is_missed(i) {
            continue;
        }
        if detect_loss(health.window_sum(i), cfg.detector.objects[i - 1].m_los) {
            health.missed[i - 1] = true;
            health.anchors[i - 1] = Some(hm * &objects[i - 1].mean);
            newly_lost.push(i);
        }
    }
    let searched = health.missed();
    if searched.is_empty() {
        let diag = ReloDiagnostics {
            weights: standard.weights.clone(),
            counts: counts_before.clone(),
            standard: standard.clone(),
            counts_before,
            newly_lost,
            searched,
            relocation: None,
            relocated: Vec::new(),
            missed_after: Vec::new(),
        };
        return Ok((
            ReloState {
                tracker: standard.state,
                health,
            },
            diag,
        ));
    }

    let region = ctx.measurement.region();
    let mut predictive = standard.predictive.objects.clone();
    let mut missed = Vec::with_capacity(searched.len());
    for &h in &searched {
        let std = if newly_lost.contains(&h) {
            cfg.new_loss_std
        } else {
            cfg.old_loss_std
        };
        let anchor = health.anchors[h - 1]
            .clone()
            .unwrap_or_else(|| hm * &objects[h - 1].mean);
        let prior = relocation_prior(anchor.as_slice(), std, cfg.velocity_var, hm, region)?;
        objects[h - 1] = prior.clone();
        predictive[h - 1] = prior.clone();
        let th = &cfg.detector.objects[h - 1];
        missed.push(MissedObject {
            h,
            prior,
            min_init_count: th.m_init,
            min_evidence: th.m_reloc,
        });
    }
    let rcfg = RelocationConfig {
        init_cov: cfg.init_cov.clone(),
        cavi: cfg.relocation_cavi,
    };
    let result = relocate_all(frame, &missed, &predictive, &objects, rates, &ctx.measurement, &rcfg)?;
    let counts = estimate_counts(&result.weights);
    for i in 1..=k {
        health.set_latest(i, counts[i - 1]);
    }
    for &h in &result.relocated {
        health.missed[h - 1] = false;
        health.anchors[h - 1] = None;
        let lam = rates.get(h);
        let tau = cfg.detector.objects[h - 1].tau;
        // Entries for steps n-τ+2 .. n-1 stand in for the counts a tracked object would have had.
        let buf = &mut health.history[h - 1];
        let len = buf.len();
        if tau >= 3 {
            for slot in buf.iter_mut().take(len - 1).skip(1) {
                *slot = lam;
            }
        }
    }
    let missed_after = health.missed();
    let tracker = TrackerState {
        step: standard.state.step,
        beliefs: crate::cavi::TrackerBeliefs {
            objects: result.posteriors.clone(),
            rates: standard.state.beliefs.rates.clone(),
        },
    };
    let diag = ReloDiagnostics {
        counts_before,
        newly_lost,
        searched,
        weights: result.weights.clone(),
        counts,
        relocated: result.relocated.clone(),
        missed_after,
        relocation: Some(result),
        standard,
    };
    Ok((ReloState { tracker, health }, diag))
}
