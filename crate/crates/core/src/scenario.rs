//! Seeded synthetic trajectories and measurement frames.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::math::{cos, sin, sqrt};
use crate::model::{MeasurementFrame, MeasurementModel, RateVector, Region, TransitionModel};
use crate::numerics::GaussianParams;

/// Derives an independent seed for sub-stream `index` of `base` (SplitMix64 finaliser).
pub fn child_seed(base: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(base.wrapping_add(0x9e37_79b9_7f4a_7c15) ^ mix(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AngleLayout {
    /// Independent uniform angles.
    Random,
    /// Angles `2πk/K`.
    EquallySpaced,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Heading {
    Inward,
    Outward,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub num_objects: usize,
    pub steps: usize,
    pub dt: f64,
    pub initial_radius: f64,
    pub initial_speed: f64,
    pub heading: Heading,
    pub layout: AngleLayout,
    pub object_rates: Vec<f64>,
    pub clutter_density: f64,
    pub region_side: f64,
    pub noise_var: f64,
    pub accel_var: f64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.object_rates.len() != self.num_objects {
            return bad("object_rates length must equal num_objects");
        }
        if self.object_rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return bad("object rates must be finite and non-negative");
        }
        if !(self.dt > 0.0) || !(self.region_side > 0.0) || !(self.noise_var > 0.0) {
            return bad("dt, region_side and noise_var must be positive");
        }
        if !(self.clutter_density >= 0.0) || !(self.accel_var >= 0.0) || !(self.initial_radius >= 0.0) {
            return bad("clutter_density, accel_var and initial_radius must be non-negative");
        }
        if !self.initial_speed.is_finite() {
            return bad("initial_speed must be finite");
        }
        Ok(())
    }

    pub fn clutter_rate(&self) -> f64 {
        self.region_side * self.region_side * self.clutter_density
    }

    pub fn region(&self) -> Result<Region> {
        Region::centered_square(self.region_side)
    }

    pub fn rates(&self) -> Result<RateVector> {
        let mut r = Vec::with_capacity(self.num_objects + 1);
        r.push(self.clutter_rate());
        r.extend_from_slice(&self.object_rates);
        RateVector::new(r)
    }

    pub fn transition_model(&self) -> TransitionModel {
        TransitionModel::constant_velocity(self.num_objects, self.dt, self.accel_var)
    }

    pub fn measurement_model(&self) -> Result<MeasurementModel> {
        MeasurementModel::positional(self.num_objects, self.noise_var, self.region()?)
    }
}

/// Object states for steps `0..=steps`; `states[n][k - 1]` is object `k` at step `n`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub states: Vec<Vec<DVector<f64>>>,
}

impl GroundTruth {
    pub fn num_steps(&self) -> usize {
        self.states.len().saturating_sub(1)
    }

    pub fn num_objects(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    /// Position `[x, y]` of object `k` at step `n`.
    pub fn position(&self, n: usize, k: usize) -> [f64; 2] {
        let s = &self.states[n][k - 1];
        [s[0], s[2]]
    }
}

/// Frames for steps `1..=steps` with the generating component of every measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedFrames {
    pub frames: Vec<MeasurementFrame>,
    pub labels: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: ScenarioConfig,
    pub truth: GroundTruth,
    pub frames: Vec<MeasurementFrame>,
    pub labels: Vec<Vec<usize>>,
}

// Draws from N(0, cov) given a lower Cholesky factor.
fn correlated_normal<R: Rng>(rng: &mut R, l: &DMatrix<f64>) -> DVector<f64> {
    let z = DVector::from_fn(l.nrows(), |_, _| rng.sample::<f64, _>(StandardNormal));
    l * z
}

fn lower_factor(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().all(|v| *v == 0.0) {
        return None;
    }
    nalgebra::Cholesky::new(m.clone()).map(|c| c.l())
}

pub fn generate_truth(config: &ScenarioConfig, seed: u64) -> Result<GroundTruth> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.num_objects;
    let trans = config.transition_model();
    let mut initial = Vec::with_capacity(k);
    for i in 0..k {
        let angle = match config.layout {
            AngleLayout::Random => rng.random::<f64>() * core::f64::consts::TAU,
            AngleLayout::EquallySpaced => core::f64::consts::TAU * i as f64 / k as f64,
        };
        let (u0, u1) = (cos(angle), sin(angle));
        let sign = match config.heading {
            Heading::Inward => -1.0,
            Heading::Outward => 1.0,
        };
        let r = config.initial_radius;
        let v = config.initial_speed * sign;
        initial.push(DVector::from_vec(vec![r * u0, v * u0, r * u1, v * u1]));
    }
    let factors: Vec<Option<DMatrix<f64>>> = (1..=k).map(|i| lower_factor(trans.q(i))).collect();
    let mut states = Vec::with_capacity(config.steps + 1);
    states.push(initial);
    for _ in 0..config.steps {
        let prev = states.last().unwrap();
        let mut next = Vec::with_capacity(k);
        for i in 1..=k {
            let mut x = trans.f(i) * &prev[i - 1] + trans.b(i);
            if let Some(l) = &factors[i - 1] {
                x += correlated_normal(&mut rng, l);
            }
            next.push(x);
        }
        states.push(next);
    }
    Ok(GroundTruth { states })
}

fn poisson_count<R: Rng>(rng: &mut R, rate: f64) -> Result<usize> {
    if rate <= 0.0 {
        return Ok(0);
    }
    let d = Poisson::new(rate).map_err(|_| Error::Domain {
        what: "Poisson rate",
        value: rate,
    })?;
    Ok(d.sample(rng) as usize)
}

pub fn generate_frames(truth: &GroundTruth, config: &ScenarioConfig, seed: u64) -> Result<SimulatedFrames> {
    config.validate()?;
    if truth.num_objects() != config.num_objects {
        return Err(Error::Dimension {
            what: "ground truth object count",
            expected: config.num_objects,
            got: truth.num_objects(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = config.measurement_model()?;
    let region = model.region().clone();
    let noise = Normal::new(0.0, sqrt(config.noise_var)).map_err(|_| Error::Domain {
        what: "noise variance",
        value: config.noise_var,
    })?;
    let clutter_rate = config.clutter_rate();
    let mut frames = Vec::with_capacity(truth.num_steps());
    let mut labels = Vec::with_capacity(truth.num_steps());
    for n in 1..=truth.num_steps() {
        let mut points: Vec<([f64; 2], usize)> = Vec::new();
        for k in 1..=config.num_objects {
            let x = &truth.states[n][k - 1];
            let hx = model.h() * x;
            for _ in 0..poisson_count(&mut rng, config.object_rates[k - 1])? {
                let a: f64 = noise.sample(&mut rng);
                let b: f64 = noise.sample(&mut rng);
                points.push(([hx[0] + a, hx[1] + b], k));
            }
        }
        for _ in 0..poisson_count(&mut rng, clutter_rate)? {
            let lo = region.lower();
            let hi = region.upper();
            let p = [
                lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
                lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
            ];
            points.push((p, 0));
        }
        points.shuffle(&mut rng);
        let mut data = Vec::with_capacity(points.len() * 2);
        let mut lab = Vec::with_capacity(points.len());
        for (p, k) in points {
            data.extend_from_slice(&p);
            lab.push(k);
        }
        frames.push(MeasurementFrame::new(n, 2, data)?);
        labels.push(lab);
    }
    Ok(SimulatedFrames { frames, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    Moderate,
    Coalescence,
    RateEstimation,
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moderate" => Ok(Self::Moderate),
            "coalescence" => Ok(Self::Coalescence),
            "rate_estimation" | "rate-estimation" => Ok(Self::RateEstimation),
            other => Err(Error::Config(format!("unknown scenario preset '{other}'"))),
        }
    }
}

impl PresetName {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Moderate => "moderate",
            Self::Coalescence => "coalescence",
            Self::RateEstimation => "rate_estimation",
        }
    }
}

const MODERATE_CLUTTER: [(f64, f64); 5] = [
    (5.0, 775.0),
    (10.0, 1175.0),
    (20.0, 1761.0),
    (30.0, 1967.0),
    (50.0, 2521.0),
];

/// Mean clutter count for the moderate preset, linear between tabulated object counts.
pub fn moderate_clutter_rate(k: usize) -> f64 {
    let x = k as f64;
    let t = &MODERATE_CLUTTER;
    let seg = if x <= t[0].0 {
        0
    } else {
        t.windows(2).position(|w| x <= w[1].0).unwrap_or(t.len() - 2)
    };
    let ((x0, y0), (x1, y1)) = (t[seg], t[seg + 1]);
    (y0 + (y1 - y0) * (x - x0) / (x1 - x0)).max(1.0)
}

/// Builds the configuration of a named preset. Object rates of the
/// rate-estimation preset are drawn from `seed`.
pub fn preset_config(name: PresetName, k: usize, seed: u64) -> Result<ScenarioConfig> {
    if k == 0 {
        return Err(Error::Config("preset needs at least one object".into()));
    }
    let cfg = match name {
        PresetName::Moderate => {
            let density = 1e-4;
            ScenarioConfig {
                num_objects: k,
                steps: 50,
                dt: 1.0,
                initial_radius: 750.0,
                initial_speed: 30.0,
                heading: Heading::Inward,
                layout: AngleLayout::Random,
                object_rates: vec![5.0; k],
                clutter_density: density,
                region_side: sqrt(moderate_clutter_rate(k) / density),
                noise_var: 100.0,
                accel_var: 25.0,
            }
        }
        PresetName::Coalescence => {
            let clutter = match k {
                8 => 3038.0,
                20 => 6916.0,
                _ => return Err(Error::Config(format!("coalescence preset needs K = 8 or 20, got {k}"))),
            };
            let density = 3e-4;
            ScenarioConfig {
                num_objects: k,
                steps: 50,
                dt: 1.0,
                initial_radius: 750.0,
                initial_speed: 50.0,
                heading: Heading::Inward,
                layout: AngleLayout::EquallySpaced,
                object_rates: vec![6.0; k],
                clutter_density: density,
                region_side: sqrt(clutter / density),
                noise_var: 100.0,
                accel_var: 25.0,
            }
        }
        PresetName::RateEstimation => {
            if k != 10 {
                return Err(Error::Config(format!("rate_estimation preset needs K = 10, got {k}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed(seed, 2));
            let rates = (0..k).map(|_| 1.5 + 8.5 * rng.random::<f64>()).collect();
            let density = 1e-5;
            ScenarioConfig {
                num_objects: k,
                steps: 200,
                dt: 1.0,
                initial_radius: 100.0,
                initial_speed: 20.0,
                heading: Heading::Outward,
                layout: AngleLayout::EquallySpaced,
                object_rates: rates,
                clutter_density: density,
                region_side: sqrt(5240.0 / density),
                noise_var: 100.0,
                accel_var: 25.0,
            }
        }
    };
    Ok(cfg)
}

/// Builds a preset and samples its trajectories and frames.
pub fn preset(name: PresetName, k: usize, seed: u64) -> Result<Dataset> {
    let config = preset_config(name, k, seed)?;
    simulate(config, seed)
}

/// Samples a dataset for an arbitrary configuration.
pub fn simulate(config: ScenarioConfig, seed: u64) -> Result<Dataset> {
    let truth = generate_truth(&config, child_seed(seed, 0))?;
    let sim = generate_frames(&truth, &config, child_seed(seed, 1))?;
    Ok(Dataset {
        config,
        truth,
        frames: sim.frames,
        labels: sim.labels,
    })
}

/// Tight Gaussian beliefs centred on the step-0 truth.
pub fn initial_beliefs(truth: &GroundTruth, var: f64) -> Vec<GaussianParams> {
    truth.states[0]
        .iter()
        .map(|x| GaussianParams {
            mean: x.clone(),
            cov: DMatrix::identity(x.len(), x.len()) * var,
        })
        .collect()
}

/// Single-object snapshot for testing localisation from a broad prior.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalisationDemoConfig {
    pub object_rate: f64,
    pub clutter_density: f64,
    pub noise_var: f64,
    pub truth: [f64; 2],
    pub prior_mean: [f64; 2],
    /// Radius of the uniform disc the prior mean is jittered within, per seed.
    pub prior_jitter: f64,
    pub prior_std: f64,
    pub velocity_var: f64,
    pub region_side: f64,
    /// Replaces the Poisson object count with a fixed one when set.
    pub object_count: Option<usize>,
}

impl Default for LocalisationDemoConfig {
    // std 310 gives a grid of about 120 inits with C = 35² I
    fn default() -> Self {
        Self {
            object_rate: 4.0,
            clutter_density: 1e-4,
            noise_var: 100.0,
            truth: [0.0, 0.0],
            prior_mean: [0.0, 0.0],
            prior_jitter: 300.0,
            prior_std: 310.0,
            velocity_var: 1600.0,
            region_side: 2400.0,
            object_count: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalisationDemo {
    pub frame: MeasurementFrame,
    pub labels: Vec<usize>,
    pub model: MeasurementModel,
    pub rates: RateVector,
    pub prior: GaussianParams,
    pub truth: [f64; 2],
}

pub fn localisation_demo(config: &LocalisationDemoConfig, seed: u64) -> Result<LocalisationDemo> {
    if !(config.prior_std > 0.0) || !(config.velocity_var > 0.0) || !(config.noise_var > 0.0) {
        return Err(Error::Config("localisation demo needs positive spreads".into()));
    }
    let region = Region::centered_square(config.region_side)?;
    let model = MeasurementModel::positional(1, config.noise_var, region.clone())?;
    let clutter_rate = config.clutter_density * region.volume();
    let rates = RateVector::new(vec![clutter_rate, config.object_rate])?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, sqrt(config.noise_var)).map_err(|_| Error::Domain {
        what: "noise variance",
        value: config.noise_var,
    })?;
    let mut points: Vec<([f64; 2], usize)> = Vec::new();
    let count = match config.object_count {
        Some(c) => c,
        None => poisson_count(&mut rng, config.object_rate)?,
    };
    for _ in 0..count {
        let a: f64 = noise.sample(&mut rng);
        let b: f64 = noise.sample(&mut rng);
        points.push(([config.truth[0] + a, config.truth[1] + b], 1));
    }
    for _ in 0..poisson_count(&mut rng, clutter_rate)? {
        let (lo, hi) = (region.lower(), region.upper());
        let p = [
            lo[0] + (hi[0] - lo[0]) * rng.random::<f64>(),
            lo[1] + (hi[1] - lo[1]) * rng.random::<f64>(),
        ];
        points.push((p, 0));
    }
    points.shuffle(&mut rng);
    let data: Vec<f64> = points.iter().flat_map(|(p, _)| p.iter().copied()).collect();
    let labels = points.iter().map(|(_, k)| *k).collect();
    let v = config.prior_std * config.prior_std;
    let rho = config.prior_jitter * sqrt(rng.random::<f64>());
    let phi = core::f64::consts::TAU * rng.random::<f64>();
    let centre = [
        config.prior_mean[0] + rho * cos(phi),
        config.prior_mean[1] + rho * sin(phi),
    ];
    let prior = GaussianParams::new(
        DVector::from_vec(vec![centre[0], 0.0, centre[1], 0.0]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![v, config.velocity_var, v, config.velocity_var])),
    )?;
    Ok(LocalisationDemo {
        frame: MeasurementFrame::new(0, 2, data)?,
        labels,
        model,
        rates,
        prior,
        truth: config.truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clutter_table_interpolates() {
        assert_eq!(moderate_clutter_rate(5), 775.0);
        assert_eq!(moderate_clutter_rate(50), 2521.0);
        assert!((moderate_clutter_rate(15) - 1468.0).abs() < 1e-9);
    }

    #[test]
    fn coalescence_rates() {
        let c = preset_config(PresetName::Coalescence, 8, 1).unwrap();
        assert!((c.clutter_rate() - 3038.0).abs() < 1e-6);
        assert!((c.region_side - 3182.2).abs() < 0.1);
        let c = preset_config(PresetName::Coalescence, 20, 1).unwrap();
        assert!((c.clutter_rate() - 6916.0).abs() < 1e-6);
        assert!(preset_config(PresetName::Coalescence, 10, 1).is_err());
    }

    #[test]
    fn unknown_preset() {
        assert!("busy".parse::<PresetName>().is_err());
    }

    #[test]
    fn child_seeds_differ() {
        assert_ne!(child_seed(1, 0), child_seed(1, 1));
        assert_ne!(child_seed(1, 0), child_seed(2, 0));
        assert_eq!(child_seed(7, 3), child_seed(7, 3));
    }
}
