//! Running trackers over simulated datasets and aggregating the results.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use vbtrack_core::cavi::{known_rate_step, tracker_step, RateBelief, TrackerBeliefs, TrackerContext, TrackerState};
use vbtrack_core::metrics::{ospa, summarize, OspaConfig};
use vbtrack_core::numerics::GammaParams;
use vbtrack_core::scenario::{child_seed, initial_beliefs, simulate, Dataset};
use vbtrack_core::track::{relo_step, LossDetectorConfig, ReloConfig, ReloState, TrackHealth};

use crate::config::{ExperimentConfig, Mode, RateLearningSpec, ResolvedRelocation};
use crate::error::{HarnessError, Result};
use crate::io::{self, EventKind, EventRow, ExperimentStepRow, PerStepMeanRow, RateRow, StateRow, Summary, TimingRow};

/// Everything a tracker run needs besides the data.
#[derive(Debug, Clone)]
pub struct TrackerSettings {
    pub mode: Mode,
    pub initial_var: f64,
    pub cavi: vbtrack_core::cavi::CaviConfig,
    pub relocation: ResolvedRelocation,
    pub rate_learning: RateLearningSpec,
    pub ospa: OspaConfig,
}

impl TrackerSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            mode: cfg.mode,
            initial_var: cfg.initial_var,
            cavi: cfg.cavi.to_config(),
            relocation: cfg.resolved_relocation(),
            rate_learning: cfg.rate_learning.clone(),
            ospa: cfg.ospa()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub ospa: f64,
    pub cpu_ms: f64,
    pub n_lost: usize,
    pub n_relocated: usize,
    pub iterations: usize,
    pub elbo: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerRun {
    pub steps: Vec<StepRecord>,
    pub events: Vec<EventRow>,
    /// Posterior means after each frame.
    pub estimates: Vec<Vec<DVector<f64>>>,
    /// Posterior mean rates after the last frame, clutter first; only for rate learning.
    pub final_rates: Option<Vec<f64>>,
    pub true_rates: Vec<f64>,
}

impl TrackerRun {
    pub fn ospa_series(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.ospa).collect()
    }

    pub fn estimate_rows(&self) -> Vec<StateRow> {
        self.steps
            .iter()
            .zip(&self.estimates)
            .flat_map(|(s, objs)| {
                objs.iter()
                    .enumerate()
                    .map(move |(k, x)| StateRow::new(s.step, k + 1, x))
            })
            .collect()
    }
}

fn positions(ctx: &TrackerContext, states: &[DVector<f64>]) -> Vec<Vec<f64>> {
    let h = ctx.measurement.h();
    states.iter().map(|x| (h * x).iter().copied().collect()).collect()
}

enum Runner {
    Plain(TrackerState),
    Relo(ReloConfig, ReloState),
}

/// Runs one tracker over a dataset, starting from beliefs centred on the step-0 truth.
pub fn run_tracker(dataset: &Dataset, s: &TrackerSettings) -> Result<TrackerRun> {
    let cfg = &dataset.config;
    let mut ctx = TrackerContext::new(cfg.transition_model(), cfg.measurement_model()?)?;
    ctx.cavi = s.cavi;
    ctx.forgetting = s.rate_learning.schedule();
    let rates = cfg.rates()?;
    let objects = initial_beliefs(&dataset.truth, s.initial_var);
    let rate_belief = match s.mode {
        Mode::VbRateLearning => {
            let g = GammaParams::new(s.rate_learning.prior_shape, s.rate_learning.prior_scale)?;
            RateBelief::Learned(vec![g; rates.as_slice().len()])
        }
        Mode::Vb | Mode::VbRelo => RateBelief::Known(rates.clone()),
    };
    let state = TrackerState {
        step: 0,
        beliefs: TrackerBeliefs {
            objects,
            rates: rate_belief,
        },
    };
    let mut runner = match s.mode {
        Mode::VbRelo => {
            let r = &s.relocation;
            let det = LossDetectorConfig::from_rates(&rates, r.p_los, r.p_reloc, r.gap)?;
            let mut relo = ReloConfig::new(det.clone(), r.init_std);
            relo.new_loss_std = r.new_loss_std;
            relo.old_loss_std = r.old_loss_std;
            relo.velocity_var = r.velocity_var;
            let health = TrackHealth::new(&det, &rates)?;
            Runner::Relo(relo, ReloState { tracker: state, health })
        }
        _ => Runner::Plain(state),
    };

    let mut run = TrackerRun {
        steps: Vec::with_capacity(dataset.frames.len()),
        events: Vec::new(),
        estimates: Vec::with_capacity(dataset.frames.len()),
        final_rates: None,
        true_rates: rates.as_slice().to_vec(),
    };
    for frame in &dataset.frames {
        let n = frame.step();
        let t0 = Instant::now();
        let (tracker, diag, lost, relocated) = match &mut runner {
            Runner::Plain(st) => {
                let out = if s.mode == Mode::VbRateLearning {
                    tracker_step(&ctx, st, frame)?
                } else {
                    known_rate_step(&ctx, st, frame, &rates)?
                };
                *st = out.state.clone();
                (out.state, out.diagnostics, Vec::new(), Vec::new())
            }
            Runner::Relo(relo, st) => {
                let (next, d) = relo_step(&ctx, relo, st, frame, &rates)?;
                *st = next;
                (st.tracker.clone(), d.standard.diagnostics, d.newly_lost, d.relocated)
            }
        };
        let cpu_ms = t0.elapsed().as_secs_f64() * 1e3;
        let means: Vec<DVector<f64>> = tracker.beliefs.objects.iter().map(|g| g.mean.clone()).collect();
        let d = ospa(
            &positions(&ctx, &dataset.truth.states[n]),
            &positions(&ctx, &means),
            &s.ospa,
        )?;
        run.events.extend(lost.iter().map(|&k| EventRow {
            step: n,
            object: k,
            event: EventKind::Lost,
        }));
        run.events.extend(relocated.iter().map(|&k| EventRow {
            step: n,
            object: k,
            event: EventKind::Relocated,
        }));
        run.steps.push(StepRecord {
            step: n,
            ospa: d,
            cpu_ms,
            n_lost: lost.len(),
            n_relocated: relocated.len(),
            iterations: diag.iterations,
            elbo: diag.elbo_trace.last().copied().unwrap_or(f64::NAN),
        });
        run.estimates.push(means);
        if let RateBelief::Learned(g) = &tracker.beliefs.rates {
            run.final_rates = Some(g.iter().map(GammaParams::mean).collect());
        }
    }
    Ok(run)
}

/// Dataset `d` of an experiment, reproducible on its own.
pub fn experiment_dataset(cfg: &ExperimentConfig, d: usize) -> Result<Dataset> {
    let seed = child_seed(cfg.seed, d as u64);
    Ok(simulate(cfg.scenario_config(seed)?, seed)?)
}

#[derive(Debug)]
pub struct ExperimentResult {
    pub summary: Summary,
    /// `Err` holds the failure message of a dataset whose tracker errored or panicked.
    pub runs: Vec<std::result::Result<TrackerRun, String>>,
}

fn panic_message(p: Box<dyn std::any::Any + Send>) -> String {
    p.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| p.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "tracker panicked".into())
}

fn run_dataset(
    cfg: &ExperimentConfig,
    settings: &TrackerSettings,
    d: usize,
) -> std::result::Result<TrackerRun, String> {
    catch_unwind(AssertUnwindSafe(|| {
        experiment_dataset(cfg, d).and_then(|ds| run_tracker(&ds, settings))
    }))
    .map_err(panic_message)?
    .map_err(|e| e.to_string())
}

/// Runs every dataset of `cfg` and, when `out` is given, writes all artefacts there.
pub fn run_experiment(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ExperimentResult> {
    cfg.validate()?;
    let settings = TrackerSettings::from_config(cfg)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cfg.threads {
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| HarnessError::Config(e.to_string()))?;
    let runs: Vec<_> = pool.install(|| {
        (0..cfg.datasets)
            .into_par_iter()
            .map(|d| run_dataset(cfg, &settings, d))
            .collect()
    });

    let failed: Vec<usize> = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.is_err())
        .map(|(d, _)| d)
        .collect();
    for &d in &failed {
        log::warn!("dataset {d} failed: {}", runs[d].as_ref().unwrap_err());
    }
    let ok: Vec<&TrackerRun> = runs.iter().filter_map(|r| r.as_ref().ok()).collect();
    let summary = if ok.is_empty() {
        Summary {
            mode: cfg.mode.as_str().into(),
            k: cfg.scenario_config(cfg.seed)?.num_objects,
            d: cfg.datasets,
            ospa_mean: f64::NAN,
            ospa_std: f64::NAN,
            cpu_ms_mean: f64::NAN,
            per_step: Vec::new(),
            failed: failed.clone(),
        }
    } else {
        let o: Vec<Vec<f64>> = ok.iter().map(|r| r.ospa_series()).collect();
        let c: Vec<Vec<f64>> = ok.iter().map(|r| r.steps.iter().map(|s| s.cpu_ms).collect()).collect();
        let s = summarize(&o, &c)?;
        Summary {
            mode: cfg.mode.as_str().into(),
            k: ok[0].estimates.first().map_or(0, Vec::len),
            d: cfg.datasets,
            ospa_mean: s.grand_mean,
            ospa_std: s.std,
            cpu_ms_mean: s.cpu_ms_mean,
            per_step: s.per_step_mean,
            failed: failed.clone(),
        }
    };

    if let Some(dir) = out {
        write_artifacts(cfg, dir, &runs, &summary)?;
    }
    Ok(ExperimentResult { summary, runs })
}

fn write_artifacts(
    cfg: &ExperimentConfig,
    dir: &Path,
    runs: &[std::result::Result<TrackerRun, String>],
    summary: &Summary,
) -> Result<()> {
    io::ensure_dir(dir)?;
    io::write_json(&dir.join("config.json"), &cfg.resolved_json()?)?;
    let mut timing = Vec::new();
    for (d, run) in runs.iter().enumerate() {
        let Ok(run) = run else { continue };
        let rows: Vec<ExperimentStepRow> = run
            .steps
            .iter()
            .map(|s| ExperimentStepRow {
                step: s.step,
                ospa: s.ospa,
                n_lost: s.n_lost,
                n_relocated: s.n_relocated,
                iterations: s.iterations,
                elbo: s.elbo,
            })
            .collect();
        io::write_csv(&dir.join(format!("dataset_{d:03}_steps.csv")), &rows)?;
        io::write_csv(&dir.join(format!("dataset_{d:03}_events.csv")), &run.events)?;
        if let Some(est) = &run.final_rates {
            let rows: Vec<RateRow> = est
                .iter()
                .zip(&run.true_rates)
                .enumerate()
                .map(|(component, (&estimate, &truth))| RateRow {
                    component,
                    truth,
                    estimate,
                })
                .collect();
            io::write_csv(&dir.join(format!("dataset_{d:03}_rates.csv")), &rows)?;
        }
        timing.extend(run.steps.iter().map(|s| TimingRow {
            dataset: d,
            step: s.step,
            cpu_ms: s.cpu_ms,
        }));
    }
    io::write_csv(&dir.join("timing.csv"), &timing)?;
    let first_step = runs
        .iter()
        .find_map(|r| r.as_ref().ok())
        .and_then(|r| r.steps.first())
        .map_or(1, |s| s.step);
    let mean_rows: Vec<PerStepMeanRow> = summary
        .per_step
        .iter()
        .enumerate()
        .map(|(i, &m)| PerStepMeanRow {
            step: first_step + i,
            ospa_mean: m,
        })
        .collect();
    io::write_csv(&dir.join("per_step_mean.csv"), &mean_rows)?;
    io::write_json(&dir.join("summary.json"), summary)
}
