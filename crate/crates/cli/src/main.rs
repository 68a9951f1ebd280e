#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use vbtrack::config::{ExperimentConfig, ScenarioSpec};
use vbtrack::error::{HarnessError, Result};
use vbtrack::experiment::{run_experiment, run_tracker, TrackerSettings};
use vbtrack::io::{self, FrameRecord, InitRow, StateRow, TrackStepRow};
use vbtrack_core::localisation::{build_init_grid, filter_eligible_inits, run_inits, RelocationProblem};
use vbtrack_core::scenario::{localisation_demo, preset, Dataset, LocalisationDemoConfig, PresetName};
use vbtrack_core::track::{select_loss_params, select_reloc_thresholds};

#[derive(Parser)]
#[command(name = "vbtrack", version, about = "Variational multi-object tracking experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// vb, vb-rate-learning or vb-relo.
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset and write frames.jsonl, truth.csv and scenario.json.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Run one tracker over a dataset directory written by `simulate`.
    Track {
        #[command(flatten)]
        common: Common,
        /// Dataset directory.
        #[arg(long)]
        data: PathBuf,
    },
    /// Run a seeded Monte-Carlo experiment.
    Experiment {
        #[command(flatten)]
        common: Common,
    },
    /// Localise one object from a broad prior and dump every initialisation.
    RelocateDemo {
        #[command(flatten)]
        common: Common,
        /// Spread of each initialisation.
        #[arg(long, default_value_t = 35.0)]
        init_std: f64,
        /// Minimum count that makes an initialisation eligible.
        #[arg(long, default_value_t = 0.0)]
        min_count: f64,
    },
    /// Print loss and relocation thresholds for one object rate.
    Params {
        #[arg(long)]
        lambda: f64,
        #[arg(long, default_value_t = 7e-4)]
        p_los: f64,
        #[arg(long, default_value_t = 0.5)]
        p_reloc: f64,
        #[arg(long, default_value_t = 1.0)]
        gap: f64,
    },
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::from_path(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(m) = &c.mode {
        cfg.mode = m.parse()?;
    }
    if c.threads.is_some() {
        cfg.threads = c.threads;
    }
    if c.out.is_some() {
        cfg.out = c.out.clone();
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> Result<&Path> {
    cfg.out
        .as_deref()
        .ok_or_else(|| HarnessError::Config("an output directory is required (--out)".into()))
}

fn simulate_cmd(common: &Common, preset_name: Option<String>, k: Option<usize>) -> Result<()> {
    let mut cfg = load_config(common)?;
    if let Some(p) = preset_name {
        cfg.preset = p;
        cfg.scenario = None;
    }
    if let Some(k) = k {
        cfg.num_objects = k;
    }
    let dir = out_dir(&cfg)?;
    let dataset = match &cfg.scenario {
        Some(s) => vbtrack_core::scenario::simulate(s.to_config(), cfg.seed)?,
        None => {
            let name: PresetName = cfg.preset_name()?;
            preset(name, cfg.num_objects, cfg.seed).map_err(|e| HarnessError::Config(e.to_string()))?
        }
    };
    io::ensure_dir(dir)?;
    let records: Vec<FrameRecord> = dataset
        .frames
        .iter()
        .zip(&dataset.labels)
        .map(|(f, l)| FrameRecord::from_frame(f, Some(l)))
        .collect();
    io::write_frames(&dir.join("frames.jsonl"), &records)?;
    io::write_csv(&dir.join("truth.csv"), &io::truth_rows(&dataset.truth))?;
    io::write_json(&dir.join("scenario.json"), &ScenarioSpec::from(&dataset.config))
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    let scenario: ScenarioSpec = io::read_json(&dir.join("scenario.json"))?;
    let frames = io::read_frames(&dir.join("frames.jsonl"))?;
    let truth_path = dir.join("truth.csv");
    let rows: Vec<StateRow> = io::read_csv(&truth_path)?;
    let truth = io::truth_from_rows(&truth_path, &rows)?;
    let config = scenario.to_config();
    config.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
    if truth.num_steps() < frames.len() || truth.num_objects() != config.num_objects {
        return Err(HarnessError::format(
            truth_path,
            "truth does not match the scenario and frames",
        ));
    }
    Ok(Dataset {
        config,
        truth,
        labels: frames.iter().map(|f| f.labels.clone().unwrap_or_default()).collect(),
        frames: frames.iter().map(FrameRecord::to_frame).collect::<Result<_>>()?,
    })
}

fn track_cmd(common: &Common, data: &Path) -> Result<()> {
    let cfg = load_config(common)?;
    cfg.validate()?;
    let dir = out_dir(&cfg)?;
    let dataset = load_dataset(data)?;
    let run = run_tracker(&dataset, &TrackerSettings::from_config(&cfg)?)?;
    io::ensure_dir(dir)?;
    let rows: Vec<TrackStepRow> = run
        .steps
        .iter()
        .map(|s| TrackStepRow {
            step: s.step,
            ospa: s.ospa,
            cpu_ms: s.cpu_ms,
            n_lost: s.n_lost,
            n_relocated: s.n_relocated,
        })
        .collect();
    io::write_csv(&dir.join("steps.csv"), &rows)?;
    io::write_csv(&dir.join("tracks.csv"), &run.estimate_rows())?;
    io::write_csv(&dir.join("events.csv"), &run.events)
}

fn experiment_cmd(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(&cfg)?.to_path_buf();
    let res = run_experiment(&cfg, Some(&dir))?;
    let s = &res.summary;
    println!(
        "{} K={} D={} ospa {:.3} ± {:.3}  cpu {:.3} ms/step  failed {}",
        s.mode,
        s.k,
        s.d,
        s.ospa_mean,
        s.ospa_std,
        s.cpu_ms_mean,
        s.failed.len()
    );
    if s.failed.len() == s.d {
        return Err(HarnessError::format(dir, "every dataset failed"));
    }
    Ok(())
}

fn relocate_demo_cmd(common: &Common, init_std: f64, min_count: f64) -> Result<()> {
    let cfg = load_config(common)?;
    let dir = out_dir(&cfg)?;
    if !(init_std > 0.0) || !(min_count >= 0.0) {
        return Err(HarnessError::Config(
            "init_std must be positive and min_count non-negative".into(),
        ));
    }
    let demo = localisation_demo(&LocalisationDemoConfig::default(), cfg.seed)?;
    let h = demo.model.h().clone();
    let prior_mean = &h * &demo.prior.mean;
    let prior_cov = &h * &demo.prior.cov * h.transpose();
    let init_cov = nalgebra::DMatrix::identity(2, 2) * (init_std * init_std);
    let grid = build_init_grid(&prior_mean, &prior_cov, &init_cov)?;
    let eligible = filter_eligible_inits(&grid, &demo.frame, min_count)?;
    let problem = RelocationProblem::new(
        &demo.frame,
        &demo.model,
        &demo.rates,
        1,
        std::slice::from_ref(&demo.prior),
        std::slice::from_ref(&demo.prior),
        demo.prior.clone(),
    )?;
    let results = run_inits(&problem, &grid, &eligible, &cfg.cavi.to_config())?;
    let winner = results
        .iter()
        .fold(None::<(usize, f64)>, |best, (s, r)| match best {
            Some((_, e)) if !(r.elbo > e) => best,
            _ => Some((*s, r.elbo)),
        })
        .map(|(s, _)| s);
    let rows: Vec<InitRow> = (0..grid.len())
        .map(|s| {
            let c = &grid.centers()[s];
            let run = results.iter().find(|(i, _)| *i == s).map(|(_, r)| r);
            let (m, v) = match run {
                Some(r) => {
                    let m = &h * &r.posterior.mean;
                    let v = &h * &r.posterior.cov * h.transpose();
                    ([m[0], m[1]], [v[(0, 0)], v[(0, 1)], v[(1, 1)]])
                }
                None => ([f64::NAN; 2], [f64::NAN; 3]),
            };
            InitRow {
                init: s,
                center_x: c[0],
                center_y: c[1],
                eligible: run.is_some(),
                elbo: run.map_or(f64::NEG_INFINITY, |r| r.elbo),
                iterations: run.map_or(0, |r| r.trace.len()),
                converged: run.is_some_and(|r| r.converged),
                mean_x: m[0],
                mean_y: m[1],
                cov_xx: v[0],
                cov_xy: v[1],
                cov_yy: v[2],
                evidence: run.map_or(0.0, |r| r.evidence()),
                winner: winner == Some(s),
            }
        })
        .collect();
    io::ensure_dir(dir)?;
    io::write_csv(&dir.join("inits.csv"), &rows)?;
    io::write_json(
        &dir.join("demo.json"),
        &json!({
            "seed": cfg.seed,
            "truth": demo.truth,
            "prior_mean": prior_mean.as_slice(),
            "measurements": demo.frame.iter().map(|p| [p[0], p[1]]).collect::<Vec<_>>(),
            "labels": demo.labels,
            "winner": winner,
        }),
    )
}

fn params_cmd(lambda: f64, p_los: f64, p_reloc: f64, gap: f64) -> Result<()> {
    let cfg_err = |e: vbtrack_core::Error| HarnessError::Config(e.to_string());
    let l = select_loss_params(lambda, p_los).map_err(cfg_err)?;
    let r = select_reloc_thresholds(lambda, p_reloc, gap).map_err(cfg_err)?;
    let v = json!({
        "lambda": lambda,
        "p_los": p_los,
        "tau": l.tau,
        "m_los": l.m_los,
        "p_reloc": p_reloc,
        "m_reloc": r.m_reloc,
        "m_init": r.m_init,
    });
    println!("{}", serde_json::to_string_pretty(&v).expect("plain JSON"));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, preset, k } => simulate_cmd(&common, preset, k),
        Command::Track { common, data } => track_cmd(&common, &data),
        Command::Experiment { common } => experiment_cmd(&common),
        Command::RelocateDemo {
            common,
            init_std,
            min_count,
        } => relocate_demo_cmd(&common, init_std, min_count),
        Command::Params {
            lambda,
            p_los,
            p_reloc,
            gap,
        } => params_cmd(lambda, p_los, p_reloc, gap),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
