//! On-disk formats. Every writer has a matching reader.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use vbtrack_core::model::MeasurementFrame;
use vbtrack_core::scenario::GroundTruth;

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub step: usize,
    pub points: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
}

impl FrameRecord {
    pub fn from_frame(frame: &MeasurementFrame, labels: Option<&[usize]>) -> Self {
        Self {
            step: frame.step(),
            points: frame.iter().map(|p| [p[0], p[1]]).collect(),
            labels: labels.map(<[usize]>::to_vec),
        }
    }

    pub fn to_frame(&self) -> Result<MeasurementFrame> {
        let data = self.points.iter().flat_map(|p| p.iter().copied()).collect();
        Ok(MeasurementFrame::new(self.step, 2, data)?)
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| HarnessError::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| HarnessError::io(path, e))
}

pub fn write_frames(path: &Path, records: &[FrameRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| HarnessError::format(path, e))?;
        w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_frames(path: &Path) -> Result<Vec<FrameRecord>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| HarnessError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let r: FrameRecord =
            serde_json::from_str(&line).map_err(|e| HarnessError::format(path, format!("line {}: {e}", i + 1)))?;
        out.push(r);
    }
    Ok(out)
}

/// One object state per row, `[x, vx, y, vy]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRow {
    pub step: usize,
    pub object: usize,
    pub x: f64,
    pub vx: f64,
    pub y: f64,
    pub vy: f64,
}

impl StateRow {
    pub fn new(step: usize, object: usize, s: &DVector<f64>) -> Self {
        Self {
            step,
            object,
            x: s[0],
            vx: s[1],
            y: s[2],
            vy: s[3],
        }
    }
}

/// A CSV record type with a fixed header, so empty files still carry one.
pub trait CsvRow: Serialize + DeserializeOwned {
    const HEADER: &'static [&'static str];
}

macro_rules! csv_row {
    ($t:ty, [$($h:literal),*]) => {
        impl CsvRow for $t {
            const HEADER: &'static [&'static str] = &[$($h),*];
        }
    };
}

pub fn write_csv<T: CsvRow>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(create(path)?);
    w.write_record(T::HEADER).map_err(|e| HarnessError::format(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::format(path, e))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_csv<T: CsvRow>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(open(path)?);
    r.deserialize()
        .map(|row| row.map_err(|e| HarnessError::format(path, e)))
        .collect()
}

pub fn truth_rows(truth: &GroundTruth) -> Vec<StateRow> {
    truth
        .states
        .iter()
        .enumerate()
        .flat_map(|(n, objs)| objs.iter().enumerate().map(move |(k, s)| StateRow::new(n, k + 1, s)))
        .collect()
}

/// Rebuilds a trajectory set from rows sorted or not; every step must list every object.
pub fn truth_from_rows(path: &Path, rows: &[StateRow]) -> Result<GroundTruth> {
    let steps = rows.iter().map(|r| r.step + 1).max().unwrap_or(0);
    let k = rows.iter().map(|r| r.object).max().unwrap_or(0);
    let mut states: Vec<Vec<Option<DVector<f64>>>> = vec![vec![None; k]; steps];
    for r in rows {
        if r.object == 0 {
            return Err(HarnessError::format(path, "object ids start at 1"));
        }
        states[r.step][r.object - 1] = Some(DVector::from_vec(vec![r.x, r.vx, r.y, r.vy]));
    }
    let states = states
        .into_iter()
        .enumerate()
        .map(|(n, s)| {
            s.into_iter()
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| HarnessError::format(path, format!("step {n} is missing an object")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruth { states })
}

/// Row of the `track` subcommand output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackStepRow {
    pub step: usize,
    pub ospa: f64,
    pub cpu_ms: f64,
    pub n_lost: usize,
    pub n_relocated: usize,
}

/// Per-dataset experiment row. Timings live in a separate file so this one is reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentStepRow {
    pub step: usize,
    pub ospa: f64,
    pub n_lost: usize,
    pub n_relocated: usize,
    pub iterations: usize,
    pub elbo: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub dataset: usize,
    pub step: usize,
    pub cpu_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Lost,
    Relocated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRow {
    pub step: usize,
    pub object: usize,
    pub event: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerStepMeanRow {
    pub step: usize,
    pub ospa_mean: f64,
}

/// Row of the `relocate-demo` dump; one per grid centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitRow {
    pub init: usize,
    pub center_x: f64,
    pub center_y: f64,
    pub eligible: bool,
    pub elbo: f64,
    pub iterations: usize,
    pub converged: bool,
    pub mean_x: f64,
    pub mean_y: f64,
    pub cov_xx: f64,
    pub cov_xy: f64,
    pub cov_yy: f64,
    pub evidence: f64,
    pub winner: bool,
}

/// Final rate estimate of one component under rate learning; component 0 is clutter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub component: usize,
    pub truth: f64,
    pub estimate: f64,
}

csv_row!(StateRow, ["step", "object", "x", "vx", "y", "vy"]);
csv_row!(TrackStepRow, ["step", "ospa", "cpu_ms", "n_lost", "n_relocated"]);
csv_row!(
    ExperimentStepRow,
    ["step", "ospa", "n_lost", "n_relocated", "iterations", "elbo"]
);
csv_row!(TimingRow, ["dataset", "step", "cpu_ms"]);
csv_row!(EventRow, ["step", "object", "event"]);
csv_row!(PerStepMeanRow, ["step", "ospa_mean"]);
csv_row!(RateRow, ["component", "truth", "estimate"]);
csv_row!(
    InitRow,
    [
        "init",
        "center_x",
        "center_y",
        "eligible",
        "elbo",
        "iterations",
        "converged",
        "mean_x",
        "mean_y",
        "cov_xx",
        "cov_xy",
        "cov_yy",
        "evidence",
        "winner"
    ]
);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "D")]
    pub d: usize,
    pub ospa_mean: f64,
    pub ospa_std: f64,
    pub cpu_ms_mean: f64,
    pub per_step: Vec<f64>,
    /// Datasets whose tracker failed; excluded from the statistics.
    #[serde(default)]
    pub failed: Vec<usize>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| HarnessError::format(path, e))?;
    w.write_all(b"\n").map_err(|e| HarnessError::io(path, e))?;
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| HarnessError::format(path, e))
}

pub fn ensure_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| HarnessError::io(path, e))
}
