//! OSPA distance between equal-size point sets, and run summaries.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::{powf, sqrt};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OspaConfig {
    pub order: f64,
    pub cutoff: f64,
}

impl Default for OspaConfig {
    fn default() -> Self {
        Self {
            order: 1.0,
            cutoff: 50.0,
        }
    }
}

impl OspaConfig {
    pub fn new(order: f64, cutoff: f64) -> Result<Self> {
        if !(order >= 1.0) || !(cutoff > 0.0) {
            return Err(Error::Config("OSPA needs order >= 1 and a positive cutoff".into()));
        }
        Ok(Self { order, cutoff })
    }
}

/// Minimum-cost perfect matching on a square row-major cost matrix.
///
/// Returns `assignment[row] = column`. Shortest augmenting paths with potentials, O(n³).
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    // 1-based internals, index 0 is the virtual source.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        if p[j] > 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

/// OSPA for sets of equal size, with cut-off applied per pair before averaging.
pub fn ospa(truth: &[Vec<f64>], estimates: &[Vec<f64>], cfg: &OspaConfig) -> Result<f64> {
    let n = truth.len();
    if estimates.len() != n {
        return Err(Error::Dimension {
            what: "OSPA set sizes",
            expected: n,
            got: estimates.len(),
        });
    }
    if n == 0 {
        return Ok(0.0);
    }
    let mut cost = Vec::with_capacity(n * n);
    for t in truth {
        for e in estimates {
            if t.len() != e.len() {
                return Err(Error::Dimension {
                    what: "OSPA point dimension",
                    expected: t.len(),
                    got: e.len(),
                });
            }
            cost.push(powf(distance(t, e).min(cfg.cutoff), cfg.order));
        }
    }
    let assignment = hungarian(&cost, n);
    let total: f64 = assignment.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum();
    Ok(powf(total / n as f64, 1.0 / cfg.order))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    /// Time-averaged OSPA per dataset.
    pub dataset_means: Vec<f64>,
    pub grand_mean: f64,
    /// Sample standard deviation of `dataset_means`; zero for one dataset.
    pub std: f64,
    pub cpu_ms_mean: f64,
    /// Mean across datasets at each step.
    pub per_step_mean: Vec<f64>,
}

/// `ospa[d][n]` and `cpu_ms[d][n]` per dataset `d` and step `n`.
pub fn summarize(ospa: &[Vec<f64>], cpu_ms: &[Vec<f64>]) -> Result<RunSummary> {
    let d = ospa.len();
    if d == 0 {
        return Err(Error::Empty("no datasets to summarise"));
    }
    let steps = ospa[0].len();
    if steps == 0 {
        return Err(Error::Empty("datasets have no steps"));
    }
    if ospa.iter().any(|r| r.len() != steps) || cpu_ms.len() != d || cpu_ms.iter().any(|r| r.len() != steps) {
        return Err(Error::Dimension {
            what: "summary rows",
            expected: steps,
            got: ospa
                .iter()
                .chain(cpu_ms)
                .map(Vec::len)
                .find(|&l| l != steps)
                .unwrap_or(cpu_ms.len()),
        });
    }
    let dataset_means: Vec<f64> = ospa.iter().map(|r| r.iter().sum::<f64>() / steps as f64).collect();
    let grand_mean = dataset_means.iter().sum::<f64>() / d as f64;
    let std = if d > 1 {
        sqrt(
            dataset_means
                .iter()
                .map(|m| (m - grand_mean) * (m - grand_mean))
                .sum::<f64>()
                / (d - 1) as f64,
        )
    } else {
        0.0
    };
    let cpu_ms_mean = cpu_ms.iter().flatten().sum::<f64>() / (d * steps) as f64;
    let per_step_mean = (0..steps)
        .map(|n| ospa.iter().map(|r| r[n]).sum::<f64>() / d as f64)
        .collect();
    Ok(RunSummary {
        dataset_means,
        grand_mean,
        std,
        cpu_ms_mean,
        per_step_mean,
    })
}
