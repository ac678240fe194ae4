use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, InstanceSpec};
use super::regret::log_log_slope;
use super::run::run_experiment;
use crate::error::{Error, Result};

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SweepAxis {
    #[serde(rename = "K")]
    Episodes,
    #[serde(rename = "H")]
    Horizon,
    #[serde(rename = "d")]
    Dim,
    #[serde(rename = "S")]
    States,
}

impl SweepAxis {
    pub fn symbol(self) -> &'static str {
        match self {
            SweepAxis::Episodes => "K",
            SweepAxis::Horizon => "H",
            SweepAxis::Dim => "d",
            SweepAxis::States => "S",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "K" | "k" | "episodes" => Ok(SweepAxis::Episodes),
            "H" | "h" | "horizon" => Ok(SweepAxis::Horizon),
            "d" | "D" | "dim" => Ok(SweepAxis::Dim),
            "S" | "s" | "states" => Ok(SweepAxis::States),
            _ => Err(Error::Config(format!("unknown sweep axis `{s}` (expected K, H, d or S)"))),
        }
    }
}

/// `base` with `axis` set to `value`.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: usize) -> Result<ExperimentConfig> {
    if value == 0 {
        return Err(Error::Config(format!("sweep value for {axis} must be positive")));
    }
    let mut cfg = base.clone();
    let unsupported = || Error::Config(format!("axis {axis} is not supported by this instance"));
    match (axis, &mut cfg.instance) {
        (SweepAxis::Episodes, _) => cfg.episodes = value,
        (SweepAxis::Horizon, InstanceSpec::BasisMixture { horizon, .. }) => *horizon = value,
        (SweepAxis::Horizon, InstanceSpec::Tree { depth, .. }) => *depth = value,
        (SweepAxis::Dim, InstanceSpec::BasisMixture { dim, .. }) => *dim = value,
        (SweepAxis::States, InstanceSpec::BasisMixture { num_states, .. }) => *num_states = value,
        _ => return Err(unsupported()),
    }
    Ok(cfg)
}

/// Final regret of one seeded run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub value: usize,
    pub seed: u64,
    pub final_regret: f64,
    pub occupancy_regret: f64,
}

/// Aggregate over the seeds of one axis value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: usize,
    pub runs: usize,
    pub mean_regret: f64,
    pub stderr: f64,
}

/// Result of [`sweep`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub cells: Vec<SweepCell>,
    /// Least-squares slope of `ln(mean regret)` against `ln(value)`.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

/// Mean and standard error of the mean.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `seeds` independent copies of `base` for each value of `axis`.
/// Run `i` uses seed `base.seed + i`; cells run in parallel.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[usize], seeds: usize) -> Result<SweepTable> {
    if values.is_empty() || seeds == 0 {
        return Err(Error::Config("sweep needs at least one value and one seed".into()));
    }
    let jobs: Vec<(usize, ExperimentConfig)> = values
        .iter()
        .map(|&v| apply_axis(base, axis, v).map(|c| (v, c)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flat_map(|(v, c)| {
            (0..seeds as u64).map(move |i| {
                let mut c = c.clone();
                c.seed = c.seed.wrapping_add(i);
                c.output = None;
                (v, c)
            })
        })
        .collect();
    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|(v, c)| {
            run_experiment(c).map(|out| SweepCell {
                value: *v,
                seed: c.seed,
                final_regret: out.summary.final_regret,
                occupancy_regret: out.summary.occupancy_regret,
            })
        })
        .collect::<Result<_>>()?;
    let rows: Vec<SweepRow> = values
        .iter()
        .map(|&v| {
            let xs: Vec<f64> = cells.iter().filter(|c| c.value == v).map(|c| c.final_regret).collect();
            let (mean_regret, stderr) = mean_stderr(&xs);
            SweepRow {
                value: v,
                runs: xs.len(),
                mean_regret,
                stderr,
            }
        })
        .collect();
    let fit = log_log_slope(&rows.iter().map(|r| (r.value as f64, r.mean_regret)).collect::<Vec<_>>()).ok();
    Ok(SweepTable {
        axis,
        rows,
        cells,
        slope: fit.map(|f| f.0),
        intercept: fit.map(|f| f.1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        assert_eq!("K".parse::<SweepAxis>().unwrap(), SweepAxis::Episodes);
        assert_eq!("horizon".parse::<SweepAxis>().unwrap(), SweepAxis::Horizon);
        assert!("T".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn stderr_of_constant_is_zero() {
        assert_eq!(mean_stderr(&[2.0, 2.0, 2.0]), (2.0, 0.0));
        let (m, s) = mean_stderr(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
