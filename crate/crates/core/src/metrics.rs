//! CSV sinks for per-iteration metrics and the smoothed reward trajectory.
//!
//! `metrics.csv` columns: `iter, reward, baseline, calibrated, mean_eta,
//! clip_fraction, mu_norm, mean_sigma`.
//! `smoothed.csv` columns: `iter, reward, smoothed_reward`.

use std::io::Write;

use crate::error::Result;
use crate::find::IterationMetrics;
use crate::smoothing::gaussian_smooth;

pub const METRICS_COLUMNS: [&str; 8] = [
    "iter",
    "reward",
    "baseline",
    "calibrated",
    "mean_eta",
    "clip_fraction",
    "mu_norm",
    "mean_sigma",
];

pub const SMOOTHED_COLUMNS: [&str; 3] = ["iter", "reward", "smoothed_reward"];

/// Kernel width, in iterations, of the smoothed trajectory.
pub const SMOOTHING_SIGMA: f64 = 5.0;

pub fn write_metrics_csv<W: Write>(out: W, trajectory: &[IterationMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(METRICS_COLUMNS)?;
    for m in trajectory {
        w.write_record([
            m.iter.to_string(),
            m.reward.to_string(),
            m.baseline.to_string(),
            m.calibrated.to_string(),
            m.mean_eta.to_string(),
            m.clip_fraction.to_string(),
            m.mu_norm.to_string(),
            m.mean_sigma.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_smoothed_csv<W: Write>(out: W, trajectory: &[IterationMetrics]) -> Result<()> {
    let rewards: Vec<f64> = trajectory.iter().map(|m| m.reward).collect();
    let smoothed = gaussian_smooth(&rewards, SMOOTHING_SIGMA);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SMOOTHED_COLUMNS)?;
    for (m, s) in trajectory.iter().zip(smoothed) {
        w.write_record([m.iter.to_string(), m.reward.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
