//! Gaussian smoothing of reward trajectories and the plateau stopping rule.

/// Smooths `values` with a Gaussian kernel of standard deviation `sigma` (in samples).
///
/// The kernel is truncated at three standard deviations and renormalized near the
/// ends, so the output has the same length as the input.
pub fn gaussian_smooth(values: &[f64], sigma: f64) -> Vec<f64> {
    if values.is_empty() || sigma <= 0.0 {
        return values.to_vec();
    }
    let radius = (3.0 * sigma).ceil() as usize;
    let kernel: Vec<f64> = (0..=radius)
        .map(|k| (-0.5 * (k as f64 / sigma).powi(2)).exp())
        .collect();
    let n = values.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(radius);
            let hi = (i + radius).min(n - 1);
            let (mut acc, mut norm) = (0.0, 0.0);
            for (j, v) in values.iter().enumerate().take(hi + 1).skip(lo) {
                let w = kernel[i.abs_diff(j)];
                acc += w * v;
                norm += w;
            }
            acc / norm
        })
        .collect()
}

/// Plateau detection on a Gaussian-smoothed reward curve.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PlateauRule {
    pub sigma: f64,
    pub window: usize,
    pub min_improvement: f64,
}

impl Default for PlateauRule {
    fn default() -> Self {
        Self {
            sigma: 5.0,
            window: 30,
            min_improvement: 1e-3,
        }
    }
}

impl PlateauRule {
    /// True once the smoothed reward has improved by less than `min_improvement`
    /// over the last `window` iterations.
    pub fn reached(&self, rewards: &[f64]) -> bool {
        if rewards.len() <= self.window {
            return false;
        }
        let smoothed = gaussian_smooth(rewards, self.sigma);
        let last = smoothed.len() - 1;
        smoothed[last] - smoothed[last - self.window] < self.min_improvement
    }
}
