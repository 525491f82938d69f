//! Per-arm sample statistics.

use serde::{Deserialize, Serialize};

/// Mean and spread of one arm of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    /// (N-1)-denominator sample standard deviation; needs two samples.
    pub sample_std: Option<f64>,
    /// Standard error of the mean, `sample_std / sqrt(N)`.
    pub std_error: Option<f64>,
}

impl Summary {
    /// Returns `None` for an empty slice.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let (sample_std, std_error) = if values.len() >= 2 {
            let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
            let sd = (ss / (n - 1.0)).sqrt();
            (Some(sd), Some(sd / n.sqrt()))
        } else {
            (None, None)
        };
        Some(Summary {
            count: values.len(),
            mean,
            min,
            sample_std,
            std_error,
        })
    }
}

/// `sqrt(a^2 + b^2)`, the spread of a difference of independent quantities.
pub fn quadrature(a: f64, b: f64) -> f64 {
    a.hypot(b)
}
