use serde::Serialize;

use super::{PipelineError, Result};
use crate::metrics::{CurveKind, CurveSeries, MetricsError};

/// Mean curve of several runs on a shared FPR grid with pointwise SE.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AveragedCurve {
    pub kind: CurveKind,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub se: Vec<f64>,
    pub n_curves: usize,
    /// Largest amount the mean was raised to keep it nondecreasing.
    pub isotonic_adjustment: f64,
}

impl AveragedCurve {
    /// CSV with columns `grid_fpr,mean_tpr,se_tpr`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid_fpr,mean_tpr,se_tpr\n");
        for ((x, m), s) in self.grid.iter().zip(&self.mean).zip(&self.se) {
            out.push_str(&format!("{x},{m},{s}\n"));
        }
        out
    }
}

/// Interpolate every curve onto `grid` and average pointwise. The SE is the
/// sample standard deviation over curves divided by `sqrt(k)`; zero for `k = 1`.
pub fn average_curves(curves: &[CurveSeries], grid: &[f64]) -> Result<AveragedCurve> {
    let first = curves.first().ok_or(PipelineError::Metrics(MetricsError::EmptyInput))?;
    if grid.is_empty()
        || grid.iter().any(|x| !(0.0..=1.0).contains(x))
        || grid.windows(2).any(|w| w[0] > w[1])
    {
        return Err(PipelineError::InvalidConfig(
            "FPR grid must be nonempty, sorted and inside [0, 1]".into(),
        ));
    }
    let k = curves.len() as f64;
    let mut mean = Vec::with_capacity(grid.len());
    let mut se = Vec::with_capacity(grid.len());
    for &x in grid {
        let ys: Vec<f64> = curves.iter().map(|c| c.interpolate(x)).collect();
        mean.push(crate::numeric::mean(&ys));
        se.push((crate::numeric::sample_variance(&ys) / k).sqrt());
    }
    let mut isotonic_adjustment: f64 = 0.0;
    for i in 1..mean.len() {
        if mean[i] < mean[i - 1] {
            isotonic_adjustment = isotonic_adjustment.max(mean[i - 1] - mean[i]);
            mean[i] = mean[i - 1];
        }
    }
    Ok(AveragedCurve {
        kind: first.kind.clone(),
        grid: grid.to_vec(),
        mean,
        se,
        n_curves: curves.len(),
        isotonic_adjustment,
    })
}
