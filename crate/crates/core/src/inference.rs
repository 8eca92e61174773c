//! Standard errors for AUC-type two-sample statistics.
//!
//! [`delong_se`] uses the structural components of the two-sample
//! U-statistic. [`bootstrap_se`] is a stratified resampling estimate kept as
//! an independent check on it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{pair_counts, MetricsError, TiePolicy};
use crate::numeric;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("need at least {needed} positives and negatives, got {n_pos} and {n_neg}")]
    InsufficientSamples {
        needed: usize,
        n_pos: usize,
        n_neg: usize,
    },
    #[error("bootstrap needs at least 100 resamples, got {0}")]
    TooFewResamples(usize),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarianceMethod {
    Delong,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarianceEstimate {
    /// The statistic under the requested tie policy.
    pub point: f64,
    pub se: f64,
    pub method: VarianceMethod,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Set when ties make the requested point estimate differ from the
    /// half-tie value the variance is derived for.
    pub ties_affect_point: bool,
}

fn sorted_finite(v: &[f64]) -> Result<Vec<f64>, MetricsError> {
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(MetricsError::NonFiniteScore { index, value });
    }
    let mut out = v.to_vec();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

/// DeLong standard error of `P[pos > neg]`.
///
/// The structural components always use the half-tie kernel; `ties` only
/// selects which point estimate is reported.
pub fn delong_se(pos: &[f64], neg: &[f64], ties: TiePolicy) -> Result<VarianceEstimate, InferenceError> {
    if pos.len() < 2 || neg.len() < 2 {
        return Err(InferenceError::InsufficientSamples {
            needed: 2,
            n_pos: pos.len(),
            n_neg: neg.len(),
        });
    }
    let pos = sorted_finite(pos)?;
    let neg = sorted_finite(neg)?;
    let (m, n) = (pos.len() as f64, neg.len() as f64);

    // V10(i): share of negatives ranked below positive i
    let v10: Vec<f64> = pos
        .iter()
        .map(|&p| {
            let below = neg.partition_point(|&x| x < p);
            let at_or_below = neg.partition_point(|&x| x <= p);
            (below as f64 + 0.5 * (at_or_below - below) as f64) / n
        })
        .collect();
    // V01(j): share of positives ranked above negative j
    let v01: Vec<f64> = neg
        .iter()
        .map(|&x| {
            let below = pos.partition_point(|&p| p < x);
            let at_or_below = pos.partition_point(|&p| p <= x);
            ((pos.len() - at_or_below) as f64 + 0.5 * (at_or_below - below) as f64) / m
        })
        .collect();

    let var = numeric::sample_variance(&v10) / m + numeric::sample_variance(&v01) / n;
    let counts = pair_counts(&pos, &neg);
    Ok(VarianceEstimate {
        point: counts.value(ties),
        se: var.max(0.0).sqrt(),
        method: VarianceMethod::Delong,
        n_pos: pos.len(),
        n_neg: neg.len(),
        ties_affect_point: ties == TiePolicy::Strict && counts.equal > 0,
    })
}

/// Stratified bootstrap standard error of `P[pos > neg]`.
///
/// Resample `k` draws from its own ChaCha stream keyed by `(seed, k)`, so
/// the result does not depend on how resamples are scheduled across threads.
pub fn bootstrap_se(
    pos: &[f64],
    neg: &[f64],
    ties: TiePolicy,
    resamples: usize,
    seed: u64,
) -> Result<VarianceEstimate, InferenceError> {
    if pos.is_empty() || neg.is_empty() {
        return Err(InferenceError::InsufficientSamples {
            needed: 1,
            n_pos: pos.len(),
            n_neg: neg.len(),
        });
    }
    if resamples < 100 {
        return Err(InferenceError::TooFewResamples(resamples));
    }
    let pos = sorted_finite(pos)?;
    let neg = sorted_finite(neg)?;

    let stats: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            // drawing sorted indices from a sorted vector yields a sorted resample
            let mut draw = |src: &[f64]| {
                let mut idx: Vec<usize> = (0..src.len()).map(|_| rng.random_range(0..src.len())).collect();
                idx.sort_unstable();
                idx.into_iter().map(|i| src[i]).collect::<Vec<f64>>()
            };
            let p = draw(&pos);
            let q = draw(&neg);
            pair_counts(&p, &q).value(ties)
        })
        .collect();

    let counts = pair_counts(&pos, &neg);
    Ok(VarianceEstimate {
        point: counts.value(ties),
        se: numeric::sample_variance(&stats).sqrt(),
        method: VarianceMethod::Bootstrap,
        n_pos: pos.len(),
        n_neg: neg.len(),
        ties_affect_point: ties == TiePolicy::Strict && counts.equal > 0,
    })
}
