//! Closed-form xAUC under Gaussian score models.
//!
//! When `R | Y=y, A=a ~ N(mu_ay, var_ay)` independently, every cross-group
//! ranking probability is a normal CDF of a standardized mean gap. This
//! module evaluates those closed forms, samples from the model for Monte
//! Carlo comparison, and grid-searches group-`b` parameters that keep the
//! within-group AUC of group `a` while maximizing the xAUC disparity.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::GroupedScores;
use crate::numeric::linspace;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaussianError {
    #[error("model has no parameters for group `{0}`")]
    MissingCell(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no grid point satisfies the equal-AUC constraint within the bounds")]
    InfeasibleBounds,
}

const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Complementary error function for `x >= 0`.
fn erfc_nonneg(x: f64) -> f64 {
    if x < 1.0 {
        // erf(x) = 2/sqrt(pi) exp(-x^2) sum_n x (2x^2)^n / (1*3*...*(2n+1))
        let two_x2 = 2.0 * x * x;
        let mut term = x;
        let mut total = x;
        let mut n = 0.0;
        while term > total * 1e-17 {
            n += 1.0;
            term *= two_x2 / (2.0 * n + 1.0);
            total += term;
        }
        1.0 - 2.0 * FRAC_1_SQRT_PI * (-x * x).exp() * total
    } else {
        // erfc(x) = exp(-x^2)/sqrt(pi) / (x + (1/2)/(x + 1/(x + (3/2)/(x + ...))))
        // evaluated with the modified Lentz method
        let tiny = 1e-300;
        let mut f = x;
        let mut c = x;
        let mut d = 0.0;
        for k in 1..500 {
            let a = k as f64 * 0.5;
            d = x + a * d;
            if d.abs() < tiny {
                d = tiny;
            }
            c = x + a / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-x * x).exp() * FRAC_1_SQRT_PI / f
    }
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    let x = z.abs() * std::f64::consts::FRAC_1_SQRT_2;
    let tail = 0.5 * erfc_nonneg(x);
    if z < 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianCell {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianCell {
    pub fn new(mean: f64, variance: f64) -> Result<Self, GaussianError> {
        if !mean.is_finite() {
            return Err(GaussianError::InvalidParameter(format!("mean {mean} is not finite")));
        }
        if !(variance.is_finite() && variance > 0.0) {
            return Err(GaussianError::InvalidParameter(format!(
                "variance {variance} must be finite and positive"
            )));
        }
        Ok(Self { mean, variance })
    }
}

/// Score distribution parameters for the two outcome cells of one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub negative: GaussianCell,
    pub positive: GaussianCell,
}

impl GroupParams {
    pub fn new(mu0: f64, mu1: f64, var0: f64, var1: f64) -> Result<Self, GaussianError> {
        Ok(Self {
            negative: GaussianCell::new(mu0, var0)?,
            positive: GaussianCell::new(mu1, var1)?,
        })
    }

    pub fn cell(&self, outcome: u8) -> GaussianCell {
        if outcome == 0 {
            self.negative
        } else {
            self.positive
        }
    }

    /// Standardized within-group separation `(mu_1 - mu_0) / sqrt(var_1 + var_0)`.
    pub fn separation(&self) -> f64 {
        (self.positive.mean - self.negative.mean)
            / (self.positive.variance + self.negative.variance).sqrt()
    }

    /// Within-group AUC.
    pub fn auc(&self) -> f64 {
        normal_cdf(self.separation())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GaussianGroupModel {
    pub groups: BTreeMap<String, GroupParams>,
}

impl GaussianGroupModel {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_group(mut self, name: impl Into<String>, params: GroupParams) -> Self {
        self.groups.insert(name.into(), params);
        self
    }

    pub fn group(&self, name: &str) -> Result<&GroupParams, GaussianError> {
        self.groups
            .get(name)
            .ok_or_else(|| GaussianError::MissingCell(name.to_string()))
    }

    /// Re-check every cell; useful after deserializing.
    pub fn validate(&self) -> Result<(), GaussianError> {
        for p in self.groups.values() {
            GaussianCell::new(p.negative.mean, p.negative.variance)?;
            GaussianCell::new(p.positive.mean, p.positive.variance)?;
        }
        Ok(())
    }
}

fn cross_probability(pos: GaussianCell, neg: GaussianCell) -> f64 {
    normal_cdf((pos.mean - neg.mean) / (pos.variance + neg.variance).sqrt())
}

/// `P[R_1^a > R_0^b]` in closed form.
pub fn closed_form_xauc(m: &GaussianGroupModel, a: &str, b: &str) -> Result<f64, GaussianError> {
    Ok(cross_probability(m.group(a)?.positive, m.group(b)?.negative))
}

/// `xAUC(a, b) - xAUC(b, a)` in closed form.
pub fn closed_form_delta_xauc(m: &GaussianGroupModel, a: &str, b: &str) -> Result<f64, GaussianError> {
    let (pa, pb) = (m.group(a)?, m.group(b)?);
    Ok(cross_probability(pa.positive, pb.negative) - cross_probability(pb.positive, pa.negative))
}

/// Inclusive ranges for the group-`b` parameters searched over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub mu_b0: (f64, f64),
    pub mu_b1: (f64, f64),
    pub var_b1: (f64, f64),
    /// Admissible range for the solved `var_b0`.
    pub var_b0: (f64, f64),
    /// Keep only `mu_b1 > 0.5 > mu_b0`.
    pub peaked_only: bool,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            mu_b0: (0.0, 1.0),
            mu_b1: (0.0, 1.0),
            var_b1: (0.01, 0.5),
            var_b0: (0.01, 0.5),
            peaked_only: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisparitySearchResult {
    pub group_b: GroupParams,
    /// Signed `xAUC(a, b) - xAUC(b, a)` at the optimum.
    pub delta_xauc: f64,
    pub abs_delta_xauc: f64,
    pub feasible_points: usize,
}

const FEASIBILITY_TOL: f64 = 1e-12;

/// Solve `var_b0` from the equal-separation constraint given the other
/// group-`b` parameters. Returns the admissible values (several only when
/// group `a` has zero separation and `var_b0` is unconstrained).
fn solve_var_b0(separation: f64, mu_b0: f64, mu_b1: f64, var_b1: f64, var_grid: &[f64], bounds: (f64, f64)) -> Vec<f64> {
    let gap = mu_b1 - mu_b0;
    if separation == 0.0 {
        return if gap == 0.0 { var_grid.to_vec() } else { Vec::new() };
    }
    if gap == 0.0 || gap.signum() != separation.signum() {
        return Vec::new();
    }
    let var_b0 = (gap / separation).powi(2) - var_b1;
    if var_b0 <= 0.0 || var_b0 < bounds.0 - FEASIBILITY_TOL || var_b0 > bounds.1 + FEASIBILITY_TOL {
        return Vec::new();
    }
    vec![var_b0.clamp(bounds.0, bounds.1).max(f64::MIN_POSITIVE)]
}

fn better(x: &DisparitySearchResult, y: &DisparitySearchResult) -> Ordering {
    // larger |delta| wins; ties go to the lexicographically smaller parameters
    x.abs_delta_xauc
        .total_cmp(&y.abs_delta_xauc)
        .then_with(|| key(y).partial_cmp(&key(x)).unwrap_or(Ordering::Equal))
}

fn key(r: &DisparitySearchResult) -> [f64; 4] {
    [
        r.group_b.negative.mean,
        r.group_b.positive.mean,
        r.group_b.positive.variance,
        r.group_b.negative.variance,
    ]
}

/// Grid search over `(mu_b0, mu_b1, var_b1)` with `var_b0` solved so that
/// group `b` has the same within-group AUC as `fixed_a`; maximizes
/// `|xAUC(a, b) - xAUC(b, a)|`.
pub fn equal_auc_disparity_search(
    fixed_a: GroupParams,
    bounds: SearchBounds,
    resolution: usize,
) -> Result<DisparitySearchResult, GaussianError> {
    if resolution < 10 {
        return Err(GaussianError::InvalidParameter(format!(
            "resolution {resolution} is below 10 points per axis"
        )));
    }
    for (name, (lo, hi)) in [
        ("mu_b0", bounds.mu_b0),
        ("mu_b1", bounds.mu_b1),
        ("var_b1", bounds.var_b1),
        ("var_b0", bounds.var_b0),
    ] {
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(GaussianError::InvalidParameter(format!("bad range for {name}: [{lo}, {hi}]")));
        }
    }
    if bounds.var_b1.0 <= 0.0 || bounds.var_b0.1 <= 0.0 {
        return Err(GaussianError::InvalidParameter("variance bounds must be positive".into()));
    }

    let mu0_grid = linspace(bounds.mu_b0.0, bounds.mu_b0.1, resolution);
    let mu1_grid = linspace(bounds.mu_b1.0, bounds.mu_b1.1, resolution);
    let var1_grid = linspace(bounds.var_b1.0, bounds.var_b1.1, resolution);
    let var0_grid: Vec<f64> = linspace(bounds.var_b0.0, bounds.var_b0.1, resolution)
        .into_iter()
        .filter(|v| *v > 0.0)
        .collect();
    let separation = fixed_a.separation();

    let partials: Vec<(Option<DisparitySearchResult>, usize)> = mu0_grid
        .par_iter()
        .map(|&mu_b0| {
            let mut best: Option<DisparitySearchResult> = None;
            let mut feasible = 0usize;
            for &mu_b1 in &mu1_grid {
                if bounds.peaked_only && !(mu_b1 > 0.5 && mu_b0 < 0.5) {
                    continue;
                }
                for &var_b1 in &var1_grid {
                    for var_b0 in solve_var_b0(separation, mu_b0, mu_b1, var_b1, &var0_grid, bounds.var_b0) {
                        feasible += 1;
                        let group_b = GroupParams {
                            negative: GaussianCell { mean: mu_b0, variance: var_b0 },
                            positive: GaussianCell { mean: mu_b1, variance: var_b1 },
                        };
                        let delta = cross_probability(fixed_a.positive, group_b.negative)
                            - cross_probability(group_b.positive, fixed_a.negative);
                        let cand = DisparitySearchResult {
                            group_b,
                            delta_xauc: delta,
                            abs_delta_xauc: delta.abs(),
                            feasible_points: 0,
                        };
                        if best.as_ref().is_none_or(|b| better(&cand, b) == Ordering::Greater) {
                            best = Some(cand);
                        }
                    }
                }
            }
            (best, feasible)
        })
        .collect();

    let feasible_points = partials.iter().map(|p| p.1).sum();
    let best = partials
        .into_iter()
        .filter_map(|p| p.0)
        .max_by(better)
        .ok_or(GaussianError::InfeasibleBounds)?;
    Ok(DisparitySearchResult {
        feasible_points,
        ..best
    })
}

/// Draw `counts[group] = [n_negative, n_positive]` scores per cell.
///
/// Cell `k` (in group-then-outcome order) uses ChaCha stream `k` of `seed`.
pub fn sample_scores_with_counts(
    m: &GaussianGroupModel,
    counts: &BTreeMap<String, [usize; 2]>,
    seed: u64,
) -> Result<GroupedScores, GaussianError> {
    let mut g = GroupedScores::default();
    for (gi, (name, params)) in m.groups.iter().enumerate() {
        let Some(n) = counts.get(name) else { continue };
        for outcome in 0..2u8 {
            let cell = params.cell(outcome);
            let normal = Normal::new(cell.mean, cell.variance.sqrt())
                .map_err(|e| GaussianError::InvalidParameter(e.to_string()))?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream((2 * gi + outcome as usize) as u64);
            let scores: Vec<f64> = (0..n[outcome as usize]).map(|_| normal.sample(&mut rng)).collect();
            g.insert_cell(name, outcome, scores)
                .map_err(|e| GaussianError::InvalidParameter(e.to_string()))?;
        }
    }
    Ok(g)
}

/// Draw `n_per_cell` scores for every cell of the model.
pub fn sample_scores(m: &GaussianGroupModel, n_per_cell: usize, seed: u64) -> Result<GroupedScores, GaussianError> {
    if n_per_cell == 0 {
        return Err(GaussianError::InvalidParameter("cell count must be at least 1".into()));
    }
    let counts = m
        .groups
        .keys()
        .map(|k| (k.clone(), [n_per_cell, n_per_cell]))
        .collect();
    sample_scores_with_counts(m, &counts, seed)
}
