//! Monotone post-processing of one group's scores.
//!
//! Two adjustments are provided: a logistic transform `1 / (1 + exp(-(alpha
//! x + beta)))` whose slope is tuned to minimize the xAUC disparity, and the
//! equal-opportunity quantile map that aligns one group's positive-class
//! score distribution with another's.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::inference::InferenceError;
use crate::metrics::{pair_counts, GroupedScores, MetricsError, TiePolicy};
use crate::numeric::linspace;
use crate::report::AuditReport;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AdjustError {
    #[error("group `{0}` is not present in the scores")]
    MissingGroup(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

pub type Result<T> = std::result::Result<T, AdjustError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransformKind {
    Identity,
    Logistic {
        alpha: f64,
        beta: f64,
    },
    /// Piecewise-linear map through `knots` (strictly increasing `x`,
    /// nondecreasing `y`), clamped outside the knot range.
    QuantileMap {
        reference_group: String,
        knots: Vec<[f64; 2]>,
    },
}

/// A nondecreasing map applied to the scores of `target_group` only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonotoneTransform {
    pub target_group: String,
    #[serde(flatten)]
    pub kind: TransformKind,
}

impl MonotoneTransform {
    pub fn identity(target_group: impl Into<String>) -> Self {
        Self {
            target_group: target_group.into(),
            kind: TransformKind::Identity,
        }
    }

    pub fn logistic(target_group: impl Into<String>, alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite() && beta.is_finite()) {
            return Err(AdjustError::InvalidParameter(format!(
                "logistic transform needs finite alpha >= 0 and finite beta, got ({alpha}, {beta})"
            )));
        }
        Ok(Self {
            target_group: target_group.into(),
            kind: TransformKind::Logistic { alpha, beta },
        })
    }

    pub fn eval(&self, x: f64) -> f64 {
        match &self.kind {
            TransformKind::Identity => x,
            TransformKind::Logistic { alpha, beta } => logistic(*alpha, *beta, x),
            TransformKind::QuantileMap { knots, .. } => interpolate_knots(knots, x),
        }
    }
}

fn logistic(alpha: f64, beta: f64, x: f64) -> f64 {
    let z = alpha * x + beta;
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn interpolate_knots(knots: &[[f64; 2]], x: f64) -> f64 {
    let Some(first) = knots.first() else { return x };
    let last = knots[knots.len() - 1];
    if x <= first[0] {
        return first[1];
    }
    if x >= last[0] {
        return last[1];
    }
    let idx = knots.partition_point(|k| k[0] <= x);
    let (l, r) = (knots[idx - 1], knots[idx]);
    l[1] + (r[1] - l[1]) * (x - l[0]) / (r[0] - l[0])
}

/// Apply `t` to both outcome cells of its target group.
pub fn apply_transform(g: &GroupedScores, t: &MonotoneTransform) -> Result<GroupedScores> {
    g.map_group(&t.target_group, |x| t.eval(x))
        .ok_or_else(|| AdjustError::MissingGroup(t.target_group.clone()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticAdjustOptions {
    pub alpha_range: (f64, f64),
    pub beta: f64,
    /// Number of grid points over `alpha_range`.
    pub resolution: usize,
    /// Golden-section iterations inside the best grid bracket.
    pub refine_iters: usize,
    pub ties: TiePolicy,
    pub with_se: bool,
}

impl Default for LogisticAdjustOptions {
    fn default() -> Self {
        Self {
            alpha_range: (0.0, 5.0),
            beta: -2.0,
            resolution: 501,
            refine_iters: 40,
            ties: TiePolicy::Strict,
            with_se: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogisticAdjustment {
    pub transform: MonotoneTransform,
    pub alpha: f64,
    pub beta: f64,
    /// `|xAUC(target, other) - xAUC(other, target)|` after adjustment.
    pub objective: f64,
    /// The same disparity before adjustment.
    pub objective_before: f64,
    /// `(alpha, objective)` over the grid.
    pub grid: Vec<[f64; 2]>,
    pub before: AuditReport,
    pub after: AuditReport,
}

/// `|delta xAUC|` between `target` (transformed) and `other`.
struct DisparityObjective<'a> {
    target_pos: &'a [f64],
    target_neg: &'a [f64],
    other_pos: &'a [f64],
    other_neg: &'a [f64],
    beta: f64,
    ties: TiePolicy,
}

impl DisparityObjective<'_> {
    fn eval(&self, alpha: f64) -> f64 {
        let t = |x: f64| logistic(alpha, self.beta, x);
        // alpha >= 0 keeps the sorted order
        let pos: Vec<f64> = self.target_pos.iter().map(|&x| t(x)).collect();
        let neg: Vec<f64> = self.target_neg.iter().map(|&x| t(x)).collect();
        let forward = pair_counts(&pos, self.other_neg).value(self.ties);
        let backward = pair_counts(self.other_pos, &neg).value(self.ties);
        (forward - backward).abs()
    }
}

/// Lower objective wins, then lower alpha.
fn improves(cand: (f64, f64), best: (f64, f64)) -> bool {
    cand.1 < best.1 || (cand.1 == best.1 && cand.0 < best.0)
}

/// Grid search plus golden-section refinement of the logistic slope applied
/// to `target`, minimizing the xAUC disparity against `other`.
pub fn fit_logistic_adjustment(
    g: &GroupedScores,
    target: &str,
    other: &str,
    opts: LogisticAdjustOptions,
) -> Result<LogisticAdjustment> {
    let (lo, hi) = opts.alpha_range;
    if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
        return Err(AdjustError::InvalidParameter(format!("alpha range [{lo}, {hi}] must satisfy 0 <= lo <= hi")));
    }
    if opts.resolution < 2 {
        return Err(AdjustError::InvalidParameter("alpha grid needs at least 2 points".into()));
    }
    if target == other {
        return Err(AdjustError::InvalidParameter("target and reference group must differ".into()));
    }
    for grp in [target, other] {
        if !g.has_group(grp) {
            return Err(AdjustError::MissingGroup(grp.to_string()));
        }
    }
    let obj = DisparityObjective {
        target_pos: g.cell(target, 1)?,
        target_neg: g.cell(target, 0)?,
        other_pos: g.cell(other, 1)?,
        other_neg: g.cell(other, 0)?,
        beta: opts.beta,
        ties: opts.ties,
    };
    let before = AuditReport::from_grouped(g, opts.ties, opts.with_se)?;
    let objective_before = before
        .delta(target, other)
        .map(f64::abs)
        .unwrap_or(f64::NAN);

    let alphas = linspace(lo, hi, opts.resolution);
    let grid: Vec<[f64; 2]> = alphas.par_iter().map(|&a| [a, obj.eval(a)]).collect();

    let mut best_idx = 0;
    for (i, p) in grid.iter().enumerate() {
        if improves((p[0], p[1]), (grid[best_idx][0], grid[best_idx][1])) {
            best_idx = i;
        }
    }
    let mut best = (grid[best_idx][0], grid[best_idx][1]);

    // golden section inside the neighbouring grid cells
    let mut a = grid[best_idx.saturating_sub(1)][0];
    let mut b = grid[(best_idx + 1).min(grid.len() - 1)][0];
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (obj.eval(c), obj.eval(d));
    for _ in 0..opts.refine_iters {
        for cand in [(c, fc), (d, fd)] {
            if improves(cand, best) {
                best = cand;
            }
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = obj.eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = obj.eval(d);
        }
    }
    for cand in [(c, fc), (d, fd)] {
        if improves(cand, best) {
            best = cand;
        }
    }

    let transform = MonotoneTransform::logistic(target, best.0, opts.beta)?;
    let adjusted = apply_transform(g, &transform)?;
    let after = AuditReport::from_grouped(&adjusted, opts.ties, opts.with_se)?;
    Ok(LogisticAdjustment {
        transform,
        alpha: best.0,
        beta: opts.beta,
        objective: best.1,
        objective_before,
        grid,
        before,
        after,
    })
}

/// Linear interpolation of the empirical quantile of sorted `v` at `level`.
fn quantile(v: &[f64], level: f64) -> f64 {
    if v.len() == 1 {
        return v[0];
    }
    let pos = level.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    if i + 1 >= v.len() {
        return v[v.len() - 1];
    }
    let frac = pos - i as f64;
    v[i] + (v[i + 1] - v[i]) * frac
}

/// Quantile map sending group `moved`'s positive-class score distribution
/// onto group `reference`'s, so both groups share a TPR at every threshold.
pub fn eqop_transform(g: &GroupedScores, reference: &str, moved: &str) -> Result<MonotoneTransform> {
    let ref_pos = g.cell(reference, 1)?;
    let src = g.cell(moved, 1)?;
    let m = src.len();
    let level = |i: usize| if m == 1 { 0.5 } else { i as f64 / (m - 1) as f64 };

    let mut knots: Vec<[f64; 2]> = Vec::with_capacity(m);
    let mut i = 0;
    while i < m {
        // tied source scores share the mean of their target quantiles
        let mut j = i;
        while j + 1 < m && src[j + 1] == src[i] {
            j += 1;
        }
        let mean_y = (i..=j).map(|k| quantile(ref_pos, level(k))).sum::<f64>() / (j - i + 1) as f64;
        knots.push([src[i], mean_y]);
        i = j + 1;
    }
    // guard against rounding breaking monotonicity
    for k in 1..knots.len() {
        if knots[k][1] < knots[k - 1][1] {
            knots[k][1] = knots[k - 1][1];
        }
    }
    Ok(MonotoneTransform {
        target_group: moved.to_string(),
        kind: TransformKind::QuantileMap {
            reference_group: reference.to_string(),
            knots,
        },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EqopCheck {
    /// `xAUC(a, b) - xAUC(b, a)` after moving group `b`.
    pub delta_after: f64,
    pub auc_a: f64,
    pub auc_b: f64,
    /// `delta_after - (auc_b - auc_a)`
    pub residual: f64,
    /// Combined CDF step size of the two positive cells.
    pub discreteness_bound: f64,
    /// The residual exceeds what discreteness alone explains.
    pub flagged: bool,
}

/// Move group `b` with [`eqop_transform`] onto group `a` and compare the
/// resulting disparity with `AUC^b - AUC^a`.
pub fn verify_eqop_identity(g: &GroupedScores, a: &str, b: &str, ties: TiePolicy) -> Result<EqopCheck> {
    for (grp, y) in [(a, 1), (b, 0), (b, 1), (a, 0)] {
        g.cell(grp, y)?;
    }
    let auc_a = pair_counts(g.cell(a, 1)?, g.cell(a, 0)?).value(ties);
    let auc_b = pair_counts(g.cell(b, 1)?, g.cell(b, 0)?).value(ties);
    let t = eqop_transform(g, a, b)?;
    let moved = apply_transform(g, &t)?;
    let delta_after = pair_counts(moved.cell(a, 1)?, moved.cell(b, 0)?).value(ties)
        - pair_counts(moved.cell(b, 1)?, moved.cell(a, 0)?).value(ties);
    let residual = delta_after - (auc_b - auc_a);
    let discreteness_bound = 1.0 / g.count(a, 1) as f64 + 1.0 / g.count(b, 1) as f64;
    Ok(EqopCheck {
        delta_after,
        auc_a,
        auc_b,
        residual,
        discreteness_bound,
        flagged: residual.abs() > discreteness_bound,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{delta_xauc, xauc};

    fn toy() -> GroupedScores {
        let mut g = GroupedScores::default();
        g.insert_cell("a", 1, vec![0.35, 0.5, 0.62, 0.7]).unwrap();
        g.insert_cell("a", 0, vec![0.2, 0.3, 0.45, 0.55]).unwrap();
        g.insert_cell("b", 1, vec![0.6, 0.75, 0.8, 0.9]).unwrap();
        g.insert_cell("b", 0, vec![0.4, 0.5, 0.65, 0.72]).unwrap();
        g
    }

    #[test]
    fn identity_leaves_scores_alone() {
        let g = toy();
        assert_eq!(apply_transform(&g, &MonotoneTransform::identity("b")).unwrap(), g);
        assert_eq!(
            apply_transform(&g, &MonotoneTransform::identity("zz")).unwrap_err(),
            AdjustError::MissingGroup("zz".into())
        );
    }

    #[test]
    fn logistic_keeps_within_group_auc_and_moves_xauc() {
        let g = toy();
        let t = MonotoneTransform::logistic("b", 1.0, 0.0).unwrap();
        let h = apply_transform(&g, &t).unwrap();
        for ties in [TiePolicy::Strict, TiePolicy::Half] {
            assert_eq!(xauc(&h, "b", "b", ties).unwrap(), xauc(&g, "b", "b", ties).unwrap());
            assert_eq!(xauc(&h, "a", "a", ties).unwrap(), xauc(&g, "a", "a", ties).unwrap());
        }
        assert_ne!(
            xauc(&h, "a", "b", TiePolicy::Strict).unwrap(),
            xauc(&g, "a", "b", TiePolicy::Strict).unwrap()
        );
    }

    #[test]
    fn zero_slope_ties_the_whole_group() {
        let g = toy();
        let h = apply_transform(&g, &MonotoneTransform::logistic("b", 0.0, -2.0).unwrap()).unwrap();
        assert_eq!(xauc(&h, "b", "b", TiePolicy::Strict).unwrap(), 0.0);
        assert_eq!(xauc(&h, "b", "b", TiePolicy::Half).unwrap(), 0.5);
        assert!(MonotoneTransform::logistic("b", -1.0, 0.0).is_err());
    }

    #[test]
    fn fitted_alpha_beats_every_grid_point() {
        let g = toy();
        let fit = fit_logistic_adjustment(&g, "a", "b", LogisticAdjustOptions { with_se: false, ..Default::default() }).unwrap();
        assert!(fit.grid.iter().all(|p| fit.objective <= p[1]));
        assert_eq!(fit.grid.len(), 501);
        let check = delta_xauc(&apply_transform(&g, &fit.transform).unwrap(), "a", "b", TiePolicy::Strict).unwrap();
        assert!((check.abs() - fit.objective).abs() < 1e-15);
        assert_eq!(fit.after.delta("a", "b").unwrap().abs(), fit.objective);
    }

    #[test]
    fn identical_groups_pick_lowest_alpha() {
        let mut g = GroupedScores::default();
        for grp in ["a", "b"] {
            g.insert_cell(grp, 1, vec![0.6, 0.8]).unwrap();
            g.insert_cell(grp, 0, vec![0.2, 0.4]).unwrap();
        }
        let fit = fit_logistic_adjustment(&g, "a", "b", LogisticAdjustOptions { with_se: false, ..Default::default() }).unwrap();
        assert_eq!(fit.objective, 0.0);
        // refinement may only move below the first zero on the grid
        let first_zero = fit.grid.iter().find(|p| p[1] == 0.0).unwrap()[0];
        assert!(fit.alpha <= first_zero);
        assert!(fit.grid.iter().filter(|p| p[0] < fit.alpha).all(|p| p[1] > 0.0));
    }

    #[test]
    fn adjustment_argument_errors() {
        let g = toy();
        let opts = LogisticAdjustOptions::default();
        assert!(matches!(fit_logistic_adjustment(&g, "a", "a", opts), Err(AdjustError::InvalidParameter(_))));
        assert!(matches!(fit_logistic_adjustment(&g, "a", "q", opts), Err(AdjustError::MissingGroup(_))));
        let bad = LogisticAdjustOptions { alpha_range: (2.0, 1.0), ..opts };
        assert!(matches!(fit_logistic_adjustment(&g, "a", "b", bad), Err(AdjustError::InvalidParameter(_))));
    }

    #[test]
    fn eqop_self_map_fixes_order_statistics() {
        let g = toy();
        let t = eqop_transform(&g, "a", "a").unwrap();
        for &x in g.cell("a", 1).unwrap() {
            assert!((t.eval(x) - x).abs() < 1e-15);
        }
    }

    #[test]
    fn eqop_output_is_monotone() {
        let g = toy();
        let t = eqop_transform(&g, "a", "b").unwrap();
        let probes: Vec<f64> = (0..=200).map(|i| i as f64 / 200.0).collect();
        let mapped: Vec<f64> = probes.iter().map(|&x| t.eval(x)).collect();
        assert!(mapped.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(t.eval(-5.0), 0.35);
        assert_eq!(t.eval(5.0), 0.7);
    }

    #[test]
    fn eqop_on_tiny_data_is_flagged_not_failed() {
        let mut g = GroupedScores::default();
        g.insert_cell("a", 1, vec![0.1, 0.2, 0.9]).unwrap();
        g.insert_cell("a", 0, vec![0.15, 0.5, 0.6]).unwrap();
        g.insert_cell("b", 1, vec![0.3, 0.35, 0.4]).unwrap();
        g.insert_cell("b", 0, vec![0.05, 0.36, 0.95]).unwrap();
        let check = verify_eqop_identity(&g, "a", "b", TiePolicy::Strict).unwrap();
        assert!(check.residual.is_finite());
        assert!((check.delta_after - check.residual - (check.auc_b - check.auc_a)).abs() < 1e-15);
    }
}
