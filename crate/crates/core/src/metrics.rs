//! Empirical AUC-type ranking metrics on grouped score samples.
//!
//! Scores are kept per `(group, outcome)` cell, sorted ascending. Every
//! pairwise statistic reduces to counting, for two sorted vectors, how many
//! (positive, negative) pairs are ordered correctly or tied, which a merge
//! pass does in linear time after sorting.

use std::collections::BTreeMap;
use std::fmt;

use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{self, CompensatedSum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("no samples supplied")]
    EmptyInput,
    #[error("score at index {index} is not finite ({value})")]
    NonFiniteScore { index: usize, value: f64 },
    #[error("outcome at index {index} is {value}; expected 0 or 1")]
    InvalidOutcome { index: usize, value: u8 },
    #[error("one class is empty; AUC is undefined")]
    EmptyClass,
    #[error("cell (group={group}, outcome={outcome}) has no samples")]
    MissingCell { group: String, outcome: u8 },
    #[error("length mismatch: {scores} scores vs {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score at index {index} is outside [0, 1] ({value})")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("score vector is not sorted ascending")]
    Unsorted,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Treatment of tied (positive, negative) score pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TiePolicy {
    /// A tie counts as a misranking (indicator `R_pos > R_neg`).
    #[default]
    Strict,
    /// A tie counts as half a correct ranking.
    Half,
}

impl fmt::Display for TiePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TiePolicy::Strict => "strict",
            TiePolicy::Half => "half",
        })
    }
}

impl std::str::FromStr for TiePolicy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "strict" => Ok(TiePolicy::Strict),
            "half" => Ok(TiePolicy::Half),
            other => Err(format!("unknown tie policy `{other}` (expected strict or half)")),
        }
    }
}

/// One individual's risk score, binary outcome and group membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub outcome: u8,
    pub group: String,
}

impl ScoredSample {
    pub fn new(score: f64, outcome: u8, group: impl Into<String>) -> Self {
        Self {
            score,
            outcome,
            group: group.into(),
        }
    }
}

/// Scores partitioned by `(group, outcome)`, each cell sorted ascending.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupedScores {
    // index 0 holds outcome-0 scores, index 1 outcome-1 scores
    cells: BTreeMap<String, [Vec<f64>; 2]>,
}

/// Partition samples into sorted `(group, outcome)` cells.
pub fn build_grouped(samples: &[ScoredSample]) -> Result<GroupedScores> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut cells: BTreeMap<String, [Vec<f64>; 2]> = BTreeMap::new();
    for (index, s) in samples.iter().enumerate() {
        if !s.score.is_finite() {
            return Err(MetricsError::NonFiniteScore {
                index,
                value: s.score,
            });
        }
        if s.outcome > 1 {
            return Err(MetricsError::InvalidOutcome {
                index,
                value: s.outcome,
            });
        }
        cells.entry(s.group.clone()).or_default()[s.outcome as usize].push(s.score);
    }
    for pair in cells.values_mut() {
        for cell in pair.iter_mut() {
            cell.sort_by(f64::total_cmp);
        }
    }
    Ok(GroupedScores { cells })
}

impl GroupedScores {
    /// Build from parallel score/label/group slices.
    pub fn from_columns(scores: &[f64], labels: &[u8], groups: &[String]) -> Result<Self> {
        if scores.len() != labels.len() || scores.len() != groups.len() {
            return Err(MetricsError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len().min(groups.len()),
            });
        }
        let samples: Vec<ScoredSample> = scores
            .iter()
            .zip(labels)
            .zip(groups)
            .map(|((&score, &outcome), group)| ScoredSample::new(score, outcome, group.clone()))
            .collect();
        build_grouped(&samples)
    }

    /// Insert a whole cell, replacing any previous contents. Scores are
    /// validated and sorted.
    pub fn insert_cell(&mut self, group: &str, outcome: u8, mut scores: Vec<f64>) -> Result<()> {
        if outcome > 1 {
            return Err(MetricsError::InvalidOutcome {
                index: 0,
                value: outcome,
            });
        }
        if let Some((index, &value)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(MetricsError::NonFiniteScore { index, value });
        }
        scores.sort_by(f64::total_cmp);
        self.cells.entry(group.to_string()).or_default()[outcome as usize] = scores;
        Ok(())
    }

    pub fn groups(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    pub fn has_group(&self, group: &str) -> bool {
        self.cells.contains_key(group)
    }

    /// The sorted scores of a cell; empty if the group is unknown.
    pub fn cell_or_empty(&self, group: &str, outcome: u8) -> &[f64] {
        self.cells
            .get(group)
            .and_then(|c| c.get(outcome as usize))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    /// The sorted scores of a cell, failing if it is absent or empty.
    pub fn cell(&self, group: &str, outcome: u8) -> Result<&[f64]> {
        let cell = self.cell_or_empty(group, outcome);
        if cell.is_empty() {
            Err(MetricsError::MissingCell {
                group: group.to_string(),
                outcome,
            })
        } else {
            Ok(cell)
        }
    }

    pub fn count(&self, group: &str, outcome: u8) -> usize {
        self.cell_or_empty(group, outcome).len()
    }

    pub fn total(&self) -> usize {
        self.cells.values().map(|c| c[0].len() + c[1].len()).sum()
    }

    /// All scores with the given outcome, across groups, sorted ascending.
    pub fn pooled(&self, outcome: u8) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .cells
            .values()
            .flat_map(|c| c[outcome as usize].iter().copied())
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }

    /// Flatten back into samples, ordered by group, outcome, then score.
    pub fn to_samples(&self) -> Vec<ScoredSample> {
        let mut out = Vec::with_capacity(self.total());
        for (group, pair) in &self.cells {
            for (outcome, cell) in pair.iter().enumerate() {
                out.extend(
                    cell.iter()
                        .map(|&s| ScoredSample::new(s, outcome as u8, group.clone())),
                );
            }
        }
        out
    }

    /// Apply `f` to every score of one group (both outcome cells), re-sorting.
    pub fn map_group(&self, group: &str, f: impl Fn(f64) -> f64) -> Option<GroupedScores> {
        let mut out = self.clone();
        let pair = out.cells.get_mut(group)?;
        for cell in pair.iter_mut() {
            for s in cell.iter_mut() {
                *s = f(*s);
            }
            cell.sort_by(f64::total_cmp);
        }
        Some(out)
    }

    /// Apply `f` to every score of every group.
    pub fn map_all(&self, f: impl Fn(f64) -> f64) -> GroupedScores {
        let mut out = self.clone();
        for pair in out.cells.values_mut() {
            for cell in pair.iter_mut() {
                for s in cell.iter_mut() {
                    *s = f(*s);
                }
                cell.sort_by(f64::total_cmp);
            }
        }
        out
    }
}

/// Counts of correctly ordered and tied pairs between two sorted vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PairCounts {
    pub greater: u64,
    pub equal: u64,
    pub total: u64,
}

impl PairCounts {
    pub fn value(&self, ties: TiePolicy) -> f64 {
        match ties {
            TiePolicy::Strict => self.greater as f64 / self.total as f64,
            TiePolicy::Half => (2 * self.greater + self.equal) as f64 / (2 * self.total) as f64,
        }
    }
}

pub(crate) fn pair_counts(pos: &[f64], neg: &[f64]) -> PairCounts {
    let mut below = 0usize; // negatives strictly below the current positive
    let mut at_or_below = 0usize;
    let mut greater = 0u64;
    let mut equal = 0u64;
    for &p in pos {
        while below < neg.len() && neg[below] < p {
            below += 1;
        }
        if at_or_below < below {
            at_or_below = below;
        }
        while at_or_below < neg.len() && neg[at_or_below] <= p {
            at_or_below += 1;
        }
        greater += below as u64;
        equal += (at_or_below - below) as u64;
    }
    PairCounts {
        greater,
        equal,
        total: pos.len() as u64 * neg.len() as u64,
    }
}

fn check_sorted(v: &[f64]) -> Result<()> {
    if let Some((index, &value)) = v.iter().enumerate().find(|(_, x)| !x.is_finite()) {
        return Err(MetricsError::NonFiniteScore { index, value });
    }
    if v.windows(2).any(|w| w[0] > w[1]) {
        return Err(MetricsError::Unsorted);
    }
    Ok(())
}

/// Fraction of (positive, negative) pairs ranked correctly.
///
/// Both slices must be sorted ascending and finite.
pub fn auc(pos: &[f64], neg: &[f64], ties: TiePolicy) -> Result<f64> {
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::EmptyClass);
    }
    check_sorted(pos)?;
    check_sorted(neg)?;
    Ok(pair_counts(pos, neg).value(ties))
}

/// `Pr[R_1^a > R_0^b]`: positives of group `a` against negatives of group `b`.
pub fn xauc(g: &GroupedScores, a: &str, b: &str, ties: TiePolicy) -> Result<f64> {
    let pos = g.cell(a, 1)?;
    let neg = g.cell(b, 0)?;
    Ok(pair_counts(pos, neg).value(ties))
}

/// `xAUC(a, b) - xAUC(b, a)`.
pub fn delta_xauc(g: &GroupedScores, a: &str, b: &str, ties: TiePolicy) -> Result<f64> {
    // check all four cells up front so the error names the first missing one
    for (group, outcome) in [(a, 1), (b, 0), (b, 1), (a, 0)] {
        g.cell(group, outcome)?;
    }
    Ok(xauc(g, a, b, ties)? - xauc(g, b, a, ties)?)
}

/// Which side of the comparison is pooled across groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancedSide {
    /// `xAUC^0(c) = Pr[R_1 > R_0^c]`: all positives against group `c`'s negatives.
    PooledPositives,
    /// `xAUC^1(c) = Pr[R_1^c > R_0]`: group `c`'s positives against all negatives.
    PooledNegatives,
}

pub fn balanced_xauc(
    g: &GroupedScores,
    side: BalancedSide,
    group: &str,
    ties: TiePolicy,
) -> Result<f64> {
    let (pos, neg);
    let pooled;
    match side {
        BalancedSide::PooledPositives => {
            neg = g.cell(group, 0)?;
            pooled = g.pooled(1);
            pos = pooled.as_slice();
        }
        BalancedSide::PooledNegatives => {
            pos = g.cell(group, 1)?;
            pooled = g.pooled(0);
            neg = pooled.as_slice();
        }
    }
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::EmptyClass);
    }
    Ok(pair_counts(pos, neg).value(ties))
}

/// Pooled AUC alongside its three reconstructions from group-level metrics,
/// each weighted by the empirical class-conditional group proportions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AucDecomposition {
    pub pooled_auc: f64,
    /// `sum_b P[A=b|Y=0] sum_a P[A=a|Y=1] xAUC(a, b)`
    pub via_cross_pairs: f64,
    /// `sum_a P[A=a|Y=1] xAUC^1(a)`
    pub via_pooled_negatives: f64,
    /// `sum_a P[A=a|Y=0] xAUC^0(a)`
    pub via_pooled_positives: f64,
    pub positive_weights: BTreeMap<String, f64>,
    pub negative_weights: BTreeMap<String, f64>,
}

impl AucDecomposition {
    /// Largest absolute gap between the pooled AUC and a reconstruction.
    pub fn max_residual(&self) -> f64 {
        [
            self.via_cross_pairs,
            self.via_pooled_negatives,
            self.via_pooled_positives,
        ]
        .iter()
        .map(|v| (v - self.pooled_auc).abs())
        .fold(0.0, f64::max)
    }
}

pub fn decompose_auc(g: &GroupedScores, ties: TiePolicy) -> Result<AucDecomposition> {
    let pooled_pos = g.pooled(1);
    let pooled_neg = g.pooled(0);
    if pooled_pos.is_empty() || pooled_neg.is_empty() {
        return Err(MetricsError::EmptyClass);
    }
    let pooled_auc = pair_counts(&pooled_pos, &pooled_neg).value(ties);
    let n1 = pooled_pos.len() as f64;
    let n0 = pooled_neg.len() as f64;

    let positive_weights: BTreeMap<String, f64> = g
        .groups()
        .map(|c| (c.to_string(), g.count(c, 1) as f64 / n1))
        .collect();
    let negative_weights: BTreeMap<String, f64> = g
        .groups()
        .map(|c| (c.to_string(), g.count(c, 0) as f64 / n0))
        .collect();

    let mut cross = CompensatedSum::new();
    let mut pooled_negatives = CompensatedSum::new();
    let mut pooled_positives = CompensatedSum::new();
    for a in g.groups() {
        let pos_a = g.cell_or_empty(a, 1);
        if !pos_a.is_empty() {
            for b in g.groups() {
                let neg_b = g.cell_or_empty(b, 0);
                if neg_b.is_empty() {
                    continue;
                }
                let x = pair_counts(pos_a, neg_b).value(ties);
                cross.add(negative_weights[b] * positive_weights[a] * x);
            }
            let x1 = pair_counts(pos_a, &pooled_neg).value(ties);
            pooled_negatives.add(positive_weights[a] * x1);
        }
        let neg_a = g.cell_or_empty(a, 0);
        if !neg_a.is_empty() {
            let x0 = pair_counts(&pooled_pos, neg_a).value(ties);
            pooled_positives.add(negative_weights[a] * x0);
        }
    }

    Ok(AucDecomposition {
        pooled_auc,
        via_cross_pairs: cross.value(),
        via_pooled_negatives: pooled_negatives.value(),
        via_pooled_positives: pooled_positives.value(),
        positive_weights,
        negative_weights,
    })
}

/// Per-negative ranking accuracy `P[R_1^a > r]` for each score `r` in cell
/// `(b, 0)`, in ascending order of `r`.
pub fn conditional_xauc(g: &GroupedScores, a: &str, b: &str, ties: TiePolicy) -> Result<Vec<f64>> {
    let pos = g.cell(a, 1)?;
    let neg = g.cell(b, 0)?;
    let n = pos.len() as f64;
    Ok(neg
        .iter()
        .map(|&r| {
            let at_or_below = pos.partition_point(|&p| p <= r);
            let below = pos.partition_point(|&p| p < r);
            let above = (pos.len() - at_or_below) as f64;
            match ties {
                TiePolicy::Strict => above / n,
                TiePolicy::Half => (above + 0.5 * (at_or_below - below) as f64) / n,
            }
        })
        .collect())
}

/// `E[F_0^b(R_1^a)] - E[F_0^a(R_1^b)]` with `F(t) = P[R <= t]`.
///
/// Without ties this equals the strict xAUC disparity. With ties each term
/// additionally counts tied pairs, so the two differ by at most the tie mass
/// of the larger term.
pub fn average_rank_disparity(g: &GroupedScores, a: &str, b: &str) -> Result<f64> {
    fn mean_cdf(pos: &[f64], neg: &[f64]) -> f64 {
        let n = neg.len() as f64;
        let total = numeric::sum(
            pos.iter()
                .map(|&p| neg.partition_point(|&x| x <= p) as f64 / n),
        );
        total / pos.len() as f64
    }
    let pos_a = g.cell(a, 1)?;
    let neg_b = g.cell(b, 0)?;
    let pos_b = g.cell(b, 1)?;
    let neg_a = g.cell(a, 0)?;
    Ok(mean_cdf(pos_a, neg_b) - mean_cdf(pos_b, neg_a))
}

/// Mean squared deviation of probabilistic scores from binary labels.
pub fn brier_score(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if scores.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    for (index, (&s, &y)) in scores.iter().zip(labels).enumerate() {
        if !s.is_finite() {
            return Err(MetricsError::NonFiniteScore { index, value: s });
        }
        if !(0.0..=1.0).contains(&s) {
            return Err(MetricsError::ScoreOutOfRange { index, value: s });
        }
        if y > 1 {
            return Err(MetricsError::InvalidOutcome { index, value: y });
        }
    }
    let total = numeric::sum(
        scores
            .iter()
            .zip(labels)
            .map(|(&s, &y)| (s - y as f64).powi(2)),
    );
    Ok(total / scores.len() as f64)
}

/// Which curve a [`CurveSeries`] traces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveKind {
    /// Ordinary ROC; `group` is `None` for the pooled population.
    Roc { group: Option<String> },
    /// TPR of group `a` against FPR of group `b`.
    Xroc { a: String, b: String },
}

impl CurveKind {
    /// A file-name friendly label, e.g. `roc_pooled` or `xroc_a_b`.
    pub fn slug(&self) -> String {
        match self {
            CurveKind::Roc { group: None } => "roc_pooled".to_string(),
            CurveKind::Roc { group: Some(g) } => format!("roc_{g}"),
            CurveKind::Xroc { a, b } => format!("xroc_{a}_{b}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    /// False positive rate of the negative cell.
    pub x: f64,
    /// True positive rate of the positive cell.
    pub y: f64,
    /// Threshold; `+inf` and `-inf` mark the sentinel endpoints.
    #[serde(serialize_with = "serialize_threshold")]
    pub theta: f64,
}

fn serialize_threshold<S: Serializer>(theta: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if theta.is_finite() {
        s.serialize_f64(*theta)
    } else if *theta > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

/// Threshold-parameterised (FPR, TPR) points, from `(0, 0)` to `(1, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveSeries {
    #[serde(flatten)]
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

impl CurveSeries {
    /// Trapezoidal area under the curve.
    pub fn area(&self) -> f64 {
        numeric::sum(
            self.points
                .windows(2)
                .map(|w| 0.5 * (w[0].y + w[1].y) * (w[1].x - w[0].x)),
        )
    }

    /// Piecewise-linear interpolation of `y` at `x`, taking the upper end of
    /// vertical segments and extending flat past the last vertex.
    pub fn interpolate(&self, x: f64) -> f64 {
        let pts = &self.points;
        let idx = pts.partition_point(|p| p.x <= x);
        if idx == 0 {
            return pts.first().map_or(0.0, |p| p.y);
        }
        let left = pts[idx - 1];
        match pts.get(idx) {
            None => left.y,
            Some(right) => {
                let dx = right.x - left.x;
                if dx <= 0.0 {
                    left.y
                } else {
                    left.y + (right.y - left.y) * (x - left.x) / dx
                }
            }
        }
    }

    /// CSV with columns `x,y,theta`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,theta\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.x, p.y, p.theta));
        }
        out
    }
}

fn sweep(pos: &[f64], neg: &[f64], kind: CurveKind) -> CurveSeries {
    let (np, nn) = (pos.len() as f64, neg.len() as f64);
    let mut points = vec![CurvePoint {
        x: 0.0,
        y: 0.0,
        theta: f64::INFINITY,
    }];
    // elements at indices >= i (resp. j) are strictly above the current threshold
    let (mut i, mut j) = (pos.len(), neg.len());
    let mut first = true;
    loop {
        let theta = match (i.checked_sub(1), j.checked_sub(1)) {
            (Some(pi), Some(nj)) => pos[pi].max(neg[nj]),
            (Some(pi), None) => pos[pi],
            (None, Some(nj)) => neg[nj],
            (None, None) => break,
        };
        // at the maximum score nothing exceeds the threshold: same as the +inf sentinel
        if !first {
            points.push(CurvePoint {
                x: (neg.len() - j) as f64 / nn,
                y: (pos.len() - i) as f64 / np,
                theta,
            });
        }
        first = false;
        while i > 0 && pos[i - 1] == theta {
            i -= 1;
        }
        while j > 0 && neg[j - 1] == theta {
            j -= 1;
        }
    }
    points.push(CurvePoint {
        x: 1.0,
        y: 1.0,
        theta: f64::NEG_INFINITY,
    });
    CurveSeries { kind, points }
}

/// ROC curve of sorted positive scores against sorted negative scores.
pub fn roc_curve(pos: &[f64], neg: &[f64]) -> Result<CurveSeries> {
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::EmptyClass);
    }
    check_sorted(pos)?;
    check_sorted(neg)?;
    Ok(sweep(pos, neg, CurveKind::Roc { group: None }))
}

/// Within-group ROC curve of group `group`.
pub fn group_roc_curve(g: &GroupedScores, group: &str) -> Result<CurveSeries> {
    let pos = g.cell(group, 1)?;
    let neg = g.cell(group, 0)?;
    Ok(sweep(
        pos,
        neg,
        CurveKind::Roc {
            group: Some(group.to_string()),
        },
    ))
}

/// Pooled ROC curve over all groups.
pub fn pooled_roc_curve(g: &GroupedScores) -> Result<CurveSeries> {
    let pos = g.pooled(1);
    let neg = g.pooled(0);
    if pos.is_empty() || neg.is_empty() {
        return Err(MetricsError::EmptyClass);
    }
    Ok(sweep(&pos, &neg, CurveKind::Roc { group: None }))
}

/// xROC curve: TPR of group `a` (y) against FPR of group `b` (x).
pub fn xroc_curve(g: &GroupedScores, a: &str, b: &str) -> Result<CurveSeries> {
    let pos = g.cell(a, 1)?;
    let neg = g.cell(b, 0)?;
    Ok(sweep(
        pos,
        neg,
        CurveKind::Xroc {
            a: a.to_string(),
            b: b.to_string(),
        },
    ))
}
