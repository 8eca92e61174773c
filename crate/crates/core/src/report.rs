//! The audit bundle for one scored sample: within-group AUC, cross-group
//! xAUC and its disparity, balanced xAUC, Brier scores and DeLong errors.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::inference::{delong_se, InferenceError};
use crate::metrics::{
    decompose_auc, pair_counts, GroupedScores, MetricsError, TiePolicy,
};
use crate::numeric;

/// A point estimate with an optional standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEstimate {
    pub a: String,
    pub b: String,
    #[serde(flatten)]
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairValue {
    pub a: String,
    pub b: String,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellCounts {
    pub negative: usize,
    pub positive: usize,
}

/// Balanced xAUC pair for one group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BalancedEstimate {
    /// `xAUC^1(c) = P[R_1^c > R_0]`
    pub xauc1: Estimate,
    /// `xAUC^0(c) = P[R_1 > R_0^c]`
    pub xauc0: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub tie_policy: TiePolicy,
    pub groups: Vec<String>,
    pub counts: BTreeMap<String, CellCounts>,
    pub pooled_auc: Estimate,
    pub auc: BTreeMap<String, Estimate>,
    /// Every ordered pair of distinct groups.
    pub xauc: Vec<PairEstimate>,
    /// `xAUC(a, b) - xAUC(b, a)` for each unordered pair, `a < b`.
    pub delta_xauc: Vec<PairValue>,
    pub balanced: BTreeMap<String, BalancedEstimate>,
    /// `None` when a group's scores are not probabilities.
    pub brier: BTreeMap<String, Option<Estimate>>,
    /// Largest gap between pooled AUC and its group-weighted reconstructions.
    pub decomposition_residual: f64,
    /// Some DeLong point estimate differs from the reported one due to ties.
    pub ties_affect_se: bool,
}

impl AuditReport {
    /// Audit every group present in `g`. All `(group, outcome)` cells must be
    /// nonempty. Standard errors are attached when `with_se` is set and each
    /// compared cell holds at least two scores.
    pub fn from_grouped(g: &GroupedScores, ties: TiePolicy, with_se: bool) -> Result<Self, InferenceError> {
        let groups: Vec<String> = g.groups().map(str::to_string).collect();
        if groups.is_empty() {
            return Err(MetricsError::EmptyInput.into());
        }
        for grp in &groups {
            g.cell(grp, 1)?;
            g.cell(grp, 0)?;
        }
        let pooled_pos = g.pooled(1);
        let pooled_neg = g.pooled(0);
        let mut ties_affect_se = false;

        let mut estimate = |pos: &[f64], neg: &[f64]| -> Result<Estimate, InferenceError> {
            let value = pair_counts(pos, neg).value(ties);
            let se = if with_se && pos.len() >= 2 && neg.len() >= 2 {
                let est = delong_se(pos, neg, ties)?;
                ties_affect_se |= est.ties_affect_point;
                Some(est.se)
            } else {
                None
            };
            Ok(Estimate { value, se })
        };

        let pooled_auc = estimate(&pooled_pos, &pooled_neg)?;
        let mut auc = BTreeMap::new();
        let mut balanced = BTreeMap::new();
        let mut counts = BTreeMap::new();
        for grp in &groups {
            let pos = g.cell_or_empty(grp, 1);
            let neg = g.cell_or_empty(grp, 0);
            counts.insert(
                grp.clone(),
                CellCounts {
                    negative: neg.len(),
                    positive: pos.len(),
                },
            );
            auc.insert(grp.clone(), estimate(pos, neg)?);
            balanced.insert(
                grp.clone(),
                BalancedEstimate {
                    xauc1: estimate(pos, &pooled_neg)?,
                    xauc0: estimate(&pooled_pos, neg)?,
                },
            );
        }

        let mut xauc = Vec::new();
        for a in &groups {
            for b in &groups {
                if a == b {
                    continue;
                }
                let est = estimate(g.cell_or_empty(a, 1), g.cell_or_empty(b, 0))?;
                xauc.push(PairEstimate {
                    a: a.clone(),
                    b: b.clone(),
                    estimate: est,
                });
            }
        }
        let lookup = |a: &str, b: &str| {
            xauc.iter()
                .find(|p| p.a == a && p.b == b)
                .map(|p| p.estimate.value)
                .unwrap_or(f64::NAN)
        };
        let mut delta_xauc = Vec::new();
        for (i, a) in groups.iter().enumerate() {
            for b in &groups[i + 1..] {
                delta_xauc.push(PairValue {
                    a: a.clone(),
                    b: b.clone(),
                    value: lookup(a, b) - lookup(b, a),
                });
            }
        }

        let brier = groups
            .iter()
            .map(|grp| (grp.clone(), group_brier(g, grp)))
            .collect();

        let decomposition_residual = decompose_auc(g, ties)?.max_residual();

        Ok(AuditReport {
            tie_policy: ties,
            groups,
            counts,
            pooled_auc,
            auc,
            xauc,
            delta_xauc,
            balanced,
            brier,
            decomposition_residual,
            ties_affect_se,
        })
    }

    pub fn xauc(&self, a: &str, b: &str) -> Option<Estimate> {
        self.xauc
            .iter()
            .find(|p| p.a == a && p.b == b)
            .map(|p| p.estimate)
    }

    /// `xAUC(a, b) - xAUC(b, a)`, looked up in either orientation.
    pub fn delta(&self, a: &str, b: &str) -> Option<f64> {
        self.delta_xauc.iter().find_map(|d| {
            if d.a == a && d.b == b {
                Some(d.value)
            } else if d.a == b && d.b == a {
                Some(-d.value)
            } else {
                None
            }
        })
    }

    /// Flat `name -> value` view, e.g. `auc/a`, `xauc/a/b`, `xauc1/a`.
    pub fn metrics(&self) -> BTreeMap<String, f64> {
        self.flatten(|e| Some(e.value))
    }

    /// Flat `name -> se` view over the entries that carry a standard error.
    pub fn standard_errors(&self) -> BTreeMap<String, f64> {
        self.flatten(|e| e.se)
    }

    fn flatten(&self, pick: impl Fn(&Estimate) -> Option<f64>) -> BTreeMap<String, f64> {
        let mut out = BTreeMap::new();
        let mut put = |key: String, e: &Estimate| {
            if let Some(v) = pick(e) {
                out.insert(key, v);
            }
        };
        put("pooled_auc".into(), &self.pooled_auc);
        for (g, e) in &self.auc {
            put(format!("auc/{g}"), e);
        }
        for p in &self.xauc {
            put(format!("xauc/{}/{}", p.a, p.b), &p.estimate);
        }
        for (g, b) in &self.balanced {
            put(format!("xauc1/{g}"), &b.xauc1);
            put(format!("xauc0/{g}"), &b.xauc0);
        }
        for (g, e) in &self.brier {
            if let Some(e) = e {
                put(format!("brier/{g}"), e);
            }
        }
        for d in &self.delta_xauc {
            put(
                format!("delta_xauc/{}/{}", d.a, d.b),
                &Estimate {
                    value: d.value,
                    se: None,
                },
            );
        }
        out
    }
}

fn group_brier(g: &GroupedScores, group: &str) -> Option<Estimate> {
    let pos = g.cell_or_empty(group, 1);
    let neg = g.cell_or_empty(group, 0);
    if pos.iter().chain(neg).any(|s| !(0.0..=1.0).contains(s)) {
        return None;
    }
    let losses: Vec<f64> = pos
        .iter()
        .map(|s| (1.0 - s).powi(2))
        .chain(neg.iter().map(|s| s * s))
        .collect();
    if losses.is_empty() {
        return None;
    }
    let se = (losses.len() >= 2)
        .then(|| (numeric::sample_variance(&losses) / losses.len() as f64).sqrt());
    Some(Estimate {
        value: numeric::mean(&losses),
        se,
    })
}
