use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::data::{split, LoadedDataset};
use super::experiment::{write_json, FitSummary};
use super::{PipelineError, Result};
use crate::adjust::{
    apply_transform, fit_logistic_adjustment, verify_eqop_identity, EqopCheck, LogisticAdjustOptions,
    LogisticAdjustment,
};
use crate::gaussian::{
    closed_form_delta_xauc, closed_form_xauc, equal_auc_disparity_search, sample_scores, DisparitySearchResult,
    GaussianError, GaussianGroupModel, GroupParams, SearchBounds,
};
use crate::metrics::{group_roc_curve, pooled_roc_curve, xroc_curve, CurveSeries, GroupedScores, TiePolicy};
use crate::models::{score_dataset, train, ModelKind, TrainOptions};
use crate::numeric::linspace;
use crate::report::AuditReport;

/// Where the audited scores come from.
#[derive(Debug, Clone, PartialEq)]
pub enum ScoreSource {
    /// Train on one seeded split and score its test part.
    Train {
        model: ModelKind,
        train_fraction: f64,
        seed: u64,
        options: TrainOptions,
    },
    /// Use the dataset's declared score column on every row.
    Column,
}

fn scored(loaded: &LoadedDataset, source: &ScoreSource) -> Result<(GroupedScores, Option<FitSummary>, String)> {
    let data = &loaded.data;
    match source {
        ScoreSource::Column => {
            let scores = loaded
                .scores
                .as_ref()
                .ok_or_else(|| PipelineError::InvalidConfig("no score column declared".into()))?;
            let g = GroupedScores::from_columns(scores, &data.labels, &data.groups)?;
            Ok((g, None, "score column".into()))
        }
        ScoreSource::Train {
            model,
            train_fraction,
            seed,
            options,
        } => {
            let (train_idx, test_idx) = split(data.n_rows(), *train_fraction, *seed)?;
            let test = data.subset(&test_idx);
            let (scorer, diag) = train(*model, &data.subset(&train_idx), options)?;
            let scores = score_dataset(&scorer, &test)?;
            let g = GroupedScores::from_columns(&scores, &test.labels, &test.groups)?;
            let fit = FitSummary {
                iterations: diag.iterations,
                converged: diag.converged,
                final_loss: diag.loss_trace.last().copied(),
                notes: diag.notes,
            };
            Ok((g, Some(fit), format!("{model} trained on split seed {seed}")))
        }
    }
}

fn all_curves(g: &GroupedScores) -> Result<Vec<CurveSeries>> {
    let groups: Vec<&str> = g.groups().collect();
    let mut curves = vec![pooled_roc_curve(g)?];
    for grp in &groups {
        curves.push(group_roc_curve(g, grp)?);
    }
    for a in &groups {
        for b in &groups {
            if a != b {
                curves.push(xroc_curve(g, a, b)?);
            }
        }
    }
    Ok(curves)
}

fn write_curves(dir: &Path, curves: &[CurveSeries]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for c in curves {
        fs::write(dir.join(format!("{}.csv", c.kind.slug())), c.to_csv())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditOutput {
    pub source: String,
    pub n_scored: usize,
    pub fit: Option<FitSummary>,
    pub report: AuditReport,
    #[serde(skip)]
    pub curves: Vec<CurveSeries>,
    #[serde(skip)]
    pub scores: GroupedScores,
}

/// Single-split (or external score) audit with DeLong errors and curves.
pub fn audit_scores(loaded: &LoadedDataset, source: &ScoreSource, ties: TiePolicy) -> Result<AuditOutput> {
    let (g, fit, source) = scored(loaded, source)?;
    let report = AuditReport::from_grouped(&g, ties, true)?;
    Ok(AuditOutput {
        source,
        n_scored: g.total(),
        fit,
        report,
        curves: all_curves(&g)?,
        scores: g,
    })
}

/// `report.json`, `curves.json` and `curves/<slug>.csv` under `dir`.
pub fn write_audit(out: &AuditOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("report.json"), out)?;
    write_json(&dir.join("curves.json"), &out.curves)?;
    write_curves(&dir.join("curves"), &out.curves)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdjustOutput {
    pub source: String,
    /// Group whose scores were transformed.
    pub target: String,
    pub reference: String,
    pub adjustment: LogisticAdjustment,
    /// Quantile-map alternative moving `target` onto `reference`.
    pub eqop: EqopCheck,
    #[serde(skip)]
    pub xroc_before: Vec<CurveSeries>,
    #[serde(skip)]
    pub xroc_after: Vec<CurveSeries>,
}

fn pick_groups(g: &GroupedScores, target: Option<&str>, reference: Option<&str>) -> Result<(String, String)> {
    let groups: Vec<&str> = g.groups().collect();
    let other_than = |x: &str| -> Result<String> {
        let rest: Vec<&&str> = groups.iter().filter(|&&h| h != x).collect();
        match rest.as_slice() {
            [only] => Ok(only.to_string()),
            _ => Err(PipelineError::InvalidConfig(format!(
                "cannot infer the second group among {groups:?}; name both groups"
            ))),
        }
    };
    match (target, reference) {
        (Some(t), Some(r)) => Ok((t.to_string(), r.to_string())),
        (Some(t), None) => Ok((t.to_string(), other_than(t)?)),
        (None, Some(r)) => Ok((other_than(r)?, r.to_string())),
        (None, None) => {
            if groups.len() != 2 {
                return Err(PipelineError::InvalidConfig(format!(
                    "adjustment needs exactly two groups, found {}; name them explicitly",
                    groups.len()
                )));
            }
            Ok((groups[0].to_string(), groups[1].to_string()))
        }
    }
}

/// Equalize xAUC between two groups with a logistic transform of one group's
/// scores. Without an explicit target, the disadvantaged group (lower
/// `xAUC(group, other)`) is transformed.
pub fn adjust_scores(
    loaded: &LoadedDataset,
    source: &ScoreSource,
    target: Option<&str>,
    reference: Option<&str>,
    opts: LogisticAdjustOptions,
) -> Result<AdjustOutput> {
    let (g, _, source) = scored(loaded, source)?;
    let (mut t, mut r) = pick_groups(&g, target, reference)?;
    for grp in [&t, &r] {
        if !g.has_group(grp) {
            return Err(PipelineError::InvalidConfig(format!("group `{grp}` has no scored rows")));
        }
    }
    if target.is_none() && reference.is_none() {
        let d = crate::metrics::delta_xauc(&g, &t, &r, opts.ties)?;
        if d > 0.0 {
            std::mem::swap(&mut t, &mut r);
        }
    }
    let adjustment = fit_logistic_adjustment(&g, &t, &r, opts)?;
    let adjusted = apply_transform(&g, &adjustment.transform)?;
    let eqop = verify_eqop_identity(&g, &r, &t, opts.ties)?;
    let pair_curves = |h: &GroupedScores| -> Result<Vec<CurveSeries>> {
        Ok(vec![xroc_curve(h, &t, &r)?, xroc_curve(h, &r, &t)?])
    };
    Ok(AdjustOutput {
        source,
        xroc_before: pair_curves(&g)?,
        xroc_after: pair_curves(&adjusted)?,
        target: t,
        reference: r,
        adjustment,
        eqop,
    })
}

/// `adjustment.json` plus `curves/before_<slug>.csv` and `curves/after_<slug>.csv`.
pub fn write_adjustment(out: &AdjustOutput, dir: &Path) -> Result<()> {
    let curves = dir.join("curves");
    fs::create_dir_all(&curves)?;
    write_json(&dir.join("adjustment.json"), out)?;
    for (prefix, set) in [("before", &out.xroc_before), ("after", &out.xroc_after)] {
        for c in set {
            fs::write(curves.join(format!("{prefix}_{}.csv", c.kind.slug())), c.to_csv())?;
        }
    }
    Ok(())
}

/// Gaussian score model to analyse, with Monte Carlo and search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: GaussianGroupModel,
    pub a: String,
    pub b: String,
    pub n_per_cell: usize,
    pub seed: u64,
    pub ties: TiePolicy,
    pub bounds: SearchBounds,
    pub search_resolution: usize,
    /// Points per axis of the `(mu_b0, mu_b1)` disparity surface.
    pub surface_resolution: usize,
}

impl Default for SimulationConfig {
    /// Group `a` with means 0.25/0.75 and variances 0.25; group `b` with the
    /// same means and within-group AUC but unequal variances.
    fn default() -> Self {
        let a = GroupParams::new(0.25, 0.75, 0.25, 0.25).expect("valid parameters");
        let b = GroupParams::new(0.25, 0.75, 0.1, 0.4).expect("valid parameters");
        Self {
            model: GaussianGroupModel::new().with_group("a", a).with_group("b", b),
            a: "a".into(),
            b: "b".into(),
            n_per_cell: 10_000,
            seed: 0,
            ties: TiePolicy::Strict,
            bounds: SearchBounds::default(),
            search_resolution: 41,
            surface_resolution: 21,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosedForm {
    pub auc_a: f64,
    pub auc_b: f64,
    pub xauc_ab: f64,
    pub xauc_ba: f64,
    pub delta_xauc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOutput {
    pub config: SimulationConfig,
    pub closed_form: ClosedForm,
    pub monte_carlo: AuditReport,
    /// Group-`b` parameters with `a`'s AUC maximizing the disparity.
    pub search: DisparitySearchResult,
    /// Rows of `[mu_b0, mu_b1, delta_xauc]`, other parameters held fixed.
    #[serde(skip)]
    pub surface: Vec<[f64; 3]>,
}

pub fn simulate(config: &SimulationConfig) -> Result<SimulationOutput> {
    config.model.validate()?;
    if config.n_per_cell < 2 {
        return Err(GaussianError::InvalidParameter("need at least 2 samples per cell".into()).into());
    }
    if config.surface_resolution < 2 {
        return Err(PipelineError::InvalidConfig("surface needs at least 2 points per axis".into()));
    }
    let (a, b) = (config.a.as_str(), config.b.as_str());
    let m = &config.model;
    let (pa, pb) = (*m.group(a)?, *m.group(b)?);
    let closed_form = ClosedForm {
        auc_a: pa.auc(),
        auc_b: pb.auc(),
        xauc_ab: closed_form_xauc(m, a, b)?,
        xauc_ba: closed_form_xauc(m, b, a)?,
        delta_xauc: closed_form_delta_xauc(m, a, b)?,
    };
    let sample = sample_scores(m, config.n_per_cell, config.seed)?;
    let monte_carlo = AuditReport::from_grouped(&sample, config.ties, true)?;
    let search = equal_auc_disparity_search(pa, config.bounds, config.search_resolution)?;

    let axis = |r: (f64, f64)| linspace(r.0, r.1, config.surface_resolution);
    let mut surface = Vec::new();
    for mu_b0 in axis(config.bounds.mu_b0) {
        for mu_b1 in axis(config.bounds.mu_b1) {
            let q = GroupParams::new(mu_b0, mu_b1, pb.negative.variance, pb.positive.variance)?;
            let mm = GaussianGroupModel::new().with_group("a", pa).with_group("b", q);
            surface.push([mu_b0, mu_b1, closed_form_delta_xauc(&mm, "a", "b")?]);
        }
    }
    Ok(SimulationOutput {
        config: config.clone(),
        closed_form,
        monte_carlo,
        search,
        surface,
    })
}

/// `simulation.json` and `surface.csv` (`mu_b0,mu_b1,delta_xauc`).
pub fn write_simulation(out: &SimulationOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join("simulation.json"), out)?;
    let mut text = String::from("mu_b0,mu_b1,delta_xauc\n");
    for [x, y, d] in &out.surface {
        text.push_str(&format!("{x},{y},{d}\n"));
    }
    fs::write(dir.join("surface.csv"), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::TabularDataset;

    fn loaded_with_scores() -> LoadedDataset {
        let scores = vec![0.9, 0.65, 0.7, 0.2, 0.6, 0.5, 0.8, 0.1];
        let labels = vec![1, 0, 1, 0, 1, 0, 1, 0];
        let groups: Vec<String> = ["a", "a", "a", "a", "b", "b", "b", "b"].iter().map(|s| s.to_string()).collect();
        let features = scores.clone();
        LoadedDataset {
            data: TabularDataset::new(features, 1, labels, groups, vec!["x".into()]).unwrap(),
            scores: Some(scores),
            group_counts: [("a".to_string(), 4), ("b".to_string(), 4)].into(),
        }
    }

    #[test]
    fn audit_from_score_column() {
        let out = audit_scores(&loaded_with_scores(), &ScoreSource::Column, TiePolicy::Strict).unwrap();
        assert_eq!(out.n_scored, 8);
        assert_eq!(out.report.xauc("a", "b").unwrap().value, 1.0);
        assert_eq!(out.report.xauc("b", "a").unwrap().value, 0.75);
        assert_eq!(out.curves.len(), 1 + 2 + 2);
    }

    #[test]
    fn adjust_targets_disadvantaged_group() {
        let opts = LogisticAdjustOptions {
            with_se: false,
            ..Default::default()
        };
        let out = adjust_scores(&loaded_with_scores(), &ScoreSource::Column, None, None, opts).unwrap();
        assert_eq!((out.target.as_str(), out.reference.as_str()), ("b", "a"));
        assert!(out.adjustment.objective <= out.adjustment.objective_before);
        assert_eq!(out.xroc_before.len(), 2);
    }

    #[test]
    fn column_source_requires_column() {
        let mut l = loaded_with_scores();
        l.scores = None;
        assert!(matches!(
            audit_scores(&l, &ScoreSource::Column, TiePolicy::Strict),
            Err(PipelineError::InvalidConfig(_))
        ));
    }

    #[test]
    fn default_simulation_runs() {
        let cfg = SimulationConfig {
            n_per_cell: 2000,
            search_resolution: 11,
            surface_resolution: 5,
            ..Default::default()
        };
        let out = simulate(&cfg).unwrap();
        assert!((out.closed_form.auc_a - out.closed_form.auc_b).abs() < 1e-15);
        assert!(out.closed_form.delta_xauc > 0.0);
        assert_eq!(out.surface.len(), 25);
        assert!(out.search.feasible_points > 0);
    }
}
