use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::curves::{average_curves, AveragedCurve};
use super::data::{load_dataset, split, ColumnRoles};
use super::{PipelineError, Result};
use crate::metrics::{
    conditional_xauc, group_roc_curve, pooled_roc_curve, xroc_curve, CurveSeries, GroupedScores, MetricsError,
    TiePolicy,
};
use crate::models::{score_dataset, train, LogisticOptions, ModelKind, RankBoostOptions, TabularDataset, TrainOptions};
use crate::numeric;
use crate::report::AuditReport;

fn default_train_fraction() -> f64 {
    0.7
}
fn default_runs() -> usize {
    50
}
fn default_grid() -> usize {
    200
}
fn default_reg() -> f64 {
    1.0
}
fn default_rounds() -> usize {
    100
}
fn default_bins() -> usize {
    20
}

/// Everything needed to reproduce a repeated-split experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: PathBuf,
    pub roles: ColumnRoles,
    pub model: ModelKind,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    /// Run `k` splits with seed `seed + k`.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ties: TiePolicy,
    #[serde(default = "default_grid")]
    pub grid_size: usize,
    #[serde(default = "default_reg")]
    pub reg_strength: f64,
    #[serde(default = "default_rounds")]
    pub rankboost_rounds: usize,
    #[serde(default = "default_bins")]
    pub histogram_bins: usize,
    /// Thread count; `0` uses all cores. Never affects results.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(data: impl Into<PathBuf>, roles: ColumnRoles, model: ModelKind) -> Self {
        Self {
            data: data.into(),
            roles,
            model,
            train_fraction: default_train_fraction(),
            n_runs: default_runs(),
            seed: 0,
            ties: TiePolicy::default(),
            grid_size: default_grid(),
            reg_strength: default_reg(),
            rankboost_rounds: default_rounds(),
            histogram_bins: default_bins(),
            workers: 0,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(PipelineError::InvalidConfig(msg));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train fraction {} must lie in (0, 1)", self.train_fraction));
        }
        if self.n_runs == 0 {
            return bad("at least one run is required".into());
        }
        if self.grid_size < 2 {
            return bad(format!("grid size {} must be at least 2", self.grid_size));
        }
        if self.histogram_bins == 0 {
            return bad("histogram needs at least one bin".into());
        }
        if !(self.reg_strength > 0.0 && self.reg_strength.is_finite()) {
            return bad(format!("regularization strength {} must be positive", self.reg_strength));
        }
        if self.rankboost_rounds == 0 {
            return bad("RankBoost needs at least one round".into());
        }
        Ok(())
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            logistic: LogisticOptions {
                reg_strength: self.reg_strength,
                ..LogisticOptions::default()
            },
            rankboost: RankBoostOptions {
                rounds: self.rankboost_rounds,
            },
            ..TrainOptions::default()
        }
    }
}

/// The result-determining part of the configuration, echoed in reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Protocol {
    pub data: String,
    pub roles: ColumnRoles,
    pub model: ModelKind,
    pub train_fraction: f64,
    pub n_runs: usize,
    pub seed: u64,
    pub ties: TiePolicy,
    pub grid_size: usize,
    pub reg_strength: f64,
    pub rankboost_rounds: usize,
    pub histogram_bins: usize,
    pub n_rows: usize,
    pub n_features: usize,
    pub group_counts: BTreeMap<String, usize>,
}

/// Across-run summary of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AggregateMetric {
    pub mean: f64,
    pub across_run_sd: f64,
    /// `across_run_sd / sqrt(n_runs)`
    pub across_run_se: f64,
    /// Mean of the per-run DeLong standard errors, when every run has one.
    pub mean_delong_se: Option<f64>,
}

/// Conditional xAUC values of all runs for one ordered pair, binned on `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub a: String,
    pub b: String,
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    fn new(a: &str, b: &str, bins: usize) -> Self {
        Self {
            a: a.to_string(),
            b: b.to_string(),
            edges: numeric::linspace(0.0, 1.0, bins + 1),
            counts: vec![0; bins],
        }
    }

    fn add(&mut self, v: f64) {
        let bins = self.counts.len();
        let i = ((v * bins as f64).floor() as usize).min(bins - 1);
        self.counts[i] += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitSummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_loss: Option<f64>,
    pub notes: Vec<String>,
}

/// Per-instance conditional xAUC of the representative run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalSample {
    pub a: String,
    pub b: String,
    /// Scores of group `b` negatives, ascending.
    pub negative_scores: Vec<f64>,
    pub accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub protocol: Protocol,
    pub groups: Vec<String>,
    /// Run whose scores and conditional values are written out.
    pub representative_run: usize,
    pub aggregate: BTreeMap<String, AggregateMetric>,
    pub curve_isotonic_adjustment: BTreeMap<String, f64>,
    pub histograms: Vec<Histogram>,
    pub fits: Vec<FitSummary>,
    pub runs: Vec<AuditReport>,
    #[serde(skip)]
    pub curves: Vec<AveragedCurve>,
    #[serde(skip)]
    pub conditional: Vec<ConditionalSample>,
    /// Test scores of the representative run.
    #[serde(skip)]
    pub scores: GroupedScores,
}

impl ExperimentResult {
    pub fn metric(&self, key: &str) -> Option<&AggregateMetric> {
        self.aggregate.get(key)
    }
}

struct RunOutput {
    report: AuditReport,
    curves: Vec<CurveSeries>,
    conditional: Vec<ConditionalSample>,
    fit: FitSummary,
    scores: GroupedScores,
}

fn ordered_pairs(groups: &[String]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for a in groups {
        for b in groups {
            if a != b {
                out.push((a.clone(), b.clone()));
            }
        }
    }
    out
}

fn run_once(data: &TabularDataset, groups: &[String], config: &ExperimentConfig, index: usize) -> Result<RunOutput> {
    let (train_idx, test_idx) = split(data.n_rows(), config.train_fraction, config.seed.wrapping_add(index as u64))?;
    let train_set = data.subset(&train_idx);
    let test_set = data.subset(&test_idx);
    let (scorer, diag) = train(config.model, &train_set, &config.train_options())?;
    let scores = score_dataset(&scorer, &test_set)?;
    let g = GroupedScores::from_columns(&scores, &test_set.labels, &test_set.groups)?;
    for grp in groups {
        for outcome in [0, 1] {
            if g.count(grp, outcome) == 0 {
                return Err(MetricsError::MissingCell {
                    group: grp.clone(),
                    outcome,
                }
                .into());
            }
        }
    }
    let report = AuditReport::from_grouped(&g, config.ties, true)?;

    let mut curves = vec![pooled_roc_curve(&g)?];
    for grp in groups {
        curves.push(group_roc_curve(&g, grp)?);
    }
    let mut conditional = Vec::new();
    for (a, b) in ordered_pairs(groups) {
        curves.push(xroc_curve(&g, &a, &b)?);
        conditional.push(ConditionalSample {
            negative_scores: g.cell(&b, 0)?.to_vec(),
            accuracy: conditional_xauc(&g, &a, &b, config.ties)?,
            a,
            b,
        });
    }
    Ok(RunOutput {
        report,
        curves,
        conditional,
        fit: FitSummary {
            iterations: diag.iterations,
            converged: diag.converged,
            final_loss: diag.loss_trace.last().copied(),
            notes: diag.notes,
        },
        scores: g,
    })
}

fn aggregate(runs: &[AuditReport]) -> BTreeMap<String, AggregateMetric> {
    let values: Vec<BTreeMap<String, f64>> = runs.iter().map(AuditReport::metrics).collect();
    let ses: Vec<BTreeMap<String, f64>> = runs.iter().map(AuditReport::standard_errors).collect();
    let k = runs.len() as f64;
    let mut out = BTreeMap::new();
    for key in values[0].keys() {
        let xs: Vec<f64> = values.iter().map(|m| m.get(key).copied().unwrap_or(f64::NAN)).collect();
        let sd = numeric::sample_variance(&xs).sqrt();
        let se_runs: Option<Vec<f64>> = ses.iter().map(|m| m.get(key).copied()).collect();
        out.insert(
            key.clone(),
            AggregateMetric {
                mean: numeric::mean(&xs),
                across_run_sd: sd,
                across_run_se: sd / k.sqrt(),
                mean_delong_se: se_runs.map(|v| numeric::mean(&v)),
            },
        );
    }
    out
}

/// Load the configured dataset, run the protocol and write the outputs when
/// an output directory is configured.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let loaded = load_dataset(&config.data, &config.roles)?;
    let result = run_experiment_on(&loaded.data, config)?;
    if let Some(dir) = &config.out_dir {
        write_experiment(&result, dir)?;
    }
    Ok(result)
}

/// Run the repeated-split protocol on an in-memory dataset.
pub fn run_experiment_on(data: &TabularDataset, config: &ExperimentConfig) -> Result<ExperimentResult> {
    config.validate()?;
    let mut group_counts = BTreeMap::new();
    for g in &data.groups {
        *group_counts.entry(g.clone()).or_insert(0usize) += 1;
    }
    let groups: Vec<String> = group_counts.keys().cloned().collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| PipelineError::InvalidConfig(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<RunOutput>> = pool.install(|| {
        (0..config.n_runs)
            .into_par_iter()
            .map(|k| run_once(data, &groups, config, k))
            .collect()
    });
    let mut runs = Vec::with_capacity(outcomes.len());
    for (index, r) in outcomes.into_iter().enumerate() {
        runs.push(r.map_err(|e| PipelineError::Run {
            index,
            source: Box::new(e),
        })?);
    }

    let grid = numeric::linspace(0.0, 1.0, config.grid_size);
    let n_curves = runs[0].curves.len();
    let mut curves = Vec::with_capacity(n_curves);
    for c in 0..n_curves {
        let series: Vec<CurveSeries> = runs.iter().map(|r| r.curves[c].clone()).collect();
        curves.push(average_curves(&series, &grid)?);
    }
    let curve_isotonic_adjustment = curves.iter().map(|c| (c.kind.slug(), c.isotonic_adjustment)).collect();

    let mut histograms: Vec<Histogram> = runs[0]
        .conditional
        .iter()
        .map(|c| Histogram::new(&c.a, &c.b, config.histogram_bins))
        .collect();
    for r in &runs {
        for (h, c) in histograms.iter_mut().zip(&r.conditional) {
            for &v in &c.accuracy {
                h.add(v);
            }
        }
    }

    let reports: Vec<AuditReport> = runs.iter().map(|r| r.report.clone()).collect();
    let fits = runs.iter().map(|r| r.fit.clone()).collect();
    let representative = runs.swap_remove(0);
    Ok(ExperimentResult {
        protocol: Protocol {
            data: config.data.display().to_string(),
            roles: config.roles.clone(),
            model: config.model,
            train_fraction: config.train_fraction,
            n_runs: config.n_runs,
            seed: config.seed,
            ties: config.ties,
            grid_size: config.grid_size,
            reg_strength: config.reg_strength,
            rankboost_rounds: config.rankboost_rounds,
            histogram_bins: config.histogram_bins,
            n_rows: data.n_rows(),
            n_features: data.n_features(),
            group_counts,
        },
        groups,
        representative_run: 0,
        aggregate: aggregate(&reports),
        curve_isotonic_adjustment,
        histograms,
        fits,
        runs: reports,
        curves,
        conditional: representative.conditional,
        scores: representative.scores,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Write `report.json`, `curves/`, `conditional/` and `scores/` under `dir`.
pub fn write_experiment(result: &ExperimentResult, dir: &Path) -> Result<()> {
    for sub in ["curves", "conditional", "scores"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    write_json(&dir.join("report.json"), result)?;
    for c in &result.curves {
        fs::write(dir.join("curves").join(format!("{}.csv", c.kind.slug())), c.to_csv())?;
    }
    for c in &result.conditional {
        let mut text = String::from("negative_score,accuracy\n");
        for (s, v) in c.negative_scores.iter().zip(&c.accuracy) {
            text.push_str(&format!("{s},{v}\n"));
        }
        fs::write(dir.join("conditional").join(format!("{}_{}.csv", c.a, c.b)), text)?;
    }
    for grp in result.scores.groups() {
        for outcome in [0u8, 1] {
            let mut text = String::from("score\n");
            for s in result.scores.cell_or_empty(grp, outcome) {
                text.push_str(&format!("{s}\n"));
            }
            fs::write(dir.join("scores").join(format!("{grp}_{outcome}.csv")), text)?;
        }
    }
    Ok(())
}
