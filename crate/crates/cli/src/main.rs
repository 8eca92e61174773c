use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use xauc::adjust::LogisticAdjustOptions;
use xauc::models::{LogisticOptions, ModelKind, RankBoostOptions, TrainOptions};
use xauc::pipeline::{
    adjust_scores, audit_scores, load_dataset, run_experiment, simulate, write_adjustment, write_audit,
    write_simulation, ColumnRoles, ExperimentConfig, PipelineError, ScoreSource, SimulationConfig,
};
use xauc::TiePolicy;

/// Audit risk scores for cross-group ranking disparities (xAUC).
#[derive(Debug, Parser)]
#[command(name = "xauc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train on one split (or read a score column) and write a full audit.
    Audit(AuditArgs),
    /// Repeated train/test splits with averaged metrics and curves.
    Experiment(ExperimentArgs),
    /// Fit the logistic xAUC adjustment for one group.
    Adjust(AdjustArgs),
    /// Closed-form and Monte Carlo analysis of a Gaussian score model.
    Simulate(SimulateArgs),
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Preprocessed numeric CSV with a header row.
    #[arg(long, env = "XAUC_DATA")]
    data: PathBuf,
    #[arg(long, env = "XAUC_LABEL_COL", default_value = "label")]
    label_col: String,
    #[arg(long, env = "XAUC_GROUP_COL", default_value = "group")]
    group_col: String,
    /// Label value treated as the positive outcome.
    #[arg(long, env = "XAUC_POSITIVE_LABEL", default_value = "1")]
    positive_label: String,
    /// Rename group values, e.g. `0=white,1=black`.
    #[arg(long, env = "XAUC_GROUP_MAP", value_delimiter = ',', value_parser = parse_mapping)]
    group_map: Vec<(String, String)>,
    /// Keep only these (renamed) groups.
    #[arg(long, env = "XAUC_GROUPS", value_delimiter = ',')]
    groups: Vec<String>,
    /// Add group indicator features.
    #[arg(long, env = "XAUC_GROUP_FEATURE")]
    group_feature: bool,
    #[arg(long, env = "XAUC_DROP_COLS", value_delimiter = ',')]
    drop_cols: Vec<String>,
}

impl DataArgs {
    fn roles(&self, score_col: Option<String>) -> ColumnRoles {
        ColumnRoles {
            label_col: self.label_col.clone(),
            group_col: self.group_col.clone(),
            positive_label: self.positive_label.clone(),
            group_map: self.group_map.iter().cloned().collect::<BTreeMap<_, _>>(),
            keep_groups: self.groups.clone(),
            group_as_feature: self.group_feature,
            drop_cols: self.drop_cols.clone(),
            score_col,
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[arg(long, env = "XAUC_MODEL", default_value = "logistic")]
    model: ModelKind,
    #[arg(long, env = "XAUC_TRAIN_FRAC", default_value_t = 0.7)]
    train_frac: f64,
    #[arg(long, env = "XAUC_SEED", default_value_t = 0)]
    seed: u64,
    /// L2 penalty strength of the logistic model (inverse of `C`).
    #[arg(long, env = "XAUC_REG_STRENGTH", default_value_t = 1.0)]
    reg_strength: f64,
    /// Boosting rounds for RankBoost.
    #[arg(long, env = "XAUC_ROUNDS", default_value_t = 100)]
    rounds: usize,
}

impl ModelArgs {
    fn train_options(&self) -> TrainOptions {
        TrainOptions {
            logistic: LogisticOptions {
                reg_strength: self.reg_strength,
                ..LogisticOptions::default()
            },
            rankboost: RankBoostOptions { rounds: self.rounds },
            ..TrainOptions::default()
        }
    }

    fn source(&self) -> ScoreSource {
        ScoreSource::Train {
            model: self.model,
            train_fraction: self.train_frac,
            seed: self.seed,
            options: self.train_options(),
        }
    }
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Audit this column instead of training a model.
    #[arg(long, env = "XAUC_SCORE_COL")]
    score_col: Option<String>,
    #[arg(long, env = "XAUC_TIES", default_value = "strict")]
    ties: TiePolicy,
    #[arg(long, env = "XAUC_OUT", default_value = "xauc-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, env = "XAUC_RUNS", default_value_t = 50)]
    runs: usize,
    #[arg(long, env = "XAUC_TIES", default_value = "strict")]
    ties: TiePolicy,
    /// Points on the shared FPR grid.
    #[arg(long, env = "XAUC_GRID_SIZE", default_value_t = 200)]
    grid_size: usize,
    #[arg(long, env = "XAUC_BINS", default_value_t = 20)]
    bins: usize,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "XAUC_WORKERS", default_value_t = 0)]
    workers: usize,
    #[arg(long, env = "XAUC_OUT", default_value = "xauc-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct AdjustArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, env = "XAUC_SCORE_COL")]
    score_col: Option<String>,
    /// Group to transform; defaults to the disadvantaged one.
    #[arg(long, env = "XAUC_TARGET_GROUP")]
    target_group: Option<String>,
    #[arg(long, env = "XAUC_REFERENCE_GROUP")]
    reference_group: Option<String>,
    /// Slope search interval `lo,hi`.
    #[arg(long, env = "XAUC_ALPHA_RANGE", default_value = "0,5", value_parser = parse_range)]
    alpha_range: (f64, f64),
    #[arg(long, env = "XAUC_BETA", default_value_t = -2.0, allow_negative_numbers = true)]
    beta: f64,
    #[arg(long, env = "XAUC_RESOLUTION", default_value_t = 501)]
    resolution: usize,
    #[arg(long, env = "XAUC_TIES", default_value = "strict")]
    ties: TiePolicy,
    #[arg(long, env = "XAUC_OUT", default_value = "xauc-out")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// JSON simulation config; the built-in two-group model otherwise.
    #[arg(long, env = "XAUC_CONFIG")]
    config: Option<PathBuf>,
    #[arg(long, env = "XAUC_SAMPLES")]
    samples: Option<usize>,
    #[arg(long, env = "XAUC_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "XAUC_SEARCH_RESOLUTION")]
    search_resolution: Option<usize>,
    #[arg(long, env = "XAUC_TIES")]
    ties: Option<TiePolicy>,
    #[arg(long, env = "XAUC_OUT", default_value = "xauc-out")]
    out: PathBuf,
}

fn parse_mapping(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected `raw=name`, got `{s}`"))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s
        .split_once(',')
        .or_else(|| s.split_once(':'))
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let num = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((num(lo)?, num(hi)?))
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Audit(args) => {
            let loaded = load_dataset(&args.data.data, &args.data.roles(args.score_col.clone()))?;
            let source = if args.score_col.is_some() {
                ScoreSource::Column
            } else {
                args.model.source()
            };
            let out = audit_scores(&loaded, &source, args.ties)?;
            write_audit(&out, &args.out)?;
            let r = &out.report;
            println!("scored {} rows ({})", out.n_scored, out.source);
            println!("pooled AUC {:.4}", r.pooled_auc.value);
            for p in &r.xauc {
                println!("xAUC({}, {}) {:.4}", p.a, p.b, p.estimate.value);
            }
        }
        Command::Experiment(args) => {
            let config = ExperimentConfig {
                data: args.data.data.clone(),
                roles: args.data.roles(None),
                model: args.model.model,
                train_fraction: args.model.train_frac,
                n_runs: args.runs,
                seed: args.model.seed,
                ties: args.ties,
                grid_size: args.grid_size,
                reg_strength: args.model.reg_strength,
                rankboost_rounds: args.model.rounds,
                histogram_bins: args.bins,
                workers: args.workers,
                out_dir: Some(args.out.clone()),
            };
            let result = run_experiment(&config)?;
            println!("{} runs on {} rows", result.protocol.n_runs, result.protocol.n_rows);
            for (k, m) in result.aggregate.iter().filter(|(k, _)| k.starts_with("auc/") || k.starts_with("xauc/")) {
                println!("{k} {:.4} (se {:.4})", m.mean, m.across_run_se);
            }
        }
        Command::Adjust(args) => {
            let loaded = load_dataset(&args.data.data, &args.data.roles(args.score_col.clone()))?;
            let source = if args.score_col.is_some() {
                ScoreSource::Column
            } else {
                args.model.source()
            };
            let opts = LogisticAdjustOptions {
                alpha_range: args.alpha_range,
                beta: args.beta,
                resolution: args.resolution,
                ties: args.ties,
                ..LogisticAdjustOptions::default()
            };
            let out = adjust_scores(
                &loaded,
                &source,
                args.target_group.as_deref(),
                args.reference_group.as_deref(),
                opts,
            )?;
            write_adjustment(&out, &args.out)?;
            let fit = &out.adjustment;
            println!("transformed group {} against {}", out.target, out.reference);
            println!("alpha {:.4} beta {}", fit.alpha, fit.beta);
            println!("|delta xAUC| {:.4} -> {:.4}", fit.objective_before, fit.objective);
            println!("pooled AUC {:.4} -> {:.4}", fit.before.pooled_auc.value, fit.after.pooled_auc.value);
        }
        Command::Simulate(args) => {
            let mut config = match &args.config {
                Some(path) => {
                    if !path.exists() {
                        return Err(PipelineError::FileNotFound(path.clone()));
                    }
                    serde_json::from_str::<SimulationConfig>(&std::fs::read_to_string(path)?)
                        .map_err(|e| PipelineError::InvalidConfig(e.to_string()))?
                }
                None => SimulationConfig::default(),
            };
            if let Some(n) = args.samples {
                config.n_per_cell = n;
            }
            if let Some(s) = args.seed {
                config.seed = s;
            }
            if let Some(r) = args.search_resolution {
                config.search_resolution = r;
            }
            if let Some(t) = args.ties {
                config.ties = t;
            }
            let out = simulate(&config)?;
            write_simulation(&out, &args.out)?;
            let c = &out.closed_form;
            println!("closed form: xAUC(a,b) {:.4} xAUC(b,a) {:.4} delta {:.4}", c.xauc_ab, c.xauc_ba, c.delta_xauc);
            println!(
                "equal-AUC search: max |delta xAUC| {:.4} over {} feasible points",
                out.search.abs_delta_xauc, out.search.feasible_points
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
