//! Cross-group ranking audits for predictive risk scores.
//!
//! A risk score is treated as a bipartite ranker: it should place individuals
//! with outcome `1` above individuals with outcome `0`. Within-group AUC only
//! compares members of the same group. The cross-group metrics here (xROC
//! curves, xAUC, the xAUC disparity and its balanced variants) compare the
//! positives of one group against the negatives of another, which surfaces
//! misranking burdens that within-group accuracy hides.
//!
//! The crate is organised by concern:
//!
//! - [`metrics`]: empirical AUC-type statistics on grouped score samples.
//! - [`inference`]: DeLong and bootstrap standard errors.
//! - [`report`]: the per-split audit bundle.
//! - [`models`]: logistic regression and bipartite RankBoost scorers.
//! - [`gaussian`]: closed-form analysis of Gaussian score models.
//! - [`adjust`]: monotone post-processing that equalizes xAUC.
//! - [`pipeline`]: CSV ingestion and the repeated split experiment harness.

pub mod adjust;
pub mod gaussian;
pub mod inference;
pub mod metrics;
pub mod models;
pub mod numeric;
pub mod pipeline;
pub mod report;

pub use metrics::{
    auc, balanced_xauc, brier_score, build_grouped, delta_xauc, xauc, xroc_curve, BalancedSide,
    CurveKind, CurvePoint, CurveSeries, GroupedScores, MetricsError, ScoredSample, TiePolicy,
};
pub use report::{AuditReport, Estimate};
