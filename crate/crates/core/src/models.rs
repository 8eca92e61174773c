//! Scorers that turn tabular features into risk scores: L2-regularized
//! logistic regression, bipartite RankBoost over threshold stumps, and Platt
//! scaling to calibrate RankBoost margins into probabilities.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("training data contains a single class")]
    SingleClassData,
    #[error("expected {expected} features, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("feature value at row {row}, column {column} is not finite")]
    NonFiniteFeature { row: usize, column: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("scorer document: {0}")]
    Document(String),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Row-major feature matrix with binary labels and group memberships.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularDataset {
    n_rows: usize,
    n_features: usize,
    features: Vec<f64>,
    pub labels: Vec<u8>,
    pub groups: Vec<String>,
    pub feature_names: Vec<String>,
}

impl TabularDataset {
    pub fn new(
        features: Vec<f64>,
        n_features: usize,
        labels: Vec<u8>,
        groups: Vec<String>,
        feature_names: Vec<String>,
    ) -> Result<Self> {
        let n_rows = labels.len();
        if features.len() != n_rows * n_features {
            return Err(ModelError::DimensionMismatch {
                expected: n_rows * n_features,
                got: features.len(),
            });
        }
        if groups.len() != n_rows {
            return Err(ModelError::InvalidParameter(format!(
                "{} group values for {n_rows} rows",
                groups.len()
            )));
        }
        if feature_names.len() != n_features {
            return Err(ModelError::InvalidParameter(format!(
                "{} feature names for {n_features} features",
                feature_names.len()
            )));
        }
        if let Some(pos) = features.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteFeature {
                row: pos / n_features.max(1),
                column: pos % n_features.max(1),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&y| y > 1) {
            return Err(ModelError::InvalidParameter(format!("label {bad} is not 0 or 1")));
        }
        Ok(Self {
            n_rows,
            n_features,
            features,
            labels,
            groups,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    /// Rows selected by `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: indices.len(),
            n_features: self.n_features,
            features,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            groups: indices.iter().map(|&i| self.groups[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// `(negatives, positives)`
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.labels.iter().filter(|&&y| y == 1).count();
        (self.n_rows - pos, pos)
    }

    fn require_both_classes(&self) -> Result<()> {
        let (neg, pos) = self.class_counts();
        if neg == 0 || pos == 0 {
            Err(ModelError::SingleClassData)
        } else {
            Ok(())
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Logistic,
    Rankboost,
    RankboostCal,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Logistic => "logistic",
            ModelKind::Rankboost => "rankboost",
            ModelKind::RankboostCal => "rankboost-cal",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "logistic" => Ok(ModelKind::Logistic),
            "rankboost" => Ok(ModelKind::Rankboost),
            "rankboost-cal" => Ok(ModelKind::RankboostCal),
            other => Err(format!(
                "unknown model `{other}` (expected logistic, rankboost or rankboost-cal)"
            )),
        }
    }
}

/// Convergence record of a fit. Non-convergence is reported, not raised.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// Objective value after each iteration, starting with the initial value.
    pub loss_trace: Vec<f64>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    /// Weights on standardized features.
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub center: Vec<f64>,
    pub scale: Vec<f64>,
}

impl LogisticModel {
    fn linear(&self, row: &[f64]) -> f64 {
        let mut z = self.intercept;
        for (j, &x) in row.iter().enumerate() {
            z += self.weights[j] * (x - self.center[j]) / self.scale[j];
        }
        z
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogisticOptions {
    /// Inverse of sklearn's `C`; the penalty is `reg_strength / 2 * |w|^2`
    /// against the summed log-loss.
    pub reg_strength: f64,
    pub max_iter: usize,
    /// Convergence threshold on the infinity norm of the mean-loss gradient.
    pub tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            reg_strength: 1.0,
            max_iter: 100,
            tol: 1e-8,
        }
    }
}

fn standardize(data: &TabularDataset) -> (Vec<f64>, Vec<f64>) {
    let (n, p) = (data.n_rows, data.n_features);
    let mut center = vec![0.0; p];
    let mut scale = vec![1.0; p];
    for j in 0..p {
        let col: Vec<f64> = (0..n).map(|i| data.features[i * p + j]).collect();
        let m = numeric::mean(&col);
        let var = numeric::sum(col.iter().map(|x| (x - m) * (x - m))) / n as f64;
        center[j] = m;
        scale[j] = if var > 1e-24 { var.sqrt() } else { 1.0 };
    }
    (center, scale)
}

/// Fit L2-regularized logistic regression by damped Newton steps on
/// standardized features.
pub fn train_logistic(data: &TabularDataset, opts: LogisticOptions) -> Result<(LogisticModel, FitDiagnostics)> {
    data.require_both_classes()?;
    if !(opts.reg_strength > 0.0 && opts.reg_strength.is_finite()) {
        return Err(ModelError::InvalidParameter(format!(
            "reg_strength must be positive, got {}",
            opts.reg_strength
        )));
    }
    let (n, p) = (data.n_rows, data.n_features);
    let (center, scale) = standardize(data);
    // design matrix with a trailing intercept column
    let design = DMatrix::from_fn(n, p + 1, |i, j| {
        if j == p {
            1.0
        } else {
            (data.features[i * p + j] - center[j]) / scale[j]
        }
    });
    let y = DVector::from_iterator(n, data.labels.iter().map(|&v| v as f64));
    let nf = n as f64;
    let lambda = opts.reg_strength / nf;

    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = &design * beta;
        let loss = numeric::sum(eta.iter().zip(y.iter()).map(|(&e, &t)| softplus(e) - t * e)) / nf;
        let penalty = numeric::sum(beta.iter().take(p).map(|w| w * w));
        loss + 0.5 * lambda * penalty
    };

    let mut beta = DVector::zeros(p + 1);
    let mut loss = objective(&beta);
    let mut diag = FitDiagnostics {
        loss_trace: vec![loss],
        ..Default::default()
    };

    for iter in 0..opts.max_iter {
        let eta = &design * &beta;
        let prob = eta.map(sigmoid);
        let resid = &prob - &y;
        let mut grad = design.tr_mul(&resid) / nf;
        for j in 0..p {
            grad[j] += lambda * beta[j];
        }
        if grad.amax() < opts.tol {
            diag.converged = true;
            diag.iterations = iter;
            break;
        }
        let weights = prob.map(|q| (q * (1.0 - q)).max(1e-12).sqrt() / nf.sqrt());
        let mut scaled = design.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= weights[i];
        }
        let mut hess = scaled.tr_mul(&scaled);
        for j in 0..p {
            hess[(j, j)] += lambda;
        }
        hess[(p, p)] += 1e-12;
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => {
                diag.notes.push(format!("iteration {iter}: Hessian not positive definite"));
                grad.clone()
            }
        };

        // backtracking keeps the objective nonincreasing
        let slope = grad.dot(&step);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand = &beta - &step * t;
            let cand_loss = objective(&cand);
            if cand_loss <= loss - 1e-4 * t * slope {
                accepted = Some((cand, cand_loss));
                break;
            }
            t *= 0.5;
        }
        diag.iterations = iter + 1;
        match accepted {
            Some((b, l)) => {
                beta = b;
                loss = l;
                diag.loss_trace.push(loss);
            }
            None => {
                diag.notes.push("line search made no progress".into());
                diag.converged = grad.amax() < opts.tol.sqrt();
                break;
            }
        }
    }
    if !diag.converged && diag.iterations >= opts.max_iter {
        diag.notes.push(format!("no convergence after {} iterations", opts.max_iter));
    }

    Ok((
        LogisticModel {
            weights: beta.iter().take(p).copied().collect(),
            intercept: beta[p],
            center,
            scale,
        },
        diag,
    ))
}

/// Indicator weak ranker: `1` when `x[feature] > threshold` (or `<=` when
/// `above` is false), otherwise `0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub above: bool,
    pub alpha: f64,
}

impl Stump {
    fn fires(&self, x: f64) -> bool {
        (x > self.threshold) == self.above
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankBoostModel {
    pub n_features: usize,
    pub stumps: Vec<Stump>,
}

impl RankBoostModel {
    fn margin(&self, row: &[f64]) -> f64 {
        self.stumps
            .iter()
            .filter(|s| s.fires(row[s.feature]))
            .map(|s| s.alpha)
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankBoostOptions {
    pub rounds: usize,
}

impl Default for RankBoostOptions {
    fn default() -> Self {
        Self { rounds: 100 }
    }
}

/// Largest edge accepted before the round is treated as a perfect split.
const MAX_EDGE: f64 = 1.0 - 1e-9;

/// Per-feature sorted distinct values and each row's bucket among them.
struct FeatureBuckets {
    values: Vec<Vec<f64>>,
    bucket: Vec<Vec<u32>>,
}

impl FeatureBuckets {
    fn new(data: &TabularDataset) -> Self {
        let (n, p) = (data.n_rows, data.n_features);
        let mut values = Vec::with_capacity(p);
        let mut bucket = Vec::with_capacity(p);
        for j in 0..p {
            let mut distinct: Vec<f64> = (0..n).map(|i| data.features[i * p + j]).collect();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            let b = (0..n)
                .map(|i| distinct.partition_point(|&v| v < data.features[i * p + j]) as u32)
                .collect();
            values.push(distinct);
            bucket.push(b);
        }
        Self { values, bucket }
    }
}

/// Bipartite RankBoost with single-feature threshold stumps.
///
/// Positive and negative examples carry separate weight vectors whose outer
/// product is the pair distribution. Each round picks the stump with the
/// largest `|r|`, `r = sum_pos v h - sum_neg v h`, orienting it so `r >= 0`,
/// and weights it by `alpha = ln((1 + r) / (1 - r)) / 2`. Ties go to the
/// lowest feature index, then the lowest threshold.
pub fn train_rankboost(data: &TabularDataset, opts: RankBoostOptions) -> Result<(RankBoostModel, FitDiagnostics)> {
    data.require_both_classes()?;
    if opts.rounds == 0 {
        return Err(ModelError::InvalidParameter("rounds must be at least 1".into()));
    }
    let buckets = FeatureBuckets::new(data);
    let (n_neg, n_pos) = data.class_counts();
    // signed weight: +v for positives, -v for negatives
    let mut v: Vec<f64> = data
        .labels
        .iter()
        .map(|&y| if y == 1 { 1.0 / n_pos as f64 } else { -1.0 / n_neg as f64 })
        .collect();

    let mut stumps = Vec::new();
    let mut loss = 1.0;
    let mut diag = FitDiagnostics {
        loss_trace: vec![loss],
        ..Default::default()
    };
    let mut edges = Vec::new();

    for round in 0..opts.rounds {
        // best = (|r|, r, feature, bucket k): stump fires above values[k]
        let mut best: Option<(f64, f64, usize, usize)> = None;
        for (j, distinct) in buckets.values.iter().enumerate() {
            if distinct.len() < 2 {
                continue;
            }
            let mut mass = vec![0.0; distinct.len()];
            for (i, &b) in buckets.bucket[j].iter().enumerate() {
                mass[b as usize] += v[i];
            }
            // r(k) = signed mass strictly above bucket k, for k in 0..len-1
            let mut above = vec![0.0; distinct.len()];
            let mut acc = 0.0;
            for k in (0..distinct.len()).rev() {
                above[k] = acc;
                acc += mass[k];
            }
            for (k, &r) in above.iter().enumerate().take(distinct.len() - 1) {
                if best.is_none_or(|b| r.abs() > b.0) {
                    best = Some((r.abs(), r, j, k));
                }
            }
        }
        let Some((edge, r, feature, k)) = best else {
            diag.notes.push("no feature has two distinct values".into());
            break;
        };
        if edge <= 1e-12 {
            diag.notes.push(format!("round {round}: no stump has a positive edge"));
            break;
        }
        let degenerate = edge >= MAX_EDGE;
        let capped = edge.min(MAX_EDGE);
        let alpha = 0.5 * ((1.0 + capped) / (1.0 - capped)).ln();
        let values = &buckets.values[feature];
        let stump = Stump {
            feature,
            threshold: 0.5 * (values[k] + values[k + 1]),
            above: r > 0.0,
            alpha,
        };
        stumps.push(stump);
        edges.push(edge);

        let (mut z_pos, mut z_neg) = (0.0, 0.0);
        for (vi, &bucket) in v.iter_mut().zip(&buckets.bucket[feature]) {
            let fires = (bucket as usize > k) == stump.above;
            if fires {
                *vi *= if *vi > 0.0 { (-alpha).exp() } else { alpha.exp() };
            }
            if *vi > 0.0 {
                z_pos += *vi;
            } else {
                z_neg -= *vi;
            }
        }
        for w in v.iter_mut() {
            *w /= if *w > 0.0 { z_pos } else { z_neg };
        }
        loss *= z_pos * z_neg;
        diag.loss_trace.push(loss);
        diag.iterations = round + 1;
        if degenerate {
            diag.notes.push(format!("round {round}: edge {edge} capped; training pairs fully separated"));
            break;
        }
    }
    diag.converged = true;
    if !edges.is_empty() {
        diag.notes.push(format!(
            "edges: first {:.4}, last {:.4}",
            edges[0],
            edges[edges.len() - 1]
        ));
    }
    Ok((
        RankBoostModel {
            n_features: data.n_features,
            stumps,
        },
        diag,
    ))
}

/// `P(y = 1 | s) = sigmoid(a * s + b)` with `a >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlattCalibrator {
    pub a: f64,
    pub b: f64,
    /// The fitted slope was not positive and the best constant was used.
    pub fallback: bool,
}

impl PlattCalibrator {
    pub fn apply(&self, s: f64) -> f64 {
        sigmoid(self.a * s + self.b)
    }
}

/// Fit Platt scaling by Newton's method with smoothed targets
/// `(n+ + 1) / (n+ + 2)` and `1 / (n- + 2)`.
pub fn platt_scale(raw: &[f64], labels: &[u8], max_iter: usize, tol: f64) -> Result<PlattCalibrator> {
    if raw.len() != labels.len() {
        return Err(ModelError::DimensionMismatch {
            expected: raw.len(),
            got: labels.len(),
        });
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(ModelError::SingleClassData);
    }
    if let Some(pos) = raw.iter().position(|s| !s.is_finite()) {
        return Err(ModelError::NonFiniteFeature { row: pos, column: 0 });
    }
    let hi = (n_pos as f64 + 1.0) / (n_pos as f64 + 2.0);
    let lo = 1.0 / (n_neg as f64 + 2.0);
    let targets: Vec<f64> = labels.iter().map(|&y| if y == 1 { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        numeric::sum(raw.iter().zip(&targets).map(|(&s, &t)| {
            let z = a * s + b;
            softplus(z) - t * z
        }))
    };
    let mut a = 0.0;
    let mut b = ((n_pos as f64 + 1.0) / (n_neg as f64 + 1.0)).ln();
    let mut f = objective(a, b);
    for _ in 0..max_iter {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 1e-12, 0.0, 1e-12);
        for (&s, &t) in raw.iter().zip(&targets) {
            let p = sigmoid(a * s + b);
            let d = p - t;
            let w = p * (1.0 - p);
            ga += d * s;
            gb += d;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        if ga.abs() < tol && gb.abs() < tol {
            break;
        }
        let det = haa * hbb - hab * hab;
        let da = -(hbb * ga - hab * gb) / det;
        let db = -(-hab * ga + haa * gb) / det;
        let slope = ga * da + gb * db;
        let mut step = 1.0;
        let mut moved = false;
        while step >= 1e-10 {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < f + 1e-4 * step * slope {
                a = na;
                b = nb;
                f = nf;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if a > 0.0 {
        Ok(PlattCalibrator { a, b, fallback: false })
    } else {
        let mean_t = numeric::mean(&targets);
        Ok(PlattCalibrator {
            a: 0.0,
            b: (mean_t / (1.0 - mean_t)).ln(),
            fallback: true,
        })
    }
}

/// A trained risk scorer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Scorer {
    Logistic(LogisticModel),
    Rankboost(RankBoostModel),
    RankboostCalibrated {
        ensemble: RankBoostModel,
        calibrator: PlattCalibrator,
    },
}

pub const SCORER_DOCUMENT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ScorerDocument {
    version: u32,
    scorer: Scorer,
}

impl Scorer {
    pub fn n_features(&self) -> usize {
        match self {
            Scorer::Logistic(m) => m.weights.len(),
            Scorer::Rankboost(m) | Scorer::RankboostCalibrated { ensemble: m, .. } => m.n_features,
        }
    }

    /// Whether outputs are probabilities in `(0, 1)`.
    pub fn is_probabilistic(&self) -> bool {
        !matches!(self, Scorer::Rankboost(_))
    }

    fn score_row(&self, row: &[f64]) -> f64 {
        match self {
            Scorer::Logistic(m) => sigmoid(m.linear(row)),
            Scorer::Rankboost(m) => m.margin(row),
            Scorer::RankboostCalibrated { ensemble, calibrator } => calibrator.apply(ensemble.margin(row)),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ScorerDocument {
            version: SCORER_DOCUMENT_VERSION,
            scorer: self.clone(),
        })
        .expect("scorer serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ScorerDocument = serde_json::from_str(text).map_err(|e| ModelError::Document(e.to_string()))?;
        if doc.version != SCORER_DOCUMENT_VERSION {
            return Err(ModelError::Document(format!(
                "unsupported version {} (expected {SCORER_DOCUMENT_VERSION})",
                doc.version
            )));
        }
        Ok(doc.scorer)
    }
}

/// Score a row-major feature matrix of width `scorer.n_features()`.
pub fn score(scorer: &Scorer, features: &[f64], n_features: usize) -> Result<Vec<f64>> {
    if n_features != scorer.n_features() {
        return Err(ModelError::DimensionMismatch {
            expected: scorer.n_features(),
            got: n_features,
        });
    }
    if n_features == 0 {
        return Ok(Vec::new());
    }
    if !features.len().is_multiple_of(n_features) {
        return Err(ModelError::DimensionMismatch {
            expected: n_features,
            got: features.len() % n_features,
        });
    }
    Ok(features.chunks(n_features).map(|row| scorer.score_row(row)).collect())
}

pub fn score_dataset(scorer: &Scorer, data: &TabularDataset) -> Result<Vec<f64>> {
    score(scorer, data.features(), data.n_features())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOptions {
    pub logistic: LogisticOptions,
    pub rankboost: RankBoostOptions,
    pub platt_max_iter: usize,
    pub platt_tol: f64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            logistic: LogisticOptions::default(),
            rankboost: RankBoostOptions::default(),
            platt_max_iter: 100,
            platt_tol: 1e-10,
        }
    }
}

/// Train a scorer of the requested kind. Platt scaling for the calibrated
/// RankBoost variant is fitted on the training margins.
pub fn train(kind: ModelKind, data: &TabularDataset, opts: &TrainOptions) -> Result<(Scorer, FitDiagnostics)> {
    match kind {
        ModelKind::Logistic => {
            let (m, d) = train_logistic(data, opts.logistic)?;
            Ok((Scorer::Logistic(m), d))
        }
        ModelKind::Rankboost => {
            let (m, d) = train_rankboost(data, opts.rankboost)?;
            Ok((Scorer::Rankboost(m), d))
        }
        ModelKind::RankboostCal => {
            let (m, mut d) = train_rankboost(data, opts.rankboost)?;
            let raw = score(&Scorer::Rankboost(m.clone()), data.features(), data.n_features())?;
            let calibrator = platt_scale(&raw, &data.labels, opts.platt_max_iter, opts.platt_tol)?;
            if calibrator.fallback {
                d.notes.push("Platt slope not positive; constant calibration used".into());
            }
            Ok((
                Scorer::RankboostCalibrated {
                    ensemble: m,
                    calibrator,
                },
                d,
            ))
        }
    }
}
