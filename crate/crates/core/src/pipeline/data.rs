use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{PipelineError, Result};
use crate::models::TabularDataset;

/// How the columns of a preprocessed CSV file are interpreted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnRoles {
    pub label_col: String,
    pub group_col: String,
    /// Raw label value mapped to outcome `1`; every other value is `0`.
    pub positive_label: String,
    /// Optional renaming of raw group values, e.g. `"0" -> "white"`.
    #[serde(default)]
    pub group_map: BTreeMap<String, String>,
    /// Keep only rows whose (mapped) group is listed; empty keeps all rows.
    #[serde(default)]
    pub keep_groups: Vec<String>,
    /// Add group indicator columns to the feature matrix.
    #[serde(default)]
    pub group_as_feature: bool,
    /// Columns ignored entirely.
    #[serde(default)]
    pub drop_cols: Vec<String>,
    /// A precomputed score column, excluded from the features.
    #[serde(default)]
    pub score_col: Option<String>,
}

impl ColumnRoles {
    pub fn new(label_col: impl Into<String>, group_col: impl Into<String>, positive_label: impl Into<String>) -> Self {
        Self {
            label_col: label_col.into(),
            group_col: group_col.into(),
            positive_label: positive_label.into(),
            group_map: BTreeMap::new(),
            keep_groups: Vec::new(),
            group_as_feature: false,
            drop_cols: Vec::new(),
            score_col: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDataset {
    pub data: TabularDataset,
    /// Values of the score column, when one was declared.
    pub scores: Option<Vec<f64>>,
    pub group_counts: BTreeMap<String, usize>,
}

fn labels_match(raw: &str, positive: &str) -> bool {
    let (raw, positive) = (raw.trim(), positive.trim());
    if raw == positive {
        return true;
    }
    match (raw.parse::<f64>(), positive.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => false,
    }
}

fn parse_number(raw: &str, row: usize, column: &str) -> Result<f64> {
    match raw.trim().parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(PipelineError::NonNumericFeature {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

/// Read a headed CSV file. The label and group columns are mapped per
/// `roles`; every other column must be numeric and becomes a feature.
pub fn load_dataset(path: &Path, roles: &ColumnRoles) -> Result<LoadedDataset> {
    if !path.exists() {
        return Err(PipelineError::FileNotFound(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::MissingColumn(name.to_string()))
    };
    let label_idx = find(&roles.label_col)?;
    let group_idx = find(&roles.group_col)?;
    let score_idx = roles.score_col.as_deref().map(find).transpose()?;
    for c in &roles.drop_cols {
        find(c)?;
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| {
            i != label_idx
                && i != group_idx
                && Some(i) != score_idx
                && !roles.drop_cols.contains(&headers[i])
        })
        .collect();

    let keep: BTreeSet<&str> = roles.keep_groups.iter().map(String::as_str).collect();
    let mut features = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    let mut scores = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let raw_group = record.get(group_idx).unwrap_or("").trim();
        let group = roles
            .group_map
            .get(raw_group)
            .cloned()
            .unwrap_or_else(|| raw_group.to_string());
        if !keep.is_empty() && !keep.contains(group.as_str()) {
            continue;
        }
        for &c in &feature_cols {
            features.push(parse_number(record.get(c).unwrap_or(""), row, &headers[c])?);
        }
        if let Some(si) = score_idx {
            scores.push(parse_number(record.get(si).unwrap_or(""), row, &headers[si])?);
        }
        labels.push(u8::from(labels_match(record.get(label_idx).unwrap_or(""), &roles.positive_label)));
        groups.push(group);
    }
    if labels.is_empty() {
        return Err(PipelineError::EmptyDataset);
    }

    let mut feature_names: Vec<String> = feature_cols.iter().map(|&c| headers[c].clone()).collect();
    let mut n_features = feature_cols.len();
    let mut group_counts = BTreeMap::new();
    for g in &groups {
        *group_counts.entry(g.clone()).or_insert(0usize) += 1;
    }
    if roles.group_as_feature {
        // one indicator per group after the first (sorted) one
        let indicators: Vec<&String> = group_counts.keys().skip(1).collect();
        let n = labels.len();
        let mut widened = Vec::with_capacity(n * (n_features + indicators.len()));
        for i in 0..n {
            widened.extend_from_slice(&features[i * n_features..(i + 1) * n_features]);
            widened.extend(indicators.iter().map(|g| f64::from(u8::from(groups[i] == **g))));
        }
        features = widened;
        n_features += indicators.len();
        feature_names.extend(indicators.iter().map(|g| format!("{}={g}", roles.group_col)));
    }

    let data = TabularDataset::new(features, n_features, labels, groups, feature_names)?;
    Ok(LoadedDataset {
        data,
        scores: score_idx.map(|_| scores),
        group_counts,
    })
}

/// Seeded uniform permutation of `0..n`, cut into a training prefix of
/// `round(fraction * n)` rows and a test suffix.
pub fn split(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(PipelineError::InvalidConfig(format!(
            "train fraction {fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let n_train = (fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(PipelineError::DegenerateSplit {
            n_train,
            n_test: n.saturating_sub(n_train),
        });
    }
    let test = idx.split_off(n_train);
    Ok((idx, test))
}
