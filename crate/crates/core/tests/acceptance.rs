//! Acceptance run: prints one PASS/FAIL/SKIP line per criterion and exits
//! nonzero if any criterion fails.
//!
//! The dataset criteria read preprocessed CSV files named by `XAUC_COMPAS_CSV`
//! and `XAUC_ADULT_CSV`. Each file needs a `label` column (`1` for the
//! favourable outcome), a `group` column with values `black` and `white`,
//! and numeric feature columns.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{brute_prob, pooled};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xauc::adjust::{verify_eqop_identity, LogisticAdjustOptions};
use xauc::gaussian::{closed_form_xauc, sample_scores, GaussianGroupModel, GroupParams};
use xauc::inference::{bootstrap_se, delong_se};
use xauc::metrics::{conditional_xauc, decompose_auc, group_roc_curve, pooled_roc_curve};
use xauc::models::{ModelKind, TrainOptions};
use xauc::pipeline::{
    audit_scores, load_dataset, run_experiment, ColumnRoles, ExperimentConfig, ExperimentResult, ScoreSource,
};
use xauc::{auc, delta_xauc, xauc, xroc_curve, CurveSeries, GroupedScores, TiePolicy};

const POLICIES: [TiePolicy; 2] = [TiePolicy::Strict, TiePolicy::Half];

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

/// Random instance with at most 198 scores; about half use a coarse lattice.
fn random_instance(rng: &mut ChaCha8Rng) -> GroupedScores {
    let k = rng.random_range(2..=3);
    let tied = rng.random_bool(0.5);
    let mut g = GroupedScores::default();
    for name in ["g0", "g1", "g2"].iter().take(k) {
        for y in [0, 1] {
            let len = rng.random_range(1..=33);
            let cell: Vec<f64> = (0..len)
                .map(|_| {
                    if tied {
                        f64::from(rng.random_range(0u8..10)) / 9.0
                    } else {
                        rng.random_range(-5.0..5.0)
                    }
                })
                .collect();
            g.insert_cell(name, y, cell).unwrap();
        }
    }
    g
}

fn groups_of(g: &GroupedScores) -> Vec<String> {
    g.groups().map(str::to_string).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let g = random_instance(&mut rng);
        let groups = groups_of(&g);
        for ties in POLICIES {
            for a in &groups {
                let (pos, neg) = (g.cell(a, 1).unwrap(), g.cell(a, 0).unwrap());
                mismatches += usize::from(auc(pos, neg, ties).unwrap() != brute_prob(pos, neg, ties));
                for b in &groups {
                    let want = brute_prob(pos, g.cell(b, 0).unwrap(), ties);
                    mismatches += usize::from(xauc(&g, a, b, ties).unwrap() != want);
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        mismatches == 0 && secs < 10.0,
        format!("1000 instances, {mismatches} mismatches against pair loop, {secs:.2}s (limit 10s)"),
    )
}

fn audited_datasets() -> Vec<GroupedScores> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.csv");
    write_synthetic_csv(&path, 1500, 3);
    let loaded = load_dataset(&path, &roles()).unwrap();
    let mut out = Vec::new();
    for model in [ModelKind::Logistic, ModelKind::RankboostCal] {
        let source = ScoreSource::Train {
            model,
            train_fraction: 0.7,
            seed: 0,
            options: TrainOptions::default(),
        };
        out.push(audit_scores(&loaded, &source, TiePolicy::Strict).unwrap().scores);
    }
    out
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    let mut instances: Vec<GroupedScores> = (0..1000).map(|_| random_instance(&mut rng)).collect();
    instances.extend(audited_datasets());
    for g in &instances {
        for ties in POLICIES {
            let d = decompose_auc(g, ties).unwrap();
            let direct = brute_prob(&pooled(g, 1), &pooled(g, 0), ties);
            worst = worst.max(d.max_residual()).max((d.pooled_auc - direct).abs());
        }
    }
    check(
        worst < 1e-12,
        format!("{} instances incl. 2 audited datasets, max residual {worst:.2e} (limit 1e-12)", instances.len()),
    )
}

fn criterion_3() -> Outcome {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_z: f64 = 0.0;
    for k in 0..20 {
        let mut params = || {
            GroupParams::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-0.5..2.0),
                rng.random_range(0.05..2.0),
                rng.random_range(0.05..2.0),
            )
            .unwrap()
        };
        let m = GaussianGroupModel::new().with_group("a", params()).with_group("b", params());
        let g = sample_scores(&m, n, 1000 + k).unwrap();
        for (a, b) in [("a", "b"), ("b", "a")] {
            let p = closed_form_xauc(&m, a, b).unwrap();
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let z = (xauc(&g, a, b, TiePolicy::Strict).unwrap() - p).abs() / se;
            worst_z = worst_z.max(z);
        }
    }
    let point = GaussianGroupModel::new()
        .with_group("a", GroupParams::new(0.25, 0.75, 0.25, 0.25).unwrap())
        .with_group("b", GroupParams::new(0.25, 0.75, 0.25, 0.25).unwrap());
    let closed = closed_form_xauc(&point, "a", "b").unwrap();
    let mc = xauc(&sample_scores(&point, n, 77).unwrap(), "a", "b", TiePolicy::Strict).unwrap();
    let gap = (closed - mc).abs();
    check(
        worst_z < 3.0 && gap < 0.002,
        format!(
            "20 models x 1e5/cell: max |emp - closed| = {worst_z:.2} binomial SE (limit 3); \
             mu_a1=0.75, mu_b0=0.25, var=0.25: closed {closed:.5} vs MC {mc:.5} (limit 0.002)"
        ),
    )
}

fn dataset_path(var: &str) -> Result<PathBuf, String> {
    match std::env::var_os(var) {
        None => Err(format!("{var} not set")),
        Some(p) => {
            let p = PathBuf::from(p);
            if p.exists() {
                Ok(p)
            } else {
                Err(format!("{} does not exist", p.display()))
            }
        }
    }
}

fn paper_experiment(path: &Path) -> (ExperimentResult, f64) {
    let mut c = ExperimentConfig::new(path, roles(), ModelKind::Logistic);
    c.n_runs = 50;
    let start = Instant::now();
    let r = run_experiment(&c).unwrap();
    (r, start.elapsed().as_secs_f64())
}

fn within(r: &ExperimentResult, key: &str, target: f64, tol: f64, notes: &mut Vec<String>) -> bool {
    let v = r.metric(key).map_or(f64::NAN, |m| m.mean);
    notes.push(format!("{key} {v:.3} (paper {target}, tol {tol})"));
    (v - target).abs() <= tol
}

fn criterion_4() -> Outcome {
    let compas = match dataset_path("XAUC_COMPAS_CSV") {
        Ok(p) => p,
        Err(why) => return Outcome::Skip(format!("COMPAS data unavailable: {why}")),
    };
    let mut notes = Vec::new();
    let (r, secs) = paper_experiment(&compas);
    let mut ok = secs < 300.0;
    notes.push(format!("{secs:.0}s"));
    ok &= within(&r, "auc/black", 0.737, 0.03, &mut notes);
    ok &= within(&r, "auc/white", 0.701, 0.03, &mut notes);
    ok &= within(&r, "xauc/black/white", 0.604, 0.05, &mut notes);
    ok &= within(&r, "xauc/white/black", 0.813, 0.05, &mut notes);
    ok &= within(&r, "delta_xauc/black/white", -0.21, 0.05, &mut notes);
    ok &= within(&r, "brier/black", 0.208, 0.02, &mut notes);
    ok &= within(&r, "brier/white", 0.21, 0.02, &mut notes);
    match dataset_path("XAUC_ADULT_CSV") {
        Ok(adult) => {
            let (r, _) = paper_experiment(&adult);
            ok &= within(&r, "auc/black", 0.923, 0.02, &mut notes);
            ok &= within(&r, "auc/white", 0.898, 0.02, &mut notes);
            ok &= within(&r, "xauc/black/white", 0.865, 0.03, &mut notes);
            ok &= within(&r, "xauc/white/black", 0.944, 0.03, &mut notes);
        }
        Err(why) => notes.push(format!("Adult part skipped: {why}")),
    }
    check(ok, notes.join("; "))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pos: Vec<f64> = (0..500).map(|_| rng.random::<f64>() + 0.3).collect();
    let neg: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
    let d = delong_se(&pos, &neg, TiePolicy::Strict).unwrap();
    let b = bootstrap_se(&pos, &neg, TiePolicy::Strict, 1000, 55).unwrap();
    let ratio = d.se / b.se;
    let mut ok = (1.0 / 1.25..=1.25).contains(&ratio);
    let mut detail = format!("synthetic n=500/class: DeLong {:.5} vs bootstrap {:.5}, ratio {ratio:.3} (limit x1.25)", d.se, b.se);
    match dataset_path("XAUC_COMPAS_CSV") {
        Ok(p) => {
            let (r, _) = paper_experiment(&p);
            let se = r.metric("xauc/black/white").and_then(|m| m.mean_delong_se).unwrap_or(f64::NAN);
            ok &= (0.5 * 0.023..=2.0 * 0.023).contains(&se);
            detail.push_str(&format!("; COMPAS xAUC(black,white) DeLong SE {se:.4} (paper 0.023, x[0.5, 2])"));
        }
        Err(why) => detail.push_str(&format!("; COMPAS part skipped: {why}")),
    }
    check(ok, detail)
}

fn criterion_6() -> Outcome {
    let compas = match dataset_path("XAUC_COMPAS_CSV") {
        Ok(p) => p,
        Err(why) => return Outcome::Skip(format!("COMPAS data unavailable: {why}")),
    };
    let loaded = load_dataset(&compas, &roles()).unwrap();
    let source = ScoreSource::Train {
        model: ModelKind::Logistic,
        train_fraction: 0.7,
        seed: 0,
        options: TrainOptions::default(),
    };
    let out = xauc::pipeline::adjust_scores(&loaded, &source, Some("black"), Some("white"), LogisticAdjustOptions::default())
        .unwrap();
    let fit = &out.adjustment;
    let drop = fit.before.pooled_auc.value - fit.after.pooled_auc.value;
    check(
        fit.objective <= 0.02 && drop <= 0.02 && (3.5..=5.0).contains(&fit.alpha),
        format!(
            "|delta xAUC| {:.4} (limit 0.02), pooled AUC {:.3} -> {:.3} (drop limit 0.02), alpha {:.2} (range [3.5, 5.0])",
            fit.objective, fit.before.pooled_auc.value, fit.after.pooled_auc.value, fit.alpha
        ),
    )
}

fn criterion_7() -> Outcome {
    let m = GaussianGroupModel::new()
        .with_group("a", GroupParams::new(0.0, 1.3, 1.0, 0.8).unwrap())
        .with_group("b", GroupParams::new(-0.4, 0.5, 0.7, 1.1).unwrap());
    let g = sample_scores(&m, 100_000, 7).unwrap();
    let c = verify_eqop_identity(&g, "a", "b", TiePolicy::Strict).unwrap();
    check(
        c.residual.abs() < 0.005,
        format!(
            "n=1e5/cell: delta xAUC after {:.5}, AUC^b - AUC^a {:.5}, residual {:.2e} (limit 0.005)",
            c.delta_after,
            c.auc_b - c.auc_a,
            c.residual.abs()
        ),
    )
}

fn curve_ok(c: &CurveSeries) -> bool {
    let (first, last) = (c.points[0], c.points[c.points.len() - 1]);
    (first.x, first.y, last.x, last.y) == (0.0, 0.0, 1.0, 1.0)
        && c.points.windows(2).all(|w| w[1].x >= w[0].x && w[1].y >= w[0].y)
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures: BTreeMap<&str, usize> = BTreeMap::new();
    for _ in 0..300 {
        let g = random_instance(&mut rng);
        let h = g.map_all(|s| (2.0 * s).exp() + 3.0);
        let groups = groups_of(&g);
        for ties in POLICIES {
            for a in &groups {
                for b in &groups {
                    if xauc(&g, a, b, ties).unwrap() != xauc(&h, a, b, ties).unwrap() {
                        *failures.entry("monotone invariance").or_default() += 1;
                    }
                    if delta_xauc(&g, a, b, ties).unwrap() != -delta_xauc(&g, b, a, ties).unwrap() {
                        *failures.entry("antisymmetry").or_default() += 1;
                    }
                    let c = conditional_xauc(&g, a, b, ties).unwrap();
                    let mean = c.iter().sum::<f64>() / c.len() as f64;
                    if (mean - xauc(&g, a, b, ties).unwrap()).abs() > 1e-12 {
                        *failures.entry("conditional mean").or_default() += 1;
                    }
                    if !curve_ok(&xroc_curve(&g, a, b).unwrap()) {
                        *failures.entry("curve shape").or_default() += 1;
                    }
                }
                if !curve_ok(&group_roc_curve(&g, a).unwrap()) {
                    *failures.entry("curve shape").or_default() += 1;
                }
            }
        }
        if !curve_ok(&pooled_roc_curve(&g).unwrap()) {
            *failures.entry("curve shape").or_default() += 1;
        }
    }
    // null data: independent uniform scores
    let mut null = GroupedScores::default();
    for name in ["a", "b"] {
        for y in [0, 1] {
            null.insert_cell(name, y, (0..4000).map(|_| rng.random::<f64>()).collect()).unwrap();
        }
    }
    let null_auc = auc(&null.pooled(1), &null.pooled(0), TiePolicy::Strict).unwrap();
    let null_se = delong_se(&null.pooled(1), &null.pooled(0), TiePolicy::Strict).unwrap().se;
    if (null_auc - 0.5).abs() > 3.0 * null_se {
        failures.insert("null AUC", 1);
    }
    check(
        failures.is_empty(),
        format!(
            "300 instances x 2 tie policies; null AUC {null_auc:.4} (se {null_se:.4}); failures: {}",
            if failures.is_empty() { "none".to_string() } else { format!("{failures:?}") }
        ),
    )
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().display().to_string(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synthetic.csv");
    write_synthetic_csv(&path, 1200, 9);
    let mut trees = Vec::new();
    for (i, workers) in [1usize, 4].into_iter().enumerate() {
        let mut c = ExperimentConfig::new(&path, roles(), ModelKind::Logistic);
        c.n_runs = 8;
        c.workers = workers;
        c.out_dir = Some(dir.path().join(format!("out{i}")));
        run_experiment(&c).unwrap();
        trees.push(read_tree(c.out_dir.as_ref().unwrap()));
    }
    check(
        !trees[0].is_empty() && trees[0] == trees[1],
        format!("{} output files compared between 1 and 4 workers", trees[0].len()),
    )
}

fn roles() -> ColumnRoles {
    ColumnRoles::new("label", "group", "1")
}

/// Two groups whose outcome depends on the features with group-specific
/// strength, so cross-group disparities are nonzero.
fn write_synthetic_csv(path: &Path, n: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<String> = (0..n)
        .map(|i| {
            let grp = if i % 3 == 0 { "black" } else { "white" };
            let x: [f64; 3] = [rng.random(), rng.random(), rng.random()];
            let shift = if grp == "black" { 0.3 } else { 0.0 };
            let z = 2.0 * x[0] - x[1] + shift - 0.6 + rng.random_range(-1.0..1.0);
            format!("{},{},{},{},{}", x[0], x[1], x[2], u8::from(z > 0.0), grp)
        })
        .collect();
    rows.shuffle(&mut rng);
    fs::write(path, format!("f1,f2,f3,label,group\n{}\n", rows.join("\n"))).unwrap();
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome);
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", criterion_1),
        ("AUC decomposition", criterion_2),
        ("Gaussian closed form", criterion_3),
        ("Table 1 reproduction", criterion_4),
        ("Table 2 standard errors", criterion_5),
        ("Table 3 adjustment", criterion_6),
        ("equal-opportunity identity", criterion_7),
        ("invariance suite", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let line = match f() {
            Outcome::Pass(d) => format!("PASS  {} {name}: {d}", i + 1),
            Outcome::Fail(d) => {
                failed += 1;
                format!("FAIL  {} {name}: {d}", i + 1)
            }
            Outcome::Skip(d) => format!("SKIP  {} {name}: {d}", i + 1),
        };
        println!("{line}");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
