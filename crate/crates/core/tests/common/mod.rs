//! Slow, direct reference implementations used as test oracles.
#![allow(dead_code)]

use proptest::prelude::*;
use xauc::{GroupedScores, TiePolicy};

/// `(greater, equal, total)` by looping over every pair.
pub fn brute_pairs(pos: &[f64], neg: &[f64]) -> (u64, u64, u64) {
    let (mut gt, mut eq) = (0u64, 0u64);
    for &p in pos {
        for &n in neg {
            if p > n {
                gt += 1;
            } else if p == n {
                eq += 1;
            }
        }
    }
    (gt, eq, (pos.len() * neg.len()) as u64)
}

pub fn brute_prob(pos: &[f64], neg: &[f64], ties: TiePolicy) -> f64 {
    let (gt, eq, total) = brute_pairs(pos, neg);
    let num = match ties {
        TiePolicy::Strict => gt as f64,
        TiePolicy::Half => gt as f64 + 0.5 * eq as f64,
    };
    num / total as f64
}

/// DeLong standard error from per-pair kernel sums.
pub fn brute_delong(pos: &[f64], neg: &[f64]) -> f64 {
    let psi = |p: f64, n: f64| {
        if p > n {
            1.0
        } else if p == n {
            0.5
        } else {
            0.0
        }
    };
    let (m, n) = (pos.len() as f64, neg.len() as f64);
    let v10: Vec<f64> = pos.iter().map(|&p| neg.iter().map(|&x| psi(p, x)).sum::<f64>() / n).collect();
    let v01: Vec<f64> = neg.iter().map(|&x| pos.iter().map(|&p| psi(p, x)).sum::<f64>() / m).collect();
    let var = |v: &[f64]| {
        let mu = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
    };
    (var(&v10) / m + var(&v01) / n).sqrt()
}

pub fn pooled(g: &GroupedScores, outcome: u8) -> Vec<f64> {
    g.groups().flat_map(|grp| g.cell_or_empty(grp, outcome).to_vec()).collect()
}

/// One cell: 1..=max_len scores, drawn from a coarse lattice when `tied`.
fn cell(max_len: usize, tied: bool) -> BoxedStrategy<Vec<f64>> {
    if tied {
        prop::collection::vec((0u8..12).prop_map(|k| f64::from(k) / 11.0), 1..=max_len).boxed()
    } else {
        prop::collection::vec(-50.0f64..50.0, 1..=max_len).boxed()
    }
}

/// Two or three groups with every cell nonempty; about half the instances
/// use a coarse lattice so ties are common. At most `4 * max_cell` or
/// `6 * max_cell` scores in total.
pub fn grouped_scores(max_cell: usize) -> impl Strategy<Value = GroupedScores> {
    (2usize..=3, any::<bool>()).prop_flat_map(move |(k, tied)| {
        prop::collection::vec((cell(max_cell, tied), cell(max_cell, tied)), k).prop_map(|cells| {
            let mut g = GroupedScores::default();
            for (i, (neg, pos)) in cells.into_iter().enumerate() {
                let name = ["g0", "g1", "g2"][i];
                g.insert_cell(name, 0, neg).unwrap();
                g.insert_cell(name, 1, pos).unwrap();
            }
            g
        })
    })
}
