//! Shared test support: brute-force reference implementations written as
//! straight-line loops over plain arrays, plus seeded random generators.
//! The references deliberately avoid the library's internal structures so
//! agreement between the two is meaningful.

#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use mcaudit::joint::{Atom, FiniteJoint};

// ---------------------------------------------------------------------------
// reference metrics

pub fn ref_mse(preds: &[f64], labels: &[u8]) -> f64 {
    let mut total = 0.0;
    for i in 0..preds.len() {
        let d = preds[i] - labels[i] as f64;
        total += d * d;
    }
    total / preds.len() as f64
}

pub fn ref_proxy_error(true_mask: &[bool], proxy_mask: &[bool]) -> f64 {
    let mut wrong = 0usize;
    for i in 0..true_mask.len() {
        if true_mask[i] != proxy_mask[i] {
            wrong += 1;
        }
    }
    wrong as f64 / true_mask.len() as f64
}

pub fn ref_group_ae(preds: &[f64], labels: &[u8], mask: &[bool]) -> f64 {
    let mut total = 0.0;
    for i in 0..preds.len() {
        if mask[i] {
            total += preds[i] - labels[i] as f64;
        }
    }
    (total / preds.len() as f64).abs()
}

/// Level sets by linear search over previously seen values; quadratic and
/// proud of it.
pub fn ref_group_ece(preds: &[f64], labels: &[u8], mask: &[bool]) -> f64 {
    let mut levels: Vec<f64> = Vec::new();
    for &p in preds {
        if !levels.iter().any(|&v| v.to_bits() == p.to_bits()) {
            levels.push(p);
        }
    }
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut total = 0.0;
    for &v in &levels {
        let mut cell = 0.0;
        for i in 0..preds.len() {
            if preds[i].to_bits() == v.to_bits() && mask[i] {
                cell += preds[i] - labels[i] as f64;
            }
        }
        total += cell.abs();
    }
    total / preds.len() as f64
}

pub fn ref_f_term(mse: f64, err: f64) -> f64 {
    let sqrt_branch = (mse * err).sqrt();
    if err < sqrt_branch {
        err
    } else {
        sqrt_branch
    }
}

// ---------------------------------------------------------------------------
// reference calibration boosting

#[derive(Debug, Clone, PartialEq)]
pub struct RefPatch {
    pub group: String,
    pub level: f64,
    pub target: f64,
}

pub fn ref_snap(preds: &[f64], m: usize) -> Vec<f64> {
    preds
        .iter()
        .map(|&p| {
            let j = ((p * m as f64 + 0.5).floor() as usize).min(m);
            j as f64 / m as f64
        })
        .collect()
}

/// Straight-line re-derivation of the patching loop: recompute every cell
/// each round, pick the best by (score, mass, name, level), move the cell,
/// stop when the worst group guard is at or below alpha.
pub fn ref_boost(
    preds: &[f64],
    labels: &[u8],
    masks: &[(String, Vec<bool>)],
    alpha: f64,
) -> (Vec<f64>, Vec<RefPatch>) {
    let n = preds.len();
    let m = (1.0 / alpha).ceil() as usize;
    let mut current = ref_snap(preds, m);
    let mut order: Vec<usize> = (0..masks.len()).collect();
    order.sort_by(|&a, &b| masks[a].0.cmp(&masks[b].0));
    let mut patches = Vec::new();
    loop {
        let mut worst_guard = 0.0f64;
        let mut best: Option<(f64, usize, usize, usize)> = None;
        for &g in &order {
            let mask = &masks[g].1;
            let mut guard = 0.0;
            for j in 0..=m {
                let v = j as f64 / m as f64;
                let mut count = 0usize;
                let mut sum_y = 0.0;
                for i in 0..n {
                    if mask[i] && current[i].to_bits() == v.to_bits() {
                        count += 1;
                        sum_y += labels[i] as f64;
                    }
                }
                if count == 0 {
                    continue;
                }
                let delta = sum_y / count as f64 - v;
                let score = count as f64 / n as f64 * delta * delta;
                guard += score;
                let take = match best {
                    None => true,
                    Some((bs, bc, _, _)) => score > bs || (score == bs && count > bc),
                };
                if take {
                    best = Some((score, count, g, j));
                }
            }
            if guard > worst_guard {
                worst_guard = guard;
            }
        }
        if worst_guard <= alpha {
            return (current, patches);
        }
        let (_, _, g, j) = best.unwrap();
        let v = j as f64 / m as f64;
        let mask = &masks[g].1;
        let mut count = 0usize;
        let mut sum_y = 0.0;
        for i in 0..n {
            if mask[i] && current[i].to_bits() == v.to_bits() {
                count += 1;
                sum_y += labels[i] as f64;
            }
        }
        let mean = sum_y / count as f64;
        let target_j = ((mean * m as f64 + 0.5).floor() as usize).min(m);
        let target = target_j as f64 / m as f64;
        for i in 0..n {
            if mask[i] && current[i].to_bits() == v.to_bits() {
                current[i] = target;
            }
        }
        patches.push(RefPatch {
            group: masks[g].0.clone(),
            level: v,
            target,
        });
    }
}

/// Reference calibration certificate over proxy masks and fixed error
/// rates: worst of `f_term + proxy ece` across groups.
pub fn ref_gamma(
    preds: &[f64],
    labels: &[u8],
    masks: &[(String, Vec<bool>)],
    errs: &[f64],
) -> f64 {
    let mse = ref_mse(preds, labels);
    let mut worst = 0.0f64;
    for (k, (_, mask)) in masks.iter().enumerate() {
        let bound = ref_f_term(mse, errs[k]) + ref_group_ece(preds, labels, mask);
        if bound > worst {
            worst = bound;
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// random generators

pub struct RandomCase {
    pub preds: Vec<f64>,
    pub labels: Vec<u8>,
    /// `(name, true_mask, proxy_mask)` per group.
    pub groups: Vec<(String, Vec<bool>, Vec<bool>)>,
}

/// Random dataset with proxy masks derived from true masks by flips.
pub fn random_case(rng: &mut ChaCha8Rng, n: usize, k: usize) -> RandomCase {
    let preds: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random::<f64>() < 0.5)).collect();
    let mut groups = Vec::with_capacity(k);
    for g in 0..k {
        let rate = 0.2 + 0.6 * rng.random::<f64>();
        let flip = 0.3 * rng.random::<f64>();
        let true_mask: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < rate).collect();
        let proxy_mask: Vec<bool> = true_mask
            .iter()
            .map(|&t| t != (rng.random::<f64>() < flip))
            .collect();
        groups.push((format!("g{g}"), true_mask, proxy_mask));
    }
    RandomCase {
        preds,
        labels,
        groups,
    }
}

/// Random small population; loops until the support points are distinct.
pub fn random_joint(rng: &mut ChaCha8Rng) -> FiniteJoint {
    loop {
        let k = rng.random_range(2..=6usize);
        let weights: Vec<f64> = (0..k).map(|_| 0.05 + rng.random::<f64>()).collect();
        let total: f64 = weights.iter().sum();
        let mut atoms = Vec::with_capacity(k);
        let mut seen = std::collections::BTreeSet::new();
        let mut ok = true;
        for w in &weights {
            let f = rng.random_range(0..=20u32) as f64 / 20.0;
            let y = u8::from(rng.random::<bool>());
            let group = u8::from(rng.random::<bool>());
            let proxy = u8::from(rng.random::<bool>());
            if !seen.insert((f.to_bits(), y, group, proxy)) {
                ok = false;
                break;
            }
            atoms.push(Atom {
                probability: w / total,
                f,
                y,
                group,
                proxy,
            });
        }
        if ok {
            return FiniteJoint::new(atoms).expect("generated joint is valid");
        }
    }
}
