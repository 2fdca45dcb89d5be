//! Accuracy post-processing by least squares on group indicators.
//!
//! Fits coefficients `lambda` so that adding `sum_g lambda_g * mask_g` to the
//! predictions projects the residual `label - prediction` onto the span of
//! the group indicator columns. In-sample this drives every group's accuracy
//! violation to zero (up to float noise) and never increases mean squared
//! error. Adjusted scores may leave `[0, 1]`; clipping back is available but
//! voids the exactness of both guarantees.

use std::collections::BTreeMap;

use crate::dataset::{validate_mask_list, LabeledDataset};
use crate::error::{Error, Result};

/// Fitted coefficients plus the adjusted in-sample predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaAdjustment {
    pub lambdas: BTreeMap<String, f64>,
    pub adjusted_predictions: Vec<f64>,
    pub clipped: bool,
}

/// Dependent columns are dropped when their eliminated pivot falls below
/// this fraction of the original diagonal entry.
const PIVOT_TOL: f64 = 1e-8;

/// LDL^T solve of the normal equations `G lambda = b` for a symmetric
/// positive semidefinite `G` (row-major, k x k). Columns whose pivot
/// collapses are treated as dependent and get a zero coefficient, which
/// still solves the system exactly when `b` lies in the range of `G`.
fn solve_psd(g: &[f64], b: &[f64], k: usize) -> Vec<f64> {
    let mut l = vec![0.0f64; k * k];
    let mut d = vec![0.0f64; k];
    let mut dependent = vec![false; k];
    for j in 0..k {
        let mut dj = g[j * k + j];
        for s in 0..j {
            dj -= l[j * k + s] * l[j * k + s] * d[s];
        }
        let tol = PIVOT_TOL * g[j * k + j].max(1.0);
        if dj <= tol {
            dependent[j] = true;
            d[j] = 0.0;
            continue;
        }
        d[j] = dj;
        for i in (j + 1)..k {
            let mut v = g[i * k + j];
            for s in 0..j {
                v -= l[i * k + s] * l[j * k + s] * d[s];
            }
            l[i * k + j] = v / dj;
        }
    }
    // Forward substitution, then diagonal scale with dependent rows zeroed,
    // then back substitution.
    let mut z = b.to_vec();
    for j in 0..k {
        for s in 0..j {
            let t = l[j * k + s] * z[s];
            z[j] -= t;
        }
    }
    let mut w = vec![0.0f64; k];
    for j in 0..k {
        if !dependent[j] {
            w[j] = z[j] / d[j];
        }
    }
    for j in (0..k).rev() {
        for i in (j + 1)..k {
            w[j] -= l[i * k + j] * w[i];
        }
        if dependent[j] {
            w[j] = 0.0;
        }
    }
    w
}

/// Fit the least-squares coefficients on the given masks and return the
/// adjusted predictions. With `clip` the outputs are clamped to `[0, 1]`
/// after adjustment; the zero-violation and error guarantees then hold only
/// approximately.
pub fn fit_ma(
    ds: &LabeledDataset,
    masks: &[(String, Vec<bool>)],
    clip: bool,
) -> Result<MaAdjustment> {
    let n = ds.row_count();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    validate_mask_list(n, masks)?;
    let k = masks.len();
    let residual: Vec<f64> = ds
        .predictions()
        .iter()
        .zip(ds.labels())
        .map(|(&f, &y)| y as f64 - f)
        .collect();
    // Normal equations: G is the matrix of pairwise intersection counts
    // (exact integers in f64), b the per-group residual sums.
    let mut g = vec![0.0f64; k * k];
    let mut b = vec![0.0f64; k];
    for (j, (_, mj)) in masks.iter().enumerate() {
        for (i, (_, mi)) in masks.iter().enumerate().take(j + 1) {
            let count = mi
                .iter()
                .zip(mj)
                .filter(|(&a, &bv)| a && bv)
                .count() as f64;
            g[i * k + j] = count;
            g[j * k + i] = count;
        }
        b[j] = residual
            .iter()
            .zip(mj.iter())
            .filter(|(_, &m)| m)
            .map(|(&r, _)| r)
            .sum();
    }
    let lambda = solve_psd(&g, &b, k);
    let mut adjusted = ds.predictions().to_vec();
    for (j, (_, mask)) in masks.iter().enumerate() {
        if lambda[j] != 0.0 {
            for (p, &m) in adjusted.iter_mut().zip(mask) {
                if m {
                    *p += lambda[j];
                }
            }
        }
    }
    if clip {
        for p in &mut adjusted {
            *p = p.clamp(0.0, 1.0);
        }
    }
    let lambdas = masks
        .iter()
        .map(|(name, _)| name.clone())
        .zip(lambda)
        .collect();
    Ok(MaAdjustment {
        lambdas,
        adjusted_predictions: adjusted,
        clipped: clip,
    })
}

/// Apply previously fitted coefficients to new predictions with new masks.
/// Every coefficient's group must appear among the masks.
pub fn apply_adjustment(
    predictions: &[f64],
    masks: &[(String, Vec<bool>)],
    lambdas: &BTreeMap<String, f64>,
    clip: bool,
) -> Result<Vec<f64>> {
    validate_mask_list(predictions.len(), masks)?;
    let mut adjusted = predictions.to_vec();
    for (name, &lambda) in lambdas {
        let mask = masks
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::MissingMask {
                group: name.clone(),
                side: "proxy",
            })?;
        if lambda != 0.0 {
            for (p, &m) in adjusted.iter_mut().zip(mask) {
                if m {
                    *p += lambda;
                }
            }
        }
    }
    if clip {
        for p in &mut adjusted {
            *p = p.clamp(0.0, 1.0);
        }
    }
    Ok(adjusted)
}
