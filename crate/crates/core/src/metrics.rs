//! Empirical accuracy metrics over a labeled dataset.
//!
//! All expectations are taken over every row, with group membership appearing
//! as an indicator inside the average. Calibration level sets are keyed on the
//! exact stored prediction values, not on bins.

use std::collections::BTreeMap;

use crate::dataset::{GroupSystem, LabeledDataset, MaskSide};
use crate::error::{Error, Result};

/// Mean squared error of the predictions against the 0/1 labels.
pub fn mse(ds: &LabeledDataset) -> Result<f64> {
    let n = ds.row_count();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let sum: f64 = ds
        .predictions()
        .iter()
        .zip(ds.labels())
        .map(|(&f, &y)| {
            let d = f - y as f64;
            d * d
        })
        .sum();
    Ok(sum / n as f64)
}

/// Fraction of rows where the proxy mask disagrees with the true mask.
pub fn proxy_error(true_mask: &[bool], proxy_mask: &[bool]) -> Result<f64> {
    if true_mask.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if proxy_mask.len() != true_mask.len() {
        return Err(Error::LengthMismatch {
            what: "proxy mask",
            expected: true_mask.len(),
            actual: proxy_mask.len(),
        });
    }
    let disagree = true_mask
        .iter()
        .zip(proxy_mask)
        .filter(|(t, p)| t != p)
        .count();
    Ok(disagree as f64 / true_mask.len() as f64)
}

fn check_metric_inputs(ds: &LabeledDataset, mask: &[bool]) -> Result<()> {
    if ds.row_count() == 0 {
        return Err(Error::EmptyDataset);
    }
    if mask.len() != ds.row_count() {
        return Err(Error::LengthMismatch {
            what: "group mask",
            expected: ds.row_count(),
            actual: mask.len(),
        });
    }
    Ok(())
}

/// Accuracy-in-expectation violation for one group:
/// `|mean over all rows of mask * (prediction - label)|`.
pub fn group_ae(ds: &LabeledDataset, mask: &[bool]) -> Result<f64> {
    check_metric_inputs(ds, mask)?;
    let n = ds.row_count();
    let mut sum = 0.0;
    for ((&m, &f), &y) in mask.iter().zip(ds.predictions()).zip(ds.labels()) {
        if m {
            sum += f - y as f64;
        }
    }
    Ok((sum / n as f64).abs())
}

/// Calibration violation for one group, summed over the predictor's level
/// sets: `sum_v (1/n) |sum over rows with prediction v of mask * (v - label)|`.
///
/// Level sets are the distinct stored prediction values. Rows outside the
/// mask still define levels; they contribute zero to each level's sum.
pub fn group_ece(ds: &LabeledDataset, mask: &[bool]) -> Result<f64> {
    check_metric_inputs(ds, mask)?;
    let n = ds.row_count();
    // Keyed on bit patterns; predictions are non-negative so bit order agrees
    // with numeric order and iteration is deterministic.
    let mut levels: BTreeMap<u64, f64> = BTreeMap::new();
    for ((&m, &f), &y) in mask.iter().zip(ds.predictions()).zip(ds.labels()) {
        let entry = levels.entry(f.to_bits()).or_insert(0.0);
        if m {
            *entry += f - y as f64;
        }
    }
    let total: f64 = levels.values().map(|s| s.abs()).sum();
    Ok(total / n as f64)
}

/// Worst-case violations `(ae_max, ece_max)` across a group system, read from
/// the given mask side. Every listed group must carry a mask on that side.
pub fn max_violations(
    ds: &LabeledDataset,
    system: &GroupSystem,
    side: MaskSide,
) -> Result<(f64, f64)> {
    let mut ae_max = 0.0f64;
    let mut ece_max = 0.0f64;
    for entry in system.entries() {
        let mask = ds.require_mask(&entry.name, side)?;
        ae_max = ae_max.max(group_ae(ds, mask)?);
        ece_max = ece_max.max(group_ece(ds, mask)?);
    }
    Ok((ae_max, ece_max))
}
