//! Worst-case certificates from proxy-side measurements.
//!
//! For a group with proxy error rate `err` and a predictor with mean squared
//! error `mse`, the transfer term `min(err, sqrt(mse * err))` bounds how far
//! the true-group violation can sit above the proxy-group violation. Adding
//! the measured proxy violation gives a certified ceiling on the unobservable
//! true-side violation; the per-group ceilings aggregate into worst-case
//! accuracy (`beta`) and calibration (`gamma`) certificates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{GroupSystem, LabeledDataset, MaskSide};
use crate::error::{Error, Result};
use crate::metrics;
use crate::report::ViolationReport;

/// Transfer term `min(err, sqrt(mse * err))`.
///
/// The square-root branch wins exactly when `mse < err`; both branches agree
/// at `mse == err`.
pub fn f_term(mse: f64, err: f64) -> Result<f64> {
    if !mse.is_finite() || mse < 0.0 {
        return Err(Error::InvalidParameter {
            name: "mse",
            reason: format!("{mse} is not a finite non-negative value"),
        });
    }
    if !err.is_finite() || !(0.0..=1.0).contains(&err) {
        return Err(Error::InvalidParameter {
            name: "err",
            reason: format!("{err} is not in [0, 1]"),
        });
    }
    Ok(err.min((mse * err).sqrt()))
}

/// Per-group pieces of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBound {
    pub proxy_error: f64,
    pub f_term: f64,
    pub proxy_ae: f64,
    pub proxy_ece: f64,
    /// Certified ceiling on the true-group accuracy violation.
    pub ae_bound: f64,
    /// Certified ceiling on the true-group calibration violation.
    pub ece_bound: f64,
}

/// Certificate over a whole group system.
///
/// `beta` bounds the worst true-group accuracy violation, `gamma` the worst
/// true-group calibration violation. Built from proxy masks and declared
/// error rates only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub per_group: BTreeMap<String, GroupBound>,
    pub beta: f64,
    pub gamma: f64,
    pub mse: f64,
}

/// Certify worst-case true-side violations for every group in the system.
///
/// Reads only proxy masks; true masks may be absent or garbage without
/// affecting the result. Every group must have a proxy mask and a proxy
/// error rate.
pub fn certify(ds: &LabeledDataset, system: &GroupSystem) -> Result<BoundCertificate> {
    let mse = metrics::mse(ds)?;
    let mut per_group = BTreeMap::new();
    let mut beta = 0.0f64;
    let mut gamma = 0.0f64;
    for entry in system.entries() {
        let err = system.require_proxy_error(&entry.name)?;
        let mask = ds.require_mask(&entry.name, MaskSide::Proxy)?;
        let transfer = f_term(mse, err)?;
        let proxy_ae = metrics::group_ae(ds, mask)?;
        let proxy_ece = metrics::group_ece(ds, mask)?;
        let bound = GroupBound {
            proxy_error: err,
            f_term: transfer,
            proxy_ae,
            proxy_ece,
            ae_bound: transfer + proxy_ae,
            ece_bound: transfer + proxy_ece,
        };
        beta = beta.max(bound.ae_bound);
        gamma = gamma.max(bound.ece_bound);
        per_group.insert(entry.name.clone(), bound);
    }
    Ok(BoundCertificate {
        per_group,
        beta,
        gamma,
        mse,
    })
}

/// Outcome of comparing before/after reports against the conditions under
/// which a post-processed predictor is guaranteed not to certify worse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PremiseCheck {
    pub mse_before: f64,
    pub mse_after: f64,
    pub mse_nonincreasing: bool,
    /// Worst proxy calibration violation of the adjusted predictor.
    pub max_proxy_ece_after: f64,
    /// Best proxy calibration violation among the original groups.
    pub min_proxy_ece_before: f64,
    /// Strictly smaller; ties fail.
    pub mc_strict: bool,
    pub max_proxy_ae_after: f64,
    pub min_proxy_ae_before: f64,
    pub ma_strict: bool,
    /// Both calibration premises hold, so `gamma_after <= gamma_before`.
    pub mc_premises_hold: bool,
    /// Both accuracy premises hold, so `beta_after <= beta_before`.
    pub ma_premises_hold: bool,
}

/// Check the certificate-reduction premises between two reports over the
/// same group system. Comparisons are exact; a tie on the strict premise
/// fails it.
pub fn check_reduction_premises(
    before: &ViolationReport,
    after: &ViolationReport,
) -> Result<PremiseCheck> {
    let names_b: Vec<&String> = before.per_group.keys().collect();
    let names_a: Vec<&String> = after.per_group.keys().collect();
    if names_b != names_a {
        return Err(Error::GroupSetMismatch {
            detail: format!("before has {names_b:?}, after has {names_a:?}"),
        });
    }
    let min_over = |r: &ViolationReport, f: fn(&crate::report::GroupReport) -> f64| {
        r.per_group.values().map(f).fold(f64::INFINITY, f64::min)
    };
    let max_over = |r: &ViolationReport, f: fn(&crate::report::GroupReport) -> f64| {
        r.per_group.values().map(f).fold(0.0f64, f64::max)
    };
    let min_proxy_ece_before = min_over(before, |g| g.proxy_ece);
    let max_proxy_ece_after = max_over(after, |g| g.proxy_ece);
    let min_proxy_ae_before = min_over(before, |g| g.proxy_ae);
    let max_proxy_ae_after = max_over(after, |g| g.proxy_ae);
    let mse_nonincreasing = after.mse <= before.mse;
    let mc_strict = max_proxy_ece_after < min_proxy_ece_before;
    let ma_strict = max_proxy_ae_after < min_proxy_ae_before;
    Ok(PremiseCheck {
        mse_before: before.mse,
        mse_after: after.mse,
        mse_nonincreasing,
        max_proxy_ece_after,
        min_proxy_ece_before,
        mc_strict,
        max_proxy_ae_after,
        min_proxy_ae_before,
        ma_strict,
        mc_premises_hold: mc_strict && mse_nonincreasing,
        ma_premises_hold: ma_strict && mse_nonincreasing,
    })
}
