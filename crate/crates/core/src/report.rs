//! Violation reports and serializable run summaries.
//!
//! A [`ViolationReport`] lays certified ceilings next to the measured proxy
//! violations and, when true masks exist, the true-side violations they
//! bound. A [`RunReport`] wraps the before/after reports of a full audit or
//! adjustment run together with the knobs that produced it, and round-trips
//! through JSON without losing a bit of any float.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{self, PremiseCheck};
use crate::dataset::{GroupSystem, LabeledDataset, MaskSide};
use crate::error::Result;
use crate::mc::PatchLogEntry;
use crate::metrics;

/// All measurements for one group. True-side fields are present only when
/// the dataset carries a true mask for the group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub proxy_error: f64,
    pub f_term: f64,
    pub proxy_ae: f64,
    pub proxy_ece: f64,
    pub ae_bound: f64,
    pub ece_bound: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_ae: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_ece: Option<f64>,
    /// Disagreement rate between the masks, when both sides exist. May differ
    /// from `proxy_error` if the rate was declared rather than measured.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_error: Option<f64>,
    /// Whether the observed true-side violations sit under their ceilings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub within_bounds: Option<bool>,
}

/// Certificate plus measurements for a whole group system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub per_group: BTreeMap<String, GroupReport>,
    pub mse: f64,
    pub proxy_ae_max: f64,
    pub proxy_ece_max: f64,
    /// Worst certified accuracy ceiling.
    pub beta: f64,
    /// Worst certified calibration ceiling.
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_ae_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub true_ece_max: Option<f64>,
}

/// Slack used when deciding `within_bounds`, covering float noise only.
const BOUND_SLACK: f64 = 1e-12;

/// Build the full report: certificate from the proxy side, true-side
/// measurements where masks allow.
pub fn report_violations(ds: &LabeledDataset, system: &GroupSystem) -> Result<ViolationReport> {
    let cert = bounds::certify(ds, system)?;
    let mut per_group = BTreeMap::new();
    let mut true_ae_max: Option<f64> = None;
    let mut true_ece_max: Option<f64> = None;
    for entry in system.entries() {
        let b = &cert.per_group[&entry.name];
        let mut report = GroupReport {
            proxy_error: b.proxy_error,
            f_term: b.f_term,
            proxy_ae: b.proxy_ae,
            proxy_ece: b.proxy_ece,
            ae_bound: b.ae_bound,
            ece_bound: b.ece_bound,
            true_ae: None,
            true_ece: None,
            measured_error: None,
            within_bounds: None,
        };
        if let Some(true_mask) = ds.mask(&entry.name, MaskSide::True) {
            let ae = metrics::group_ae(ds, true_mask)?;
            let ece = metrics::group_ece(ds, true_mask)?;
            report.true_ae = Some(ae);
            report.true_ece = Some(ece);
            if let Some(proxy_mask) = ds.mask(&entry.name, MaskSide::Proxy) {
                report.measured_error = Some(metrics::proxy_error(true_mask, proxy_mask)?);
            }
            report.within_bounds =
                Some(ae <= b.ae_bound + BOUND_SLACK && ece <= b.ece_bound + BOUND_SLACK);
            true_ae_max = Some(true_ae_max.unwrap_or(0.0).max(ae));
            true_ece_max = Some(true_ece_max.unwrap_or(0.0).max(ece));
        }
        per_group.insert(entry.name.clone(), report);
    }
    let proxy_ae_max = per_group.values().map(|g| g.proxy_ae).fold(0.0, f64::max);
    let proxy_ece_max = per_group.values().map(|g| g.proxy_ece).fold(0.0, f64::max);
    Ok(ViolationReport {
        per_group,
        mse: cert.mse,
        proxy_ae_max,
        proxy_ece_max,
        beta: cert.beta,
        gamma: cert.gamma,
        true_ae_max,
        true_ece_max,
    })
}

impl ViolationReport {
    /// Groups table as CSV text: `group,ae,ece,bound,f_term`, one row per
    /// group in name order. `ae`/`ece` are true-side when measured, proxy
    /// otherwise; `bound` is the calibration ceiling.
    pub fn groups_table(&self) -> String {
        let mut out = String::from("group,ae,ece,bound,f_term\n");
        for (name, g) in &self.per_group {
            let ae = g.true_ae.unwrap_or(g.proxy_ae);
            let ece = g.true_ece.unwrap_or(g.proxy_ece);
            let _ = writeln!(out, "{name},{ae},{ece},{},{}", g.ece_bound, g.f_term);
        }
        out
    }
}

/// Which post-processing method an adjustment run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentSummary {
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stalled: Option<bool>,
    /// Final in-sample value of the worst squared-calibration guard.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_guard: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambdas: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clipped: Option<bool>,
    /// Worst proxy accuracy violation on the data the fit was computed on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub in_sample_proxy_ae_max: Option<f64>,
}

/// Run knobs recorded for reproducibility.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bin: Option<usize>,
    pub rows: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows_eval: Option<usize>,
}

/// Everything one command run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub meta: RunMeta,
    pub before: ViolationReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub after: Option<ViolationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub premises: Option<PremiseCheck>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjustment: Option<AdjustmentSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch_log: Option<Vec<PatchLogEntry>>,
    /// Percent reduction of the calibration certificate, when an adjusted
    /// report exists and the starting certificate is positive.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma_reduction_pct: Option<f64>,
}

impl RunReport {
    pub fn new(meta: RunMeta, before: ViolationReport) -> Self {
        Self {
            meta,
            before,
            after: None,
            premises: None,
            adjustment: None,
            patch_log: None,
            gamma_reduction_pct: None,
        }
    }

    /// Attach an after-report and derive premises plus the certificate
    /// reduction percentage.
    pub fn with_after(mut self, after: ViolationReport) -> Result<Self> {
        let premises = bounds::check_reduction_premises(&self.before, &after)?;
        if self.before.gamma > 0.0 {
            self.gamma_reduction_pct =
                Some(100.0 * (self.before.gamma - after.gamma) / self.before.gamma);
        }
        self.premises = Some(premises);
        self.after = Some(after);
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Write the run's artifacts into a directory: `run.json`, before/after
    /// groups tables, and the patch log when present. Returns the paths
    /// written.
    pub fn write_files(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        let mut emit = |name: &str, body: String| -> Result<()> {
            let path = dir.join(name);
            std::fs::write(&path, body)?;
            written.push(path);
            Ok(())
        };
        emit("run.json", self.to_json()?)?;
        emit("groups_before.csv", self.before.groups_table())?;
        if let Some(after) = &self.after {
            emit("groups_after.csv", after.groups_table())?;
        }
        if let Some(log) = &self.patch_log {
            emit("patch_log.tsv", crate::mc::patch_log_to_tsv(log)?)?;
        }
        Ok(written)
    }
}
