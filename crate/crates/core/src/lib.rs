//! Certification and repair of per-group guarantees for a fixed predictor
//! when only noisy proxies of group membership are observable.
//!
//! Given a predictor, binary outcomes, and proxy group masks with known
//! error rates, this crate computes certified ceilings on the true-group
//! accuracy and calibration violations (`beta` and `gamma` certificates),
//! post-processes the predictor to shrink those ceilings, and provides
//! exact finite populations witnessing that the ceilings cannot be
//! tightened.
//!
//! The pieces:
//!
//! - [`metrics`]: mean squared error, proxy error rates, per-group accuracy
//!   and calibration violations over exact level sets.
//! - [`bounds`]: the transfer term, certificates, and the premise checks
//!   under which post-processing provably does not certify worse.
//! - [`ma`]: least-squares accuracy adjustment on group indicators.
//! - [`mc`]: grid snapping and iterative cell patching for calibration,
//!   with a replayable patch log.
//! - [`joint`]: exact small populations, including the tight constructions
//!   for both branches of the transfer term.
//! - [`data`]: schema configs, CSV loading, synthetic data, baselines.
//! - [`report`] and [`workflow`]: violation reports, JSON run summaries,
//!   and the audit/adjust pipelines behind the CLI.

pub mod bounds;
pub mod data;
pub mod dataset;
pub mod error;
pub mod joint;
pub mod ma;
pub mod mc;
pub mod metrics;
pub mod report;
pub mod workflow;

pub use bounds::{certify, check_reduction_premises, f_term, BoundCertificate, PremiseCheck};
pub use dataset::{GroupEntry, GroupSystem, LabeledDataset, MaskSide};
pub use error::{Error, Result};
pub use joint::{population_metrics, FiniteJoint, PopulationMetrics};
pub use ma::{fit_ma, MaAdjustment};
pub use mc::{boost, snap_to_grid, BoostConfig, BoostOutcome, PatchLogEntry};
pub use metrics::{group_ae, group_ece, max_violations, mse, proxy_error};
pub use report::{report_violations, RunReport, ViolationReport};
pub use workflow::{run_adjust, run_audit, AdjustMethod, RunOptions, SplitSpec};
