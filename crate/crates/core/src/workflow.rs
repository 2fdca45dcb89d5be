//! End-to-end runs: audit a prediction column, or split the data, fit a
//! post-processor on one part, and evaluate before/after certificates on a
//! held-out part.
//!
//! Splits are three-way: a train part for the optional baseline model, an
//! adjust part the post-processor is fitted on, and an eval part where the
//! before/after reports come from. The calibration path snaps eval
//! predictions to the same grid the booster uses, so both reports describe
//! grid-valued predictors.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::baseline::{train_baseline, BaselineKind};
use crate::data::table::LoadedCsv;
use crate::error::{Error, Result};
use crate::ma;
use crate::mc::{self, BoostConfig, BoostStatus};
use crate::metrics;
use crate::report::{report_violations, AdjustmentSummary, RunMeta, RunReport};

/// Proportions for train/adjust/eval. Normalized to sum 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train: f64,
    pub adjust: f64,
    pub eval: f64,
}

impl SplitSpec {
    pub const DEFAULT: SplitSpec = SplitSpec {
        train: 0.6,
        adjust: 0.3,
        eval: 0.1,
    };

    pub fn new(train: f64, adjust: f64, eval: f64) -> Result<Self> {
        let bad = |reason: String| Error::InvalidParameter {
            name: "split",
            reason,
        };
        for v in [train, adjust, eval] {
            if !v.is_finite() || v < 0.0 {
                return Err(bad(format!("proportion {v} is negative or not finite")));
            }
        }
        let total = train + adjust + eval;
        if total <= 0.0 {
            return Err(bad("proportions sum to zero".into()));
        }
        Ok(Self {
            train: train / total,
            adjust: adjust / total,
            eval: eval / total,
        })
    }

    /// Parse `"0.6,0.3,0.1"`.
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 3 {
            return Err(Error::InvalidParameter {
                name: "split",
                reason: format!("expected three comma-separated proportions, got {text:?}"),
            });
        }
        let mut vals = [0.0f64; 3];
        for (slot, part) in vals.iter_mut().zip(&parts) {
            *slot = part.parse().map_err(|_| Error::InvalidParameter {
                name: "split",
                reason: format!("bad proportion {part:?}"),
            })?;
        }
        Self::new(vals[0], vals[1], vals[2])
    }
}

/// Seeded shuffle of `0..n`, cut into train/adjust/eval index sets.
pub fn split_indices(n: usize, split: &SplitSpec, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = (split.train * n as f64).round() as usize;
    let n_adjust = ((split.adjust * n as f64).round() as usize).min(n - n_train.min(n));
    let n_train = n_train.min(n);
    let train = order[..n_train].to_vec();
    let adjust = order[n_train..n_train + n_adjust].to_vec();
    let eval = order[n_train + n_adjust..].to_vec();
    (train, adjust, eval)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AdjustMethod {
    /// Least-squares accuracy adjustment; `clip` clamps outputs to `[0, 1]`.
    Ma { clip: bool },
    /// Calibration boosting at tolerance `alpha`.
    Mc { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub seed: u64,
    pub split: SplitSpec,
    /// Snap input predictions to this grid before anything else runs.
    pub bin: Option<usize>,
    pub model: BaselineKind,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            split: SplitSpec::DEFAULT,
            bin: None,
            model: BaselineKind::Logistic,
        }
    }
}

fn maybe_bin(preds: Vec<f64>, bin: Option<usize>) -> Result<Vec<f64>> {
    match bin {
        Some(m) => mc::snap_to_grid(&preds, m),
        None => Ok(preds),
    }
}

/// Report violations and certificates for the stored prediction column.
pub fn run_audit(loaded: &LoadedCsv, bin: Option<usize>) -> Result<RunReport> {
    let preds = loaded.predictions.clone().ok_or(Error::InvalidParameter {
        name: "prediction",
        reason: "audit needs a prediction column".into(),
    })?;
    let preds = maybe_bin(preds, bin)?;
    let ds = loaded.dataset_with(preds)?;
    let before = report_violations(&ds, &loaded.system)?;
    Ok(RunReport::new(
        RunMeta {
            command: "audit".into(),
            bin,
            rows: loaded.n(),
            ..RunMeta::default()
        },
        before,
    ))
}

/// Split, obtain base predictions (stored column or freshly trained
/// baseline), fit the requested post-processor on the adjust part, and
/// report before/after on the eval part.
pub fn run_adjust(loaded: &LoadedCsv, method: AdjustMethod, opts: &RunOptions) -> Result<RunReport> {
    let n = loaded.n();
    let (train_idx, adjust_idx, eval_idx) = split_indices(n, &opts.split, opts.seed);
    if adjust_idx.is_empty() || eval_idx.is_empty() {
        return Err(Error::InvalidParameter {
            name: "split",
            reason: format!(
                "adjust/eval parts are empty for n = {n} and split {:?}",
                opts.split
            ),
        });
    }
    let sub_adjust = loaded.subset(&adjust_idx);
    let sub_eval = loaded.subset(&eval_idx);
    let (adjust_preds, eval_preds) = match &loaded.predictions {
        Some(p) => (
            adjust_idx.iter().map(|&i| p[i]).collect::<Vec<_>>(),
            eval_idx.iter().map(|&i| p[i]).collect::<Vec<_>>(),
        ),
        None => {
            if loaded.feature_names.is_empty() {
                return Err(Error::InvalidParameter {
                    name: "prediction",
                    reason: "no prediction column and no features to train a baseline".into(),
                });
            }
            let sub_train = loaded.subset(&train_idx);
            let model = train_baseline(&sub_train.features, &sub_train.labels, opts.model)?;
            (
                model.predict(&sub_adjust.features),
                model.predict(&sub_eval.features),
            )
        }
    };
    let adjust_preds = maybe_bin(adjust_preds, opts.bin)?;
    let eval_preds = maybe_bin(eval_preds, opts.bin)?;
    let mut meta = RunMeta {
        seed: Some(opts.seed),
        split: Some([opts.split.train, opts.split.adjust, opts.split.eval]),
        bin: opts.bin,
        rows: n,
        rows_eval: Some(eval_idx.len()),
        ..RunMeta::default()
    };
    match method {
        AdjustMethod::Mc { alpha } => {
            meta.command = "adjust-mc".into();
            let cfg = BoostConfig::new(alpha)?;
            let m = cfg.grid_m();
            let eval_snapped = mc::snap_to_grid(&eval_preds, m)?;
            let before = report_violations(&sub_eval.dataset_with(eval_snapped.clone())?, &loaded.system)?;
            let ds_adjust = sub_adjust.dataset_with(adjust_preds)?;
            let outcome = mc::boost(&ds_adjust, &sub_adjust.proxy_mask_list(), &cfg)?;
            let eval_after = mc::replay(&eval_snapped, &sub_eval.proxy_mask_list(), &outcome.log, m)?;
            let after = report_violations(&sub_eval.dataset_with(eval_after)?, &loaded.system)?;
            let mut report = RunReport::new(meta, before).with_after(after)?;
            report.adjustment = Some(AdjustmentSummary {
                method: "mc".into(),
                alpha: Some(alpha),
                grid_m: Some(m),
                rounds: Some(outcome.rounds),
                stalled: Some(outcome.status == BoostStatus::Stalled),
                exit_guard: Some(outcome.exit_guard),
                lambdas: None,
                clipped: None,
                in_sample_proxy_ae_max: None,
            });
            report.patch_log = Some(outcome.log);
            Ok(report)
        }
        AdjustMethod::Ma { clip } => {
            meta.command = "adjust-ma".into();
            let before = report_violations(&sub_eval.dataset_with(eval_preds.clone())?, &loaded.system)?;
            let ds_adjust = sub_adjust.dataset_with(adjust_preds)?;
            let masks_adjust = sub_adjust.proxy_mask_list();
            let fit = ma::fit_ma(&ds_adjust, &masks_adjust, clip)?;
            let ds_adjust_after =
                ds_adjust.with_predictions_unbounded(fit.adjusted_predictions.clone())?;
            let mut in_sample_max = 0.0f64;
            for (_, mask) in &masks_adjust {
                in_sample_max = in_sample_max.max(metrics::group_ae(&ds_adjust_after, mask)?);
            }
            let eval_after = ma::apply_adjustment(
                &eval_preds,
                &sub_eval.proxy_mask_list(),
                &fit.lambdas,
                clip,
            )?;
            let after =
                report_violations(&sub_eval.dataset_with_unbounded(eval_after)?, &loaded.system)?;
            let mut report = RunReport::new(meta, before).with_after(after)?;
            report.adjustment = Some(AdjustmentSummary {
                method: "ma".into(),
                alpha: None,
                grid_m: None,
                rounds: None,
                stalled: None,
                exit_guard: None,
                lambdas: Some(fit.lambdas),
                clipped: Some(fit.clipped),
                in_sample_proxy_ae_max: Some(in_sample_max),
            });
            Ok(report)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth::{generate_synth, SynthGroup, SynthSpec};

    fn spec(seed: u64) -> SynthSpec {
        SynthSpec {
            n: 12000,
            seed,
            weights: vec![0.9, -0.6],
            intercept: 0.1,
            groups: vec![
                SynthGroup {
                    name: "g1".into(),
                    rate: 0.35,
                    err: 0.03,
                    bias: -0.35,
                },
                SynthGroup {
                    name: "g2".into(),
                    rate: 0.3,
                    err: 0.02,
                    bias: 0.3,
                },
            ],
        }
    }

    #[test]
    fn split_parse_and_normalize() {
        let s = SplitSpec::parse("3, 1, 1").unwrap();
        assert!((s.train - 0.6).abs() < 1e-15);
        assert!(SplitSpec::parse("0.5,0.5").is_err());
        assert!(SplitSpec::parse("0,0,0").is_err());
        assert!(SplitSpec::parse("-1,1,1").is_err());
    }

    #[test]
    fn split_indices_partition_and_are_seeded() {
        let (a, b, c) = split_indices(100, &SplitSpec::DEFAULT, 9);
        assert_eq!(a.len(), 60);
        assert_eq!(b.len(), 30);
        assert_eq!(c.len(), 10);
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        let again = split_indices(100, &SplitSpec::DEFAULT, 9);
        assert_eq!((a, b, c), again);
        let other = split_indices(100, &SplitSpec::DEFAULT, 10);
        assert_ne!(other.0, again.0);
    }

    #[test]
    fn audit_reports_biased_groups() {
        let loaded = generate_synth(&spec(21)).unwrap().resolve().unwrap();
        let report = run_audit(&loaded, None).unwrap();
        assert_eq!(report.meta.command, "audit");
        // The biased groups should show a clearly positive true-side
        // violation.
        assert!(report.before.true_ae_max.unwrap() > 0.02);
        assert!(report.before.gamma >= report.before.beta - 1e-12);
    }

    #[test]
    fn adjust_ma_zeroes_proxy_violation_and_reduces_mse() {
        let loaded = generate_synth(&spec(22)).unwrap().resolve().unwrap();
        let report = run_adjust(
            &loaded,
            AdjustMethod::Ma { clip: false },
            &RunOptions::default(),
        )
        .unwrap();
        let adj = report.adjustment.as_ref().unwrap();
        assert!(adj.in_sample_proxy_ae_max.unwrap() < 1e-8);
        assert_eq!(adj.clipped, Some(false));
        assert!(report.premises.is_some());
        assert!(report.patch_log.is_none());
    }

    #[test]
    fn adjust_mc_meets_alpha_and_shrinks_gamma() {
        let loaded = generate_synth(&spec(23)).unwrap().resolve().unwrap();
        let report = run_adjust(
            &loaded,
            AdjustMethod::Mc { alpha: 0.02 },
            &RunOptions::default(),
        )
        .unwrap();
        let adj = report.adjustment.as_ref().unwrap();
        assert!(adj.exit_guard.unwrap() <= 0.02);
        assert!(adj.rounds.unwrap() >= 1);
        assert!(report.patch_log.is_some());
        let after = report.after.as_ref().unwrap();
        assert!(after.gamma <= report.before.gamma + 1e-12);
    }

    #[test]
    fn tiny_datasets_fail_with_a_clear_split_error() {
        let loaded = generate_synth(&SynthSpec {
            n: 3,
            ..spec(1)
        })
        .unwrap()
        .resolve()
        .unwrap();
        let err = run_adjust(
            &loaded,
            AdjustMethod::Ma { clip: false },
            &RunOptions::default(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("split"));
    }
}
