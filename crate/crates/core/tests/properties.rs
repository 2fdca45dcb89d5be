//! Randomized invariants. Each property encodes a fact that should hold
//! for every input, not just the seeded examples in the unit tests.

mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mcaudit::bounds::{certify, f_term};
use mcaudit::dataset::{GroupEntry, GroupSystem, LabeledDataset};
use mcaudit::ma::fit_ma;
use mcaudit::mc::{
    boost, patch_log_from_tsv, patch_log_to_tsv, replay, snap_to_grid, BoostConfig, BoostStatus,
    PatchLogEntry,
};
use mcaudit::metrics::{group_ae, group_ece, mse};

use common::{ref_f_term, ref_proxy_error};

fn rows(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>, Vec<bool>)> {
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0u8..=1, n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

fn rows_with_proxy(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>, Vec<bool>, Vec<bool>)>
{
    (1..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0.0f64..=1.0, n),
            prop::collection::vec(0u8..=1, n),
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    /// The accuracy reading of a group can never exceed its calibration
    /// reading: the latter scores each level separately before taking
    /// absolute values.
    #[test]
    fn accuracy_never_exceeds_calibration((preds, labels, mask) in rows(60)) {
        let ds = LabeledDataset::new(preds, labels).unwrap();
        let ae = group_ae(&ds, &mask).unwrap();
        let ece = group_ece(&ds, &mask).unwrap();
        prop_assert!(ae <= ece + 1e-12);
    }

    /// Row order is irrelevant to every metric.
    #[test]
    fn metrics_are_permutation_invariant(
        (preds, labels, mask) in rows(60),
        seed in any::<u64>(),
    ) {
        let n = preds.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let p2: Vec<f64> = order.iter().map(|&i| preds[i]).collect();
        let l2: Vec<u8> = order.iter().map(|&i| labels[i]).collect();
        let m2: Vec<bool> = order.iter().map(|&i| mask[i]).collect();
        let a = LabeledDataset::new(preds, labels).unwrap();
        let b = LabeledDataset::new(p2, l2).unwrap();
        prop_assert!((mse(&a).unwrap() - mse(&b).unwrap()).abs() <= 1e-9);
        prop_assert!((group_ae(&a, &mask).unwrap() - group_ae(&b, &m2).unwrap()).abs() <= 1e-9);
        prop_assert!((group_ece(&a, &mask).unwrap() - group_ece(&b, &m2).unwrap()).abs() <= 1e-9);
    }

    /// A constant predictor has a single level set, so both readings
    /// coincide exactly.
    #[test]
    fn constant_predictor_collapses_readings(
        c in 0.0f64..=1.0,
        labels in prop::collection::vec(0u8..=1, 1..60),
        seed in any::<u64>(),
    ) {
        let n = labels.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mask: Vec<bool> = (0..n).map(|_| rng.random::<bool>()).collect();
        let ds = LabeledDataset::new(vec![c; n], labels).unwrap();
        let ae = group_ae(&ds, &mask).unwrap();
        let ece = group_ece(&ds, &mask).unwrap();
        prop_assert_eq!(ae, ece);
    }

    /// The transfer term takes the smaller branch, is monotone in both
    /// arguments, and vanishes with either one.
    #[test]
    fn transfer_term_shape(
        mse_v in 0.0f64..=1.0,
        err in 0.0f64..=1.0,
        bump in 0.0f64..=0.5,
    ) {
        let t = f_term(mse_v, err).unwrap();
        prop_assert!(t <= err);
        prop_assert!(t <= (mse_v * err).sqrt() + 1e-15);
        prop_assert!((t - ref_f_term(mse_v, err)).abs() <= 1e-15);
        prop_assert!(f_term(0.0, err).unwrap() == 0.0);
        prop_assert!(f_term(mse_v, 0.0).unwrap() == 0.0);
        let up_mse = f_term((mse_v + bump).min(1.0), err).unwrap();
        let up_err = f_term(mse_v, (err + bump).min(1.0)).unwrap();
        prop_assert!(up_mse + 1e-15 >= t);
        prop_assert!(up_err + 1e-15 >= t);
    }

    /// Certificates are computed from proxy masks and declared error rates
    /// alone; corrupting every true mask changes nothing.
    #[test]
    fn certificate_ignores_true_masks(
        (preds, labels, true_mask, proxy_mask) in rows_with_proxy(50),
        err in 0.0f64..=1.0,
    ) {
        let system = GroupSystem::new(vec![GroupEntry {
            name: "g".into(),
            has_true: true,
            proxy_error: Some(err),
        }])
        .unwrap();
        let clean = LabeledDataset::new(preds.clone(), labels.clone())
            .unwrap()
            .with_true_group("g", true_mask.clone())
            .unwrap()
            .with_proxy_group("g", proxy_mask.clone())
            .unwrap();
        let poisoned = LabeledDataset::new(preds, labels)
            .unwrap()
            .with_true_group("g", true_mask.iter().map(|&b| !b).collect())
            .unwrap()
            .with_proxy_group("g", proxy_mask)
            .unwrap();
        let a = serde_json::to_string(&certify(&clean, &system).unwrap()).unwrap();
        let b = serde_json::to_string(&certify(&poisoned, &system).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    /// With the measured proxy error rate, the ceiling holds for the true
    /// masks on every finite dataset.
    #[test]
    fn measured_ceiling_holds((preds, labels, true_mask, proxy_mask) in rows_with_proxy(50)) {
        let ds = LabeledDataset::new(preds, labels).unwrap();
        let cap = f_term(mse(&ds).unwrap(), ref_proxy_error(&true_mask, &proxy_mask)).unwrap();
        let ae_gap = group_ae(&ds, &true_mask).unwrap() - group_ae(&ds, &proxy_mask).unwrap();
        let ece_gap = group_ece(&ds, &true_mask).unwrap() - group_ece(&ds, &proxy_mask).unwrap();
        prop_assert!(ae_gap <= cap + 1e-12);
        prop_assert!(ece_gap <= cap + 1e-12);
    }

    /// Snapping is idempotent and moves a prediction at most half a step.
    #[test]
    fn snap_is_idempotent(preds in prop::collection::vec(0.0f64..=1.0, 1..40), m in 1usize..=64) {
        let once = snap_to_grid(&preds, m).unwrap();
        let twice = snap_to_grid(&once, m).unwrap();
        for ((raw, a), b) in preds.iter().zip(&once).zip(&twice) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
            prop_assert!((raw - a).abs() <= 0.5 / m as f64 + 1e-12);
        }
    }

    /// Least-squares adjustment zeroes every fitted group and never hurts
    /// squared error, whatever the masks look like.
    #[test]
    fn least_squares_zeroes_fitted_groups(
        (preds, labels, mask_a, mask_b) in rows_with_proxy(60),
    ) {
        let ds = LabeledDataset::new(preds, labels).unwrap();
        let masks = vec![("a".to_string(), mask_a), ("b".to_string(), mask_b)];
        let fit = fit_ma(&ds, &masks, false).unwrap();
        let adjusted = ds.with_predictions_unbounded(fit.adjusted_predictions).unwrap();
        for (_, mask) in &masks {
            prop_assert!(group_ae(&adjusted, mask).unwrap() <= 1e-8);
        }
        prop_assert!(mse(&adjusted).unwrap() <= mse(&ds).unwrap() + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Boosting always exits under its cap with the guard satisfied, runs
    /// deterministically, and its log replays bit-exactly.
    #[test]
    fn boosting_exits_and_replays(
        (preds, labels, mask_a, mask_b) in rows_with_proxy(40),
        alpha in prop_oneof![Just(0.5f64), Just(0.2), Just(0.11)],
    ) {
        let ds = LabeledDataset::new(preds.clone(), labels).unwrap();
        let masks = vec![("a".to_string(), mask_a), ("b".to_string(), mask_b)];
        let cfg = BoostConfig::new(alpha).unwrap();
        let out = boost(&ds, &masks, &cfg).unwrap();
        prop_assert!(out.rounds <= cfg.max_rounds());
        prop_assert_eq!(out.status, BoostStatus::Calibrated);
        prop_assert!(out.exit_guard <= alpha);
        let again = boost(&ds, &masks, &cfg).unwrap();
        prop_assert_eq!(&again.log, &out.log);
        let replayed = replay(&preds, &masks, &out.log, cfg.grid_m()).unwrap();
        for (a, b) in replayed.iter().zip(&out.predictions) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    /// The patch log survives its text serialization unchanged.
    #[test]
    fn patch_log_tsv_round_trips(
        entries in prop::collection::vec(
            (
                "[a-z][a-z0-9_]{0,8}",
                0usize..=1000,
                0.0f64..=1.0,
                0.0f64..=1.0,
                0.0f64..=1.0,
                0.0f64..=1.0,
                0usize..=5000,
            ),
            0..12,
        ),
    ) {
        let log: Vec<PatchLogEntry> = entries
            .into_iter()
            .enumerate()
            .map(|(round, (group, _, level, target, mass, cell_mean, rows_touched))| {
                PatchLogEntry {
                    round,
                    group,
                    level,
                    target,
                    mass,
                    cell_mean,
                    rows_touched,
                }
            })
            .collect();
        let text = patch_log_to_tsv(&log).unwrap();
        let back = patch_log_from_tsv(&text).unwrap();
        prop_assert_eq!(back.len(), log.len());
        for (a, b) in back.iter().zip(&log) {
            prop_assert_eq!(a.round, b.round);
            prop_assert_eq!(&a.group, &b.group);
            prop_assert_eq!(a.level.to_bits(), b.level.to_bits());
            prop_assert_eq!(a.target.to_bits(), b.target.to_bits());
            prop_assert_eq!(a.mass.to_bits(), b.mass.to_bits());
            prop_assert_eq!(a.cell_mean.to_bits(), b.cell_mean.to_bits());
            prop_assert_eq!(a.rows_touched, b.rows_touched);
        }
    }
}
