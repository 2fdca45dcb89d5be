//! Exact finite populations for checking the transfer bound.
//!
//! A [`FiniteJoint`] is a small discrete distribution over
//! `(prediction, label, group, proxy)` tuples. Population metrics computed
//! on it are exact (no sampling), which makes it the reference oracle for
//! two facts: the certified ceiling is sound on every population, and there
//! exist populations where it holds with equality on either branch of the
//! transfer term.

use std::collections::BTreeMap;

use crate::bounds;
use crate::error::{Error, Result};

/// One support point of the population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub probability: f64,
    pub f: f64,
    pub y: u8,
    pub group: u8,
    pub proxy: u8,
}

/// A discrete joint distribution: positive probabilities summing to one,
/// predictions in `[0, 1]`, all support points distinct.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteJoint {
    atoms: Vec<Atom>,
}

const SUM_TOL: f64 = 1e-12;

impl FiniteJoint {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut sum = 0.0;
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in atoms.iter().enumerate() {
            if !a.probability.is_finite() || a.probability <= 0.0 {
                return Err(Error::ValueOutOfRange {
                    what: "atom probability",
                    row: i,
                    value: a.probability,
                });
            }
            if !a.f.is_finite() || !(0.0..=1.0).contains(&a.f) {
                return Err(Error::ValueOutOfRange {
                    what: "atom prediction",
                    row: i,
                    value: a.f,
                });
            }
            if a.y > 1 || a.group > 1 || a.proxy > 1 {
                return Err(Error::InvalidParameter {
                    name: "atom",
                    reason: format!("atom {i}: y, group, proxy must be 0/1"),
                });
            }
            if !seen.insert((a.f.to_bits(), a.y, a.group, a.proxy)) {
                return Err(Error::InvalidParameter {
                    name: "atoms",
                    reason: format!("duplicate support point at atom {i}"),
                });
            }
            sum += a.probability;
        }
        if (sum - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidParameter {
                name: "atoms",
                reason: format!("probabilities sum to {sum}, not 1"),
            });
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// Plain-text table: header plus one `probability f y group proxy` line
    /// per atom. Floats print in shortest round-trip form.
    pub fn to_table(&self) -> String {
        let mut out = String::from("probability f y group proxy\n");
        for a in &self.atoms {
            out.push_str(&format!(
                "{} {} {} {} {}\n",
                a.probability, a.f, a.y, a.group, a.proxy
            ));
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().unwrap_or("");
        if header != "probability f y group proxy" {
            return Err(Error::Parse(format!("unexpected joint header {header:?}")));
        }
        let mut atoms = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 5 {
                return Err(Error::Parse(format!(
                    "joint line {}: expected 5 fields, got {}",
                    lineno + 2,
                    fields.len()
                )));
            }
            let bad = |what: &str, s: &str| {
                Error::Parse(format!("joint line {}: bad {what} {s:?}", lineno + 2))
            };
            atoms.push(Atom {
                probability: fields[0].parse().map_err(|_| bad("probability", fields[0]))?,
                f: fields[1].parse().map_err(|_| bad("f", fields[1]))?,
                y: fields[2].parse().map_err(|_| bad("y", fields[2]))?,
                group: fields[3].parse().map_err(|_| bad("group", fields[3]))?,
                proxy: fields[4].parse().map_err(|_| bad("proxy", fields[4]))?,
            });
        }
        Self::new(atoms)
    }
}

/// Exact population quantities of a joint, for the single group it encodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PopulationMetrics {
    pub mse: f64,
    pub proxy_error: f64,
    pub ae_true: f64,
    pub ae_proxy: f64,
    pub ece_true: f64,
    pub ece_proxy: f64,
    /// `min(proxy_error, sqrt(mse * proxy_error))`.
    pub f_term: f64,
}

pub fn population_metrics(joint: &FiniteJoint) -> PopulationMetrics {
    let mut mse = 0.0;
    let mut err = 0.0;
    let mut ae_true = 0.0;
    let mut ae_proxy = 0.0;
    // Per-level signed sums, keyed on prediction bits.
    let mut lvl_true: BTreeMap<u64, f64> = BTreeMap::new();
    let mut lvl_proxy: BTreeMap<u64, f64> = BTreeMap::new();
    for a in joint.atoms() {
        let d = a.f - a.y as f64;
        mse += a.probability * d * d;
        if a.group != a.proxy {
            err += a.probability;
        }
        if a.group == 1 {
            ae_true += a.probability * d;
            *lvl_true.entry(a.f.to_bits()).or_insert(0.0) += a.probability * d;
        }
        if a.proxy == 1 {
            ae_proxy += a.probability * d;
            *lvl_proxy.entry(a.f.to_bits()).or_insert(0.0) += a.probability * d;
        }
    }
    let ece_true: f64 = lvl_true.values().map(|s| s.abs()).sum();
    let ece_proxy: f64 = lvl_proxy.values().map(|s| s.abs()).sum();
    // Accumulated masses are probabilities; shave the float dust that can
    // push the sum past 1.
    let err = err.min(1.0);
    PopulationMetrics {
        mse,
        proxy_error: err,
        ae_true: ae_true.abs(),
        ae_proxy: ae_proxy.abs(),
        ece_true,
        ece_proxy,
        f_term: bounds::f_term(mse, err).expect("joint metrics are in domain"),
    }
}

fn check_range(name: &'static str, v: f64, lo: f64, hi: f64) -> Result<()> {
    if !v.is_finite() || v < lo || v > hi {
        return Err(Error::Infeasible(format!(
            "{name} = {v} violates {lo} <= {name} <= {hi}"
        )));
    }
    Ok(())
}

/// Population where the square-root branch of the accuracy ceiling is an
/// equality. Needs `0 < mse <= err <= 1` and `mu11 + err <= 1`, where `mu11`
/// is the mass of the correctly flagged, correctly predicted stratum.
///
/// Mass `err` sits on a disagreement point with prediction
/// `sqrt(mse / err)` and label 0; everything else is predicted exactly. The
/// proxy-side violation is zero while the true-side violation equals
/// `sqrt(mse * err)`.
pub fn build_tight_ma_sqrt(mse: f64, err: f64, mu11: f64) -> Result<FiniteJoint> {
    check_range("err", err, f64::MIN_POSITIVE, 1.0)?;
    check_range("mse", mse, f64::MIN_POSITIVE, err)?;
    check_range("mu11", mu11, 0.0, 1.0 - err)?;
    let c = (mse / err).sqrt();
    let rest = 1.0 - err - mu11;
    let mut atoms = Vec::new();
    if mu11 > 0.0 {
        atoms.push(Atom {
            probability: mu11,
            f: 1.0,
            y: 1,
            group: 1,
            proxy: 1,
        });
    }
    if rest > 0.0 {
        atoms.push(Atom {
            probability: rest,
            f: 0.0,
            y: 0,
            group: 0,
            proxy: 0,
        });
    }
    atoms.push(Atom {
        probability: err,
        f: c,
        y: 0,
        group: 1,
        proxy: 0,
    });
    FiniteJoint::new(atoms)
}

/// Population where the plain-error branch of the accuracy ceiling is an
/// equality. Needs `0 < err < mse` and `mse + mu11 <= 1` so the agreement
/// stratum can carry the residual second moment `mse - err` with a
/// prediction at most 1.
///
/// The disagreement stratum predicts 1 on label 0 (the worst case), the
/// unflagged agreement stratum absorbs `mse - err`, and again the proxy side
/// sees no violation while the true side violates by exactly `err`.
pub fn build_tight_ma_err(mse: f64, err: f64, mu11: f64) -> Result<FiniteJoint> {
    check_range("err", err, f64::MIN_POSITIVE, 1.0)?;
    if mse <= err {
        return Err(Error::Infeasible(format!(
            "mse = {mse} violates mse > err = {err}; use the square-root branch"
        )));
    }
    check_range("mu11", mu11, 0.0, 1.0 - err)?;
    let rest = 1.0 - err - mu11;
    let residual = mse - err;
    if rest <= 0.0 || residual > rest {
        return Err(Error::Infeasible(format!(
            "residual second moment mse - err = {residual} exceeds agreement mass 1 - err - mu11 = {rest}"
        )));
    }
    let c = (residual / rest).sqrt();
    let mut atoms = Vec::new();
    if mu11 > 0.0 {
        atoms.push(Atom {
            probability: mu11,
            f: 1.0,
            y: 1,
            group: 1,
            proxy: 1,
        });
    }
    atoms.push(Atom {
        probability: rest,
        f: c,
        y: 0,
        group: 0,
        proxy: 0,
    });
    atoms.push(Atom {
        probability: err,
        f: 1.0,
        y: 0,
        group: 1,
        proxy: 0,
    });
    FiniteJoint::new(atoms)
}

/// Square-root-branch equality for the calibration ceiling. The accuracy
/// construction already concentrates each stratum on a single level, so the
/// same population makes the calibration gap tight level by level.
pub fn build_tight_mc_sqrt(mse: f64, err: f64, mu11: f64) -> Result<FiniteJoint> {
    build_tight_ma_sqrt(mse, err, mu11)
}

/// Plain-error-branch equality for the calibration ceiling.
pub fn build_tight_mc_err(mse: f64, err: f64, mu11: f64) -> Result<FiniteJoint> {
    build_tight_ma_err(mse, err, mu11)
}
