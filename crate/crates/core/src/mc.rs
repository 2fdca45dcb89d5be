//! Calibration post-processing by iterative cell patching.
//!
//! Predictions are snapped to a uniform grid of `m + 1` levels. Each round
//! finds the (group, level) cell with the largest share-weighted squared
//! calibration gap and moves the whole cell to the grid point nearest its
//! label mean. The loop stops once every group's share-weighted mean squared
//! gap is at or below `alpha`, which caps the group's calibration violation
//! at `sqrt(alpha)`. Each patch strictly lowers mean squared error, and the
//! per-round progress bound keeps the round count under `4 / alpha^2`.

use serde::{Deserialize, Serialize};

use crate::dataset::{validate_mask_list, LabeledDataset};
use crate::error::{Error, Result};

/// Grid resolution and stopping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostConfig {
    alpha: f64,
    grid_m: usize,
    max_rounds: usize,
}

impl BoostConfig {
    /// `alpha` must lie in `(0, 1]`. The grid has `ceil(1/alpha)` steps and
    /// the default round cap is `ceil(4/alpha^2)`, which the progress bound
    /// keeps out of reach.
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha <= 0.0 || alpha > 1.0 {
            return Err(Error::InvalidParameter {
                name: "alpha",
                reason: format!("{alpha} is not in (0, 1]"),
            });
        }
        Ok(Self {
            alpha,
            grid_m: (1.0 / alpha).ceil() as usize,
            max_rounds: (4.0 / (alpha * alpha)).ceil() as usize,
        })
    }

    /// Override the round cap, mainly to exercise the cap error path.
    pub fn with_max_rounds(mut self, max_rounds: usize) -> Result<Self> {
        if max_rounds == 0 {
            return Err(Error::InvalidParameter {
                name: "max_rounds",
                reason: "must be at least 1".into(),
            });
        }
        self.max_rounds = max_rounds;
        Ok(self)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn grid_m(&self) -> usize {
        self.grid_m
    }

    pub fn max_rounds(&self) -> usize {
        self.max_rounds
    }
}

/// One applied patch. `level` and `target` are grid values; `mass` and
/// `cell_mean` describe the cell at selection time on the data being fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchLogEntry {
    pub round: usize,
    pub group: String,
    pub level: f64,
    pub target: f64,
    pub mass: f64,
    pub cell_mean: f64,
    pub rows_touched: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoostStatus {
    /// Every group's guard is at or below alpha.
    Calibrated,
    /// A selected patch would not move its cell. Unreachable while the guard
    /// exceeds alpha; kept as a defensive exit.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostOutcome {
    pub predictions: Vec<f64>,
    pub log: Vec<PatchLogEntry>,
    pub rounds: usize,
    pub status: BoostStatus,
    /// Worst share-weighted mean squared calibration gap at exit.
    pub exit_guard: f64,
}

fn check_unit_range(predictions: &[f64]) -> Result<()> {
    for (row, &p) in predictions.iter().enumerate() {
        if !p.is_finite() || !(0.0..=1.0).contains(&p) {
            return Err(Error::ValueOutOfRange {
                what: "prediction",
                row,
                value: p,
            });
        }
    }
    Ok(())
}

fn grid_values(m: usize) -> Vec<f64> {
    (0..=m).map(|j| j as f64 / m as f64).collect()
}

fn snap_index(p: f64, m: usize) -> usize {
    // Round half up, clamped to the top level.
    let j = (p * m as f64 + 0.5).floor() as usize;
    j.min(m)
}

/// Snap predictions in `[0, 1]` to the grid `{0, 1/m, ..., 1}`, rounding
/// ties upward.
pub fn snap_to_grid(predictions: &[f64], m: usize) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "grid needs at least one step".into(),
        });
    }
    check_unit_range(predictions)?;
    let grid = grid_values(m);
    Ok(predictions.iter().map(|&p| grid[snap_index(p, m)]).collect())
}

fn on_grid_index(v: f64, m: usize, what: &'static str) -> Result<usize> {
    let j = (v * m as f64).round();
    let idx = j as usize;
    if j < 0.0 || idx > m || idx as f64 / m as f64 != v {
        return Err(Error::InvalidParameter {
            name: what,
            reason: format!("{v} is not a grid level for m = {m}"),
        });
    }
    Ok(idx)
}

/// Share-weighted mean squared calibration gap of one group:
/// `sum over levels v of (|cell| / n) * (mean label in cell - v)^2`,
/// where a cell is the masked rows with prediction exactly `v`. Predictions
/// must already sit on the `m`-grid.
pub fn group_avg_sq_cal_error(ds: &LabeledDataset, mask: &[bool], m: usize) -> Result<f64> {
    let n = ds.row_count();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if mask.len() != n {
        return Err(Error::LengthMismatch {
            what: "group mask",
            expected: n,
            actual: mask.len(),
        });
    }
    let grid = grid_values(m.max(1));
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "grid needs at least one step".into(),
        });
    }
    let mut count = vec![0usize; m + 1];
    let mut sum_y = vec![0.0f64; m + 1];
    for ((&inside, &p), &y) in mask.iter().zip(ds.predictions()).zip(ds.labels()) {
        if inside {
            let j = on_grid_index(p, m, "prediction")?;
            count[j] += 1;
            sum_y[j] += y as f64;
        }
    }
    let mut guard = 0.0;
    for j in 0..=m {
        if count[j] > 0 {
            let delta = sum_y[j] / count[j] as f64 - grid[j];
            guard += (count[j] as f64 / n as f64) * delta * delta;
        }
    }
    Ok(guard)
}

struct CellStats {
    // count[g][j], sum_y[g][j]
    count: Vec<Vec<usize>>,
    sum_y: Vec<Vec<f64>>,
}

fn collect_cells(
    indices: &[usize],
    labels: &[u8],
    masks: &[&(String, Vec<bool>)],
    m: usize,
) -> CellStats {
    let mut count = vec![vec![0usize; m + 1]; masks.len()];
    let mut sum_y = vec![vec![0.0f64; m + 1]; masks.len()];
    for (g, (_, mask)) in masks.iter().enumerate() {
        for (i, &j) in indices.iter().enumerate() {
            if mask[i] {
                count[g][j] += 1;
                sum_y[g][j] += labels[i] as f64;
            }
        }
    }
    CellStats { count, sum_y }
}

/// Run the patching loop on the dataset's predictions with the given masks.
///
/// Cell selection is deterministic: highest score, then larger cell mass,
/// then lexicographically smaller group name, then lower level. Returns the
/// final predictions, the replayable patch log, and the exit state. Fails
/// with the partial log if the round cap is hit first.
pub fn boost(
    ds: &LabeledDataset,
    masks: &[(String, Vec<bool>)],
    cfg: &BoostConfig,
) -> Result<BoostOutcome> {
    let n = ds.row_count();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    validate_mask_list(n, masks)?;
    check_unit_range(ds.predictions())?;
    let m = cfg.grid_m;
    let grid = grid_values(m);
    let mut indices: Vec<usize> = ds.predictions().iter().map(|&p| snap_index(p, m)).collect();
    // Sorted group order fixes the iteration, so full ties resolve to the
    // lexicographically smallest name.
    let mut sorted: Vec<&(String, Vec<bool>)> = masks.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    let mut log: Vec<PatchLogEntry> = Vec::new();
    let (status, exit_guard) = loop {
        let stats = collect_cells(&indices, ds.labels(), &sorted, m);
        let mut guard_max = 0.0f64;
        let mut best: Option<(f64, usize, usize, usize)> = None; // score, count, g, j
        for g in 0..sorted.len() {
            let mut guard = 0.0;
            for (j, (&c, &sy)) in stats.count[g].iter().zip(&stats.sum_y[g]).enumerate() {
                if c == 0 {
                    continue;
                }
                let delta = sy / c as f64 - grid[j];
                let score = (c as f64 / n as f64) * delta * delta;
                guard += score;
                let better = match best {
                    None => true,
                    Some((bs, bc, _, _)) => score > bs || (score == bs && c > bc),
                };
                if better {
                    best = Some((score, c, g, j));
                }
            }
            guard_max = guard_max.max(guard);
        }
        if guard_max <= cfg.alpha {
            break (BoostStatus::Calibrated, guard_max);
        }
        if log.len() >= cfg.max_rounds {
            return Err(Error::RoundCapExceeded {
                cap: cfg.max_rounds,
                guard: guard_max,
                log,
            });
        }
        let (_, count, g, j) = best.expect("positive guard implies a non-empty cell");
        let cell_mean = stats.sum_y[g][j] / count as f64;
        let target_j = snap_index(cell_mean, m);
        if target_j == j {
            break (BoostStatus::Stalled, guard_max);
        }
        let mask = &sorted[g].1;
        for (i, idx) in indices.iter_mut().enumerate() {
            if *idx == j && mask[i] {
                *idx = target_j;
            }
        }
        log.push(PatchLogEntry {
            round: log.len(),
            group: sorted[g].0.clone(),
            level: grid[j],
            target: grid[target_j],
            mass: count as f64 / n as f64,
            cell_mean,
            rows_touched: count,
        });
    };
    Ok(BoostOutcome {
        predictions: indices.iter().map(|&j| grid[j]).collect(),
        rounds: log.len(),
        log,
        status,
        exit_guard,
    })
}

/// Apply a patch log to fresh predictions: snap to the `m`-grid, then replay
/// each patch in order against the named group's mask. On the data the log
/// was fitted on this reproduces the boosted output bit-exactly; on held-out
/// rows it transfers the fitted adjustment.
pub fn replay(
    predictions: &[f64],
    masks: &[(String, Vec<bool>)],
    log: &[PatchLogEntry],
    m: usize,
) -> Result<Vec<f64>> {
    if m == 0 {
        return Err(Error::InvalidParameter {
            name: "m",
            reason: "grid needs at least one step".into(),
        });
    }
    validate_mask_list(predictions.len(), masks)?;
    check_unit_range(predictions)?;
    let grid = grid_values(m);
    let mut indices: Vec<usize> = predictions.iter().map(|&p| snap_index(p, m)).collect();
    for entry in log {
        let mask = masks
            .iter()
            .find(|(n, _)| *n == entry.group)
            .map(|(_, mk)| mk)
            .ok_or_else(|| Error::MissingMask {
                group: entry.group.clone(),
                side: "proxy",
            })?;
        let from = on_grid_index(entry.level, m, "level")?;
        let to = on_grid_index(entry.target, m, "target")?;
        for (i, idx) in indices.iter_mut().enumerate() {
            if *idx == from && mask[i] {
                *idx = to;
            }
        }
    }
    Ok(indices.iter().map(|&j| grid[j]).collect())
}

/// Patch log as tab-separated text with a header row. Floats print in
/// shortest round-trip form, so parsing back reproduces them bit-exactly.
pub fn patch_log_to_tsv(log: &[PatchLogEntry]) -> Result<String> {
    let mut out = String::from("round\tgroup\tlevel\ttarget\tmass\tcell_mean\trows_touched\n");
    for e in log {
        if e.group.contains(['\t', '\n']) {
            return Err(Error::InvalidParameter {
                name: "group",
                reason: format!("name {:?} contains tab or newline", e.group),
            });
        }
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
            e.round, e.group, e.level, e.target, e.mass, e.cell_mean, e.rows_touched
        ));
    }
    Ok(out)
}

pub fn patch_log_from_tsv(text: &str) -> Result<Vec<PatchLogEntry>> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if header != "round\tgroup\tlevel\ttarget\tmass\tcell_mean\trows_touched" {
        return Err(Error::Parse(format!("unexpected patch log header {header:?}")));
    }
    let mut log = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "patch log line {}: expected 7 fields, got {}",
                lineno + 2,
                fields.len()
            )));
        }
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::Parse(format!("patch log line {}: bad {what} {s:?}", lineno + 2)))
        };
        let parse_u = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>()
                .map_err(|_| Error::Parse(format!("patch log line {}: bad {what} {s:?}", lineno + 2)))
        };
        log.push(PatchLogEntry {
            round: parse_u(fields[0], "round")?,
            group: fields[1].to_string(),
            level: parse_f(fields[2], "level")?,
            target: parse_f(fields[3], "target")?,
            mass: parse_f(fields[4], "mass")?,
            cell_mean: parse_f(fields[5], "cell_mean")?,
            rows_touched: parse_u(fields[6], "rows_touched")?,
        });
    }
    Ok(log)
}
