//! Baseline predictors trained inside the pipeline when no prediction
//! column is supplied.
//!
//! Two deliberately simple model families: logistic regression fitted by
//! full-batch gradient descent, and an ensemble of one median-threshold
//! stump per feature. The stump ensemble has a small finite image, which
//! keeps exact level sets meaningful for calibration work; the logistic
//! model exposes its loss and gradient so the training step can be verified
//! against finite differences.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    Logistic,
    Stumps,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    /// Mean log-loss before training and after every step.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
struct Stump {
    feature: usize,
    threshold: f64,
    lo: f64,
    hi: f64,
}

/// One stump per feature, predictions averaged.
#[derive(Debug, Clone, PartialEq)]
pub struct StumpEnsemble {
    stumps: Vec<Stump>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaselineModel {
    Logistic(LogisticModel),
    Stumps(StumpEnsemble),
}

const GD_STEPS: usize = 300;
const GD_RATE: f64 = 0.5;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn check_training_inputs(features: &[Vec<f64>], labels: &[u8]) -> Result<usize> {
    if features.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if labels.len() != features.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            expected: features.len(),
            actual: labels.len(),
        });
    }
    let d = features[0].len();
    if d == 0 {
        return Err(Error::InvalidParameter {
            name: "features",
            reason: "rows have no columns".into(),
        });
    }
    for row in features {
        if row.len() != d {
            return Err(Error::LengthMismatch {
                what: "feature row",
                expected: d,
                actual: row.len(),
            });
        }
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::SingleClassLabels);
    }
    Ok(d)
}

/// Mean log-loss of a logistic model on 0/1 labels.
pub fn logistic_loss(weights: &[f64], intercept: f64, features: &[Vec<f64>], labels: &[u8]) -> f64 {
    let n = features.len();
    let mut total = 0.0;
    for (row, &y) in features.iter().zip(labels) {
        let z: f64 = intercept + weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        total += softplus(z) - y as f64 * z;
    }
    total / n as f64
}

/// Gradient of [`logistic_loss`]: per-weight components and the intercept
/// component.
pub fn logistic_gradient(
    weights: &[f64],
    intercept: f64,
    features: &[Vec<f64>],
    labels: &[u8],
) -> (Vec<f64>, f64) {
    let n = features.len();
    let d = weights.len();
    let mut grad = vec![0.0f64; d];
    let mut grad_b = 0.0f64;
    for (row, &y) in features.iter().zip(labels) {
        let z: f64 = intercept + weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
        let delta = sigmoid(z) - y as f64;
        for j in 0..d {
            grad[j] += delta * row[j];
        }
        grad_b += delta;
    }
    for g in &mut grad {
        *g /= n as f64;
    }
    (grad, grad_b / n as f64)
}

fn train_logistic(features: &[Vec<f64>], labels: &[u8], d: usize) -> LogisticModel {
    let mut weights = vec![0.0f64; d];
    let mut intercept = 0.0f64;
    let mut loss_history = Vec::with_capacity(GD_STEPS + 1);
    loss_history.push(logistic_loss(&weights, intercept, features, labels));
    for _ in 0..GD_STEPS {
        let (grad, grad_b) = logistic_gradient(&weights, intercept, features, labels);
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= GD_RATE * g;
        }
        intercept -= GD_RATE * grad_b;
        loss_history.push(logistic_loss(&weights, intercept, features, labels));
    }
    LogisticModel {
        weights,
        intercept,
        loss_history,
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite features"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

fn train_stumps(features: &[Vec<f64>], labels: &[u8], d: usize) -> StumpEnsemble {
    let n = features.len();
    let overall = labels.iter().map(|&y| y as f64).sum::<f64>() / n as f64;
    let mut stumps = Vec::with_capacity(d);
    for j in 0..d {
        let mut column: Vec<f64> = features.iter().map(|row| row[j]).collect();
        let threshold = median(&mut column);
        let mut lo_sum = 0.0;
        let mut lo_count = 0usize;
        let mut hi_sum = 0.0;
        let mut hi_count = 0usize;
        for (row, &y) in features.iter().zip(labels) {
            if row[j] <= threshold {
                lo_sum += y as f64;
                lo_count += 1;
            } else {
                hi_sum += y as f64;
                hi_count += 1;
            }
        }
        // A constant column leaves one side empty; fall back to the base rate.
        let lo = if lo_count > 0 { lo_sum / lo_count as f64 } else { overall };
        let hi = if hi_count > 0 { hi_sum / hi_count as f64 } else { overall };
        stumps.push(Stump {
            feature: j,
            threshold,
            lo,
            hi,
        });
    }
    StumpEnsemble { stumps }
}

pub fn train_baseline(
    features: &[Vec<f64>],
    labels: &[u8],
    kind: BaselineKind,
) -> Result<BaselineModel> {
    let d = check_training_inputs(features, labels)?;
    Ok(match kind {
        BaselineKind::Logistic => BaselineModel::Logistic(train_logistic(features, labels, d)),
        BaselineKind::Stumps => BaselineModel::Stumps(train_stumps(features, labels, d)),
    })
}

impl BaselineModel {
    /// Scores in `[0, 1]` for the given rows.
    pub fn predict(&self, features: &[Vec<f64>]) -> Vec<f64> {
        match self {
            BaselineModel::Logistic(m) => features
                .iter()
                .map(|row| {
                    let z: f64 = m.intercept
                        + m.weights.iter().zip(row).map(|(w, x)| w * x).sum::<f64>();
                    sigmoid(z)
                })
                .collect(),
            BaselineModel::Stumps(m) => features
                .iter()
                .map(|row| {
                    let total: f64 = m
                        .stumps
                        .iter()
                        .map(|s| if row[s.feature] <= s.threshold { s.lo } else { s.hi })
                        .sum();
                    total / m.stumps.len() as f64
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn toy_data(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let x1: f64 = rng.sample(StandardNormal);
            let x2: f64 = rng.sample(StandardNormal);
            let p = sigmoid(1.2 * x1 - 0.7 * x2 + 0.3);
            labels.push(u8::from(rng.random::<f64>() < p));
            features.push(vec![x1, x2]);
        }
        (features, labels)
    }

    #[test]
    fn logistic_training_loss_never_increases() {
        let (features, labels) = toy_data(300, 3);
        let model = match train_baseline(&features, &labels, BaselineKind::Logistic).unwrap() {
            BaselineModel::Logistic(m) => m,
            _ => unreachable!(),
        };
        assert_eq!(model.loss_history.len(), GD_STEPS + 1);
        for pair in model.loss_history.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12, "{} -> {}", pair[0], pair[1]);
        }
        // The fit should beat the trivial constant model.
        assert!(model.loss_history.last().unwrap() < &model.loss_history[0]);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (features, labels) = toy_data(50, 4);
        let weights = vec![0.3, -0.2];
        let intercept = 0.1;
        let (grad, grad_b) = logistic_gradient(&weights, intercept, &features, &labels);
        let eps = 1e-6;
        for j in 0..2 {
            let mut plus = weights.clone();
            plus[j] += eps;
            let mut minus = weights.clone();
            minus[j] -= eps;
            let fd = (logistic_loss(&plus, intercept, &features, &labels)
                - logistic_loss(&minus, intercept, &features, &labels))
                / (2.0 * eps);
            assert!((fd - grad[j]).abs() <= 1e-5 * fd.abs().max(1.0), "{fd} vs {}", grad[j]);
        }
        let fd_b = (logistic_loss(&weights, intercept + eps, &features, &labels)
            - logistic_loss(&weights, intercept - eps, &features, &labels))
            / (2.0 * eps);
        assert!((fd_b - grad_b).abs() <= 1e-5 * fd_b.abs().max(1.0));
    }

    #[test]
    fn predictions_stay_in_unit_range() {
        let (features, labels) = toy_data(200, 5);
        for kind in [BaselineKind::Logistic, BaselineKind::Stumps] {
            let model = train_baseline(&features, &labels, kind).unwrap();
            for p in model.predict(&features) {
                assert!((0.0..=1.0).contains(&p));
            }
        }
    }

    #[test]
    fn stump_image_is_small() {
        let (features, labels) = toy_data(200, 6);
        let model = train_baseline(&features, &labels, BaselineKind::Stumps).unwrap();
        let mut distinct: Vec<u64> = model
            .predict(&features)
            .into_iter()
            .map(f64::to_bits)
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        // Two binary stumps give at most four distinct averages.
        assert!(distinct.len() <= 4);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(matches!(
            train_baseline(&[], &[], BaselineKind::Logistic),
            Err(Error::EmptyDataset)
        ));
        let features = vec![vec![0.1], vec![0.2]];
        assert!(matches!(
            train_baseline(&features, &[1, 1], BaselineKind::Logistic),
            Err(Error::SingleClassLabels)
        ));
        let ragged = vec![vec![0.1, 0.2], vec![0.3]];
        assert!(train_baseline(&ragged, &[0, 1], BaselineKind::Stumps).is_err());
    }
}
