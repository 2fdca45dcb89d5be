//! Labeled datasets and group systems.
//!
//! A [`LabeledDataset`] holds a fixed predictor's scores, binary outcomes, and
//! two families of boolean membership masks per group name: the (possibly
//! unavailable) true memberships and the proxy memberships actually observed.
//! A [`GroupSystem`] records, per group, whether a true mask exists and the
//! proxy error rate used for certification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which family of masks to read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaskSide {
    True,
    Proxy,
}

impl MaskSide {
    pub fn label(self) -> &'static str {
        match self {
            MaskSide::True => "true",
            MaskSide::Proxy => "proxy",
        }
    }
}

/// Predictions, labels, and named membership masks over the same rows.
///
/// Predictions live in `[0, 1]`; `-0.0` is normalized to `0.0` so level sets
/// keyed on the stored bit pattern are well defined. Labels are 0/1.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    predictions: Vec<f64>,
    labels: Vec<u8>,
    true_groups: BTreeMap<String, Vec<bool>>,
    proxy_groups: BTreeMap<String, Vec<bool>>,
}

fn validate_predictions(predictions: &mut [f64]) -> Result<()> {
    for (row, p) in predictions.iter_mut().enumerate() {
        if !p.is_finite() || *p < 0.0 || *p > 1.0 {
            return Err(Error::ValueOutOfRange {
                what: "prediction",
                row,
                value: *p,
            });
        }
        if *p == 0.0 {
            *p = 0.0; // collapse -0.0
        }
    }
    Ok(())
}

impl LabeledDataset {
    pub fn new(mut predictions: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::LengthMismatch {
                what: "labels",
                expected: predictions.len(),
                actual: labels.len(),
            });
        }
        validate_predictions(&mut predictions)?;
        for (row, &y) in labels.iter().enumerate() {
            if y > 1 {
                return Err(Error::ValueOutOfRange {
                    what: "label",
                    row,
                    value: y as f64,
                });
            }
        }
        Ok(Self {
            predictions,
            labels,
            true_groups: BTreeMap::new(),
            proxy_groups: BTreeMap::new(),
        })
    }

    fn check_mask(&self, mask: &[bool]) -> Result<()> {
        if mask.len() != self.row_count() {
            return Err(Error::LengthMismatch {
                what: "group mask",
                expected: self.row_count(),
                actual: mask.len(),
            });
        }
        Ok(())
    }

    pub fn add_true_group(&mut self, name: impl Into<String>, mask: Vec<bool>) -> Result<()> {
        self.check_mask(&mask)?;
        self.true_groups.insert(name.into(), mask);
        Ok(())
    }

    pub fn add_proxy_group(&mut self, name: impl Into<String>, mask: Vec<bool>) -> Result<()> {
        self.check_mask(&mask)?;
        self.proxy_groups.insert(name.into(), mask);
        Ok(())
    }

    pub fn with_true_group(mut self, name: impl Into<String>, mask: Vec<bool>) -> Result<Self> {
        self.add_true_group(name, mask)?;
        Ok(self)
    }

    pub fn with_proxy_group(mut self, name: impl Into<String>, mask: Vec<bool>) -> Result<Self> {
        self.add_proxy_group(name, mask)?;
        Ok(self)
    }

    pub fn row_count(&self) -> usize {
        self.predictions.len()
    }

    pub fn predictions(&self) -> &[f64] {
        &self.predictions
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn true_groups(&self) -> &BTreeMap<String, Vec<bool>> {
        &self.true_groups
    }

    pub fn proxy_groups(&self) -> &BTreeMap<String, Vec<bool>> {
        &self.proxy_groups
    }

    pub fn mask(&self, name: &str, side: MaskSide) -> Option<&[bool]> {
        let map = match side {
            MaskSide::True => &self.true_groups,
            MaskSide::Proxy => &self.proxy_groups,
        };
        map.get(name).map(Vec::as_slice)
    }

    pub fn require_mask(&self, name: &str, side: MaskSide) -> Result<&[bool]> {
        self.mask(name, side).ok_or_else(|| Error::MissingMask {
            group: name.to_string(),
            side: side.label(),
        })
    }

    /// Same rows and masks, different predictor outputs.
    pub fn with_predictions(&self, mut predictions: Vec<f64>) -> Result<Self> {
        if predictions.len() != self.row_count() {
            return Err(Error::LengthMismatch {
                what: "predictions",
                expected: self.row_count(),
                actual: predictions.len(),
            });
        }
        validate_predictions(&mut predictions)?;
        Ok(Self {
            predictions,
            labels: self.labels.clone(),
            true_groups: self.true_groups.clone(),
            proxy_groups: self.proxy_groups.clone(),
        })
    }

    /// Like [`with_predictions`](Self::with_predictions) but only requires
    /// finite values. Least-squares adjustment can push scores outside
    /// `[0, 1]`; the metrics are still well defined there.
    pub fn with_predictions_unbounded(&self, mut predictions: Vec<f64>) -> Result<Self> {
        if predictions.len() != self.row_count() {
            return Err(Error::LengthMismatch {
                what: "predictions",
                expected: self.row_count(),
                actual: predictions.len(),
            });
        }
        for (row, p) in predictions.iter_mut().enumerate() {
            if !p.is_finite() {
                return Err(Error::ValueOutOfRange {
                    what: "prediction",
                    row,
                    value: *p,
                });
            }
            if *p == 0.0 {
                *p = 0.0;
            }
        }
        Ok(Self {
            predictions,
            labels: self.labels.clone(),
            true_groups: self.true_groups.clone(),
            proxy_groups: self.proxy_groups.clone(),
        })
    }

    /// Rows at the given indices, in the given order. Indices must be in range.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let pick_f = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_u = |v: &[u8]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        let pick_b = |v: &[bool]| indices.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            predictions: pick_f(&self.predictions),
            labels: pick_u(&self.labels),
            true_groups: self
                .true_groups
                .iter()
                .map(|(k, v)| (k.clone(), pick_b(v)))
                .collect(),
            proxy_groups: self
                .proxy_groups
                .iter()
                .map(|(k, v)| (k.clone(), pick_b(v)))
                .collect(),
        }
    }
}

/// Shared check for `(name, mask)` lists fed to the post-processors: names
/// unique, every mask covering all rows.
pub(crate) fn validate_mask_list(n: usize, masks: &[(String, Vec<bool>)]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for (name, mask) in masks {
        if !seen.insert(name.as_str()) {
            return Err(Error::InvalidParameter {
                name: "masks",
                reason: format!("duplicate group name {name:?}"),
            });
        }
        if mask.len() != n {
            return Err(Error::LengthMismatch {
                what: "group mask",
                expected: n,
                actual: mask.len(),
            });
        }
    }
    Ok(())
}

/// One certifiable group: its name, whether a true mask is available, and the
/// proxy error rate to certify with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupEntry {
    pub name: String,
    pub has_true: bool,
    pub proxy_error: Option<f64>,
}

/// The collection of groups a certificate covers. Names are unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSystem {
    entries: Vec<GroupEntry>,
}

impl GroupSystem {
    pub fn new(entries: Vec<GroupEntry>) -> Result<Self> {
        let mut seen = std::collections::BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.name.clone()) {
                return Err(Error::InvalidParameter {
                    name: "group system",
                    reason: format!("duplicate group name {:?}", e.name),
                });
            }
            if let Some(err) = e.proxy_error {
                if !err.is_finite() || !(0.0..=1.0).contains(&err) {
                    return Err(Error::InvalidParameter {
                        name: "proxy_error",
                        reason: format!("group {:?}: {} is not in [0, 1]", e.name, err),
                    });
                }
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[GroupEntry] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Option<&GroupEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn require_proxy_error(&self, name: &str) -> Result<f64> {
        self.get(name)
            .and_then(|e| e.proxy_error)
            .ok_or_else(|| Error::MissingProxyError {
                group: name.to_string(),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_out_of_range_predictions() {
        let err = LabeledDataset::new(vec![0.5, 1.2], vec![0, 1]).unwrap_err();
        match err {
            Error::ValueOutOfRange { row, .. } => assert_eq!(row, 1),
            other => panic!("unexpected error: {other}"),
        }
    }

    #[test]
    fn rejects_non_binary_labels() {
        assert!(LabeledDataset::new(vec![0.5], vec![2]).is_err());
    }

    #[test]
    fn normalizes_negative_zero() {
        let ds = LabeledDataset::new(vec![-0.0], vec![0]).unwrap();
        assert_eq!(ds.predictions()[0].to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn mask_length_must_match() {
        let ds = LabeledDataset::new(vec![0.5, 0.5], vec![0, 1]).unwrap();
        assert!(ds.with_proxy_group("g", vec![true]).is_err());
    }

    #[test]
    fn subset_reorders_rows() {
        let ds = LabeledDataset::new(vec![0.1, 0.2, 0.3], vec![0, 1, 0])
            .unwrap()
            .with_proxy_group("g", vec![true, false, true])
            .unwrap();
        let sub = ds.subset(&[2, 0]);
        assert_eq!(sub.predictions(), &[0.3, 0.1]);
        assert_eq!(sub.labels(), &[0, 0]);
        assert_eq!(sub.mask("g", MaskSide::Proxy).unwrap(), &[true, true]);
    }

    #[test]
    fn group_system_rejects_duplicates() {
        let mk = |name: &str| GroupEntry {
            name: name.to_string(),
            has_true: false,
            proxy_error: Some(0.1),
        };
        assert!(GroupSystem::new(vec![mk("a"), mk("a")]).is_err());
        assert!(GroupSystem::new(vec![mk("a"), mk("b")]).is_ok());
    }
}
