//! Model updates from cascade feedback.
//!
//! Both reward models update the inverse covariance identically for every
//! examined position. They differ only in what they add to `B`: the standard
//! model adds the feature of the clicked item, the exposure-aware model adds
//! `log2(1+k)` times the clicked feature and subtracts `γ/log2(1+k)` times
//! every examined but unclicked feature.

use std::ops::RangeInclusive;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bandit::BanditModel;
use crate::error::{Error, Result};

/// Cascade feedback on a list of `list_len` items. `click` is 1-based;
/// `None` means the user scanned the whole list without clicking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Feedback {
    pub list_len: usize,
    pub click: Option<usize>,
}

impl Feedback {
    pub fn new(list_len: usize, click: Option<usize>) -> Result<Self> {
        if let Some(c) = click {
            if c == 0 || c > list_len {
                return Err(Error::InvalidParameter(format!(
                    "click position {c} outside 1..={list_len}"
                )));
            }
        }
        Ok(Self { list_len, click })
    }

    /// Positions the user looked at: through the click, or the whole list.
    pub fn examined_positions(&self) -> RangeInclusive<usize> {
        1..=self.examined_count()
    }

    pub fn examined_count(&self) -> usize {
        self.click.unwrap_or(self.list_len).min(self.list_len)
    }
}

/// Replaces `minv` by the inverse of `M + xᵀx` in place.
pub fn sherman_morrison_update(minv: &mut DMatrix<f64>, x: &[f64]) -> Result<()> {
    if x.len() != minv.nrows() {
        return Err(Error::DimensionMismatch {
            expected: minv.nrows(),
            actual: x.len(),
        });
    }
    let xv = DVector::from_column_slice(x);
    let mx = &*minv * &xv;
    let denom = 1.0 + xv.dot(&mx);
    if !(denom > 0.0) {
        return Err(Error::Numeric(format!(
            "Sherman-Morrison denominator {denom} is not positive"
        )));
    }
    minv.ger(-1.0 / denom, &mx, &mx, 1.0);
    let d = minv.nrows();
    for r in 0..d {
        for c in (r + 1)..d {
            let avg = 0.5 * (minv[(r, c)] + minv[(c, r)]);
            minv[(r, c)] = avg;
            minv[(c, r)] = avg;
        }
    }
    Ok(())
}

/// Importance weight of the examined item at position `k`:
/// `log2(1+k)` for the click, `-γ/log2(1+k)` above it (or anywhere when
/// nothing was clicked).
pub fn exposure_weight(click: Option<usize>, k: usize, gamma: f64) -> Result<f64> {
    if k == 0 {
        return Err(Error::InvalidParameter("positions start at 1".into()));
    }
    let log = (1.0 + k as f64).log2();
    match click {
        Some(c) if k == c => Ok(log),
        Some(c) if k > c => Err(Error::UnobservedPosition {
            position: k,
            click: c,
        }),
        _ => Ok(-gamma / log),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum RewardModel {
    Standard,
    ExposureAware { gamma: f64 },
}

impl RewardModel {
    /// Short label used in file names and CSV rows.
    pub fn label(&self) -> &'static str {
        match self {
            RewardModel::Standard => "standard",
            RewardModel::ExposureAware { .. } => "ea",
        }
    }

    pub fn apply(
        &self,
        model: &mut BanditModel,
        fb: &Feedback,
        features: &[Vec<f64>],
    ) -> Result<()> {
        match *self {
            RewardModel::Standard => update_standard(model, fb, features),
            RewardModel::ExposureAware { gamma } => {
                update_exposure_aware(model, fb, features, gamma)
            }
        }
    }
}

fn update_with(
    model: &mut BanditModel,
    fb: &Feedback,
    features: &[Vec<f64>],
    weight: impl Fn(usize) -> Result<f64>,
) -> Result<()> {
    if features.len() != fb.list_len {
        return Err(Error::DimensionMismatch {
            expected: fb.list_len,
            actual: features.len(),
        });
    }
    for k in fb.examined_positions() {
        let x = &features[k - 1];
        model.check_dim(x.len())?;
        sherman_morrison_update(&mut model.minv, x)?;
        let w = weight(k)?;
        if w != 0.0 {
            for (b, xi) in model.b.iter_mut().zip(x) {
                *b += w * xi;
            }
        }
    }
    Ok(())
}

/// `M ← M + xᵀx` and `B ← B + x·1(k = click)` over examined positions.
pub fn update_standard(
    model: &mut BanditModel,
    fb: &Feedback,
    features: &[Vec<f64>],
) -> Result<()> {
    update_with(model, fb, features, |k| {
        Ok(if fb.click == Some(k) { 1.0 } else { 0.0 })
    })
}

/// Same covariance update as [`update_standard`]; `B` moves by
/// [`exposure_weight`] times each examined feature.
pub fn update_exposure_aware(
    model: &mut BanditModel,
    fb: &Feedback,
    features: &[Vec<f64>],
    gamma: f64,
) -> Result<()> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "gamma {gamma} must be non-negative"
        )));
    }
    update_with(model, fb, features, |k| exposure_weight(fb.click, k, gamma))
}
