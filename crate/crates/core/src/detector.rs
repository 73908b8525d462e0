//! Cross-domain detector: flags inputs whose mean bias discrepancy exceeds a
//! percentile threshold calibrated on training data.

use crate::error::{invalid, Error, Result};
use crate::model::BENetModel;
use crate::numerics::{Scalar, Tensor};
use crate::Label;

pub const DEFAULT_PERCENTILE: f64 = 0.95;

/// Mean over every element (channels included) of a bias image.
pub fn mean_bias_discrepancy<T: Scalar>(bias: &Tensor<T>) -> Result<T> {
    if bias.is_empty() {
        return invalid("mean_bias_discrepancy", "empty bias image");
    }
    Ok(bias.mean())
}

/// Index (0-based) of the `⌈percentile·n⌉`-th smallest value.
fn order_statistic_index(n: usize, percentile: f64) -> usize {
    let rank = (percentile * n as f64).ceil() as usize;
    rank.clamp(1, n) - 1
}

/// The `⌈percentile·n⌉`-th smallest of `values` (1-indexed).
pub fn calibrate_threshold<T: Scalar>(values: &[T], percentile: f64) -> Result<T> {
    if values.is_empty() {
        return invalid("calibrate_threshold", "no calibration values");
    }
    check_percentile(percentile)?;
    let mut sorted = values.to_vec();
    sort_values(&mut sorted)?;
    Ok(sorted[order_statistic_index(sorted.len(), percentile)])
}

fn check_percentile(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return invalid("calibrate_threshold", format!("percentile {p} outside (0,1]"));
    }
    Ok(())
}

fn sort_values<T: Scalar>(v: &mut [T]) -> Result<()> {
    if v.iter().any(|x| x.is_nan()) {
        return invalid("calibrate_threshold", "NaN discrepancy value");
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(())
}

/// Calibrated threshold plus the empirical discrepancy distribution it came
/// from.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorState<T> {
    theta: Option<T>,
    /// Sorted ascending.
    calibration_values: Vec<T>,
    percentile: f64,
}

impl<T: Scalar> Default for DetectorState<T> {
    fn default() -> Self {
        Self::uncalibrated(DEFAULT_PERCENTILE)
    }
}

impl<T: Scalar> DetectorState<T> {
    pub fn uncalibrated(percentile: f64) -> Self {
        Self {
            theta: None,
            calibration_values: Vec::new(),
            percentile,
        }
    }

    pub fn calibrate(values: &[T], percentile: f64) -> Result<Self> {
        let theta = calibrate_threshold(values, percentile)?;
        let mut sorted = values.to_vec();
        sort_values(&mut sorted)?;
        Ok(Self {
            theta: Some(theta),
            calibration_values: sorted,
            percentile,
        })
    }

    /// Restore a state with a known threshold (e.g. from a checkpoint).
    pub fn from_parts(theta: T, mut calibration_values: Vec<T>, percentile: f64) -> Result<Self> {
        check_percentile(percentile)?;
        sort_values(&mut calibration_values)?;
        Ok(Self {
            theta: Some(theta),
            calibration_values,
            percentile,
        })
    }

    pub fn theta(&self) -> Result<T> {
        self.theta.ok_or(Error::Uncalibrated)
    }

    pub fn is_calibrated(&self) -> bool {
        self.theta.is_some()
    }

    pub fn calibration_values(&self) -> &[T] {
        &self.calibration_values
    }

    pub fn percentile(&self) -> f64 {
        self.percentile
    }

    /// Decision rule on precomputed classifier probability and discrepancy.
    pub fn decide(&self, probability: T, discrepancy: T) -> Result<Decision> {
        Ok(decide(probability, discrepancy, self.theta()?))
    }

    /// Run the model on one image or a batch and apply the decision rule.
    pub fn predict(&self, model: &BENetModel<T>, x: &Tensor<T>) -> Result<Vec<Prediction<T>>> {
        let theta = self.theta()?;
        let batch = match x.shape() {
            &[c, h, w] => x.reshape(&[1, c, h, w])?,
            _ => x.clone(),
        };
        let trace = model.trace(&batch)?;
        let n = batch.shape()[0];
        (0..n)
            .map(|i| {
                let bias = trace.bias.index_outer(i)?;
                let d = mean_bias_discrepancy(&bias)?;
                let p = trace.probability[i];
                let decision = decide(p, d, theta);
                Ok(Prediction {
                    label: decision.label,
                    probability: p,
                    discrepancy: d,
                    unknown: decision.unknown,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Decision {
    pub label: Label,
    pub unknown: bool,
}

/// `D > θ` → fake and flagged unknown; otherwise the classifier label
/// (`p > 0.5` → fake).
pub fn decide<T: Scalar>(probability: T, discrepancy: T, theta: T) -> Decision {
    if discrepancy > theta {
        Decision {
            label: Label::Fake,
            unknown: true,
        }
    } else {
        Decision {
            label: classifier_label(probability),
            unknown: false,
        }
    }
}

pub fn classifier_label<T: Scalar>(probability: T) -> Label {
    if probability > T::from_f64_lossy(0.5) {
        Label::Fake
    } else {
        Label::Real
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction<T> {
    pub label: Label,
    pub probability: T,
    pub discrepancy: T,
    pub unknown: bool,
}
