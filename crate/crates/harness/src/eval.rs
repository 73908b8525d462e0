//! Scoring, detector calibration, evaluation and perturbation robustness.

use std::collections::BTreeMap;

use benet_core::detector::{decide, mean_bias_discrepancy};
use benet_core::{BENetModel, DetectorState, Label, Scalar};
use benet_data::{perturb, Domain, LabeledSample, PerturbationKind, PerturbationSpec};

use crate::config::CalibrationSet;
use crate::error::{HarnessError, Result};
use crate::metrics::{auc, Confusion};
use crate::train::batch_tensor;

/// Samples per inference batch.
pub const EVAL_BATCH: usize = 32;

/// Classifier probability and bias discrepancy of one sample, widened
/// losslessly from the model's precision.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub id: String,
    pub domain: Domain,
    pub label: Label,
    pub probability: f64,
    pub discrepancy: f64,
}

pub fn score<T: Scalar>(model: &BENetModel<T>, samples: &[&LabeledSample]) -> Result<Vec<Scored>> {
    if samples.is_empty() {
        return Err(HarnessError::Invalid("cannot score an empty split".into()));
    }
    let mut out = Vec::with_capacity(samples.len());
    let indices: Vec<usize> = (0..samples.len()).collect();
    for chunk in indices.chunks(EVAL_BATCH) {
        let x = batch_tensor::<T>(samples, chunk)?;
        let trace = model.trace(&x)?;
        for (j, &i) in chunk.iter().enumerate() {
            let d = mean_bias_discrepancy(&trace.bias.index_outer(j)?)?;
            out.push(Scored {
                id: samples[i].id.clone(),
                domain: samples[i].domain,
                label: samples[i].label,
                probability: trace.probability[j].to_f64_lossy(),
                discrepancy: d.to_f64_lossy(),
            });
        }
    }
    Ok(out)
}

/// Detector threshold from the model's discrepancies on `samples`.
pub fn calibrate<T: Scalar>(
    model: &BENetModel<T>,
    samples: &[&LabeledSample],
    percentile: f64,
    set: CalibrationSet,
) -> Result<DetectorState<T>> {
    let chosen: Vec<&LabeledSample> = samples
        .iter()
        .copied()
        .filter(|s| set == CalibrationSet::All || !s.label.is_fake())
        .collect();
    if chosen.is_empty() {
        return Err(HarnessError::Invalid("no samples to calibrate on".into()));
    }
    let values: Vec<T> = score(model, &chosen)?
        .iter()
        .map(|s| T::from_f64_lossy(s.discrepancy))
        .collect();
    Ok(DetectorState::calibrate(&values, percentile)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainStats {
    pub domain: Domain,
    pub count: usize,
    pub accuracy: f64,
    pub mean_probability: f64,
    pub mean_discrepancy: f64,
    pub unknown_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub count: usize,
    pub with_detector: bool,
    pub theta: Option<f64>,
    /// Hard-decision accuracy, using the detector override when enabled.
    pub accuracy: f64,
    /// From raw classifier probabilities; `None` for a single-class set.
    pub auc: Option<f64>,
    pub confusion: Confusion,
    pub fake_recall: f64,
    pub unknown_rate: f64,
    pub per_domain: Vec<DomainStats>,
    pub labels: Vec<Label>,
}

/// Evaluate precomputed scores. With `theta`, decisions follow the
/// detector rule; without it, `p > 0.5` alone.
pub fn evaluate_scored(scored: &[Scored], theta: Option<f64>) -> Result<EvalReport> {
    if scored.is_empty() {
        return Err(HarnessError::Invalid("cannot evaluate an empty split".into()));
    }
    let mut predicted = Vec::with_capacity(scored.len());
    let mut unknown = Vec::with_capacity(scored.len());
    for s in scored {
        let d = match theta {
            Some(t) => decide(s.probability, s.discrepancy, t),
            None => decide(s.probability, 0.0, f64::INFINITY),
        };
        predicted.push(d.label);
        unknown.push(d.unknown);
    }
    let truth: Vec<Label> = scored.iter().map(|s| s.label).collect();
    let probs: Vec<f64> = scored.iter().map(|s| s.probability).collect();
    let has_both = truth.iter().any(|l| l.is_fake()) && truth.iter().any(|l| !l.is_fake());
    let auc = if has_both { Some(auc(&probs, &truth)?) } else { None };
    let confusion = Confusion::from_decisions(&predicted, &truth);

    let mut groups: BTreeMap<Domain, Vec<usize>> = BTreeMap::new();
    for (i, s) in scored.iter().enumerate() {
        groups.entry(s.domain).or_default().push(i);
    }
    let per_domain = groups
        .into_iter()
        .map(|(domain, idx)| {
            let n = idx.len() as f64;
            DomainStats {
                domain,
                count: idx.len(),
                accuracy: idx.iter().filter(|&&i| predicted[i] == truth[i]).count() as f64 / n,
                mean_probability: idx.iter().map(|&i| scored[i].probability).sum::<f64>() / n,
                mean_discrepancy: idx.iter().map(|&i| scored[i].discrepancy).sum::<f64>() / n,
                unknown_rate: idx.iter().filter(|&&i| unknown[i]).count() as f64 / n,
            }
        })
        .collect();

    Ok(EvalReport {
        count: scored.len(),
        with_detector: theta.is_some(),
        theta,
        accuracy: confusion.accuracy(),
        auc,
        fake_recall: confusion.fake_recall(),
        unknown_rate: unknown.iter().filter(|&&u| u).count() as f64 / scored.len() as f64,
        confusion,
        per_domain,
        labels: predicted,
    })
}

/// Score `samples` and evaluate, with the detector override when given.
pub fn evaluate<T: Scalar>(
    model: &BENetModel<T>,
    detector: Option<&DetectorState<T>>,
    samples: &[&LabeledSample],
) -> Result<EvalReport> {
    let theta = detector.map(|d| d.theta()).transpose()?.map(|t| t.to_f64_lossy());
    evaluate_scored(&score(model, samples)?, theta)
}

/// Severities reported per perturbation kind, excluding the unperturbed
/// column.
pub const SEVERITIES: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub kind: PerturbationKind,
    /// Index `s` holds severity `s`; index 0 is the unperturbed AUC.
    pub auc: [f64; SEVERITIES + 1],
    /// Mean squared pixel change from the clean images, per severity
    /// `1..=5`.
    pub energy: [f64; SEVERITIES],
    /// Mean AUC over severities 1..=5 minus the unperturbed AUC; negative
    /// means degradation.
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessTable {
    pub base_auc: f64,
    pub rows: Vec<RobustnessRow>,
    /// Column means across kinds.
    pub average: [f64; SEVERITIES + 1],
    pub average_decay: f64,
}

/// AUC of the classifier under every perturbation kind and severity.
pub fn robustness_report<T: Scalar>(model: &BENetModel<T>, samples: &[&LabeledSample]) -> Result<RobustnessTable> {
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let probs = |scored: Vec<Scored>| scored.into_iter().map(|s| s.probability).collect::<Vec<_>>();
    let base_auc = auc(&probs(score(model, samples)?), &labels)?;

    let mut rows = Vec::new();
    for kind in PerturbationKind::ALL {
        let mut row = RobustnessRow {
            kind,
            auc: [base_auc; SEVERITIES + 1],
            energy: [0.0; SEVERITIES],
            decay: 0.0,
        };
        for severity in 1..=SEVERITIES {
            let spec = PerturbationSpec::new(kind, severity as u8)?;
            let mut perturbed = Vec::with_capacity(samples.len());
            let mut energy = 0.0;
            for s in samples {
                let image = perturb(&s.image, spec)?;
                energy += image
                    .data()
                    .iter()
                    .zip(s.image.data())
                    .map(|(&a, &b)| ((a - b) as f64).powi(2))
                    .sum::<f64>()
                    / image.len() as f64;
                perturbed.push(LabeledSample { image, ..(*s).clone() });
            }
            let refs: Vec<&LabeledSample> = perturbed.iter().collect();
            row.auc[severity] = auc(&probs(score(model, &refs)?), &labels)?;
            row.energy[severity - 1] = energy / samples.len() as f64;
        }
        row.decay = row.auc[1..].iter().sum::<f64>() / SEVERITIES as f64 - row.auc[0];
        rows.push(row);
    }
    let mut average = [0.0; SEVERITIES + 1];
    for (j, a) in average.iter_mut().enumerate() {
        *a = rows.iter().map(|r| r.auc[j]).sum::<f64>() / rows.len() as f64;
    }
    let average_decay = rows.iter().map(|r| r.decay).sum::<f64>() / rows.len() as f64;
    Ok(RobustnessTable {
        base_auc,
        rows,
        average,
        average_decay,
    })
}
