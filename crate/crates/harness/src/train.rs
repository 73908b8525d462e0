//! The training loop.

use benet_core::losses::{objective, LossBreakdown};
use benet_core::{BENetModel, Graph, Label, Scalar, Tensor};
use benet_data::synth::derive_seed;
use benet_data::LabeledSample;

use crate::adam::{adam_step, AdamState};
use crate::config::TrainConfig;
use crate::error::{HarnessError, Result};
use crate::sampler::stratified_batches;

/// Mean loss components over one epoch's steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLosses {
    pub epoch: usize,
    pub steps: usize,
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub bias_expansion: f64,
    pub cross_entropy: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub model: BENetModel<T>,
    pub epochs: Vec<EpochLosses>,
    /// Total loss of every step, in order.
    pub step_losses: Vec<f64>,
}

/// `[n, C, H, W]` batch of the selected samples.
pub fn batch_tensor<T: Scalar>(samples: &[&LabeledSample], indices: &[usize]) -> Result<Tensor<T>> {
    let images: Vec<&Tensor<f32>> = indices.iter().map(|&i| &samples[i].image).collect();
    Ok(Tensor::stack(&images)?.cast())
}

/// Forward, objective, backward and one Adam update.
pub fn train_step<T: Scalar>(
    model: &mut BENetModel<T>,
    state: &mut AdamState<T>,
    images: &Tensor<T>,
    labels: &[Label],
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    let g = Graph::new();
    let p = model.bind(&g, true);
    let x = g.constant(images.clone());
    let fwd = model.forward(&g, &p, x)?;
    let (loss, breakdown) = objective(&g, fwd.bias, fwd.probability, labels, &cfg.loss)?;
    if !breakdown.total.is_finite() {
        return Err(HarnessError::Invalid(format!("non-finite loss {}", breakdown.total)));
    }
    let mut grads = g.backward(loss)?;
    let grads: Vec<Tensor<T>> = p
        .vars()
        .into_iter()
        .map(|v| {
            grads
                .take(v)
                .ok_or_else(|| HarnessError::Invalid("missing parameter gradient".into()))
        })
        .collect::<Result<_>>()?;
    let grad_refs: Vec<&Tensor<T>> = grads.iter().collect();
    adam_step(&mut model.params_mut(), &grad_refs, state, &cfg.optimizer)?;
    Ok(breakdown)
}

/// Seed of the batch order for one epoch.
pub fn epoch_seed(seed: u64, epoch: usize) -> u64 {
    derive_seed(seed, &[1, epoch as u64])
}

/// Train `model` on `samples` for `cfg.epochs` epochs, calling `on_epoch`
/// after each one. Deterministic for a given model, sample order and config.
pub fn train_with<T: Scalar>(
    mut model: BENetModel<T>,
    samples: &[&LabeledSample],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLosses),
) -> Result<TrainOutcome<T>> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(HarnessError::Invalid("training split is empty".into()));
    }
    if samples.len() < 2 {
        return Err(HarnessError::Invalid("training needs at least two samples".into()));
    }
    let labels: Vec<Label> = samples.iter().map(|s| s.label).collect();
    let mut state = AdamState::new(&model.params());
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut step_losses = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut acc = EpochLosses {
            epoch,
            steps: 0,
            l1: 0.0,
            l2: 0.0,
            l3: 0.0,
            bias_expansion: 0.0,
            cross_entropy: 0.0,
            total: 0.0,
        };
        for batch in stratified_batches(&labels, cfg.batch_size, epoch_seed(cfg.seed, epoch)) {
            let images = batch_tensor::<T>(samples, &batch)?;
            let batch_labels: Vec<Label> = batch.iter().map(|&i| labels[i]).collect();
            let b = train_step(&mut model, &mut state, &images, &batch_labels, cfg)?;
            acc.steps += 1;
            acc.l1 += b.l1;
            acc.l2 += b.l2;
            acc.l3 += b.l3;
            acc.bias_expansion += b.bias_expansion;
            acc.cross_entropy += b.cross_entropy;
            acc.total += b.total;
            step_losses.push(b.total);
        }
        let n = acc.steps.max(1) as f64;
        for v in [
            &mut acc.l1,
            &mut acc.l2,
            &mut acc.l3,
            &mut acc.bias_expansion,
            &mut acc.cross_entropy,
            &mut acc.total,
        ] {
            *v /= n;
        }
        on_epoch(&acc);
        epochs.push(acc);
    }
    Ok(TrainOutcome {
        model,
        epochs,
        step_losses,
    })
}

/// Fresh model from `cfg.model` seeded with `cfg.seed`, then trained.
pub fn train<T: Scalar>(samples: &[&LabeledSample], cfg: &TrainConfig) -> Result<TrainOutcome<T>> {
    let model = BENetModel::new(cfg.model.clone(), cfg.seed)?;
    train_with(model, samples, cfg, |_| {})
}
