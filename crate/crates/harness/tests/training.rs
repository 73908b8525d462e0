use benet_core::{BENetModel, DetectorState, EncoderDecoderConfig, Label, Tensor};
use benet_data::{generate_dataset, generate_real, Domain, GeneratorConfig, LabeledSample, Split};
use benet_harness::adam::AdamState;
use benet_harness::train::train_step;
use benet_harness::{evaluate, evaluate_scored, score, train, CalibrationSet, Scored, TrainConfig};
use proptest::prelude::*;

fn tiny_model() -> EncoderDecoderConfig {
    EncoderDecoderConfig {
        image_size: 16,
        stage_channels: vec![4, 6, 8],
        patch_size: 2,
        hidden_width: 8,
        ..EncoderDecoderConfig::default()
    }
}

fn tiny_data(size: usize) -> Vec<LabeledSample> {
    let mut gen = GeneratorConfig::default().scaled(0.04);
    gen.image_size = size;
    generate_dataset(&gen)
        .unwrap()
        .entries
        .into_iter()
        .filter(|e| e.split == Split::Train)
        .map(|e| e.sample)
        .collect()
}

#[test]
fn training_is_deterministic() {
    let data = tiny_data(16);
    let refs: Vec<&LabeledSample> = data.iter().collect();
    let cfg = TrainConfig {
        model: tiny_model(),
        epochs: 2,
        ..TrainConfig::default()
    };
    let a = train::<f32>(&refs, &cfg).unwrap();
    let b = train::<f32>(&refs, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.step_losses, b.step_losses);
    let other = TrainConfig { seed: 8, ..cfg };
    assert_ne!(train::<f32>(&refs, &other).unwrap().model, a.model);
}

#[test]
fn total_loss_decreases_over_first_fifty_steps() {
    let data = tiny_data(32);
    let refs: Vec<&LabeledSample> = data.iter().take(40).collect();
    let cfg = TrainConfig {
        epochs: 10,
        ..TrainConfig::default()
    };
    let out = train::<f32>(&refs, &cfg).unwrap();
    let s = &out.step_losses;
    assert_eq!(s.len(), 50);
    let head = s[..5].iter().sum::<f64>() / 5.0;
    let tail = s[45..].iter().sum::<f64>() / 5.0;
    assert!(tail < head, "first steps {head}, last steps {tail}");
    assert!(out.epochs.last().unwrap().total < out.epochs[0].total);
}

#[test]
fn with_lambda_one_updates_ignore_the_margin() {
    let data = tiny_data(16);
    let refs: Vec<&LabeledSample> = data.iter().collect();
    let mut cfg = TrainConfig {
        model: tiny_model(),
        epochs: 1,
        ..TrainConfig::default()
    };
    cfg.loss.lambda = 1.0;
    cfg.loss.margin = 1.0;
    let a = train::<f64>(&refs, &cfg).unwrap();
    cfg.loss.margin = 9.0;
    let b = train::<f64>(&refs, &cfg).unwrap();
    assert_eq!(a.model, b.model);

    cfg.loss.lambda = 0.5;
    let c = train::<f64>(&refs, &cfg).unwrap();
    assert_ne!(c.model, b.model);
}

#[test]
fn training_rejects_degenerate_input() {
    let data = tiny_data(16);
    let cfg = TrainConfig {
        model: tiny_model(),
        epochs: 1,
        ..TrainConfig::default()
    };
    assert!(train::<f32>(&[], &cfg).is_err());
    assert!(train::<f32>(&[&data[0]], &cfg).is_err());
    let bad = TrainConfig { batch_size: 1, ..cfg };
    let refs: Vec<&LabeledSample> = data.iter().collect();
    assert!(train::<f32>(&refs, &bad).is_err());
}

#[test]
fn overfitting_one_real_image_drives_reconstruction_error_down() {
    let real = &generate_real(51, 1, 32)[0];
    let x: Tensor<f32> = Tensor::stack(&[&real.image, &real.image]).unwrap();
    let cfg = TrainConfig::default();
    let mut model = BENetModel::<f32>::new(cfg.model.clone(), 1).unwrap();
    let mut state = AdamState::new(&model.params());
    let before = model.trace(&x).unwrap().bias.mean();
    for _ in 0..500 {
        train_step(&mut model, &mut state, &x, &[Label::Real, Label::Real], &cfg).unwrap();
    }
    let after = model.trace(&x).unwrap().bias.mean();
    assert!(after < 0.05, "mean |x - x_o| = {after} (started at {before})");
}

#[test]
fn evaluation_contracts_on_a_trained_model() {
    let data = tiny_data(16);
    let refs: Vec<&LabeledSample> = data.iter().collect();
    let cfg = TrainConfig {
        model: tiny_model(),
        epochs: 2,
        ..TrainConfig::default()
    };
    let model = train::<f32>(&refs, &cfg).unwrap().model;
    let det = benet_harness::calibrate(&model, &refs, 0.8, CalibrationSet::All).unwrap();
    let plain = evaluate(&model, None, &refs).unwrap();
    let gated = evaluate(&model, Some(&det), &refs).unwrap();
    assert_eq!(plain.confusion.total(), refs.len());
    assert_eq!(gated.confusion.total(), refs.len());
    assert_eq!(plain.auc, gated.auc);
    assert!(gated.fake_recall >= plain.fake_recall);
    assert_eq!(plain.unknown_rate, 0.0);
    let above = score(&model, &refs)
        .unwrap()
        .iter()
        .filter(|s| s.discrepancy > det.theta().unwrap() as f64)
        .count();
    assert_eq!(gated.unknown_rate, above as f64 / refs.len() as f64);
    assert!(above <= (0.2 * refs.len() as f64).floor() as usize);

    let reals = DetectorState::<f32>::default();
    assert!(evaluate(&model, Some(&reals), &refs).is_err());
    assert!(evaluate::<f32>(&model, None, &[]).is_err());
}

fn scored_strategy() -> impl Strategy<Value = Vec<Scored>> {
    prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, any::<bool>()), 1..60).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (p, d, fake))| Scored {
                id: i.to_string(),
                domain: if fake { Domain::NoiseC } else { Domain::Real },
                label: if fake { Label::Fake } else { Label::Real },
                probability: p,
                discrepancy: d,
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn detector_changes_labels_only_above_theta(scored in scored_strategy(), theta in 0.0f64..1.0) {
        let plain = evaluate_scored(&scored, None).unwrap();
        let gated = evaluate_scored(&scored, Some(theta)).unwrap();
        for (i, s) in scored.iter().enumerate() {
            if plain.labels[i] != gated.labels[i] {
                prop_assert!(s.discrepancy > theta);
                prop_assert_eq!(plain.labels[i], Label::Real);
                prop_assert_eq!(gated.labels[i], Label::Fake);
            }
        }
        prop_assert!(gated.fake_recall >= plain.fake_recall);
        prop_assert_eq!(plain.confusion.total(), scored.len());
        prop_assert_eq!(gated.confusion.total(), scored.len());
        prop_assert_eq!(plain.auc, gated.auc);
        let per_domain: usize = gated.per_domain.iter().map(|d| d.count).sum();
        prop_assert_eq!(per_domain, scored.len());
        prop_assert!((0.0..=1.0).contains(&gated.accuracy));
    }
}
