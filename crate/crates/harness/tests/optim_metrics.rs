use benet_core::{Label, Tensor};
use benet_harness::metrics::Confusion;
use benet_harness::{accuracy, adam_step, auc, stratified_batches, AdamConfig, AdamState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn labels(bits: &[u8]) -> Vec<Label> {
    bits.iter().map(|&b| Label::from_u8(b).unwrap()).collect()
}

fn scalar_step(param: f64, grad: f64, cfg: &AdamConfig) -> f64 {
    let mut p = Tensor::from_f64(&[1], &[param]).unwrap();
    let g = Tensor::from_f64(&[1], &[grad]).unwrap();
    let mut state = AdamState::new(&[&p]);
    adam_step(&mut [&mut p], &[&g], &mut state, cfg).unwrap();
    p.data()[0]
}

#[test]
fn adam_examples() {
    let cfg = AdamConfig {
        lr: 0.1,
        weight_decay: 0.0,
        ..AdamConfig::default()
    };
    let p = scalar_step(1.0, 1.0, &cfg);
    assert!((p - (1.0 - 0.1 / (1.0 + 1e-8))).abs() < 1e-15);
    assert!((p - 0.9).abs() < 1e-8);

    let one = 1.0 - scalar_step(1.0, 1.0, &cfg);
    let two = 1.0 - scalar_step(1.0, 2.0, &cfg);
    assert!(((two - one) / one).abs() < 1e-6);

    assert_eq!(scalar_step(0.7, 0.0, &cfg), 0.7);
}

#[test]
fn adam_matches_reference_over_many_steps() {
    let cfg = AdamConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let init: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut p = Tensor::from_f64(&[5], &init).unwrap();
    let mut state = AdamState::new(&[&p]);
    let mut reference: Vec<(f64, f64, f64)> = init.iter().map(|&x| (x, 0.0, 0.0)).collect();
    for t in 1..=30 {
        let grads: Vec<f64> = (0..5).map(|_| rng.random_range(-2.0..2.0)).collect();
        let g = Tensor::from_f64(&[5], &grads).unwrap();
        adam_step(&mut [&mut p], &[&g], &mut state, &cfg).unwrap();
        for (r, &gr) in reference.iter_mut().zip(&grads) {
            *r = benet_testkit::adam_scalar(
                r.0, gr, r.1, r.2, t, cfg.lr, cfg.weight_decay, cfg.beta1, cfg.beta2, cfg.eps,
            );
        }
    }
    for (a, r) in p.data().iter().zip(&reference) {
        assert!((a - r.0).abs() < 1e-14, "{a} vs {}", r.0);
    }
    assert_eq!(state.t, 30);
}

#[test]
fn adam_rejects_misaligned_inputs() {
    let mut p = Tensor::<f64>::zeros(&[2]);
    let mut state = AdamState::new(&[&p]);
    let g = Tensor::<f64>::zeros(&[3]);
    assert!(adam_step(&mut [&mut p], &[&g], &mut state, &AdamConfig::default()).is_err());
    assert!(adam_step(&mut [&mut p], &[], &mut state, &AdamConfig::default()).is_err());
    assert_eq!(state.t, 0);
}

#[test]
fn accuracy_examples() {
    assert_eq!(accuracy(&[0.9, 0.2, 0.7], &labels(&[1, 0, 0]), 0.5).unwrap(), 2.0 / 3.0);
    assert_eq!(accuracy(&[0.9, 0.1], &labels(&[1, 0]), 0.5).unwrap(), 1.0);
    // ties at the threshold count as real
    assert_eq!(accuracy(&[0.5; 4], &labels(&[1, 0, 1, 0]), 0.5).unwrap(), 0.5);
    assert_eq!(accuracy(&[0.5; 4], &labels(&[0, 0, 0, 1]), 0.5).unwrap(), 0.75);
    assert!(accuracy(&[], &[], 0.5).is_err());
    assert!(accuracy(&[0.1], &labels(&[0, 1]), 0.5).is_err());
}

#[test]
fn auc_examples() {
    assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &labels(&[0, 0, 1, 1])).unwrap(), 0.75);
    assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &labels(&[0, 0, 1, 1])).unwrap(), 1.0);
    assert_eq!(auc(&[0.3; 6], &labels(&[0, 1, 0, 1, 1, 0])).unwrap(), 0.5);
    assert!(auc(&[0.1, 0.2], &labels(&[1, 1])).is_err());
    assert!(auc(&[0.1, f64::NAN], &labels(&[0, 1])).is_err());
}

#[test]
fn auc_matches_all_pairs_oracle_up_to_200() {
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for n in 2..=200 {
        let fake: Vec<bool> = (0..n).map(|i| if i < 2 { i == 0 } else { rng.random() }).collect();
        let levels = rng.random_range(2..20) as f64;
        let scores: Vec<f64> = (0..n).map(|_| (rng.random::<f64>() * levels).floor() / levels).collect();
        let l: Vec<Label> = fake.iter().map(|&f| if f { Label::Fake } else { Label::Real }).collect();
        assert_eq!(auc(&scores, &l).unwrap(), benet_testkit::auc(&scores, &fake), "n = {n}");
    }
}

#[test]
fn confusion_counts() {
    let truth = labels(&[1, 1, 0, 0, 1]);
    let pred = labels(&[1, 0, 0, 1, 1]);
    let c = Confusion::from_decisions(&pred, &truth);
    assert_eq!((c.true_fake, c.false_real, c.true_real, c.false_fake), (2, 1, 1, 1));
    assert_eq!(c.total(), 5);
    assert_eq!(c.accuracy(), 0.6);
    assert_eq!(c.fake_recall(), 2.0 / 3.0);
    assert_eq!(Confusion::from_decisions(&labels(&[0]), &labels(&[0])).fake_recall(), 0.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn batches_mix_classes_while_both_remain(
        bits in prop::collection::vec(0u8..2, 2..120),
        batch in 2usize..10,
        seed in any::<u64>(),
    ) {
        let l = labels(&bits);
        let batches = stratified_batches(&l, batch, seed);
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..l.len()).collect::<Vec<_>>());
        prop_assert!(batches.iter().all(|b| b.len() >= 2 || l.len() < 2));

        let mut fakes_left = l.iter().filter(|x| x.is_fake()).count();
        let mut reals_left = l.len() - fakes_left;
        for b in &batches {
            let f = b.iter().filter(|&&i| l[i].is_fake()).count();
            let r = b.len() - f;
            if fakes_left > 0 && reals_left > 0 {
                prop_assert!(f >= 1 && r >= 1, "batch {:?} lacks a class", b);
            }
            fakes_left -= f;
            reals_left -= r;
        }
        prop_assert_eq!(&batches, &stratified_batches(&l, batch, seed));
    }
}
