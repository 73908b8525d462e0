mod common;

use benet_core::losses::{loss_bias_expansion, loss_ce, loss_l1, loss_l2, loss_l3, loss_total, BatchBias};
use benet_core::{Graph, L2SignMode, Label, LossConfig, Tensor};
use common::rng;
use proptest::prelude::*;
use rand::Rng;

fn label(fake: bool) -> Label {
    if fake {
        Label::Fake
    } else {
        Label::Real
    }
}

fn batch(g: &Graph<f64>, rows: &[Vec<f64>], fake: &[bool]) -> BatchBias {
    let d = rows[0].len();
    let flat: Vec<f64> = rows.concat();
    let bias = g.param(Tensor::new(&[rows.len(), d], flat).unwrap());
    let labels: Vec<Label> = fake.iter().map(|&f| label(f)).collect();
    BatchBias::from_images(g, bias, &labels).unwrap()
}

fn val(g: &Graph<f64>, v: benet_core::Var) -> f64 {
    g.value(v).item()
}

fn random_batch(r: &mut impl Rng, scale: f64) -> (Vec<Vec<f64>>, Vec<bool>) {
    let n = r.random_range(2..=8);
    let d = r.random_range(1..=12);
    let rows = (0..n).map(|_| (0..d).map(|_| r.random_range(0.0..scale)).collect()).collect();
    let fake = (0..n).map(|_| r.random::<bool>()).collect();
    (rows, fake)
}

#[test]
fn components_match_independent_oracles_on_random_batches() {
    let mut r = rng(31);
    for _ in 0..50 {
        let (rows, fake) = random_batch(&mut r, 1.0);
        let g = Graph::new();
        let b = batch(&g, &rows, &fake);
        let margin = r.random_range(0.5..4.0);
        let oracle = [
            (val(&g, loss_l1(&g, &b).unwrap()), benet_testkit::loss_l1(&rows, &fake)),
            (
                val(&g, loss_l2(&g, &b, margin, L2SignMode::StatedIntent).unwrap()),
                benet_testkit::loss_l2(&rows, &fake, margin, false),
            ),
            (
                val(&g, loss_l2(&g, &b, margin, L2SignMode::Verbatim).unwrap()),
                benet_testkit::loss_l2(&rows, &fake, margin, true),
            ),
            (val(&g, loss_l3(&g, &b, true).unwrap()), benet_testkit::loss_l3(&rows, &fake, true)),
            (val(&g, loss_l3(&g, &b, false).unwrap()), benet_testkit::loss_l3(&rows, &fake, false)),
        ];
        for (i, (got, want)) in oracle.iter().enumerate() {
            assert!((got - want).abs() < 1e-10, "component {i}: {got} vs {want}");
        }
    }
}

#[test]
fn bias_expansion_matches_single_pass_oracle() {
    let mut r = rng(32);
    for _ in 0..50 {
        let (rows, fake) = random_batch(&mut r, 1.0);
        let cfg = LossConfig {
            margin: r.random_range(0.5..4.0),
            ..LossConfig::default()
        };
        let g = Graph::new();
        let b = batch(&g, &rows, &fake);
        let got = val(&g, loss_bias_expansion(&g, &b, &cfg).unwrap());
        let want = benet_testkit::loss_l1(&rows, &fake)
            + benet_testkit::loss_l2(&rows, &fake, cfg.margin, false)
            + benet_testkit::loss_l3(&rows, &fake, true);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn cross_entropy_matches_oracle() {
    let mut r = rng(33);
    for _ in 0..50 {
        let n = r.random_range(1..=8);
        let p: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
        let fake: Vec<bool> = (0..n).map(|_| r.random()).collect();
        let labels: Vec<Label> = fake.iter().map(|&f| label(f)).collect();
        let g = Graph::new();
        let pv = g.constant(Tensor::new(&[n], p.clone()).unwrap());
        let got = val(&g, loss_ce(&g, pv, &labels).unwrap());
        let want = benet_testkit::loss_ce(&p, &fake);
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}

#[test]
fn l1_examples() {
    let g = Graph::new();
    let b = batch(&g, &[vec![1.0, 1.0, 1.0, 1.0]], &[false]);
    assert_eq!(val(&g, loss_l1(&g, &b).unwrap()), 4.0);
    let b = batch(&g, &[vec![0.3, 0.9], vec![0.2, 0.1]], &[true, true]);
    assert_eq!(val(&g, loss_l1(&g, &b).unwrap()), 0.0);
    let b = batch(&g, &[vec![0.0, 0.0], vec![0.2, 0.1]], &[false, true]);
    assert_eq!(val(&g, loss_l1(&g, &b).unwrap()), 0.0);
}

#[test]
fn l2_examples() {
    let g = Graph::new();
    let b = batch(&g, &[vec![0.0; 4]], &[true]);
    assert_eq!(val(&g, loss_l2(&g, &b, 5.0, L2SignMode::StatedIntent).unwrap()), 25.0);
    assert_eq!(val(&g, loss_l2(&g, &b, 5.0, L2SignMode::Verbatim).unwrap()), -25.0);
    let b = batch(&g, &[vec![0.0; 4], vec![0.5; 4]], &[false, false]);
    assert_eq!(val(&g, loss_l2(&g, &b, 5.0, L2SignMode::StatedIntent).unwrap()), 0.0);
    let b = batch(&g, &[vec![3.0, 4.0]], &[true]);
    assert_eq!(val(&g, loss_l2(&g, &b, 5.0, L2SignMode::StatedIntent).unwrap()), 0.0);
    let b = batch(&g, &[vec![6.0, 8.0]], &[true]);
    assert_eq!(val(&g, loss_l2(&g, &b, 5.0, L2SignMode::StatedIntent).unwrap()), 0.0);
}

#[test]
fn l3_examples() {
    let g = Graph::new();
    for normalize in [true, false] {
        let b = batch(&g, &[vec![0.3, 0.4], vec![0.3, 0.4]], &[true, true]);
        assert!(val(&g, loss_l3(&g, &b, normalize).unwrap()).abs() < 1e-15);
        let b = batch(&g, &[vec![0.3, 0.4], vec![0.1, 0.7]], &[true, false]);
        assert_eq!(val(&g, loss_l3(&g, &b, normalize).unwrap()), 0.0);
    }
    let rows = [vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
    let fake = [false, false, true];
    let b = batch(&g, &rows, &fake);
    let got = val(&g, loss_l3(&g, &b, true).unwrap());
    let closed_form = 2.0 / 3.0 * ((1.0 + 1f64.exp()).ln() - 1.0);
    assert!((got - benet_testkit::loss_l3(&rows, &fake, true)).abs() < 1e-12);
    assert!((got - closed_form).abs() < 1e-12);
}

#[test]
fn l3_requires_two_samples() {
    let g = Graph::new();
    let b = batch(&g, &[vec![0.3, 0.4]], &[true]);
    assert!(loss_l3(&g, &b, true).is_err());
}

#[test]
fn l3_decreases_as_same_label_vectors_align() {
    let value = |angle: f64| {
        let g = Graph::new();
        let rows = [vec![1.0, 0.0], vec![angle.cos(), angle.sin()], vec![0.0, 1.0]];
        let b = batch(&g, &rows, &[false, false, true]);
        val(&g, loss_l3(&g, &b, true).unwrap())
    };
    let mut last = f64::INFINITY;
    for k in (0..=20).rev() {
        let v = value(k as f64 / 20.0 * std::f64::consts::FRAC_PI_2);
        assert!(v < last, "angle step {k}: {v} !< {last}");
        last = v;
    }
}

#[test]
fn cross_entropy_examples() {
    let g = Graph::new();
    let p = g.constant(Tensor::full(&[4], 0.5));
    let labels = [Label::Real, Label::Fake, Label::Fake, Label::Real];
    let v = val(&g, loss_ce(&g, p, &labels).unwrap());
    assert!((v - 2f64.ln()).abs() < 1e-15);
    assert!((v - 0.693147).abs() < 1e-6);

    let p = g.constant(Tensor::from_f64(&[2], &[0.0, 1.0]).unwrap());
    let v = val(&g, loss_ce(&g, p, &[Label::Real, Label::Fake]).unwrap());
    assert!(v.is_finite() && v < 1e-6);
    let p = g.constant(Tensor::from_f64(&[1], &[0.0]).unwrap());
    let v = val(&g, loss_ce(&g, p, &[Label::Fake]).unwrap());
    assert!((v + 1e-7f64.ln()).abs() < 1e-9);
}

#[test]
fn total_examples() {
    let g = Graph::new();
    let lc = g.constant(Tensor::scalar(0.6));
    let lbe = g.constant(Tensor::scalar(0.4));
    assert!((val(&g, loss_total(&g, lc, lbe, 0.5).unwrap()) - 0.5).abs() < 1e-15);
    assert_eq!(val(&g, loss_total(&g, lc, lbe, 1.0).unwrap()), 0.6);
    assert_eq!(val(&g, loss_total(&g, lc, lbe, 0.0).unwrap()), 0.4);
    assert!(loss_total(&g, lc, lbe, 1.5).is_err());
}

#[test]
fn label_count_mismatch_is_rejected() {
    let g = Graph::new();
    let bias = g.constant(Tensor::<f64>::zeros(&[3, 4]));
    assert!(BatchBias::from_images(&g, bias, &[Label::Real]).is_err());
    let p = g.constant(Tensor::<f64>::zeros(&[3]));
    assert!(loss_ce(&g, p, &[Label::Real]).is_err());
}

#[test]
fn config_validation() {
    assert!(LossConfig::default().validate().is_ok());
    let bad = LossConfig {
        margin: 0.0,
        ..LossConfig::default()
    };
    assert!(bad.validate().is_err());
    let bad = LossConfig {
        lambda: -0.1,
        ..LossConfig::default()
    };
    assert!(bad.validate().is_err());
    assert_eq!("verbatim".parse::<L2SignMode>().unwrap(), L2SignMode::Verbatim);
    assert!("minus".parse::<L2SignMode>().is_err());
}

fn batch_strategy() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<bool>)> {
    (2usize..7, 1usize..6).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(prop::collection::vec(0.0f64..1.0, d), n),
            prop::collection::vec(any::<bool>(), n),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn stated_intent_components_are_nonnegative((rows, fake) in batch_strategy(), margin in 0.1f64..6.0) {
        let g = Graph::new();
        let b = batch(&g, &rows, &fake);
        prop_assert!(val(&g, loss_l1(&g, &b).unwrap()) >= 0.0);
        prop_assert!(val(&g, loss_l2(&g, &b, margin, L2SignMode::StatedIntent).unwrap()) >= 0.0);
        let p: Vec<f64> = rows.iter().map(|r| r[0]).collect();
        let labels: Vec<Label> = fake.iter().map(|&f| label(f)).collect();
        let pv = g.constant(Tensor::new(&[p.len()], p).unwrap());
        prop_assert!(val(&g, loss_ce(&g, pv, &labels).unwrap()) >= 0.0);
    }

    #[test]
    fn l1_and_l2_ignore_batch_order((rows, fake) in batch_strategy(), shift in 1usize..6) {
        let n = rows.len();
        let rot = |i: usize| (i + shift) % n;
        let rows2: Vec<_> = (0..n).map(|i| rows[rot(i)].clone()).collect();
        let fake2: Vec<_> = (0..n).map(|i| fake[rot(i)]).collect();
        let g = Graph::new();
        let (a, b) = (batch(&g, &rows, &fake), batch(&g, &rows2, &fake2));
        let l1 = (val(&g, loss_l1(&g, &a).unwrap()), val(&g, loss_l1(&g, &b).unwrap()));
        prop_assert!((l1.0 - l1.1).abs() < 1e-12);
        let l2a = val(&g, loss_l2(&g, &a, 2.0, L2SignMode::StatedIntent).unwrap());
        let l2b = val(&g, loss_l2(&g, &b, 2.0, L2SignMode::StatedIntent).unwrap());
        prop_assert!((l2a - l2b).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_is_label_symmetric(p in prop::collection::vec(0.0f64..1.0, 1..8), seed in any::<u64>()) {
        let mut r = rng(seed);
        let fake: Vec<bool> = p.iter().map(|_| r.random()).collect();
        let flipped_p: Vec<f64> = p.iter().map(|v| 1.0 - v).collect();
        let g = Graph::new();
        let ce = |p: &[f64], fake: &[bool]| {
            let labels: Vec<Label> = fake.iter().map(|&f| label(f)).collect();
            let pv = g.constant(Tensor::new(&[p.len()], p.to_vec()).unwrap());
            val(&g, loss_ce(&g, pv, &labels).unwrap())
        };
        let flipped: Vec<bool> = fake.iter().map(|f| !f).collect();
        prop_assert!((ce(&p, &fake) - ce(&flipped_p, &flipped)).abs() < 1e-9);
    }

    #[test]
    fn hinge_pushes_fake_norms_upward(row in prop::collection::vec(0.01f64..1.0, 1..8), margin in 0.5f64..6.0) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assume!(norm < margin);
        let g = Graph::new();
        let b = batch(&g, &[row.clone()], &[true]);
        let l2 = loss_l2(&g, &b, margin, L2SignMode::StatedIntent).unwrap();
        let grads = g.backward(l2).unwrap();
        let grad = grads.get(b.bias).unwrap();
        // directional derivative along the bias itself is ∂L2/∂‖x̂‖ · ‖x̂‖
        let along: f64 = grad.data().iter().zip(&row).map(|(g, x)| g * x).sum();
        prop_assert!(along <= 0.0);
    }
}
