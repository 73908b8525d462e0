mod common;

#[path = "common/grad_catalog.rs"]
mod grad_catalog;

use benet_core::numerics::grad_check;
use benet_core::{Graph, Tensor};
use common::{rng, uniform};

#[test]
fn every_operation_and_loss_passes_grad_check() {
    let mut r = rng(0xD1FF);
    let mut failures = Vec::new();
    for case in grad_catalog::cases() {
        let mut worst = 0.0f64;
        for _ in 0..10 {
            let point = grad_catalog::sample(&mut r, &case.shape, case.domain);
            let err = grad_check(|g: &Graph<f64>, x| (case.f)(g, x), &point, 1e-4).unwrap();
            worst = worst.max(err);
        }
        if !(worst < 1e-4) {
            failures.push(format!("{}: {worst:e}", case.name));
        }
    }
    assert!(failures.is_empty(), "grad_check failures: {failures:?}");
}

#[test]
fn grad_check_of_sum_of_squares_is_tight() {
    let mut r = rng(4);
    let x = uniform(&mut r, &[7], -3.0, 3.0);
    let err = grad_check(
        |g: &Graph<f64>, v| {
            let s = g.square(v);
            Ok(g.sum(s))
        },
        &x,
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-5, "{err}");
}

#[test]
fn grad_check_of_linear_function_is_at_rounding_level() {
    let x = Tensor::from_f64(&[4], &[0.5, -1.0, 2.0, 3.0]).unwrap();
    let w = Tensor::from_f64(&[4], &[1.0, 2.0, -3.0, 0.25]).unwrap();
    let err = grad_check(
        |g: &Graph<f64>, v| {
            let c = g.constant(w.clone());
            g.dot(v, c)
        },
        &x,
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-9, "{err}");
}

#[test]
fn grad_check_of_softmax_cross_entropy() {
    let mut r = rng(5);
    let x = uniform(&mut r, &[3, 5], -2.0, 2.0);
    let target = Tensor::from_f64(
        &[3, 5],
        &[0., 1., 0., 0., 0., 0., 0., 0., 0., 1., 1., 0., 0., 0., 0.],
    )
    .unwrap();
    let err = grad_check(
        |g: &Graph<f64>, v| {
            let p = g.softmax(v, 1)?;
            let lp = g.ln(p);
            let t = g.constant(target.clone());
            let s = g.dot(lp, t)?;
            Ok(g.neg(s))
        },
        &x,
        1e-4,
    )
    .unwrap();
    assert!(err < 1e-4, "{err}");
}
