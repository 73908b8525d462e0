//! Every differentiable graph operation and loss, each wrapped as a scalar
//! function of one input so it can be finite-difference checked.

use benet_core::losses::{
    loss_bias_expansion, loss_ce, loss_l1, loss_l2, loss_l3, loss_total, BatchBias,
};
use benet_core::{Graph, L2SignMode, Label, LossConfig, Result, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Fun = Box<dyn Fn(&Graph<f64>, Var) -> Result<Var>>;

/// How the input point is sampled.
#[derive(Clone, Copy)]
pub enum Domain {
    /// Uniform in [-1, 1].
    Any,
    /// Magnitude in [0.1, 1.5] with random sign; keeps kinks at 0 out of
    /// reach of the finite-difference step.
    AwayFromZero,
    /// Uniform in [0.2, 2].
    Positive,
    /// Uniform in [0.05, 0.95].
    Probability,
}

pub struct Case {
    pub name: &'static str,
    pub shape: Vec<usize>,
    pub domain: Domain,
    pub f: Fun,
}

pub fn sample(rng: &mut ChaCha8Rng, shape: &[usize], domain: Domain) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| match domain {
            Domain::Any => rng.random_range(-1.0..1.0),
            Domain::AwayFromZero => {
                let m = rng.random_range(0.1..1.5);
                if rng.random::<bool>() {
                    m
                } else {
                    -m
                }
            }
            Domain::Positive => rng.random_range(0.2..2.0),
            Domain::Probability => rng.random_range(0.05..0.95),
        })
        .collect();
    Tensor::new(shape, data).unwrap()
}

fn fixed(seed: u64, shape: &[usize]) -> Tensor<f64> {
    sample(&mut ChaCha8Rng::seed_from_u64(seed), shape, Domain::Any)
}

/// Contract `y` with a fixed random tensor of its shape, so no output
/// coordinate has a structurally zero weight.
fn project(g: &Graph<f64>, y: Var, seed: u64) -> Result<Var> {
    let w = g.constant(fixed(seed, &g.shape(y)));
    g.dot(y, w)
}

fn unary(name: &'static str, shape: &[usize], domain: Domain, op: impl Fn(&Graph<f64>, Var) -> Result<Var> + 'static) -> Case {
    Case {
        name,
        shape: shape.to_vec(),
        domain,
        f: Box::new(move |g, x| {
            let y = op(g, x)?;
            project(g, y, 99)
        }),
    }
}

fn batch_labels(n: usize) -> Vec<Label> {
    // two of each class at least, mixed order
    (0..n).map(|i| if i % 3 == 1 || i == 0 { Label::Fake } else { Label::Real }).collect()
}

/// Bias batches whose per-row norms straddle the margin without
/// touching it.
fn hinge_batch(margin: f64, mode: L2SignMode) -> Case {
    Case {
        name: if mode == L2SignMode::StatedIntent { "loss_l2_stated_intent" } else { "loss_l2_verbatim" },
        shape: vec![5, 2, 3, 3],
        domain: Domain::Positive,
        f: Box::new(move |g, x| {
            let batch = BatchBias::from_images(g, x, &batch_labels(5))?;
            loss_l2(g, &batch, margin, mode)
        }),
    }
}

pub fn cases() -> Vec<Case> {
    let mut v = vec![
        unary("add", &[3, 4], Domain::Any, |g, x| {
            let c = g.constant(fixed(1, &[3, 4]));
            g.add(x, c)
        }),
        unary("sub", &[3, 4], Domain::Any, |g, x| {
            let c = g.constant(fixed(2, &[3, 4]));
            let a = g.sub(x, c)?;
            let b = g.sub(c, x)?;
            g.mul(a, b)
        }),
        unary("mul", &[3, 4], Domain::Any, |g, x| {
            let c = g.constant(fixed(3, &[3, 4]));
            g.mul(x, c)
        }),
        unary("mul_self", &[3, 4], Domain::Any, |g, x| g.mul(x, x)),
        unary("add_scalar", &[5], Domain::Any, |g, x| Ok(g.add_scalar(x, 0.3))),
        unary("mul_scalar", &[5], Domain::Any, |g, x| Ok(g.mul_scalar(x, -1.7))),
        unary("neg", &[5], Domain::Any, |g, x| Ok(g.neg(x))),
        unary("abs", &[2, 5], Domain::AwayFromZero, |g, x| Ok(g.abs(x))),
        unary("relu", &[2, 5], Domain::AwayFromZero, |g, x| Ok(g.relu(x))),
        unary("sigmoid", &[2, 5], Domain::Any, |g, x| {
            let s = g.mul_scalar(x, 3.0);
            Ok(g.sigmoid(s))
        }),
        unary("exp", &[2, 5], Domain::Any, |g, x| Ok(g.exp(x))),
        unary("ln", &[2, 5], Domain::Positive, |g, x| Ok(g.ln(x))),
        unary("sqrt", &[2, 5], Domain::Positive, |g, x| Ok(g.sqrt(x))),
        unary("square", &[2, 5], Domain::Any, |g, x| Ok(g.square(x))),
        unary("clamp", &[2, 5], Domain::AwayFromZero, |g, x| Ok(g.clamp(x, -0.05, 0.05))),
        unary("sum", &[2, 5], Domain::Any, |g, x| {
            let s = g.square(x);
            Ok(g.sum(s))
        }),
        unary("mean", &[2, 5], Domain::Any, |g, x| {
            let s = g.exp(x);
            Ok(g.mean(s))
        }),
        unary("sum_last", &[3, 4], Domain::Any, |g, x| {
            let s = g.square(x);
            Ok(g.sum_last(s))
        }),
        unary("reshape", &[3, 4], Domain::Any, |g, x| {
            let s = g.square(x);
            g.reshape(s, &[2, 6])
        }),
        unary("matmul_left", &[3, 4], Domain::Any, |g, x| {
            let b = g.constant(fixed(4, &[4, 2]));
            g.matmul(x, b)
        }),
        unary("matmul_right", &[4, 2], Domain::Any, |g, x| {
            let a = g.constant(fixed(5, &[3, 4]));
            let y = g.matmul(a, x)?;
            Ok(g.square(y))
        }),
        unary("transpose", &[3, 4], Domain::Any, |g, x| {
            let t = g.transpose(x)?;
            let b = g.constant(fixed(6, &[3, 2]));
            g.matmul(t, b)
        }),
        unary("softmax_axis0", &[3, 4], Domain::Any, |g, x| g.softmax(x, 0)),
        unary("softmax_axis1", &[3, 4], Domain::Any, |g, x| g.softmax(x, 1)),
        unary("masked_log_softmax", &[4, 4], Domain::Any, |g, x| {
            let mask = (0..16).map(|i| i / 4 != i % 4).collect();
            g.masked_log_softmax(x, mask)
        }),
        unary("row_norm", &[3, 4], Domain::AwayFromZero, |g, x| g.row_norm(x)),
        unary("row_normalize", &[3, 4], Domain::AwayFromZero, |g, x| g.row_normalize(x)),
        Case {
            name: "dot",
            shape: vec![6],
            domain: Domain::Any,
            f: Box::new(|g, x| {
                let c = g.constant(fixed(7, &[6]));
                let a = g.dot(x, c)?;
                let b = g.dot(x, x)?;
                g.mul(a, b)
            }),
        },
        Case {
            name: "l2_norm",
            shape: vec![6],
            domain: Domain::AwayFromZero,
            f: Box::new(|g, x| Ok(g.l2_norm(x))),
        },
        unary("conv2d_input", &[1, 2, 5, 5], Domain::Any, |g, x| {
            let k = g.constant(fixed(8, &[3, 2, 3, 3]));
            g.conv2d(x, k, 2, 1)
        }),
        unary("conv2d_kernel", &[3, 2, 3, 3], Domain::Any, |g, k| {
            let x = g.constant(fixed(9, &[2, 2, 5, 5]));
            let y = g.conv2d(x, k, 1, 1)?;
            Ok(g.square(y))
        }),
        unary("conv2d_pointwise", &[4, 3, 1, 1], Domain::Any, |g, k| {
            let x = g.constant(fixed(10, &[2, 3, 4, 4]));
            g.conv2d(x, k, 1, 0)
        }),
        unary("channel_bias_input", &[2, 3, 2, 2], Domain::Any, |g, x| {
            let b = g.constant(fixed(11, &[3]));
            let y = g.channel_bias(x, b)?;
            Ok(g.square(y))
        }),
        unary("channel_bias_bias", &[3], Domain::Any, |g, b| {
            let x = g.constant(fixed(12, &[2, 3, 2, 2]));
            let y = g.channel_bias(x, b)?;
            Ok(g.square(y))
        }),
        unary("row_bias_bias", &[4], Domain::Any, |g, b| {
            let x = g.constant(fixed(13, &[3, 4]));
            let y = g.row_bias(x, b)?;
            Ok(g.square(y))
        }),
        unary("adaptive_avg_pool", &[1, 2, 7, 5], Domain::Any, |g, x| g.adaptive_avg_pool(x, 3, 2)),
        unary("upsample_bilinear", &[1, 2, 3, 2], Domain::Any, |g, x| g.upsample_bilinear(x, 7, 5)),
        unary("upsample_nearest", &[1, 2, 2, 3], Domain::Any, |g, x| g.upsample_nearest(x, 2)),
        unary("lsa_query", &[1, 2, 4, 4], Domain::Any, |g, q| {
            let kv = g.constant(fixed(14, &[1, 2, 4, 4]));
            g.lsa_attention(q, kv, 2)
        }),
        unary("lsa_key_value", &[1, 2, 4, 4], Domain::Any, |g, kv| {
            let q = g.constant(fixed(15, &[1, 2, 4, 4]));
            let q = g.mul_scalar(q, 2.0);
            g.lsa_attention(q, kv, 4)
        }),
        unary("lsa_shared", &[1, 2, 4, 4], Domain::Any, |g, x| g.lsa_attention(x, x, 2)),
    ];

    v.push(Case {
        name: "loss_l1",
        shape: vec![5, 2, 3, 3],
        domain: Domain::Positive,
        f: Box::new(|g, x| {
            let batch = BatchBias::from_images(g, x, &batch_labels(5))?;
            loss_l1(g, &batch)
        }),
    });
    // Row norms of 18 entries in [0.2, 2] lie in roughly [2.5, 6.5]; a
    // margin of 4.5 puts rows on both sides of the hinge.
    v.push(hinge_batch(4.5, L2SignMode::StatedIntent));
    v.push(hinge_batch(4.5, L2SignMode::Verbatim));
    for normalize in [true, false] {
        v.push(Case {
            name: if normalize { "loss_l3_normalized" } else { "loss_l3_raw" },
            shape: vec![6, 4],
            domain: Domain::Any,
            f: Box::new(move |g, x| {
                let batch = BatchBias::from_images(g, x, &batch_labels(6))?;
                loss_l3(g, &batch, normalize)
            }),
        });
    }
    v.push(Case {
        name: "loss_bias_expansion",
        shape: vec![5, 2, 3, 3],
        domain: Domain::Positive,
        f: Box::new(|g, x| {
            let batch = BatchBias::from_images(g, x, &batch_labels(5))?;
            let cfg = LossConfig {
                margin: 4.5,
                ..LossConfig::default()
            };
            loss_bias_expansion(g, &batch, &cfg)
        }),
    });
    v.push(Case {
        name: "loss_ce",
        shape: vec![6],
        domain: Domain::Probability,
        f: Box::new(|g, p| loss_ce(g, p, &batch_labels(6))),
    });
    v.push(Case {
        name: "loss_total",
        shape: vec![5, 2, 3, 3],
        domain: Domain::Positive,
        f: Box::new(|g, x| {
            let labels = batch_labels(5);
            let batch = BatchBias::from_images(g, x, &labels)?;
            let cfg = LossConfig {
                margin: 4.5,
                ..LossConfig::default()
            };
            let be = loss_bias_expansion(g, &batch, &cfg)?;
            // probabilities driven by the same input
            let rows = g.reshape(x, &[5, 18])?;
            let logits = g.sum_last(rows);
            let centred = g.add_scalar(logits, -19.8);
            let scaled = g.mul_scalar(centred, 0.2);
            let p = g.sigmoid(scaled);
            let ce = loss_ce(g, p, &labels)?;
            loss_total(g, ce, be, 0.5)
        }),
    });
    v
}
