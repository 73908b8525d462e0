//! Recording graph with reverse-mode differentiation.
//!
//! Every operation appends a node holding its output value and enough
//! information to propagate gradients. Nodes are only ever appended, so
//! execution order is a valid topological order and [`Graph::backward`]
//! simply walks the node list in reverse.

use std::cell::RefCell;
use std::rc::Rc;

use super::kernels::{self, ConvGeom};
use super::{Scalar, Tensor};
use crate::error::{invalid, shape_err, Error, Result};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddScalar(Var),
    MulScalar(Var, T),
    Abs(Var),
    Relu(Var),
    Sigmoid(Var),
    Exp(Var),
    Ln(Var),
    Sqrt(Var),
    Square(Var),
    Clamp(Var, T, T),
    Sum(Var),
    Mean(Var),
    SumLast(Var),
    Reshape(Var),
    Matmul(Var, Var),
    Transpose(Var),
    Softmax(Var, usize),
    MaskedLogSoftmax(Var, Rc<Vec<bool>>),
    RowNorm(Var),
    RowNormalize(Var),
    Dot(Var, Var),
    L2Norm(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geom: ConvGeom,
    },
    ChannelBias(Var, Var),
    RowBias(Var, Var),
    AdaptiveAvgPool(Var),
    UpsampleBilinear(Var),
    UpsampleNearest(Var, usize),
    Lsa {
        query: Var,
        kv: Var,
        patch: usize,
    },
}

struct Node<T> {
    value: Rc<Tensor<T>>,
    op: Op<T>,
    requires_grad: bool,
}

/// Operation recorder for one forward/backward pass.
///
/// A graph is cheap to create; the training loop builds a fresh one per
/// step. Nodes live until the graph is dropped.
pub struct Graph<T> {
    nodes: RefCell<Vec<Node<T>>>,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient of the loss with respect to `v`, if `v` requires grad.
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Self {
            nodes: RefCell::new(Vec::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A constant input; no gradient is accumulated for it.
    pub fn constant(&self, t: Tensor<T>) -> Var {
        self.push_leaf(t, false)
    }

    /// A trainable leaf; [`Graph::backward`] populates its gradient.
    pub fn param(&self, t: Tensor<T>) -> Var {
        self.push_leaf(t, true)
    }

    pub fn leaf(&self, t: Tensor<T>, requires_grad: bool) -> Var {
        self.push_leaf(t, requires_grad)
    }

    fn push_leaf(&self, t: Tensor<T>, requires_grad: bool) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(t),
            op: Op::Leaf,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> Rc<Tensor<T>> {
        Rc::clone(&self.nodes.borrow()[v.0].value)
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.nodes.borrow()[v.0].value.shape().to_vec()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes.borrow()[v.0].requires_grad
    }

    fn push(&self, value: Tensor<T>, op: Op<T>) -> Var {
        let requires_grad = {
            let nodes = self.nodes.borrow();
            inputs(&op).iter().any(|i| nodes[i.0].requires_grad)
        };
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var(nodes.len() - 1)
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(Rc<Tensor<T>>, Rc<Tensor<T>>)> {
        let (ta, tb) = (self.value(a), self.value(b));
        ta.check_same_shape(&tb, op)?;
        Ok((ta, tb))
    }

    fn unary(&self, a: Var, op: Op<T>, f: impl Fn(T) -> T) -> Var {
        let out = self.value(a).map(f);
        self.push(out, op)
    }

    fn binary(&self, a: Var, b: Var, name: &'static str, op: Op<T>, f: impl Fn(T, T) -> T) -> Result<Var> {
        let (ta, tb) = self.same_shape(a, b, name)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::new(ta.shape(), data)?;
        Ok(self.push(out, op))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "add", Op::Add(a, b), |x, y| x + y)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "sub", Op::Sub(a, b), |x, y| x - y)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary(a, b, "mul", Op::Mul(a, b), |x, y| x * y)
    }

    pub fn add_scalar(&self, a: Var, c: T) -> Var {
        self.unary(a, Op::AddScalar(a), |x| x + c)
    }

    pub fn mul_scalar(&self, a: Var, c: T) -> Var {
        self.unary(a, Op::MulScalar(a, c), |x| x * c)
    }

    pub fn neg(&self, a: Var) -> Var {
        self.mul_scalar(a, -T::one())
    }

    /// Subgradient at 0 is 0.
    pub fn abs(&self, a: Var) -> Var {
        self.unary(a, Op::Abs(a), |x| x.abs())
    }

    pub fn relu(&self, a: Var) -> Var {
        self.unary(a, Op::Relu(a), |x| if x > T::zero() { x } else { T::zero() })
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, Op::Sigmoid(a), sigmoid)
    }

    pub fn exp(&self, a: Var) -> Var {
        self.unary(a, Op::Exp(a), |x| x.exp())
    }

    pub fn ln(&self, a: Var) -> Var {
        self.unary(a, Op::Ln(a), |x| x.ln())
    }

    pub fn sqrt(&self, a: Var) -> Var {
        self.unary(a, Op::Sqrt(a), |x| x.sqrt())
    }

    pub fn square(&self, a: Var) -> Var {
        self.unary(a, Op::Square(a), |x| x * x)
    }

    /// Gradient passes only strictly inside `(lo, hi)`.
    pub fn clamp(&self, a: Var, lo: T, hi: T) -> Var {
        self.unary(a, Op::Clamp(a, lo, hi), |x| x.max(lo).min(hi))
    }

    pub fn sum(&self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        let m = self.value(a).mean();
        self.push(Tensor::scalar(m), Op::Mean(a))
    }

    /// Sum over the last axis; a rank-1 input yields a one-element tensor.
    pub fn sum_last(&self, a: Var) -> Var {
        let t = self.value(a);
        let last = *t.shape().last().unwrap();
        let data: Vec<T> = t.data().chunks_exact(last).map(|c| c.iter().copied().sum()).collect();
        let shape = if t.rank() > 1 {
            t.shape()[..t.rank() - 1].to_vec()
        } else {
            vec![1]
        };
        self.push(Tensor::new(&shape, data).unwrap(), Op::SumLast(a))
    }

    pub fn reshape(&self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    /// `[m×k] · [k×n]`.
    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k, n) = match (ta.shape(), tb.shape()) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            (sa, sb) => return shape_err("matmul", format!("{sa:?} x {sb:?}")),
        };
        let mut out = vec![T::zero(); m * n];
        kernels::gemm_nn(m, k, n, ta.data(), tb.data(), &mut out);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::Matmul(a, b)))
    }

    pub fn transpose(&self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = matrix_dims(&t, "transpose")?;
        let out = kernels::transpose(r, c, t.data());
        Ok(self.push(Tensor::new(&[c, r], out)?, Op::Transpose(a)))
    }

    pub fn softmax(&self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        if axis >= t.rank() {
            return invalid("softmax", format!("axis {axis} for rank {}", t.rank()));
        }
        let out = kernels::softmax_forward(t.shape(), axis, t.data());
        Ok(self.push(Tensor::new(t.shape(), out)?, Op::Softmax(a, axis)))
    }

    /// Row-wise log-softmax of a matrix restricted to entries where `mask`
    /// is true; excluded entries are 0 in the output and receive no gradient.
    pub fn masked_log_softmax(&self, a: Var, mask: Vec<bool>) -> Result<Var> {
        let t = self.value(a);
        let (r, c) = matrix_dims(&t, "masked_log_softmax")?;
        if mask.len() != r * c {
            return shape_err("masked_log_softmax", format!("mask of {} for {r}x{c}", mask.len()));
        }
        let out = kernels::masked_log_softmax_forward(r, c, t.data(), &mask);
        Ok(self.push(Tensor::new(&[r, c], out)?, Op::MaskedLogSoftmax(a, Rc::new(mask))))
    }

    /// Euclidean norm of every row of a `[N×D]` matrix, shape `[N]`.
    /// The subgradient at a zero row is 0.
    pub fn row_norm(&self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (_, d) = matrix_dims(&t, "row_norm")?;
        let data: Vec<T> = t
            .data()
            .chunks_exact(d)
            .map(|r| r.iter().map(|&v| v * v).sum::<T>().sqrt())
            .collect();
        let n = data.len();
        Ok(self.push(Tensor::new(&[n], data)?, Op::RowNorm(a)))
    }

    /// Scale each row of a `[N×D]` matrix to unit norm; zero rows stay zero.
    pub fn row_normalize(&self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let (_, d) = matrix_dims(&t, "row_normalize")?;
        let mut out = t.data().to_vec();
        for row in out.chunks_exact_mut(d) {
            let norm = row.iter().map(|&v| v * v).sum::<T>().sqrt();
            if norm > T::zero() {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        Ok(self.push(Tensor::new(t.shape(), out)?, Op::RowNormalize(a)))
    }

    /// Full contraction of two same-shaped tensors.
    pub fn dot(&self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = self.same_shape(a, b, "dot")?;
        let s = ta.data().iter().zip(tb.data()).map(|(&x, &y)| x * y).sum();
        Ok(self.push(Tensor::scalar(s), Op::Dot(a, b)))
    }

    /// Euclidean norm over all elements.
    pub fn l2_norm(&self, a: Var) -> Var {
        let s = self.value(a).data().iter().map(|&v| v * v).sum::<T>().sqrt();
        self.push(Tensor::scalar(s), Op::L2Norm(a))
    }

    /// NCHW cross-correlation with an OCkk kernel.
    pub fn conv2d(&self, input: Var, kernel: Var, stride: usize, padding: usize) -> Result<Var> {
        let (x, k) = (self.value(input), self.value(kernel));
        let geom = ConvGeom::new(x.shape(), k.shape(), stride, padding)?;
        let out = kernels::conv2d_forward(&geom, x.data(), k.data());
        let out = Tensor::new(&geom.out_shape(), out)?;
        Ok(self.push(out, Op::Conv2d { input, kernel, geom }))
    }

    /// Add a per-channel bias `[C]` to an NCHW tensor.
    pub fn channel_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let [n, c, h, w] = match tx.shape() {
            &[n, c, h, w] => [n, c, h, w],
            s => return shape_err("channel_bias", format!("expected NCHW, got {s:?}")),
        };
        if tb.shape() != [c] {
            return shape_err("channel_bias", format!("bias {:?} for {c} channels", tb.shape()));
        }
        let mut out = tx.data().to_vec();
        for (p, plane) in out.chunks_exact_mut(h * w).enumerate() {
            let b = tb.data()[p % c];
            plane.iter_mut().for_each(|v| *v += b);
        }
        debug_assert_eq!(out.len(), n * c * h * w);
        Ok(self.push(Tensor::new(tx.shape(), out)?, Op::ChannelBias(x, bias)))
    }

    /// Add a bias `[D]` to every row of a `[N×D]` matrix.
    pub fn row_bias(&self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (_, d) = matrix_dims(&tx, "row_bias")?;
        if tb.shape() != [d] {
            return shape_err("row_bias", format!("bias {:?} for width {d}", tb.shape()));
        }
        let mut out = tx.data().to_vec();
        for row in out.chunks_exact_mut(d) {
            row.iter_mut().zip(tb.data()).for_each(|(v, &b)| *v += b);
        }
        Ok(self.push(Tensor::new(tx.shape(), out)?, Op::RowBias(x, bias)))
    }

    pub fn adaptive_avg_pool(&self, a: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let t = self.value(a);
        let shape = kernels::adaptive_avg_pool_shape(t.shape(), out_h, out_w)?;
        let in_shape = [t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]];
        let out = kernels::adaptive_avg_pool_forward(in_shape, t.data(), out_h, out_w);
        Ok(self.push(Tensor::new(&shape, out)?, Op::AdaptiveAvgPool(a)))
    }

    /// Half-pixel-center bilinear resize to a larger or equal extent.
    pub fn upsample_bilinear(&self, a: Var, out_h: usize, out_w: usize) -> Result<Var> {
        let t = self.value(a);
        let shape = kernels::upsample_shape(t.shape(), out_h, out_w, "upsample_bilinear")?;
        let in_shape = [t.shape()[0], t.shape()[1], t.shape()[2], t.shape()[3]];
        let out = kernels::upsample_bilinear_forward(in_shape, t.data(), out_h, out_w);
        Ok(self.push(Tensor::new(&shape, out)?, Op::UpsampleBilinear(a)))
    }

    pub fn upsample_nearest(&self, a: Var, factor: usize) -> Result<Var> {
        let t = self.value(a);
        if factor == 0 {
            return invalid("upsample_nearest", "factor must be positive");
        }
        let s = t.shape();
        let shape = kernels::upsample_shape(s, s.get(2).map_or(0, |h| h * factor), s.get(3).map_or(0, |w| w * factor), "upsample_nearest")?;
        let out = kernels::upsample_nearest_forward([s[0], s[1], s[2], s[3]], t.data(), factor);
        Ok(self.push(Tensor::new(&shape, out)?, Op::UpsampleNearest(a, factor)))
    }

    /// Patch attention between a query map and a key/value map of the same
    /// NCHW shape; see [`kernels::lsa_forward`].
    pub fn lsa_attention(&self, query: Var, kv: Var, patch: usize) -> Result<Var> {
        let (tq, tk) = (self.value(query), self.value(kv));
        let shape = kernels::lsa_shape(tq.shape(), tk.shape(), patch)?;
        let out = kernels::lsa_forward(shape, tq.data(), tk.data(), patch);
        Ok(self.push(Tensor::new(&shape, out)?, Op::Lsa { query, kv, patch }))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Every leaf created with `requires_grad` receives a gradient, zero if
    /// it does not influence the loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let nodes = self.nodes.borrow();
        let lv = &nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<T>>> = vec![None; nodes.len()];
        grads[loss.0] = Some(vec![T::one()]);

        for id in (0..=loss.0).rev() {
            let node = &nodes[id];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            let mut acc = Acc {
                nodes: &nodes,
                grads: &mut grads,
            };
            propagate(&node.op, &node.value, &g, &mut acc);
            // Keep the gradient of interior nodes available to callers.
            grads[id] = Some(g);
        }

        let grads = nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| match (g, node.requires_grad) {
                (Some(g), true) => Some(Tensor::new(node.value.shape(), g).unwrap()),
                (None, true) if matches!(node.op, Op::Leaf) => Some(Tensor::zeros(node.value.shape())),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }
}

#[inline]
pub(crate) fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

fn matrix_dims<T: Scalar>(t: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match t.shape() {
        &[r, c] => Ok((r, c)),
        s => shape_err(op, format!("expected a matrix, got {s:?}")),
    }
}

fn inputs<T>(op: &Op<T>) -> Vec<Var> {
    use Op::*;
    match op {
        Leaf => vec![],
        Add(a, b) | Sub(a, b) | Mul(a, b) | Matmul(a, b) | Dot(a, b) | ChannelBias(a, b) | RowBias(a, b) => {
            vec![*a, *b]
        }
        AddScalar(a) | MulScalar(a, _) | Abs(a) | Relu(a) | Sigmoid(a) | Exp(a) | Ln(a) | Sqrt(a)
        | Square(a) | Clamp(a, _, _) | Sum(a) | Mean(a) | SumLast(a) | Reshape(a) | Transpose(a)
        | Softmax(a, _) | MaskedLogSoftmax(a, _) | RowNorm(a) | RowNormalize(a) | L2Norm(a)
        | AdaptiveAvgPool(a) | UpsampleBilinear(a) | UpsampleNearest(a, _) => vec![*a],
        Conv2d { input, kernel, .. } => vec![*input, *kernel],
        Lsa { query, kv, .. } => vec![*query, *kv],
    }
}

struct Acc<'a, T> {
    nodes: &'a [Node<T>],
    grads: &'a mut [Option<Vec<T>>],
}

impl<'a, T: Scalar> Acc<'a, T> {
    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn val(&self, v: Var) -> &'a Tensor<T> {
        &self.nodes[v.0].value
    }

    fn add(&mut self, v: Var, g: Vec<T>) {
        if !self.wants(v) {
            return;
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.iter_mut().zip(&g).for_each(|(e, &x)| *e += x),
            slot => *slot = Some(g),
        }
    }

    fn add_map(&mut self, v: Var, f: impl FnOnce(&Tensor<T>) -> Vec<T>) {
        if self.wants(v) {
            let g = f(self.val(v));
            self.add(v, g);
        }
    }
}

fn zip_map<T: Scalar>(a: &[T], b: &[T], f: impl Fn(T, T) -> T) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| f(x, y)).collect()
}

fn propagate<T: Scalar>(op: &Op<T>, out: &Tensor<T>, g: &[T], acc: &mut Acc<'_, T>) {
    use Op::*;
    let nchw = |t: &Tensor<T>| {
        let s = t.shape();
        [s[0], s[1], s[2], s[3]]
    };
    match op {
        Leaf => {}
        Add(a, b) => {
            acc.add(*a, g.to_vec());
            acc.add(*b, g.to_vec());
        }
        Sub(a, b) => {
            acc.add(*a, g.to_vec());
            acc.add(*b, g.iter().map(|&x| -x).collect());
        }
        Mul(a, b) => {
            let (av, bv) = (acc.val(*a), acc.val(*b));
            acc.add_map(*a, |_| zip_map(g, bv.data(), |x, y| x * y));
            acc.add_map(*b, |_| zip_map(g, av.data(), |x, y| x * y));
        }
        AddScalar(a) => acc.add(*a, g.to_vec()),
        MulScalar(a, c) => acc.add(*a, g.iter().map(|&x| x * *c).collect()),
        Abs(a) => acc.add_map(*a, |x| {
            zip_map(g, x.data(), |gv, xv| {
                if xv > T::zero() {
                    gv
                } else if xv < T::zero() {
                    -gv
                } else {
                    T::zero()
                }
            })
        }),
        Relu(a) => acc.add_map(*a, |x| {
            zip_map(g, x.data(), |gv, xv| if xv > T::zero() { gv } else { T::zero() })
        }),
        Sigmoid(a) => acc.add(*a, zip_map(g, out.data(), |gv, y| gv * y * (T::one() - y))),
        Exp(a) => acc.add(*a, zip_map(g, out.data(), |gv, y| gv * y)),
        Ln(a) => acc.add_map(*a, |x| zip_map(g, x.data(), |gv, xv| gv / xv)),
        Sqrt(a) => acc.add(*a, zip_map(g, out.data(), |gv, y| gv / (y + y))),
        Square(a) => acc.add_map(*a, |x| zip_map(g, x.data(), |gv, xv| gv * (xv + xv))),
        Clamp(a, lo, hi) => acc.add_map(*a, |x| {
            zip_map(g, x.data(), |gv, xv| if xv > *lo && xv < *hi { gv } else { T::zero() })
        }),
        Sum(a) => acc.add_map(*a, |x| vec![g[0]; x.len()]),
        Mean(a) => acc.add_map(*a, |x| vec![g[0] / T::from_usize(x.len()).unwrap(); x.len()]),
        SumLast(a) => acc.add_map(*a, |x| {
            let last = *x.shape().last().unwrap();
            g.iter().flat_map(|&gv| std::iter::repeat_n(gv, last)).collect()
        }),
        Reshape(a) => acc.add(*a, g.to_vec()),
        Matmul(a, b) => {
            let (ta, tb) = (acc.val(*a), acc.val(*b));
            let (m, k) = (ta.shape()[0], ta.shape()[1]);
            let n = tb.shape()[1];
            acc.add_map(*a, |_| {
                let mut da = vec![T::zero(); m * k];
                kernels::gemm_nt(m, n, k, g, tb.data(), &mut da);
                da
            });
            acc.add_map(*b, |_| {
                let mut db = vec![T::zero(); k * n];
                kernels::gemm_tn(k, m, n, ta.data(), g, &mut db);
                db
            });
        }
        Transpose(a) => {
            let (r, c) = (out.shape()[0], out.shape()[1]);
            acc.add(*a, kernels::transpose(r, c, g));
        }
        Softmax(a, axis) => acc.add(*a, kernels::softmax_backward(out.shape(), *axis, out.data(), g)),
        MaskedLogSoftmax(a, mask) => {
            let (r, c) = (out.shape()[0], out.shape()[1]);
            acc.add(*a, kernels::masked_log_softmax_backward(r, c, out.data(), mask, g));
        }
        RowNorm(a) => acc.add_map(*a, |x| {
            let d = x.shape()[1];
            let mut dx = vec![T::zero(); x.len()];
            for (i, (row, drow)) in x.data().chunks_exact(d).zip(dx.chunks_exact_mut(d)).enumerate() {
                let n = out.data()[i];
                if n > T::zero() {
                    drow.iter_mut().zip(row).for_each(|(dv, &xv)| *dv = g[i] * xv / n);
                }
            }
            dx
        }),
        RowNormalize(a) => acc.add_map(*a, |x| {
            let d = x.shape()[1];
            let mut dx = vec![T::zero(); x.len()];
            for (i, xrow) in x.data().chunks_exact(d).enumerate() {
                let norm = xrow.iter().map(|&v| v * v).sum::<T>().sqrt();
                if norm == T::zero() {
                    continue;
                }
                let u = &out.data()[i * d..(i + 1) * d];
                let gr = &g[i * d..(i + 1) * d];
                let gu: T = gr.iter().zip(u).map(|(&a, &b)| a * b).sum();
                for j in 0..d {
                    dx[i * d + j] = (gr[j] - gu * u[j]) / norm;
                }
            }
            dx
        }),
        Dot(a, b) => {
            let bv = acc.val(*b).data().iter().map(|&v| v * g[0]).collect();
            let av = acc.val(*a).data().iter().map(|&v| v * g[0]).collect();
            acc.add(*a, bv);
            acc.add(*b, av);
        }
        L2Norm(a) => acc.add_map(*a, |x| {
            let n = out.item();
            if n == T::zero() {
                vec![T::zero(); x.len()]
            } else {
                x.data().iter().map(|&v| g[0] * v / n).collect()
            }
        }),
        Conv2d { input, kernel, geom } => {
            let (need_dx, need_dk) = (acc.wants(*input), acc.wants(*kernel));
            let (dx, dk) = kernels::conv2d_backward(
                geom,
                acc.val(*input).data(),
                acc.val(*kernel).data(),
                g,
                need_dx,
                need_dk,
            );
            if let Some(dx) = dx {
                acc.add(*input, dx);
            }
            if let Some(dk) = dk {
                acc.add(*kernel, dk);
            }
        }
        ChannelBias(x, b) => {
            acc.add(*x, g.to_vec());
            acc.add_map(*b, |bt| {
                let c = bt.len();
                let hw = out.shape()[2] * out.shape()[3];
                let mut db = vec![T::zero(); c];
                for (p, plane) in g.chunks_exact(hw).enumerate() {
                    db[p % c] += plane.iter().copied().sum::<T>();
                }
                db
            });
        }
        RowBias(x, b) => {
            acc.add(*x, g.to_vec());
            acc.add_map(*b, |bt| {
                let d = bt.len();
                let mut db = vec![T::zero(); d];
                for row in g.chunks_exact(d) {
                    db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
                }
                db
            });
        }
        AdaptiveAvgPool(a) => acc.add_map(*a, |x| {
            kernels::adaptive_avg_pool_backward(nchw(x), g, out.shape()[2], out.shape()[3])
        }),
        UpsampleBilinear(a) => acc.add_map(*a, |x| {
            kernels::upsample_bilinear_backward(nchw(x), g, out.shape()[2], out.shape()[3])
        }),
        UpsampleNearest(a, f) => acc.add_map(*a, |x| kernels::upsample_nearest_backward(nchw(x), g, *f)),
        Lsa { query, kv, patch } => {
            if acc.wants(*query) || acc.wants(*kv) {
                let (dq, dkv) = kernels::lsa_backward(
                    nchw(out),
                    acc.val(*query).data(),
                    acc.val(*kv).data(),
                    *patch,
                    g,
                );
                acc.add(*query, dq);
                acc.add(*kv, dkv);
            }
        }
    }
}
