//! Bias-expansion losses, binary cross-entropy and the total objective.
//!
//! All losses operate on graph variables so they can be differentiated;
//! bias batches are `[N × D]` matrices of flattened per-sample bias images.

use crate::error::{invalid, shape_err, Error, Result};
use crate::numerics::{Graph, Scalar, Tensor, Var};
use crate::Label;

/// Sign convention for the fake-sample hinge term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum L2SignMode {
    /// `+(1/N) Σ y·max(m − ‖x̂‖, 0)²`: minimising pushes fake bias norms up
    /// to the margin.
    #[default]
    StatedIntent,
    /// The same term with a leading minus.
    Verbatim,
}

impl std::str::FromStr for L2SignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stated_intent" => Ok(Self::StatedIntent),
            "verbatim" => Ok(Self::Verbatim),
            other => Err(Error::Config(format!("unknown l2_sign_mode '{other}'"))),
        }
    }
}

impl std::fmt::Display for L2SignMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::StatedIntent => "stated_intent",
            Self::Verbatim => "verbatim",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Margin on the L2 norm of a fake sample's flattened bias image.
    pub margin: f64,
    /// Weight of the cross-entropy term; `1 − lambda` weighs the
    /// bias-expansion loss.
    pub lambda: f64,
    /// Unit-normalise bias vectors before the pairwise dot products.
    pub l3_normalize: bool,
    pub l2_sign_mode: L2SignMode,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            margin: 5.0,
            lambda: 0.5,
            l3_normalize: true,
            l2_sign_mode: L2SignMode::StatedIntent,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!("lambda must lie in [0,1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Flattened bias vectors of a batch with their labels.
#[derive(Debug, Clone)]
pub struct BatchBias {
    /// `[N × D]`, nonnegative.
    pub bias: Var,
    pub labels: Vec<Label>,
}

impl BatchBias {
    /// Flatten an NCHW (or any `[N, ...]`) bias tensor into rows.
    pub fn from_images<T: Scalar>(g: &Graph<T>, bias: Var, labels: &[Label]) -> Result<Self> {
        let s = g.shape(bias);
        if s[0] != labels.len() {
            return shape_err("BatchBias", format!("{} labels for batch of {}", labels.len(), s[0]));
        }
        let d = s[1..].iter().product::<usize>().max(1);
        let rows = g.reshape(bias, &[s[0], d])?;
        Ok(Self {
            bias: rows,
            labels: labels.to_vec(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    fn check<T: Scalar>(&self, g: &Graph<T>, op: &'static str) -> Result<usize> {
        let s = g.shape(self.bias);
        if s.len() != 2 || s[0] != self.labels.len() {
            return shape_err(op, format!("bias {s:?} with {} labels", self.labels.len()));
        }
        if s[0] == 0 {
            return invalid(op, "empty batch");
        }
        Ok(s[0])
    }
}

fn weights<T: Scalar>(labels: &[Label], f: impl Fn(Label) -> f64) -> Tensor<T> {
    let n = labels.len() as f64;
    let data = labels.iter().map(|&l| T::from_f64_lossy(f(l) / n)).collect();
    Tensor::new(&[labels.len()], data).unwrap()
}

/// `(1/N) Σ_i (1 − y_i) ‖x̂_i‖²`.
pub fn loss_l1<T: Scalar>(g: &Graph<T>, batch: &BatchBias) -> Result<Var> {
    batch.check(g, "loss_l1")?;
    let sq = g.square(batch.bias);
    let per_sample = g.sum_last(sq);
    let w = g.constant(weights(&batch.labels, |l| if l.is_fake() { 0.0 } else { 1.0 }));
    g.dot(per_sample, w)
}

/// `±(1/N) Σ_i y_i max(m − ‖x̂_i‖, 0)²`, sign per `mode`.
pub fn loss_l2<T: Scalar>(g: &Graph<T>, batch: &BatchBias, margin: f64, mode: L2SignMode) -> Result<Var> {
    batch.check(g, "loss_l2")?;
    let norms = g.row_norm(batch.bias)?;
    let neg = g.neg(norms);
    let gap = g.add_scalar(neg, T::from_f64_lossy(margin));
    let hinge = g.relu(gap);
    let sq = g.square(hinge);
    let sign = match mode {
        L2SignMode::StatedIntent => 1.0,
        L2SignMode::Verbatim => -1.0,
    };
    let w = g.constant(weights(&batch.labels, |l| if l.is_fake() { sign } else { 0.0 }));
    g.dot(sq, w)
}

/// Supervised contrastive term:
/// `(1/N) Σ_i (−1/M_i) Σ_{j≠i, y_j=y_i} log[exp(u_i·u_j) / Σ_{k≠i} exp(u_i·u_k)]`.
///
/// Samples with no same-label partner contribute 0; `N` is unchanged.
pub fn loss_l3<T: Scalar>(g: &Graph<T>, batch: &BatchBias, normalize: bool) -> Result<Var> {
    let n = batch.check(g, "loss_l3")?;
    if n < 2 {
        return invalid("loss_l3", format!("needs at least 2 samples, got {n}"));
    }
    let u = if normalize { g.row_normalize(batch.bias)? } else { batch.bias };
    let ut = g.transpose(u)?;
    let sim = g.matmul(u, ut)?;
    let off_diag: Vec<bool> = (0..n * n).map(|idx| idx / n != idx % n).collect();
    let log_p = g.masked_log_softmax(sim, off_diag)?;

    let labels = &batch.labels;
    let mut w = vec![T::zero(); n * n];
    for i in 0..n {
        let m = (0..n).filter(|&j| j != i && labels[j] == labels[i]).count();
        if m == 0 {
            continue;
        }
        let coef = T::from_f64_lossy(-1.0 / (m as f64 * n as f64));
        for j in 0..n {
            if j != i && labels[j] == labels[i] {
                w[i * n + j] = coef;
            }
        }
    }
    let w = g.constant(Tensor::new(&[n, n], w)?);
    g.dot(log_p, w)
}

/// `L1 + L2 + L3`.
pub fn loss_bias_expansion<T: Scalar>(g: &Graph<T>, batch: &BatchBias, cfg: &LossConfig) -> Result<Var> {
    let l1 = loss_l1(g, batch)?;
    let l2 = loss_l2(g, batch, cfg.margin, cfg.l2_sign_mode)?;
    let l3 = loss_l3(g, batch, cfg.l3_normalize)?;
    let s = g.add(l1, l2)?;
    g.add(s, l3)
}

pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy over probabilities `p` (`[N]`), clamped to
/// `[1e-7, 1 − 1e-7]`.
pub fn loss_ce<T: Scalar>(g: &Graph<T>, p: Var, labels: &[Label]) -> Result<Var> {
    let s = g.shape(p);
    if s != [labels.len()] || labels.is_empty() {
        return shape_err("loss_ce", format!("probabilities {s:?} with {} labels", labels.len()));
    }
    let eps = T::from_f64_lossy(PROB_CLAMP);
    let pc = g.clamp(p, eps, T::one() - eps);
    let log_p = g.ln(pc);
    let neg = g.neg(pc);
    let one_minus = g.add_scalar(neg, T::one());
    let log_q = g.ln(one_minus);
    let wy = g.constant(weights(labels, |l| if l.is_fake() { -1.0 } else { 0.0 }));
    let wn = g.constant(weights(labels, |l| if l.is_fake() { 0.0 } else { -1.0 }));
    let a = g.dot(log_p, wy)?;
    let b = g.dot(log_q, wn)?;
    g.add(a, b)
}

/// `λ·l_c + (1 − λ)·l_be`.
pub fn loss_total<T: Scalar>(g: &Graph<T>, l_c: Var, l_be: Var, lambda: f64) -> Result<Var> {
    if !(0.0..=1.0).contains(&lambda) {
        return invalid("loss_total", format!("lambda {lambda} outside [0,1]"));
    }
    let a = g.mul_scalar(l_c, T::from_f64_lossy(lambda));
    let b = g.mul_scalar(l_be, T::from_f64_lossy(1.0 - lambda));
    g.add(a, b)
}

/// Scalar components of one objective evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
    pub bias_expansion: f64,
    pub cross_entropy: f64,
    pub total: f64,
}

/// Build the full objective on `g` and return `(total, breakdown)`.
pub fn objective<T: Scalar>(
    g: &Graph<T>,
    bias_images: Var,
    probability: Var,
    labels: &[Label],
    cfg: &LossConfig,
) -> Result<(Var, LossBreakdown)> {
    let batch = BatchBias::from_images(g, bias_images, labels)?;
    let l1 = loss_l1(g, &batch)?;
    let l2 = loss_l2(g, &batch, cfg.margin, cfg.l2_sign_mode)?;
    let l3 = loss_l3(g, &batch, cfg.l3_normalize)?;
    let s = g.add(l1, l2)?;
    let be = g.add(s, l3)?;
    let ce = loss_ce(g, probability, labels)?;
    let total = loss_total(g, ce, be, cfg.lambda)?;
    let val = |v: Var| g.value(v).item().to_f64_lossy();
    let breakdown = LossBreakdown {
        l1: val(l1),
        l2: val(l2),
        l3: val(l3),
        bias_expansion: val(be),
        cross_entropy: val(ce),
        total: val(total),
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_mode_round_trips_through_text() {
        for m in [L2SignMode::StatedIntent, L2SignMode::Verbatim] {
            assert_eq!(m.to_string().parse::<L2SignMode>().unwrap(), m);
        }
    }

    #[test]
    fn batch_counts_labels() {
        let g = Graph::<f64>::new();
        let bias = g.constant(Tensor::zeros(&[3, 2, 2]));
        let b = BatchBias::from_images(&g, bias, &[Label::Fake, Label::Real, Label::Fake]).unwrap();
        assert_eq!(g.shape(b.bias), vec![3, 4]);
        assert_eq!((b.count(Label::Fake), b.count(Label::Real)), (2, 1));
    }
}
