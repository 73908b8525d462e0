use super::{Graph, Scalar, Tensor, Var};
use crate::error::{invalid, Result};

/// Compare reverse-mode gradients of a scalar function against central
/// finite differences.
///
/// Returns `max_i |fd_i − ad_i| / max(|fd_i|, |ad_i|, 1e-8)`.
pub fn grad_check<T, F>(f: F, point: &Tensor<T>, eps: T) -> Result<T>
where
    T: Scalar,
    F: Fn(&Graph<T>, Var) -> Result<Var>,
{
    let eval = |p: Tensor<T>| -> Result<T> {
        let g = Graph::new();
        let x = g.constant(p);
        let y = f(&g, x)?;
        let v = g.value(y);
        if !v.is_scalar() {
            return invalid("grad_check", format!("function output has shape {:?}", v.shape()));
        }
        Ok(v.item())
    };

    let g = Graph::new();
    let x = g.param(point.clone());
    let y = f(&g, x)?;
    let grads = g.backward(y)?;
    let ad = grads.get(x).expect("param leaf always has a gradient");

    let floor = T::from_f64_lossy(1e-8);
    let two_eps = eps + eps;
    let mut worst = T::zero();
    for i in 0..point.len() {
        let mut plus = point.clone();
        plus.data_mut()[i] += eps;
        let mut minus = point.clone();
        minus.data_mut()[i] -= eps;
        let fd = (eval(plus)? - eval(minus)?) / two_eps;
        let a = ad.data()[i];
        let denom = fd.abs().max(a.abs()).max(floor);
        worst = worst.max((fd - a).abs() / denom);
    }
    Ok(worst)
}
