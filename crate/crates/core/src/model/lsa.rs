//! Latent-space attention between encoder and decoder taps.

use crate::error::{invalid, shape_err, Result};
use crate::numerics::{Graph, Scalar, Tensor, Var};

/// Patch attention on plain tensors (CHW or NCHW).
///
/// Each output element is `softmax(α·Z)·Z`, where `α` is the query value at
/// that position and `Z` the aligned `P×P` patch of `key_value`.
pub fn lsa_attention_map<T: Scalar>(query: &Tensor<T>, key_value: &Tensor<T>, patch: usize) -> Result<Tensor<T>> {
    let batched = |t: &Tensor<T>| -> Result<Tensor<T>> {
        match t.shape() {
            &[c, h, w] => t.reshape(&[1, c, h, w]),
            &[_, _, _, _] => Ok(t.clone()),
            s => shape_err("lsa_attention_map", format!("expected CHW or NCHW, got {s:?}")),
        }
    };
    let g = Graph::new();
    let q = g.constant(batched(query)?);
    let kv = g.constant(batched(key_value)?);
    let out = g.lsa_attention(q, kv, patch)?;
    g.value(out).reshape(query.shape())
}

/// Pool every tap pair to the bottleneck extent, project both to the
/// bottleneck channel count with the scale's shared 1×1 kernel, attend, and
/// add the bottleneck: `s = Σ_k s_k + z`.
///
/// Returns `(s, [s_k])`.
pub fn lsa_aggregate<T: Scalar>(
    g: &Graph<T>,
    encoder_taps: &[Var],
    decoder_taps: &[Var],
    latent: Var,
    projections: &[Var],
    patch: usize,
) -> Result<(Var, Vec<Var>)> {
    if encoder_taps.len() != decoder_taps.len() || encoder_taps.len() != projections.len() {
        return invalid(
            "lsa_aggregate",
            format!(
                "scale count mismatch: {} encoder taps, {} decoder taps, {} projections",
                encoder_taps.len(),
                decoder_taps.len(),
                projections.len()
            ),
        );
    }
    let zs = g.shape(latent);
    let (zh, zw) = (zs[2], zs[3]);
    let mut maps = Vec::with_capacity(encoder_taps.len());
    let mut s = latent;
    for ((&enc, &dec), &proj) in encoder_taps.iter().zip(decoder_taps).zip(projections) {
        if g.shape(enc) != g.shape(dec) {
            return shape_err(
                "lsa_aggregate",
                format!("encoder tap {:?} vs decoder tap {:?}", g.shape(enc), g.shape(dec)),
            );
        }
        let q = g.adaptive_avg_pool(enc, zh, zw)?;
        let q = g.conv2d(q, proj, 1, 0)?;
        let kv = g.adaptive_avg_pool(dec, zh, zw)?;
        let kv = g.conv2d(kv, proj, 1, 0)?;
        let sk = g.lsa_attention(q, kv, patch)?;
        s = g.add(s, sk)?;
        maps.push(sk);
    }
    Ok((s, maps))
}
