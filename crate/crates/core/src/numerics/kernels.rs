//! Slice-level forward and backward kernels.
//!
//! These operate on raw row-major buffers and know nothing about the graph;
//! [`super::Graph`] wires them up. All loops run in a fixed order so results
//! are bitwise reproducible.

use super::Scalar;
use crate::error::{invalid, shape_err, Result};

/// `c[m×n] += a[m×k] · b[k×n]`
pub fn gemm_nn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (arow, crow) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&aip, brow) in arow.iter().zip(b.chunks_exact(n)) {
            if aip == T::zero() {
                continue;
            }
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aip * bv;
            }
        }
    }
}

/// `c[m×n] += aᵀ · b` with `a` stored as `[k×m]` and `b` as `[k×n]`.
pub fn gemm_tn<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (acol, brow) in a.chunks_exact(m).zip(b.chunks_exact(n)) {
        for (&api, crow) in acol.iter().zip(c.chunks_exact_mut(n)) {
            if api == T::zero() {
                continue;
            }
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += api * bv;
            }
        }
    }
}

/// `c[m×n] += a · bᵀ` with `a` stored as `[m×k]` and `b` as `[n×k]`.
pub fn gemm_nt<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    let bt = transpose(n, k, b);
    gemm_nn(m, k, n, a, &bt, c);
}

/// Transpose a `rows×cols` matrix.
pub fn transpose<T: Scalar>(rows: usize, cols: usize, a: &[T]) -> Vec<T> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

fn nchw(shape: &[usize], op: &'static str) -> Result<[usize; 4]> {
    match shape {
        &[n, c, h, w] => Ok([n, c, h, w]),
        _ => shape_err(op, format!("expected NCHW input, got {shape:?}")),
    }
}

/// Geometry of a 2-d cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub o: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        let [n, c, h, w] = nchw(input, "conv2d")?;
        let [o, kc, kh, kw] = match kernel {
            &[o, kc, kh, kw] => [o, kc, kh, kw],
            _ => return shape_err("conv2d", format!("expected OCkk kernel, got {kernel:?}")),
        };
        if kc != c {
            return shape_err(
                "conv2d",
                format!("input has {c} channels but kernel expects {kc}"),
            );
        }
        if stride == 0 {
            return invalid("conv2d", "stride must be positive");
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return shape_err(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{w} (pad {pad})"),
            );
        }
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            n,
            c,
            h,
            w,
            o,
            kh,
            kw,
            stride,
            pad,
            oh,
            ow,
        })
    }

    pub fn out_shape(&self) -> [usize; 4] {
        [self.n, self.o, self.oh, self.ow]
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.oh * self.ow
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad == 0
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let (oh, ow) = (self.oh, self.ow);
        let mut row = 0;
        for ci in 0..self.c {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let dst = &mut cols[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        let drow = &mut dst[oy * ow..(oy + 1) * ow];
                        if iy < 0 || iy >= self.h as isize {
                            drow.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, d) in drow.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            *d = if ix < 0 || ix >= self.w as isize {
                                T::zero()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                    row += 1;
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let (oh, ow) = (self.oh, self.ow);
        let mut row = 0;
        for ci in 0..self.c {
            let plane = &mut dx[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let src = &cols[row * oh * ow..(row + 1) * oh * ow];
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ki) as isize - self.pad as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let prow = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kj) as isize - self.pad as isize;
                            if ix >= 0 && ix < self.w as isize {
                                prow[ix as usize] += src[oy * ow + ox];
                            }
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(g: &ConvGeom, x: &[T], k: &[T]) -> Vec<T> {
    let in_sz = g.c * g.h * g.w;
    let out_sz = g.o * g.oh * g.ow;
    let mut out = vec![T::zero(); g.n * out_sz];
    let mut cols = vec![T::zero(); g.col_rows() * g.col_cols()];
    for b in 0..g.n {
        let xs = &x[b * in_sz..(b + 1) * in_sz];
        let os = &mut out[b * out_sz..(b + 1) * out_sz];
        if g.is_pointwise() {
            gemm_nn(g.o, g.c, g.col_cols(), k, xs, os);
        } else {
            g.im2col(xs, &mut cols);
            gemm_nn(g.o, g.col_rows(), g.col_cols(), k, &cols, os);
        }
    }
    out
}

/// Returns `(d_input, d_kernel)`; either is skipped when not requested.
pub fn conv2d_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    k: &[T],
    gout: &[T],
    need_dx: bool,
    need_dk: bool,
) -> (Option<Vec<T>>, Option<Vec<T>>) {
    let in_sz = g.c * g.h * g.w;
    let out_sz = g.o * g.oh * g.ow;
    let (rows, ncols) = (g.col_rows(), g.col_cols());
    let mut dx = need_dx.then(|| vec![T::zero(); g.n * in_sz]);
    let mut dk = need_dk.then(|| vec![T::zero(); g.o * rows]);
    let mut cols = vec![T::zero(); rows * ncols];
    let mut dcols = vec![T::zero(); rows * ncols];
    for b in 0..g.n {
        let xs = &x[b * in_sz..(b + 1) * in_sz];
        let gs = &gout[b * out_sz..(b + 1) * out_sz];
        if let Some(dk) = dk.as_mut() {
            if g.is_pointwise() {
                gemm_nt(g.o, ncols, rows, gs, xs, dk);
            } else {
                g.im2col(xs, &mut cols);
                gemm_nt(g.o, ncols, rows, gs, &cols, dk);
            }
        }
        if let Some(dx) = dx.as_mut() {
            let dxs = &mut dx[b * in_sz..(b + 1) * in_sz];
            if g.is_pointwise() {
                gemm_tn(rows, g.o, ncols, k, gs, dxs);
            } else {
                dcols.fill(T::zero());
                gemm_tn(rows, g.o, ncols, k, gs, &mut dcols);
                g.col2im(&dcols, dxs);
            }
        }
    }
    (dx, dk)
}

fn pool_window(i: usize, input: usize, output: usize) -> (usize, usize) {
    let start = i * input / output;
    let end = ((i + 1) * input).div_ceil(output);
    (start, end)
}

pub fn adaptive_avg_pool_shape(input: &[usize], oh: usize, ow: usize) -> Result<[usize; 4]> {
    let [n, c, h, w] = nchw(input, "adaptive_avg_pool")?;
    if oh == 0 || ow == 0 || oh > h || ow > w {
        return invalid(
            "adaptive_avg_pool",
            format!("output {oh}x{ow} must be nonzero and no larger than input {h}x{w}"),
        );
    }
    Ok([n, c, oh, ow])
}

pub fn adaptive_avg_pool_forward<T: Scalar>(shape: [usize; 4], x: &[T], oh: usize, ow: usize) -> Vec<T> {
    let [n, c, h, w] = shape;
    let mut out = vec![T::zero(); n * c * oh * ow];
    for p in 0..n * c {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for i in 0..oh {
            let (y0, y1) = pool_window(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = pool_window(j, w, ow);
                let mut acc = T::zero();
                for y in y0..y1 {
                    for xx in x0..x1 {
                        acc += plane[y * w + xx];
                    }
                }
                let count = T::from_usize((y1 - y0) * (x1 - x0)).unwrap();
                out[(p * oh + i) * ow + j] = acc / count;
            }
        }
    }
    out
}

pub fn adaptive_avg_pool_backward<T: Scalar>(shape: [usize; 4], gout: &[T], oh: usize, ow: usize) -> Vec<T> {
    let [n, c, h, w] = shape;
    let mut dx = vec![T::zero(); n * c * h * w];
    for p in 0..n * c {
        let plane = &mut dx[p * h * w..(p + 1) * h * w];
        for i in 0..oh {
            let (y0, y1) = pool_window(i, h, oh);
            for j in 0..ow {
                let (x0, x1) = pool_window(j, w, ow);
                let count = T::from_usize((y1 - y0) * (x1 - x0)).unwrap();
                let g = gout[(p * oh + i) * ow + j] / count;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        plane[y * w + xx] += g;
                    }
                }
            }
        }
    }
    dx
}

/// Source index pair and weight of the upper neighbour for half-pixel-center
/// bilinear sampling along one axis.
fn bilinear_taps(input: usize, output: usize) -> Vec<(usize, usize, f64)> {
    let scale = input as f64 / output as f64;
    (0..output)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(input - 1);
            let i1 = (i0 + 1).min(input - 1);
            (i0, i1, src - i0 as f64)
        })
        .collect()
}

pub fn upsample_shape(input: &[usize], oh: usize, ow: usize, op: &'static str) -> Result<[usize; 4]> {
    let [n, c, h, w] = nchw(input, op)?;
    if oh < h || ow < w {
        return invalid(op, format!("output {oh}x{ow} smaller than input {h}x{w}"));
    }
    Ok([n, c, oh, ow])
}

pub fn upsample_bilinear_forward<T: Scalar>(shape: [usize; 4], x: &[T], oh: usize, ow: usize) -> Vec<T> {
    let [n, c, h, w] = shape;
    let ys = bilinear_taps(h, oh);
    let xs = bilinear_taps(w, ow);
    let mut out = vec![T::zero(); n * c * oh * ow];
    for p in 0..n * c {
        let plane = &x[p * h * w..(p + 1) * h * w];
        for (i, &(y0, y1, fy)) in ys.iter().enumerate() {
            let fy = T::from_f64_lossy(fy);
            for (j, &(x0, x1, fx)) in xs.iter().enumerate() {
                let fx = T::from_f64_lossy(fx);
                let top = plane[y0 * w + x0] * (T::one() - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (T::one() - fx) + plane[y1 * w + x1] * fx;
                out[(p * oh + i) * ow + j] = top * (T::one() - fy) + bot * fy;
            }
        }
    }
    out
}

pub fn upsample_bilinear_backward<T: Scalar>(shape: [usize; 4], gout: &[T], oh: usize, ow: usize) -> Vec<T> {
    let [n, c, h, w] = shape;
    let ys = bilinear_taps(h, oh);
    let xs = bilinear_taps(w, ow);
    let mut dx = vec![T::zero(); n * c * h * w];
    for p in 0..n * c {
        let plane = &mut dx[p * h * w..(p + 1) * h * w];
        for (i, &(y0, y1, fy)) in ys.iter().enumerate() {
            let fy = T::from_f64_lossy(fy);
            for (j, &(x0, x1, fx)) in xs.iter().enumerate() {
                let fx = T::from_f64_lossy(fx);
                let g = gout[(p * oh + i) * ow + j];
                let gt = g * (T::one() - fy);
                let gb = g * fy;
                plane[y0 * w + x0] += gt * (T::one() - fx);
                plane[y0 * w + x1] += gt * fx;
                plane[y1 * w + x0] += gb * (T::one() - fx);
                plane[y1 * w + x1] += gb * fx;
            }
        }
    }
    dx
}

pub fn upsample_nearest_forward<T: Scalar>(shape: [usize; 4], x: &[T], factor: usize) -> Vec<T> {
    let [n, c, h, w] = shape;
    let (oh, ow) = (h * factor, w * factor);
    let mut out = vec![T::zero(); n * c * oh * ow];
    for p in 0..n * c {
        let plane = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                dst[i * ow + j] = plane[(i / factor) * w + j / factor];
            }
        }
    }
    out
}

pub fn upsample_nearest_backward<T: Scalar>(shape: [usize; 4], gout: &[T], factor: usize) -> Vec<T> {
    let [n, c, h, w] = shape;
    let (oh, ow) = (h * factor, w * factor);
    let mut dx = vec![T::zero(); n * c * h * w];
    for p in 0..n * c {
        let plane = &mut dx[p * h * w..(p + 1) * h * w];
        let src = &gout[p * oh * ow..(p + 1) * oh * ow];
        for i in 0..oh {
            for j in 0..ow {
                plane[(i / factor) * w + j / factor] += src[i * ow + j];
            }
        }
    }
    dx
}

/// Decompose `shape` around `axis` into `(outer, len, inner)` extents.
pub fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn softmax_forward<T: Scalar>(shape: &[usize], axis: usize, x: &[T]) -> Vec<T> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut out = vec![T::zero(); x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let mut max = T::neg_infinity();
            for k in 0..len {
                max = max.max(x[at(k)]);
            }
            let mut total = T::zero();
            for k in 0..len {
                let e = (x[at(k)] - max).exp();
                out[at(k)] = e;
                total += e;
            }
            for k in 0..len {
                out[at(k)] /= total;
            }
        }
    }
    out
}

pub fn softmax_backward<T: Scalar>(shape: &[usize], axis: usize, y: &[T], gout: &[T]) -> Vec<T> {
    let (outer, len, inner) = axis_split(shape, axis);
    let mut dx = vec![T::zero(); y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |k: usize| (o * len + k) * inner + i;
            let mut dot = T::zero();
            for k in 0..len {
                dot += gout[at(k)] * y[at(k)];
            }
            for k in 0..len {
                dx[at(k)] = y[at(k)] * (gout[at(k)] - dot);
            }
        }
    }
    dx
}

/// Row-wise log-softmax over the entries where `mask` is set; masked-out
/// entries produce 0. Rows are the leading axis of a `[rows × cols]` matrix.
pub fn masked_log_softmax_forward<T: Scalar>(rows: usize, cols: usize, x: &[T], mask: &[bool]) -> Vec<T> {
    let mut out = vec![T::zero(); rows * cols];
    for r in 0..rows {
        let xr = &x[r * cols..(r + 1) * cols];
        let mr = &mask[r * cols..(r + 1) * cols];
        let mut max = T::neg_infinity();
        for (&v, &m) in xr.iter().zip(mr) {
            if m {
                max = max.max(v);
            }
        }
        if max == T::neg_infinity() {
            continue;
        }
        let mut total = T::zero();
        for (&v, &m) in xr.iter().zip(mr) {
            if m {
                total += (v - max).exp();
            }
        }
        let lse = max + total.ln();
        for c in 0..cols {
            if mr[c] {
                out[r * cols + c] = xr[c] - lse;
            }
        }
    }
    out
}

pub fn masked_log_softmax_backward<T: Scalar>(
    rows: usize,
    cols: usize,
    y: &[T],
    mask: &[bool],
    gout: &[T],
) -> Vec<T> {
    let mut dx = vec![T::zero(); rows * cols];
    for r in 0..rows {
        let range = r * cols..(r + 1) * cols;
        let (yr, mr, gr) = (&y[range.clone()], &mask[range.clone()], &gout[range]);
        let mut gsum = T::zero();
        for (&g, &m) in gr.iter().zip(mr) {
            if m {
                gsum += g;
            }
        }
        for c in 0..cols {
            if mr[c] {
                dx[r * cols + c] = gr[c] - yr[c].exp() * gsum;
            }
        }
    }
    dx
}

/// Geometry check for patch attention: both maps NCHW with identical shape
/// and `patch` dividing both spatial extents.
pub fn lsa_shape(query: &[usize], kv: &[usize], patch: usize) -> Result<[usize; 4]> {
    let q = nchw(query, "lsa_attention")?;
    if query != kv {
        return shape_err(
            "lsa_attention",
            format!("query {query:?} and key/value {kv:?} differ"),
        );
    }
    if patch == 0 || q[2] % patch != 0 || q[3] % patch != 0 {
        return invalid(
            "lsa_attention",
            format!("patch size {patch} does not divide spatial extent {}x{}", q[2], q[3]),
        );
    }
    Ok(q)
}

/// For every channel and position: `β = Σ_j softmax(α·Z)_j · Z_j` where `α`
/// is the query value and `Z` the aligned non-overlapping `P×P` patch of the
/// key/value map.
pub fn lsa_forward<T: Scalar>(shape: [usize; 4], query: &[T], kv: &[T], patch: usize) -> Vec<T> {
    let [n, c, h, w] = shape;
    let mut out = vec![T::zero(); query.len()];
    let mut weights = vec![T::zero(); patch * patch];
    for p in 0..n * c {
        let q = &query[p * h * w..(p + 1) * h * w];
        let z = &kv[p * h * w..(p + 1) * h * w];
        for y in 0..h {
            for x in 0..w {
                let alpha = q[y * w + x];
                out[p * h * w + y * w + x] = lsa_cell(z, w, patch, y, x, alpha, &mut weights);
            }
        }
    }
    out
}

fn patch_origin(y: usize, x: usize, patch: usize) -> (usize, usize) {
    ((y / patch) * patch, (x / patch) * patch)
}

/// Attention output at one position; leaves the softmax weights in `weights`.
fn lsa_cell<T: Scalar>(z: &[T], w: usize, patch: usize, y: usize, x: usize, alpha: T, weights: &mut [T]) -> T {
    let (py, px) = patch_origin(y, x, patch);
    let mut max = T::neg_infinity();
    for a in 0..patch {
        for b in 0..patch {
            max = max.max(alpha * z[(py + a) * w + px + b]);
        }
    }
    let mut total = T::zero();
    for a in 0..patch {
        for b in 0..patch {
            let e = (alpha * z[(py + a) * w + px + b] - max).exp();
            weights[a * patch + b] = e;
            total += e;
        }
    }
    let mut beta = T::zero();
    for a in 0..patch {
        for b in 0..patch {
            weights[a * patch + b] /= total;
            beta += weights[a * patch + b] * z[(py + a) * w + px + b];
        }
    }
    beta
}

/// Returns `(d_query, d_kv)`.
pub fn lsa_backward<T: Scalar>(
    shape: [usize; 4],
    query: &[T],
    kv: &[T],
    patch: usize,
    gout: &[T],
) -> (Vec<T>, Vec<T>) {
    let [n, c, h, w] = shape;
    let mut dq = vec![T::zero(); query.len()];
    let mut dkv = vec![T::zero(); kv.len()];
    let mut weights = vec![T::zero(); patch * patch];
    for p in 0..n * c {
        let base = p * h * w;
        let q = &query[base..base + h * w];
        let z = &kv[base..base + h * w];
        for y in 0..h {
            for x in 0..w {
                let g = gout[base + y * w + x];
                if g == T::zero() {
                    continue;
                }
                let alpha = q[y * w + x];
                let beta = lsa_cell(z, w, patch, y, x, alpha, &mut weights);
                let (py, px) = patch_origin(y, x, patch);
                let mut dalpha = T::zero();
                for a in 0..patch {
                    for b in 0..patch {
                        let idx = (py + a) * w + px + b;
                        let wt = weights[a * patch + b];
                        let centred = z[idx] - beta;
                        dalpha += wt * z[idx] * centred;
                        dkv[base + idx] += g * (wt + alpha * wt * centred);
                    }
                }
                dq[base + y * w + x] = g * dalpha;
            }
        }
    }
    (dq, dkv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]; // 2×3
        let b = [7.0, 8.0, 9.0, 10.0, 11.0, 12.0]; // 3×2
        let mut c = [0.0; 4];
        gemm_nn(2, 3, 2, &a, &b, &mut c);
        assert_eq!(c, [58.0, 64.0, 139.0, 154.0]);
        let mut c2 = [0.0; 4];
        gemm_tn(2, 3, 2, &transpose(2, 3, &a), &b, &mut c2);
        assert_eq!(c2, c);
        let mut c3 = [0.0; 4];
        gemm_nt(2, 3, 2, &a, &transpose(3, 2, &b), &mut c3);
        assert_eq!(c3, c);
    }

    #[test]
    fn conv_geometry_rejects_mismatch() {
        assert!(ConvGeom::new(&[1, 2, 4, 4], &[3, 3, 3, 3], 1, 1).is_err());
        let g = ConvGeom::new(&[1, 2, 4, 4], &[3, 2, 3, 3], 2, 1).unwrap();
        assert_eq!(g.out_shape(), [1, 3, 2, 2]);
    }

    #[test]
    fn masked_log_softmax_ignores_masked_entries() {
        let x = [1.0, 50.0, 1.0];
        let mask = [true, false, true];
        let y = masked_log_softmax_forward(1, 3, &x, &mask);
        assert!((y[0] - 0.5f64.ln()).abs() < 1e-15);
        assert!((y[2] - 0.5f64.ln()).abs() < 1e-15);
    }
}
