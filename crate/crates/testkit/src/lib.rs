//! Slow, loop-based reference implementations over plain `f64` slices.
//!
//! Nothing here depends on the library crates; every function is written
//! straight from the operation's definition so tests can compare against
//! it.

/// Cross-correlation of an `[n, c, h, w]` input with an `[o, c, kh, kw]`
/// kernel, zero padding. Returns the output and its shape.
pub fn conv2d(
    x: &[f64],
    xs: [usize; 4],
    k: &[f64],
    ks: [usize; 4],
    stride: usize,
    pad: usize,
) -> (Vec<f64>, [usize; 4]) {
    let [n, c, h, w] = xs;
    let [o, kc, kh, kw] = ks;
    assert_eq!(c, kc);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv = x[((b * c + ic) * h + iy as usize) * w + ix as usize];
                                let kv = k[((oc * c + ic) * kh + ky) * kw + kx];
                                acc += xv * kv;
                            }
                        }
                    }
                    out[((b * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    (out, [n, o, oh, ow])
}

/// Adaptive average pooling with windows
/// `[floor(i·H/o), ceil((i+1)·H/o))`.
pub fn adaptive_avg_pool(x: &[f64], xs: [usize; 4], oh: usize, ow: usize) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        for i in 0..oh {
            let (y0, y1) = ((i * h) / oh, ((i + 1) * h).div_ceil(oh));
            for j in 0..ow {
                let (x0, x1) = ((j * w) / ow, ((j + 1) * w).div_ceil(ow));
                let mut s = 0.0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        s += x[(plane * h + y) * w + xx];
                    }
                }
                out.push(s / ((y1 - y0) * (x1 - x0)) as f64);
            }
        }
    }
    out
}

fn bilinear_axis(o: usize, input: usize, output: usize) -> (usize, usize, f64) {
    let src = ((o as f64 + 0.5) * input as f64 / output as f64 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(input - 1);
    let i1 = (i0 + 1).min(input - 1);
    (i0, i1, src - i0 as f64)
}

/// Half-pixel-centre bilinear resize.
pub fn upsample_bilinear(x: &[f64], xs: [usize; 4], oh: usize, ow: usize) -> Vec<f64> {
    let [n, c, h, w] = xs;
    let mut out = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        for oy in 0..oh {
            let (y0, y1, fy) = bilinear_axis(oy, h, oh);
            for ox in 0..ow {
                let (x0, x1, fx) = bilinear_axis(ox, w, ow);
                let at = |y: usize, xx: usize| x[(plane * h + y) * w + xx];
                let top = at(y0, x0) * (1.0 - fx) + at(y0, x1) * fx;
                let bottom = at(y1, x0) * (1.0 - fx) + at(y1, x1) * fx;
                out.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    out
}

/// Softmax by direct exponentiation, no max shift.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Latent-space attention over `[c, h, w]` maps: for every position the
/// query value weighs the aligned non-overlapping `patch × patch` block of
/// the key/value map through a softmax, and the output is the weighted
/// mean of that block.
pub fn lsa(query: &[f64], kv: &[f64], shape: [usize; 3], patch: usize) -> Vec<f64> {
    let [c, h, w] = shape;
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..h {
            for x in 0..w {
                let alpha = query[(ch * h + y) * w + x];
                let (py, px) = (y / patch * patch, x / patch * patch);
                let mut logits = Vec::new();
                let mut values = Vec::new();
                for dy in 0..patch {
                    for dx in 0..patch {
                        let z = kv[(ch * h + py + dy) * w + px + dx];
                        logits.push(alpha * z);
                        values.push(z);
                    }
                }
                let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let weights: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
                let total: f64 = weights.iter().sum();
                out[(ch * h + y) * w + x] = weights.iter().zip(&values).map(|(a, b)| a * b).sum::<f64>() / total;
            }
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// `(1/N) Σ (1 − y)·‖x̂‖²` with `fake[i]` meaning `y_i = 1`.
pub fn loss_l1(rows: &[Vec<f64>], fake: &[bool]) -> f64 {
    let mut s = 0.0;
    for (r, &f) in rows.iter().zip(fake) {
        if !f {
            s += r.iter().map(|a| a * a).sum::<f64>();
        }
    }
    s / rows.len() as f64
}

/// `±(1/N) Σ y·max(m − ‖x̂‖, 0)²`; `negate` selects the leading minus.
pub fn loss_l2(rows: &[Vec<f64>], fake: &[bool], margin: f64, negate: bool) -> f64 {
    let mut s = 0.0;
    for (r, &f) in rows.iter().zip(fake) {
        if f {
            s += (margin - norm(r)).max(0.0).powi(2);
        }
    }
    let v = s / rows.len() as f64;
    if negate {
        -v
    } else {
        v
    }
}

/// Supervised contrastive term, summed term by term over `(i, j)` pairs
/// with the denominator recomputed from all `k ≠ i` each time.
pub fn loss_l3(rows: &[Vec<f64>], fake: &[bool], normalize: bool) -> f64 {
    let n = rows.len();
    let u: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| {
            if normalize {
                let l = norm(r);
                if l > 0.0 {
                    r.iter().map(|a| a / l).collect()
                } else {
                    r.clone()
                }
            } else {
                r.clone()
            }
        })
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    for i in 0..n {
        let positives: Vec<usize> = (0..n).filter(|&j| j != i && fake[j] == fake[i]).collect();
        if positives.is_empty() {
            continue;
        }
        let mut inner = 0.0;
        for &j in &positives {
            let mut denom = 0.0;
            for k in 0..n {
                if k != i {
                    denom += dot(&u[i], &u[k]).exp();
                }
            }
            inner += (dot(&u[i], &u[j]).exp() / denom).ln();
        }
        total += -inner / positives.len() as f64;
    }
    total / n as f64
}

/// Binary cross-entropy with probabilities clamped to `[1e-7, 1 − 1e-7]`.
pub fn loss_ce(p: &[f64], fake: &[bool]) -> f64 {
    let mut s = 0.0;
    for (&pi, &f) in p.iter().zip(fake) {
        let q = pi.clamp(1e-7, 1.0 - 1e-7);
        s += if f { q.ln() } else { (1.0 - q).ln() };
    }
    -s / p.len() as f64
}

/// All-pairs Mann–Whitney statistic.
pub fn auc(scores: &[f64], fake: &[bool]) -> f64 {
    let mut num = 0.0;
    let mut pairs = 0usize;
    for (i, &si) in scores.iter().enumerate() {
        if !fake[i] {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if fake[j] {
                continue;
            }
            pairs += 1;
            num += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    num / pairs as f64
}

/// `⌈p·n⌉`-th smallest value, 1-indexed.
pub fn order_statistic(values: &[f64], p: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let k = ((p * v.len() as f64).ceil() as usize).clamp(1, v.len());
    v[k - 1]
}

/// One Adam step on a scalar parameter with coupled weight decay.
#[allow(clippy::too_many_arguments)]
pub fn adam_scalar(
    param: f64,
    grad: f64,
    m: f64,
    v: f64,
    t: i32,
    lr: f64,
    wd: f64,
    b1: f64,
    b2: f64,
    eps: f64,
) -> (f64, f64, f64) {
    let g = grad + wd * param;
    let m = b1 * m + (1.0 - b1) * g;
    let v = b2 * v + (1.0 - b2) * g * g;
    let mh = m / (1.0 - b1.powi(t));
    let vh = v / (1.0 - b2.powi(t));
    (param - lr * mh / (vh.sqrt() + eps), m, v)
}
