//! Image-level perturbations with five severity levels each.
//!
//! | kind            | severity 1..5                              |
//! |-----------------|--------------------------------------------|
//! | saturation      | chroma kept: 0.7, 0.5, 0.3, 0.15, 0.0      |
//! | contrast        | contrast kept: 0.8, 0.65, 0.5, 0.35, 0.2   |
//! | blockwise       | grid cells replaced: 4, 8, 16, 24, 32      |
//! | gaussian_noise  | σ: 0.02, 0.04, 0.06, 0.08, 0.10            |
//! | blur            | Gaussian σ (px): 0.5, 1.0, 1.5, 2.0, 2.5   |
//! | pixelation      | block side (px): 2, 3, 4, 6, 8             |
//!
//! Random patterns (noise, block placement) come from fixed seeds, so a
//! perturbation is a pure function of `(image, spec)`. Higher severities of
//! blockwise and noise reuse the lower-severity pattern.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{DataError, Result};
use crate::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PerturbationKind {
    Saturation,
    Contrast,
    Blockwise,
    GaussianNoise,
    Blur,
    Pixelation,
}

impl PerturbationKind {
    pub const ALL: [PerturbationKind; 6] = [
        PerturbationKind::Saturation,
        PerturbationKind::Contrast,
        PerturbationKind::Blockwise,
        PerturbationKind::GaussianNoise,
        PerturbationKind::Blur,
        PerturbationKind::Pixelation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Saturation => "saturation",
            Self::Contrast => "contrast",
            Self::Blockwise => "blockwise",
            Self::GaussianNoise => "gaussian_noise",
            Self::Blur => "blur",
            Self::Pixelation => "pixelation",
        }
    }
}

impl fmt::Display for PerturbationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PerturbationKind {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| DataError::Unknown {
                what: "perturbation kind",
                value: s.to_string(),
            })
    }
}

pub const MAX_SEVERITY: u8 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PerturbationSpec {
    pub kind: PerturbationKind,
    pub severity: u8,
}

impl PerturbationSpec {
    pub fn new(kind: PerturbationKind, severity: u8) -> Result<Self> {
        if !(1..=MAX_SEVERITY).contains(&severity) {
            return Err(DataError::Invalid(format!("severity {severity} outside 1..={MAX_SEVERITY}")));
        }
        Ok(Self { kind, severity })
    }

    /// Every kind at every severity, kind-major.
    pub fn all() -> Vec<Self> {
        PerturbationKind::ALL
            .into_iter()
            .flat_map(|kind| (1..=MAX_SEVERITY).map(move |severity| Self { kind, severity }))
            .collect()
    }
}

const SATURATION: [f32; 5] = [0.7, 0.5, 0.3, 0.15, 0.0];
const CONTRAST: [f32; 5] = [0.8, 0.65, 0.5, 0.35, 0.2];
const BLOCKS: [usize; 5] = [4, 8, 16, 24, 32];
const NOISE_SIGMA: [f32; 5] = [0.02, 0.04, 0.06, 0.08, 0.10];
const BLUR_SIGMA: [f64; 5] = [0.5, 1.0, 1.5, 2.0, 2.5];
const PIXEL_BLOCK: [usize; 5] = [2, 3, 4, 6, 8];

fn dims(image: &Image) -> Result<(usize, usize, usize)> {
    match image.shape() {
        &[c, h, w] => Ok((c, h, w)),
        s => Err(DataError::Invalid(format!("expected a CHW image, got {s:?}"))),
    }
}

pub fn perturb(image: &Image, spec: PerturbationSpec) -> Result<Image> {
    let (c, h, w) = dims(image)?;
    if !(1..=MAX_SEVERITY).contains(&spec.severity) {
        return Err(DataError::Invalid(format!("severity {} outside 1..=5", spec.severity)));
    }
    let level = spec.severity as usize - 1;
    let out = match spec.kind {
        PerturbationKind::Saturation => saturation(image, c, h * w, SATURATION[level]),
        PerturbationKind::Contrast => contrast(image, CONTRAST[level]),
        PerturbationKind::Blockwise => blockwise(image, c, h, w, BLOCKS[level]),
        PerturbationKind::GaussianNoise => gaussian_noise(image, NOISE_SIGMA[level]),
        PerturbationKind::Blur => gaussian_blur(image, BLUR_SIGMA[level])?,
        PerturbationKind::Pixelation => pixelate(image, PIXEL_BLOCK[level])?,
    };
    Ok(out.map(|v| v.clamp(0.0, 1.0)))
}

fn saturation(image: &Image, c: usize, plane: usize, keep: f32) -> Image {
    if c != 3 {
        return image.clone();
    }
    let d = image.data();
    let mut out = d.to_vec();
    for i in 0..plane {
        let gray = 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
        for ch in 0..3 {
            out[ch * plane + i] = gray + keep * (d[ch * plane + i] - gray);
        }
    }
    Image::new(image.shape(), out).unwrap()
}

/// Scale deviations from the global mean by `keep`. For `keep ≤ 1` the
/// result stays inside `[0,1]`, so the map is exactly invertible.
pub fn contrast(image: &Image, keep: f32) -> Image {
    let mean = image.mean();
    image.map(|v| mean + keep * (v - mean))
}

fn blockwise(image: &Image, c: usize, h: usize, w: usize, blocks: usize) -> Image {
    let cell = (h.min(w) / 8).max(1);
    let (gy, gx) = (h / cell, w / cell);
    let mut rng = ChaCha8Rng::seed_from_u64(0xB10C);
    let mut cells: Vec<usize> = (0..gy * gx).collect();
    cells.shuffle(&mut rng);
    let fills: Vec<[f32; 3]> = (0..cells.len())
        .map(|_| [rng.random::<f32>(), rng.random::<f32>(), rng.random::<f32>()])
        .collect();
    let mut out = image.data().to_vec();
    for (k, &cell_idx) in cells.iter().take(blocks.min(cells.len())).enumerate() {
        let (cy, cx) = (cell_idx / gx, cell_idx % gx);
        for ch in 0..c {
            for y in cy * cell..(cy + 1) * cell {
                for x in cx * cell..(cx + 1) * cell {
                    out[(ch * h + y) * w + x] = fills[k][ch % 3];
                }
            }
        }
    }
    Image::new(image.shape(), out).unwrap()
}

fn gaussian_noise(image: &Image, sigma: f32) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(0x401CE);
    let data = image
        .data()
        .iter()
        .map(|&v| {
            let z: f32 = StandardNormal.sample(&mut rng);
            v + sigma * z
        })
        .collect();
    Image::new(image.shape(), data).unwrap()
}

/// Separable Gaussian blur with clamp-to-edge borders; `sigma ≤ 0` is the
/// identity.
pub fn gaussian_blur(image: &Image, sigma: f64) -> Result<Image> {
    let (c, h, w) = dims(image)?;
    if sigma <= 0.0 {
        return Ok(image.clone());
    }
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();

    let src = image.data();
    let mut tmp = vec![0f32; src.len()];
    let mut out = vec![0f32; src.len()];
    for ch in 0..c {
        let plane = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let xx = (x as isize + k as isize - radius).clamp(0, w as isize - 1) as usize;
                    acc += kv * src[plane + y * w + xx] as f64;
                }
                tmp[plane + y * w + x] = acc as f32;
            }
        }
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (k, &kv) in kernel.iter().enumerate() {
                    let yy = (y as isize + k as isize - radius).clamp(0, h as isize - 1) as usize;
                    acc += kv * tmp[plane + yy * w + x] as f64;
                }
                out[plane + y * w + x] = acc as f32;
            }
        }
    }
    Ok(Image::new(image.shape(), out)?)
}

/// Replace every `block×block` tile by its mean; edge tiles may be smaller.
/// `block == 1` is the identity.
pub fn pixelate(image: &Image, block: usize) -> Result<Image> {
    let (c, h, w) = dims(image)?;
    if block == 0 {
        return Err(DataError::Invalid("pixelation block must be positive".into()));
    }
    if block == 1 {
        return Ok(image.clone());
    }
    let mut out = image.data().to_vec();
    for ch in 0..c {
        for by in (0..h).step_by(block) {
            for bx in (0..w).step_by(block) {
                let (y1, x1) = ((by + block).min(h), (bx + block).min(w));
                let mut sum = 0.0f64;
                for y in by..y1 {
                    for x in bx..x1 {
                        sum += image.data()[(ch * h + y) * w + x] as f64;
                    }
                }
                let mean = (sum / ((y1 - by) * (x1 - bx)) as f64) as f32;
                for y in by..y1 {
                    for x in bx..x1 {
                        out[(ch * h + y) * w + x] = mean;
                    }
                }
            }
        }
    }
    Ok(Image::new(image.shape(), out)?)
}
