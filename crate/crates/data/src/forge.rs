//! Forgery families applied to real samples.
//!
//! Each family edits one square region and leaves every pixel outside it
//! untouched. `spliceA` and `blurB` target a facial landmark (an eye, the
//! nose bridge or the mouth); `noiseC` and `colorD` may land anywhere.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::domain::{Domain, LabeledSample};
use crate::error::{DataError, Result};
use crate::perturb::gaussian_blur;
use crate::synth::{derive_seed, quantize, render_face, FaceGeometry};
use crate::Image;

/// Per-family strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct ForgeryStrengths {
    /// Blur σ in pixels for `blurB`.
    pub blur_sigma: f64,
    /// Standard deviation of the white noise for `noiseC`.
    pub noise_amplitude: f64,
    /// `colorD` hue rotation, as a fraction of a full turn; the brightness
    /// offset is at most half of it.
    pub color_shift: f64,
    /// Region side as a fraction of the image side, sampled in
    /// `[region_min, region_max]`.
    pub region_min: f64,
    pub region_max: f64,
}

impl Default for ForgeryStrengths {
    fn default() -> Self {
        Self {
            blur_sigma: 2.0,
            noise_amplitude: 0.3,
            color_shift: 0.3,
            region_min: 0.3,
            region_max: 0.45,
        }
    }
}

impl ForgeryStrengths {
    pub fn validate(&self) -> Result<()> {
        let ok = self.blur_sigma >= 0.0
            && self.noise_amplitude >= 0.0
            && self.color_shift >= 0.0
            && self.region_min > 0.0
            && self.region_min <= self.region_max
            && self.region_max <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(DataError::Invalid(format!("bad forgery strengths {self:?}")))
        }
    }
}

/// Half-open pixel rectangle `[y0, y1) × [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Region {
    pub y0: usize,
    pub y1: usize,
    pub x0: usize,
    pub x1: usize,
}

impl Region {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y1).contains(&y) && (self.x0..self.x1).contains(&x)
    }

    pub fn area(&self) -> usize {
        (self.y1 - self.y0) * (self.x1 - self.x0)
    }
}

fn pick_region(rng: &mut ChaCha8Rng, size: usize, s: &ForgeryStrengths) -> Region {
    let side = ((rng.random_range(s.region_min..=s.region_max) * size as f64).round() as usize).clamp(1, size);
    pick_region_with_side(rng, size, side)
}

/// A square anywhere in the image, not tied to a landmark.
fn pick_free_region(rng: &mut ChaCha8Rng, size: usize, s: &ForgeryStrengths) -> Region {
    let side = ((rng.random_range(s.region_min..=s.region_max) * size as f64).round() as usize).clamp(1, size);
    let y0 = rng.random_range(0..=size - side);
    let x0 = rng.random_range(0..=size - side);
    Region {
        y0,
        y1: y0 + side,
        x0,
        x1: x0 + side,
    }
}

fn pick_region_with_side(rng: &mut ChaCha8Rng, size: usize, side: usize) -> Region {
    let g = FaceGeometry::nominal(size);
    let nose = (g.center.0, 0.5 * (g.left_eye.1 + g.mouth.1));
    let anchors = [g.left_eye, g.right_eye, nose, g.mouth];
    let (ax, ay) = anchors[rng.random_range(0..anchors.len())];
    let jitter = 0.04 * size as f64;
    let place = |centre: f64, rng: &mut ChaCha8Rng| -> usize {
        let c = centre + rng.random_range(-jitter..=jitter);
        ((c - side as f64 / 2.0).round().max(0.0) as usize).min(size - side)
    };
    let x0 = place(ax, rng);
    let y0 = place(ay, rng);
    Region {
        y0,
        y1: y0 + side,
        x0,
        x1: x0 + side,
    }
}

/// Rotation by `angle` radians about the grey axis of RGB space.
fn hue_rotation(angle: f64) -> [[f64; 3]; 3] {
    let (sin, cos) = angle.sin_cos();
    let a = (1.0 - cos) / 3.0;
    let b = (1.0f64 / 3.0).sqrt() * sin;
    [
        [cos + a, a - b, a + b],
        [a + b, cos + a, a - b],
        [a - b, a + b, cos + a],
    ]
}

/// Forge `sample` into `domain`, returning the fake sample and the edited
/// region. Deterministic under `seed`.
pub fn forge_with_region(
    sample: &LabeledSample,
    domain: Domain,
    seed: u64,
    strengths: &ForgeryStrengths,
) -> Result<(LabeledSample, Region)> {
    if domain == Domain::Real {
        return Err(DataError::Invalid("cannot forge into the real domain".into()));
    }
    if sample.domain != Domain::Real {
        return Err(DataError::Invalid(format!("source sample {} is not real", sample.id)));
    }
    let (c, h, w) = match sample.image.shape() {
        &[c, h, w] if h == w => (c, h, w),
        s => return Err(DataError::Invalid(format!("expected a square CHW image, got {s:?}"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[domain as u64]));
    let region = match domain {
        Domain::SpliceA | Domain::BlurB => pick_region(&mut rng, h, strengths),
        _ => pick_free_region(&mut rng, h, strengths),
    };
    let src = sample.image.data();
    let mut out = src.to_vec();
    let mut edit = |f: &mut dyn FnMut(usize, usize, usize) -> f32| {
        for ch in 0..c {
            for y in region.y0..region.y1 {
                for x in region.x0..region.x1 {
                    let i = (ch * h + y) * w + x;
                    out[i] = quantize(f(ch, y, x));
                }
            }
        }
    };

    match domain {
        Domain::SpliceA => {
            let mut donor_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0x5911CE]));
            let (donor, _) = render_face(&mut donor_rng, h);
            // The donor patch comes from its own landmark, so the paste is
            // generally misaligned with the face underneath.
            let from = pick_region_with_side(&mut donor_rng, h, region.y1 - region.y0);
            let d = donor.data();
            edit(&mut |ch, y, x| d[(ch * h + y - region.y0 + from.y0) * w + x - region.x0 + from.x0]);
        }
        Domain::BlurB => {
            let blurred = gaussian_blur(&sample.image, strengths.blur_sigma)?;
            let b = blurred.data();
            edit(&mut |ch, y, x| b[(ch * h + y) * w + x]);
        }
        Domain::NoiseC => {
            let amp = strengths.noise_amplitude;
            if amp > 0.0 {
                let normal = Normal::new(0.0, amp).map_err(|e| DataError::Invalid(e.to_string()))?;
                edit(&mut |ch, y, x| src[(ch * h + y) * w + x] + normal.sample(&mut rng) as f32);
            }
        }
        Domain::ColorD => {
            let shift = strengths.color_shift;
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            let angle = sign * shift * std::f64::consts::TAU * rng.random_range(0.5..1.0);
            let brightness = 0.5 * shift * rng.random_range(-1.0..=1.0);
            let m = hue_rotation(angle);
            let at = |ch: usize, y: usize, x: usize| src[(ch * h + y) * w + x] as f64;
            if c == 3 {
                edit(&mut |ch, y, x| {
                    let rgb = [at(0, y, x), at(1, y, x), at(2, y, x)];
                    let v: f64 = (0..3).map(|k| m[ch][k] * rgb[k]).sum();
                    (v + brightness) as f32
                });
            } else {
                edit(&mut |ch, y, x| (at(ch, y, x) + brightness) as f32);
            }
        }
        Domain::Real => unreachable!(),
    }

    let image = Image::new(sample.image.shape(), out)?;
    let id = format!("{}-{}", sample.id, domain.name());
    Ok((LabeledSample::new(image, domain, id), region))
}

pub fn forge(sample: &LabeledSample, domain: Domain, seed: u64, strengths: &ForgeryStrengths) -> Result<LabeledSample> {
    forge_with_region(sample, domain, seed, strengths).map(|(s, _)| s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regions_fit_inside_the_image() {
        let s = ForgeryStrengths::default();
        for seed in 0..200 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for r in [pick_region(&mut rng, 32, &s), pick_free_region(&mut rng, 32, &s)] {
                assert!(r.y0 < r.y1 && r.y1 <= 32 && r.x0 < r.x1 && r.x1 <= 32, "{r:?}");
                assert_eq!(r.y1 - r.y0, r.x1 - r.x0);
            }
        }
    }

    #[test]
    fn hue_rotation_fixes_grey() {
        let m = hue_rotation(1.0);
        for row in m {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
