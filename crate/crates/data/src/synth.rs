//! Procedural face-like images.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::domain::{Domain, LabeledSample};
use crate::Image;

/// Mix a base seed with extra words (splitmix64 finaliser per word).
pub fn derive_seed(base: u64, words: &[u64]) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for &w in words {
        h ^= w.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
    }
    h
}

/// Round to the nearest 8-bit level so PNG round-trips are lossless.
pub fn quantize(v: f32) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() / 255.0
}

/// Landmark positions of a rendered face, in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FaceGeometry {
    pub center: (f64, f64),
    pub radii: (f64, f64),
    pub left_eye: (f64, f64),
    pub right_eye: (f64, f64),
    pub eye_radius: f64,
    pub mouth: (f64, f64),
    pub mouth_radius: f64,
}

impl FaceGeometry {
    /// Nominal landmark layout for a face of the given size; actual faces
    /// jitter around it by a few pixels.
    pub fn nominal(size: usize) -> Self {
        let s = size as f64;
        Self {
            center: (0.5 * s, 0.5 * s),
            radii: (0.30 * s, 0.37 * s),
            left_eye: (0.345 * s, 0.39 * s),
            right_eye: (0.655 * s, 0.39 * s),
            eye_radius: 0.058 * s,
            mouth: (0.5 * s, 0.69 * s),
            mouth_radius: 0.125 * s,
        }
    }
}

fn smooth_cover(signed_dist: f64) -> f64 {
    (0.5 - signed_dist).clamp(0.0, 1.0)
}

fn blend(dst: &mut [f64; 3], src: [f64; 3], alpha: f64) {
    for c in 0..3 {
        dst[c] = dst[c] * (1.0 - alpha) + src[c] * alpha;
    }
}

/// Render one face-like image: background gradient, shaded elliptical face,
/// two eye blobs and a mouth arc, all with randomised geometry and colour.
pub fn render_face(rng: &mut ChaCha8Rng, size: usize) -> (Image, FaceGeometry) {
    let s = size as f64;
    let mut col = |lo: f64, hi: f64| -> [f64; 3] {
        [rng.random_range(lo..hi), rng.random_range(lo..hi), rng.random_range(lo..hi)]
    };
    let bg0 = col(0.3, 0.7);
    let bg1 = col(0.3, 0.7);
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let (dx, dy) = (angle.cos(), angle.sin());

    let jitter = 0.02 * s;
    let cx = 0.5 * s + rng.random_range(-jitter..jitter);
    let cy = 0.5 * s + rng.random_range(-jitter..jitter);
    let rx = rng.random_range(0.28..0.32) * s;
    let ry = rng.random_range(0.35..0.39) * s;
    let r = rng.random_range(0.7..0.9);
    let skin = [r, r * rng.random_range(0.62..0.85), r * rng.random_range(0.45..0.7)];

    let eye_dx = rng.random_range(0.13..0.18) * s;
    let eye_y = cy - rng.random_range(0.08..0.14) * s;
    let eye_r = rng.random_range(0.045..0.07) * s;
    let eye_col = [rng.random_range(0.02..0.25), rng.random_range(0.02..0.25), rng.random_range(0.02..0.3)];

    let mouth_y = cy + rng.random_range(0.16..0.22) * s;
    let mouth_r = rng.random_range(0.10..0.15) * s;
    let mouth_t = 0.035 * s + 0.4;
    let mouth_col = [
        rng.random_range(0.55..0.85),
        rng.random_range(0.1..0.3),
        rng.random_range(0.15..0.35),
    ];
    // The arc is the lower part of a circle centred above the mouth point.
    let arc_cy = mouth_y - mouth_r;

    let mut data = vec![0f32; 3 * size * size];
    for y in 0..size {
        for x in 0..size {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let t = (((px / s - 0.5) * dx + (py / s - 0.5) * dy) + 0.75) / 1.5;
            let mut pix = [0.0; 3];
            for c in 0..3 {
                pix[c] = bg0[c] * (1.0 - t) + bg1[c] * t;
            }

            let (ex, ey) = ((px - cx) / rx, (py - cy) / ry);
            let e = (ex * ex + ey * ey).sqrt();
            let face_cover = smooth_cover((e - 1.0) * rx.min(ry));
            if face_cover > 0.0 {
                let shade = 1.0 - 0.18 * e.min(1.0).powi(2);
                blend(&mut pix, skin.map(|v| v * shade), face_cover);
            }

            for ex in [cx - eye_dx, cx + eye_dx] {
                let d = ((px - ex).powi(2) + (py - eye_y).powi(2)).sqrt();
                let cover = smooth_cover(d - eye_r);
                if cover > 0.0 {
                    blend(&mut pix, eye_col, cover);
                }
            }

            let d = ((px - cx).powi(2) + (py - arc_cy).powi(2)).sqrt();
            if py > arc_cy + 0.45 * mouth_r {
                let cover = smooth_cover((d - mouth_r).abs() - 0.5 * mouth_t);
                if cover > 0.0 {
                    blend(&mut pix, mouth_col, cover);
                }
            }

            for c in 0..3 {
                data[(c * size + y) * size + x] = quantize(pix[c] as f32);
            }
        }
    }
    let geometry = FaceGeometry {
        center: (cx, cy),
        radii: (rx, ry),
        left_eye: (cx - eye_dx, eye_y),
        right_eye: (cx + eye_dx, eye_y),
        eye_radius: eye_r,
        mouth: (cx, mouth_y),
        mouth_radius: mouth_r,
    };
    (Image::new(&[3, size, size], data).expect("shape is consistent"), geometry)
}

/// `count` real samples, deterministic under `seed`.
pub fn generate_real(seed: u64, count: usize, size: usize) -> Vec<LabeledSample> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[i as u64]));
            let (image, _) = render_face(&mut rng, size);
            LabeledSample::new(image, Domain::Real, format!("real-{seed:016x}-{i:05}"))
        })
        .collect()
}
