//! Synthetic ridge-like textures for desk-scale experiments.
//!
//! Each subject is an oriented sinusoidal ridge pattern with its own
//! period, angle and a quadratic phase term that bends the ridges. Every
//! rendered image of a subject applies a fresh random shift, small rotation,
//! contrast change and additive noise.

use std::f64::consts::PI;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::imageio::GrayImage;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RidgePattern {
    /// Ridge normal direction, radians.
    pub angle: f64,
    /// Ridge period in pixels.
    pub period: f64,
    /// Quadratic phase coefficient; bends otherwise straight ridges.
    pub curvature: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jitter {
    /// Maximum shift in pixels along each axis.
    pub shift: f64,
    /// Maximum rotation in radians.
    pub rotation: f64,
    /// Standard deviation of additive noise.
    pub noise: f64,
}

impl Default for Jitter {
    fn default() -> Self {
        Self {
            shift: 8.0,
            rotation: 4f64.to_radians(),
            noise: 0.05,
        }
    }
}

impl RidgePattern {
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        Self {
            angle: rng.random_range(0.0..PI),
            period: rng.random_range(4.0..9.0),
            curvature: rng.random_range(-0.004..0.004),
        }
    }

    pub fn render<R: Rng>(&self, width: usize, height: usize, jitter: &Jitter, rng: &mut R) -> GrayImage {
        let dx = rng.random_range(-jitter.shift..=jitter.shift);
        let dy = rng.random_range(-jitter.shift..=jitter.shift);
        let rot = rng.random_range(-jitter.rotation..=jitter.rotation);
        let contrast = rng.random_range(0.75..1.0);
        let (c, s) = ((self.angle + rot).cos(), (self.angle + rot).sin());
        let (cx, cy) = (width as f64 / 2.0 + dx, height as f64 / 2.0 + dy);
        let k = 2.0 * PI / self.period;
        let pixels = (0..width * height)
            .map(|i| {
                let x = (i % width) as f64 - cx;
                let y = (i / width) as f64 - cy;
                let u = x * c + y * s;
                let v = -x * s + y * c;
                let phase = k * u + self.curvature * (u * u + v * v);
                let noise = jitter.noise * gaussian(rng);
                (0.5 + 0.45 * contrast * phase.sin() + noise).clamp(0.0, 1.0)
            })
            .collect();
        GrayImage::new(width, height, pixels).expect("dimensions are consistent")
    }
}

fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    // Box-Muller
    let u1: f64 = rng.random_range(f64::EPSILON..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

/// `subjects x per_subject` images as `(image, subject)` pairs, subject-major.
pub fn dataset(subjects: usize, per_subject: usize, width: usize, height: usize, seed: u64) -> Vec<(GrayImage, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Jitter::default();
    let patterns: Vec<RidgePattern> = (0..subjects).map(|_| RidgePattern::random(&mut rng)).collect();
    let mut out = Vec::with_capacity(subjects * per_subject);
    for (s, p) in patterns.iter().enumerate() {
        for _ in 0..per_subject {
            out.push((p.render(width, height, &jitter, &mut rng), s));
        }
    }
    out
}
