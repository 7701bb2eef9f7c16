//! Seeded fixtures shared by the pipeline benchmarks.

use fpscat_core::synth::{Jitter, RidgePattern};
use fpscat_core::GrayImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ridge_image(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RidgePattern::random(&mut rng).render(width, height, &Jitter::default(), &mut rng)
}

/// `classes x per_class` vectors scattered around random class centers.
pub fn clustered(classes: usize, per_class: usize, dim: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let mut xs = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (c, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            xs.push(center.iter().map(|v| v + rng.random_range(-0.3..0.3)).collect());
            labels.push(c);
        }
    }
    (xs, labels)
}
