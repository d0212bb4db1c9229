use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Random mixture of 1-5 tones between 1 and 100 Hz plus white noise.
pub fn random_signal(rng: &mut ChaCha8Rng, n: usize, fs: f64) -> Vec<f64> {
    let k = rng.random_range(1..=5);
    let tones: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| (rng.random_range(1.0..100.0), rng.random_range(0.5..20.0), rng.random_range(0.0..2.0 * PI)))
        .collect();
    let noise = rng.random_range(0.05..2.0);
    (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let s: f64 = tones.iter().map(|(f, a, p)| a * (2.0 * PI * f * t + p).sin()).sum();
            let z: f64 = StandardNormal.sample(rng);
            s + noise * z + 3.0
        })
        .collect()
}

pub fn variance(x: &[f64]) -> f64 {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64
}
