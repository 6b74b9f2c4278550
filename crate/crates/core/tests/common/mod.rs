#![allow(dead_code)]

use ismtrace::psychophysics::PsychoModel;
use ismtrace::signal::Waveform;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const RATE: f64 = 5000.0;

pub fn tone(freq: f64, amp: f64, seconds: f64) -> Waveform<f64> {
    let n = (seconds * RATE).round() as usize;
    Waveform::from_fn(n, RATE, |t| amp * (std::f64::consts::TAU * freq * t).sin()).unwrap()
}

pub fn two_tone(seconds: f64) -> Waveform<f64> {
    let n = (seconds * RATE).round() as usize;
    Waveform::from_fn(n, RATE, |t| {
        (std::f64::consts::TAU * 50.0 * t).sin() + 0.5 * (std::f64::consts::TAU * 400.0 * t).sin()
    })
    .unwrap()
}

/// Gaussian noise whose envelope follows a slow speed ramp.
pub fn speed_modulated_noise(seconds: f64, seed: u64) -> Waveform<f64> {
    let n = (seconds * RATE).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / RATE;
            let speed = 0.5 + 0.5 * (std::f64::consts::TAU * 0.7 * t).sin().abs();
            speed * normal.sample(&mut rng)
        })
        .collect();
    Waveform::new(samples, RATE).unwrap()
}

/// Thresholds chosen so the fixtures land on round numbers.
pub fn test_model() -> PsychoModel<f64> {
    PsychoModel::with_constant_exponent(
        vec![(50.0, 10.0), (100.0, 2.0), (200.0, 0.5), (400.0, 1.0), (800.0, 4.0)],
        0.5,
    )
    .unwrap()
}

pub fn relative_l2(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    if den == 0.0 {
        num.sqrt()
    } else {
        (num / den).sqrt()
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    assert!(!v.is_empty());
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = v.len() / 2;
    if v.len().is_multiple_of(2) {
        (v[m - 1] + v[m]) / 2.0
    } else {
        v[m]
    }
}
