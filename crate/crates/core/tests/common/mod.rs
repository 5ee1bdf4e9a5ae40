#![allow(dead_code)]

use std::io::Write;
use std::sync::{Mutex, MutexGuard};

use rand::seq::SliceRandom;

static SERIAL: Mutex<()> = Mutex::new(());

/// Runs heavy tests one at a time so wall-clock budgets are not shared.
pub fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Prints the verdict line past the harness capture, then fails the test
/// on `FAIL`.
pub fn verdict(criterion: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {criterion:>2} {name}: {} ({detail})\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {criterion} {name} failed: {detail}");
}

/// `Σ_{i<j} |z_i − z_j|` of a sorted slice.
fn pair_sum(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    sorted.iter().enumerate().map(|(k, z)| z * (2.0 * k as f64 - n + 1.0)).sum()
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Energy distance `2E|X−Y| − E|X−X′| − E|Y−Y′|` between two scalar samples.
pub fn energy_distance(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let (sx, sy) = (pair_sum(&sorted(x)), pair_sum(&sorted(y)));
    let cross = pair_sum(&sorted(&pooled)) - sx - sy;
    let (n, m) = (x.len() as f64, y.len() as f64);
    2.0 * cross / (n * m) - 2.0 * sx / (n * n) - 2.0 * sy / (m * m)
}

/// Permutation p-value of the energy statistic `nm/(n+m)·E`.
pub fn energy_test(x: &[f64], y: &[f64], permutations: usize, seed: u64) -> (f64, f64) {
    let (n, m) = (x.len(), y.len());
    let scale = (n * m) as f64 / (n + m) as f64;
    let observed = scale * energy_distance(x, y);
    let mut pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let mut rng = wavelat::rng::rng(seed);
    let mut exceed = 0usize;
    for _ in 0..permutations {
        pooled.shuffle(&mut rng);
        if scale * energy_distance(&pooled[..n], &pooled[n..]) >= observed {
            exceed += 1;
        }
    }
    (observed, (exceed + 1) as f64 / (permutations + 1) as f64)
}

/// Sample mean and unbiased variance.
pub fn moments(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (mean, v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn energy_distance_matches_brute_force() {
    let x = [0.3, -1.2, 2.0, 0.7];
    let y = [1.1, -0.4, 0.0];
    let mean_abs = |a: &[f64], b: &[f64]| {
        a.iter().flat_map(|p| b.iter().map(move |q| (p - q).abs())).sum::<f64>() / (a.len() * b.len()) as f64
    };
    let brute = 2.0 * mean_abs(&x, &y) - mean_abs(&x, &x) - mean_abs(&y, &y);
    assert!((energy_distance(&x, &y) - brute).abs() < 1e-12);
}
