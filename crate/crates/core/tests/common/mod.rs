//! Brute-force oracles shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use accrit::curve::SampledCurve;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Shortest-path closure of random weights: a valid finite metric.
pub fn random_table(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let w = rng.random_range(0.1..3.0);
            m[i][j] = w;
            m[j][i] = w;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if m[i][k] + m[k][j] < m[i][j] {
                    m[i][j] = m[i][k] + m[k][j];
                }
            }
        }
    }
    m
}

pub fn feasible(m: &[Vec<f64>], support: &[usize], values: &[f64], x: usize, v: f64, l: f64) -> bool {
    support.iter().zip(values).all(|(&s, &h)| (h - v).abs() <= l * m[s][x] + 1e-12)
}

/// Largest value at `x` keeping the extended function L-Lipschitz, by
/// bisection on pairwise feasibility alone.
pub fn max_feasible(m: &[Vec<f64>], support: &[usize], values: &[f64], x: usize, l: f64) -> f64 {
    // the worst violation is convex in v; its minimizer is feasible
    let worst = |v: f64| support.iter().zip(values).map(|(&s, &h)| (h - v).abs() - l * m[s][x]).fold(f64::MIN, f64::max);
    let (mut a, mut b) = (-1e4, 1e4);
    for _ in 0..300 {
        let (p, q) = (a + (b - a) / 3.0, b - (b - a) / 3.0);
        if worst(p) <= worst(q) {
            b = q;
        } else {
            a = p;
        }
    }
    let mut lo = 0.5 * (a + b);
    if let Some(i) = support.iter().position(|&s| s == x) {
        lo = values[i];
    }
    assert!(feasible(m, support, values, x, lo, l));
    let mut hi = lo + l * 1e3;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if feasible(m, support, values, x, mid, l) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Best Σ ρ over all families of disjoint grid intervals with total length
/// below `delta`, by exhaustive search over arbitrary endpoints.
pub fn brute_modulus(curve: &SampledCurve, delta: f64) -> f64 {
    fn go(curve: &SampledCurve, from: usize, len: f64, delta: f64) -> f64 {
        let mut best = 0.0f64;
        for i in from..curve.len() {
            for j in (i + 1)..curve.len() {
                let w = curve.param(j) - curve.param(i);
                if len + w < delta - 1e-12 {
                    best = best.max(curve.gap(i, j) + go(curve, j, len + w, delta));
                }
            }
        }
        best
    }
    go(curve, 0, 0.0, delta)
}
