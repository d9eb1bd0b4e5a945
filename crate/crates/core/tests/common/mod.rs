//! Dense reference implementations shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Onsets `n0, n0 + p, ...` whose `np`-sample pulse lies inside `n` samples.
pub fn onsets(n: usize, np: usize, p: usize, n0: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut m = n0;
    while m + np <= n {
        out.push(m);
        m += p;
    }
    out
}

/// `x' H (H'H)^-1 H' x` by explicit normal equations.
pub fn dense_projection(x: &[f64], h: &DMatrix<f64>) -> f64 {
    let xv = DVector::from_column_slice(x);
    let b = h.transpose() * &xv;
    let g = h.transpose() * h;
    let coef = g
        .clone()
        .cholesky()
        .map(|c| c.solve(&b))
        .or_else(|| g.try_inverse().map(|gi| gi * &b))
        .expect("normal matrix is invertible");
    b.dot(&coef)
}

/// Single column: the pulse placed at every full onset.
pub fn known_shape_matrix(n: usize, pulse: &[f64], p: usize, n0: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, 1);
    for m in onsets(n, pulse.len(), p, n0) {
        for (j, s) in pulse.iter().enumerate() {
            h[(m + j, 0)] += s;
        }
    }
    h
}

/// One column per pulse sample: indicator of that sample in every full pulse.
pub fn unknown_shape_matrix(n: usize, np: usize, p: usize, n0: usize) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(n, np);
    for m in onsets(n, np, p, n0) {
        for j in 0..np {
            h[(m + j, j)] += 1.0;
        }
    }
    h
}

/// Row-major argmax, first occurrence wins.
pub fn argmax(surface: &[Vec<f64>], p_min: usize) -> (usize, usize, f64) {
    let mut best = (p_min, 0, f64::NEG_INFINITY);
    for (i, row) in surface.iter().enumerate() {
        for (n0, &c) in row.iter().enumerate() {
            if c > best.2 {
                best = (p_min + i, n0, c);
            }
        }
    }
    best
}

pub struct TinyInstance {
    pub x: Vec<f64>,
    pub pulse: Vec<f64>,
    pub p_min: usize,
    pub p_max: usize,
}

/// Random small problem: N <= 64, a nonnegative pulse of 2..=5 samples, and
/// either pure noise or a noisy train with a period inside the search range.
pub fn tiny_instance(rng: &mut ChaCha8Rng) -> TinyInstance {
    let n = rng.gen_range(32..=64);
    let np = rng.gen_range(2..=5);
    let p_min = rng.gen_range(np.max(6)..=14);
    let p_max = rng.gen_range(p_min..=p_min + 6);
    let pulse: Vec<f64> = (0..np).map(|_| rng.gen_range(0.1..1.0)).collect();
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    if rng.gen_bool(0.5) {
        let p = rng.gen_range(p_min..=p_max);
        let n0 = rng.gen_range(0..p);
        let a = rng.gen_range(0.5..3.0);
        for m in onsets(n, np, p, n0) {
            for (j, s) in pulse.iter().enumerate() {
                x[m + j] += a * s;
            }
        }
    }
    TinyInstance {
        x,
        pulse,
        p_min,
        p_max,
    }
}
