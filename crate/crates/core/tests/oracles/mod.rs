//! Independent reference computations shared by the integration tests and
//! the acceptance harness. Nothing here calls into the library's numeric
//! code.
#![allow(dead_code)]

use std::f64::consts::PI;

pub const FS: f64 = 100.0;

/// Direct DFT of a Hann-tapered 100-sample window; returns the one-sided
/// density for 0..=50 Hz at 1 Hz spacing.
pub fn dft_density(window: &[f64]) -> Vec<f64> {
    let n = window.len();
    let w: Vec<f64> = (0..n).map(|i| (PI * i as f64 / n as f64).sin().powi(2)).collect();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    (0..=n / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, x) in window.iter().enumerate() {
                let a = -2.0 * PI * (k * i % n) as f64 / n as f64;
                re += x * w[i] * a.cos();
                im += x * w[i] * a.sin();
            }
            let p = (re * re + im * im) / (FS * s2);
            if k == 0 || k == n / 2 {
                p
            } else {
                2.0 * p
            }
        })
        .collect()
}

/// Inclusive 1-Hz bin ranges of delta, theta, alpha and beta for a 1-s
/// window: edges at 4, 8 and 13 Hz go to the lower band, 0 Hz is below
/// delta.
pub const BAND_BINS: [(usize, usize); 4] = [(1, 4), (5, 8), (9, 13), (14, 30)];

pub fn trapezoid(density: &[f64], lo: usize, hi: usize) -> f64 {
    let mut acc = 0.0;
    for k in lo..hi {
        acc += 0.5 * (density[k] + density[k + 1]);
    }
    acc
}

pub fn db(p: f64) -> f64 {
    let v = 10.0 * (p + 1e-10).log10();
    if v < -100.0 {
        -100.0
    } else {
        v
    }
}

pub fn band_db(window: &[f64]) -> [f64; 4] {
    let d = dft_density(window);
    BAND_BINS.map(|(lo, hi)| db(trapezoid(&d, lo, hi)))
}

pub fn mav(window: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in window {
        acc += if *v < 0.0 { -v } else { *v };
    }
    acc / window.len() as f64
}

/// Geometric-mean form: the product of per-token inverse probabilities,
/// each raised to 1/T.
pub fn perplexity(lp: &[f64]) -> f64 {
    let t = lp.len() as f64;
    lp.iter().fold(1.0, |acc, l| acc * (-l / t).exp())
}

pub struct BruteMetrics {
    pub accuracy: f64,
    pub f1: [f64; 5],
    pub macro_f1: f64,
    pub kappa: f64,
    pub confusion: [[u64; 5]; 5],
}

/// Labels are stage indices 0..5.
pub fn brute_metrics(truth: &[usize], pred: &[usize]) -> BruteMetrics {
    let n = truth.len() as f64;
    let mut confusion = [[0u64; 5]; 5];
    for t in 0..5 {
        for p in 0..5 {
            confusion[t][p] = truth.iter().zip(pred).filter(|(a, b)| **a == t && **b == p).count() as u64;
        }
    }
    let correct = truth.iter().zip(pred).filter(|(a, b)| a == b).count() as f64;
    let mut f1 = [0.0; 5];
    for c in 0..5 {
        let tp = truth.iter().zip(pred).filter(|(a, b)| **a == c && **b == c).count() as f64;
        let fp = truth.iter().zip(pred).filter(|(a, b)| **a != c && **b == c).count() as f64;
        let fneg = truth.iter().zip(pred).filter(|(a, b)| **a == c && **b != c).count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        f1[c] = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    }
    // chance agreement as the probability two independent draws agree
    let mut pe = 0.0;
    for c in 0..5 {
        let a = truth.iter().filter(|v| **v == c).count() as f64 / n;
        let b = pred.iter().filter(|v| **v == c).count() as f64 / n;
        pe += a * b;
    }
    let po = correct / n;
    let kappa = if (1.0 - pe).abs() < 1e-15 { 0.0 } else { (po - pe) / (1.0 - pe) };
    BruteMetrics { accuracy: po, f1, macro_f1: f1.iter().sum::<f64>() / 5.0, kappa, confusion }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
