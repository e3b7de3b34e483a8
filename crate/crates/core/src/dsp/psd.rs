//! One-sided power spectral density of a single Hann-tapered segment.

use rustfft::{num_complex::Complex64, FftPlanner};
use std::cell::RefCell;
use std::f64::consts::PI;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Periodic Hann window of length `n`, as used for spectral estimation.
pub fn hann_window(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

/// Density-scaled one-sided spectrum (μV²/Hz for μV input).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin spacing in Hz.
    pub df: f64,
    pub density: Vec<f64>,
}

impl Spectrum {
    pub fn freq(&self, bin: usize) -> f64 {
        bin as f64 * self.df
    }

    /// Trapezoidal integral over the contiguous bins in `bins`.
    pub fn integrate_bins(&self, bins: std::ops::RangeInclusive<usize>) -> f64 {
        let (lo, hi) = (*bins.start(), *bins.end());
        if hi <= lo || hi >= self.density.len() {
            return 0.0;
        }
        let p = &self.density[lo..=hi];
        let inner: f64 = p[1..p.len() - 1].iter().sum();
        self.df * (inner + 0.5 * (p[0] + p[p.len() - 1]))
    }

    /// Bin with the largest density among bins whose frequency lies in
    /// `[lo_hz, hi_hz]`; `None` if every such bin is zero.
    pub fn peak_bin(&self, lo_hz: f64, hi_hz: f64) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for (k, &p) in self.density.iter().enumerate() {
            let f = self.freq(k);
            if f < lo_hz || f > hi_hz || p <= 0.0 {
                continue;
            }
            if best.is_none_or(|(_, bp)| p > bp) {
                best = Some((k, p));
            }
        }
        best.map(|(k, _)| k)
    }
}

/// Modified periodogram with a Hann taper and density scaling, matching
/// the usual single-segment Welch estimate (constant detrend is not
/// applied).
pub fn periodogram(window: &[f64], fs: f64) -> Spectrum {
    let n = window.len();
    let taper = hann_window(n);
    let s2: f64 = taper.iter().map(|w| w * w).sum();
    let mut buf: Vec<Complex64> = window
        .iter()
        .zip(&taper)
        .map(|(x, w)| Complex64::new(x * w, 0.0))
        .collect();
    let fft = PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n));
    fft.process(&mut buf);

    let n_bins = n / 2 + 1;
    let scale = 1.0 / (fs * s2);
    let density = (0..n_bins)
        .map(|k| {
            let p = buf[k].norm_sqr() * scale;
            let doubled = k != 0 && !(n % 2 == 0 && k == n / 2);
            if doubled {
                2.0 * p
            } else {
                p
            }
        })
        .collect();
    Spectrum { df: fs / n as f64, density }
}
