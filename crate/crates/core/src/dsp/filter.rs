//! IIR filter design (Butterworth via bilinear transform, second-order notch)
//! and zero-phase application over second-order sections.

use num_complex::Complex64;
use std::f64::consts::PI;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterDesignError {
    #[error("filter order must be positive")]
    ZeroOrder,
    #[error("cutoff {cutoff_hz} Hz must lie strictly inside (0, {nyquist_hz}) Hz")]
    CutoffOutOfRange { cutoff_hz: f64, nyquist_hz: f64 },
    #[error("band edges must satisfy low < high (got {low_hz}..{high_hz})")]
    InvertedBand { low_hz: f64, high_hz: f64 },
    #[error("notch quality factor must be positive")]
    BadQ,
}

/// One second-order section, `a0` normalised to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn dc_gain(&self) -> f64 {
        (self.b[0] + self.b[1] + self.b[2]) / (self.a[0] + self.a[1] + self.a[2])
    }

    fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + z_inv * self.b[1] + z2 * self.b[2])
            / (self.a[0] + z_inv * self.a[1] + z2 * self.a[2])
    }
}

/// A cascade of biquads.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
}

impl Sos {
    /// Order of the digital transfer function (two per section).
    pub fn order(&self) -> usize {
        2 * self.sections.len()
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64, fs: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    /// Magnitude response at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, fs: f64) -> f64 {
        self.response(freq_hz, fs).norm()
    }

    fn scale(&mut self, gain: f64) {
        if let Some(first) = self.sections.first_mut() {
            for b in &mut first.b {
                *b *= gain;
            }
        }
    }
}

fn check_cutoff(cutoff_hz: f64, fs: f64) -> Result<(), FilterDesignError> {
    let nyquist_hz = fs / 2.0;
    if !(cutoff_hz > 0.0 && cutoff_hz < nyquist_hz) {
        return Err(FilterDesignError::CutoffOutOfRange { cutoff_hz, nyquist_hz });
    }
    Ok(())
}

/// Analog Butterworth prototype poles on the unit circle (left half plane).
fn prototype_poles(order: usize) -> Vec<Complex64> {
    (0..order)
        .map(|k| {
            let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

fn prewarp(freq_hz: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * freq_hz / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = 2.0 * fs;
    (k + s) / (k - s)
}

/// Groups digital poles into conjugate pairs and attaches the given zeros,
/// two per section, producing unit-gain-free sections.
fn sections_from_zp(zeros: &[Complex64], poles: &[Complex64]) -> Sos {
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > 1e-12).collect();
    let mut real: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= 1e-12)
        .map(|p| p.re)
        .collect();
    complex.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    real.sort_by(f64::total_cmp);

    let mut pole_pairs: Vec<[f64; 3]> = complex
        .iter()
        .map(|p| [1.0, -2.0 * p.re, p.norm_sqr()])
        .collect();
    for pair in real.chunks(2) {
        match pair {
            [p, q] => pole_pairs.push([1.0, -(p + q), p * q]),
            [p] => pole_pairs.push([1.0, -p, 0.0]),
            _ => unreachable!(),
        }
    }

    // Zeros are all real here (at z = +1 or z = -1).
    let mut zr: Vec<f64> = zeros.iter().map(|z| z.re).collect();
    zr.sort_by(f64::total_cmp);
    let mut zero_pairs: Vec<[f64; 3]> = Vec::new();
    // Interleave so each section gets one zero from each end when mixed.
    let (neg, pos): (Vec<f64>, Vec<f64>) = zr.iter().partition(|z| **z < 0.0);
    let mut neg = neg.into_iter();
    let mut pos = pos.into_iter();
    loop {
        let a = neg.next().or_else(|| pos.next());
        let b = pos.next().or_else(|| neg.next());
        match (a, b) {
            (Some(p), Some(q)) => zero_pairs.push([1.0, -(p + q), p * q]),
            (Some(p), None) | (None, Some(p)) => zero_pairs.push([1.0, -p, 0.0]),
            (None, None) => break,
        }
    }

    let n = pole_pairs.len().max(zero_pairs.len());
    let sections = (0..n)
        .map(|i| Biquad {
            b: zero_pairs.get(i).copied().unwrap_or([1.0, 0.0, 0.0]),
            a: pole_pairs.get(i).copied().unwrap_or([1.0, 0.0, 0.0]),
        })
        .collect();
    Sos { sections }
}

/// Butterworth low-pass of the given order.
pub fn butter_lowpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<Sos, FilterDesignError> {
    if order == 0 {
        return Err(FilterDesignError::ZeroOrder);
    }
    check_cutoff(cutoff_hz, fs)?;
    let wc = prewarp(cutoff_hz, fs);
    let poles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(p * wc, fs))
        .collect();
    let zeros = vec![Complex64::new(-1.0, 0.0); order];
    let mut sos = sections_from_zp(&zeros, &poles);
    let g = sos.magnitude(0.0, fs);
    sos.scale(1.0 / g);
    Ok(sos)
}

/// Butterworth high-pass of the given order.
pub fn butter_highpass(order: usize, cutoff_hz: f64, fs: f64) -> Result<Sos, FilterDesignError> {
    if order == 0 {
        return Err(FilterDesignError::ZeroOrder);
    }
    check_cutoff(cutoff_hz, fs)?;
    let wc = prewarp(cutoff_hz, fs);
    let poles: Vec<Complex64> = prototype_poles(order)
        .into_iter()
        .map(|p| bilinear(wc / p, fs))
        .collect();
    let zeros = vec![Complex64::new(1.0, 0.0); order];
    let mut sos = sections_from_zp(&zeros, &poles);
    let g = sos.magnitude(fs / 2.0, fs);
    sos.scale(1.0 / g);
    Ok(sos)
}

/// Butterworth band-pass; `order` is the prototype order, so the digital
/// filter has order `2 * order`.
pub fn butter_bandpass(
    order: usize,
    low_hz: f64,
    high_hz: f64,
    fs: f64,
) -> Result<Sos, FilterDesignError> {
    if order == 0 {
        return Err(FilterDesignError::ZeroOrder);
    }
    check_cutoff(low_hz, fs)?;
    check_cutoff(high_hz, fs)?;
    if low_hz >= high_hz {
        return Err(FilterDesignError::InvertedBand { low_hz, high_hz });
    }
    let w1 = prewarp(low_hz, fs);
    let w2 = prewarp(high_hz, fs);
    let w0 = (w1 * w2).sqrt();
    let bw = w2 - w1;
    let mut poles = Vec::with_capacity(2 * order);
    for p in prototype_poles(order) {
        let half = p * (bw / 2.0);
        let disc = (half * half - w0 * w0).sqrt();
        poles.push(bilinear(half + disc, fs));
        poles.push(bilinear(half - disc, fs));
    }
    let mut zeros = vec![Complex64::new(1.0, 0.0); order];
    zeros.extend(std::iter::repeat_n(Complex64::new(-1.0, 0.0), order));
    let mut sos = sections_from_zp(&zeros, &poles);
    // The analog response is exactly 1 at w0; the bilinear map sends it here.
    let center_hz = fs / PI * (w0 / (2.0 * fs)).atan();
    let g = sos.magnitude(center_hz, fs);
    sos.scale(1.0 / g);
    Ok(sos)
}

/// Second-order IIR notch at `notch_hz` with quality factor `q`.
pub fn iir_notch(notch_hz: f64, q: f64, fs: f64) -> Result<Sos, FilterDesignError> {
    check_cutoff(notch_hz, fs)?;
    if !(q > 0.0) {
        return Err(FilterDesignError::BadQ);
    }
    let w0 = 2.0 * PI * notch_hz / fs;
    let bw = w0 / q;
    let beta = (bw / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    let c = w0.cos();
    Ok(Sos {
        sections: vec![Biquad {
            b: [gain, -2.0 * gain * c, gain],
            a: [1.0, -2.0 * gain * c, 2.0 * gain - 1.0],
        }],
    })
}

/// Steady-state initial conditions for a unit step, per section
/// (transposed direct form II states).
pub fn sosfilt_zi(sos: &Sos) -> Vec<[f64; 2]> {
    let mut level = 1.0;
    sos.sections
        .iter()
        .map(|s| {
            let y = s.dc_gain();
            let z2 = s.b[2] - s.a[2] * y;
            let z1 = s.b[1] - s.a[1] * y + z2;
            let zi = [z1 * level, z2 * level];
            level *= y;
            zi
        })
        .collect()
}

/// Causal filtering in place, starting from the given section states.
pub fn sosfilt(sos: &Sos, data: &mut [f64], mut state: Vec<[f64; 2]>) {
    for (s, z) in sos.sections.iter().zip(state.iter_mut()) {
        let [b0, b1, b2] = s.b;
        let [_, a1, a2] = s.a;
        let (mut z1, mut z2) = (z[0], z[1]);
        for x in data.iter_mut() {
            let xin = *x;
            let y = b0 * xin + z1;
            z1 = b1 * xin - a1 * y + z2;
            z2 = b2 * xin - a2 * y;
            *x = y;
        }
        *z = [z1, z2];
    }
}

fn forward_backward(sos: &Sos, padded: &[f64], zi: &[[f64; 2]]) -> Vec<f64> {
    let mut y = padded.to_vec();
    let x0 = y[0];
    sosfilt(sos, &mut y, zi.iter().map(|z| [z[0] * x0, z[1] * x0]).collect());
    y.reverse();
    let y0 = y[0];
    sosfilt(sos, &mut y, zi.iter().map(|z| [z[0] * y0, z[1] * y0]).collect());
    y.reverse();
    y
}

/// Zero-phase filtering with odd-reflection padding of `3 × order` samples.
///
/// The result is the mean of the forward-backward and backward-forward
/// passes, which makes the operator commute exactly with time reversal.
/// Returns `None` when the signal is not longer than the padding.
pub fn filtfilt(sos: &Sos, data: &[f64]) -> Option<Vec<f64>> {
    let pad = 3 * sos.order();
    let n = data.len();
    if n <= pad {
        return None;
    }
    let mut padded = Vec::with_capacity(n + 2 * pad);
    let first = data[0];
    let last = data[n - 1];
    padded.extend((1..=pad).rev().map(|i| 2.0 * first - data[i]));
    padded.extend_from_slice(data);
    padded.extend((1..=pad).map(|i| 2.0 * last - data[n - 1 - i]));

    let zi = sosfilt_zi(sos);
    let fb = forward_backward(sos, &padded, &zi);
    let mut rev = padded;
    rev.reverse();
    let mut bf = forward_backward(sos, &rev, &zi);
    bf.reverse();

    Some(
        fb[pad..pad + n]
            .iter()
            .zip(&bf[pad..pad + n])
            .map(|(a, b)| 0.5 * (a + b))
            .collect(),
    )
}
