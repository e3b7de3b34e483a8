//! Fourier-method resampling: the spectrum is truncated (or zero-padded) to
//! the output length, which acts as an ideal low-pass at the new Nyquist.

use super::{ChannelSignal, PsgError, Recording};
use rustfft::{num_complex::Complex64, FftPlanner};

/// Output length for `n` samples at `from_hz` resampled to `to_hz`.
pub fn resampled_len(n: usize, from_hz: f64, to_hz: f64) -> usize {
    (n as f64 * to_hz / from_hz).round() as usize
}

pub fn resample_signal(signal: &ChannelSignal, target_hz: f64) -> Result<ChannelSignal, PsgError> {
    let fs = signal.sample_rate_hz;
    if !(fs > 0.0 && target_hz > 0.0) {
        return Err(PsgError::Resample(format!("bad rates {fs} -> {target_hz}")));
    }
    let n_in = signal.samples.len();
    let n_out = resampled_len(n_in, fs, target_hz);
    if n_in == 0 || n_out == 0 {
        return Err(PsgError::Resample("signal too short to resample".into()));
    }
    if n_in == n_out {
        return Ok(ChannelSignal { sample_rate_hz: target_hz, ..signal.clone() });
    }

    let mut planner = FftPlanner::<f64>::new();
    let mut spectrum: Vec<Complex64> = signal.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n_in).process(&mut spectrum);

    let mut out = vec![Complex64::new(0.0, 0.0); n_out];
    let n_min = n_in.min(n_out);
    // Bins strictly below the smaller Nyquist are copied on both sides.
    let half = (n_min - 1) / 2;
    out[0] = spectrum[0];
    for k in 1..=half {
        out[k] = spectrum[k];
        out[n_out - k] = spectrum[n_in - k];
    }
    if n_min % 2 == 0 {
        let m = n_min / 2;
        if n_out < n_in {
            // Fold both input bins into the real output Nyquist bin.
            out[m] = Complex64::new((spectrum[m] + spectrum[n_in - m]).re, 0.0);
        } else {
            // Split the input Nyquist bin across the two output bins.
            out[m] = spectrum[m] * 0.5;
            out[n_out - m] = spectrum[m] * 0.5;
        }
    }

    planner.plan_fft_inverse(n_out).process(&mut out);
    let scale = 1.0 / n_in as f64;
    let samples = out.iter().map(|c| c.re * scale).collect();
    Ok(ChannelSignal { channel: signal.channel, samples, sample_rate_hz: target_hz })
}

pub fn resample_recording(rec: &Recording, target_hz: f64) -> Result<Recording, PsgError> {
    use rayon::prelude::*;
    let channels = rec
        .channels
        .par_iter()
        .map(|c| resample_signal(c, target_hz))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Recording { subject_id: rec.subject_id.clone(), channels, source_rate_hz: rec.source_rate_hz })
}
