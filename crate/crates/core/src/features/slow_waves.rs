//! Slow-wave coverage on F4-M1.

use super::{with_context, DetectorConfig};
use crate::dsp::{butter_bandpass, filtfilt};
use crate::psg_io::{Channel, Epoch, EPOCH_SAMPLES, TARGET_RATE_HZ};

/// Splits `x` into runs of constant sign (zero counts as positive).
pub(crate) fn half_waves(x: &[f64]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..=x.len() {
        if i == x.len() || (x[i] < 0.0) != (x[start] < 0.0) {
            out.push((start, i));
            start = i;
        }
    }
    out
}

/// Per-sample mask of the current epoch covered by slow waves.
///
/// F4-M1 is band-passed, cut into half-waves at zero crossings, and each
/// negative half-wave is paired with the positive one after it. A pair
/// whose peak-to-peak amplitude exceeds the threshold marks its samples.
pub fn swa_coverage(epoch: &Epoch, prev: Option<&Epoch>, cfg: &DetectorConfig) -> Vec<bool> {
    let (x, offset) = with_context(epoch, prev, Channel::F4M1);
    let sos = butter_bandpass(2, cfg.swa_band_hz.0, cfg.swa_band_hz.1, TARGET_RATE_HZ).expect("valid slow-wave band");
    let y = filtfilt(&sos, &x).expect("epoch longer than filter padding");
    let mut covered = vec![false; x.len()];
    let waves = half_waves(&y);
    let mut k = 0;
    while k + 1 < waves.len() {
        let (a, _) = waves[k];
        if y[a] >= 0.0 {
            k += 1;
            continue;
        }
        let (_, b) = waves[k + 1];
        let seg = &y[a..b];
        let (lo, hi) = seg.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if hi - lo > cfg.swa_min_p2p_uv {
            covered[a..b].iter_mut().for_each(|c| *c = true);
        }
        k += 2;
    }
    covered.split_off(offset)
}

/// Share of the epoch covered by slow waves.
pub fn swa_fraction(epoch: &Epoch, prev: Option<&Epoch>, cfg: &DetectorConfig) -> f64 {
    swa_coverage(epoch, prev, cfg).iter().filter(|&&c| c).count() as f64 / EPOCH_SAMPLES as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psg_io::synth::{synthesize_epoch, Component, Waveform};

    fn frac(comps: &[Component]) -> f64 {
        swa_fraction(&synthesize_epoch(comps, 0, 0).unwrap(), None, &DetectorConfig::default())
    }

    #[test]
    fn half_wave_partition() {
        assert_eq!(half_waves(&[1.0, 2.0, -1.0, -2.0, 0.0, 3.0]), vec![(0, 2), (2, 4), (4, 6)]);
        assert!(half_waves(&[]).is_empty());
    }

    #[test]
    fn full_epoch_supra_threshold() {
        let f = frac(&[Component::sine(Channel::F4M1, 1.5, 50.0)]);
        assert!(f > 0.95, "{f}");
    }

    #[test]
    fn sub_threshold_is_zero() {
        assert_eq!(frac(&[Component::sine(Channel::F4M1, 1.5, 30.0)]), 0.0);
        assert_eq!(frac(&[]), 0.0);
    }

    #[test]
    fn partial_coverage() {
        let f = frac(&[Component::new(Channel::F4M1, Waveform::SlowWave, 10.0, 7.5, 1.0, 50.0)]);
        assert!((f - 0.25).abs() <= 0.035, "{f}");
    }
}
