//! Spindles (C4-M1), K-complexes (F4-M1) and vertex sharp waves (C4-M1).

use super::{sample_time, with_context, DetectorConfig, TransientEvent, TransientKind};
use crate::dsp::{butter_bandpass, butter_lowpass, filtfilt};
use crate::features::spectral::median;
use crate::psg_io::{Channel, Epoch, TARGET_RATE_HZ};

/// Centred moving RMS with a window of `w` samples (truncated at edges).
pub(crate) fn moving_rms(x: &[f64], w: usize) -> Vec<f64> {
    let half = w / 2;
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for v in x {
        prefix.push(prefix.last().unwrap() + v * v);
    }
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(x.len());
            ((prefix[hi] - prefix[lo]) / (hi - lo) as f64).max(0.0).sqrt()
        })
        .collect()
}

/// Maximal runs where `pred` holds, as `[start, end)`.
pub(crate) fn runs(n: usize, pred: impl Fn(usize) -> bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < n {
        if pred(i) {
            let s = i;
            while i < n && pred(i) {
                i += 1;
            }
            out.push((s, i));
        } else {
            i += 1;
        }
    }
    out
}

struct Biphasic {
    start: usize,
    end: usize,
    p2p: f64,
}

/// Negative lobes immediately followed by a positive lobe.
fn biphasic_candidates(y: &[f64], deadband: f64, max_gap: usize) -> Vec<Biphasic> {
    let mut lobes: Vec<(usize, usize, bool)> = runs(y.len(), |i| y[i] < -deadband)
        .into_iter()
        .map(|(a, b)| (a, b, false))
        .chain(runs(y.len(), |i| y[i] > deadband).into_iter().map(|(a, b)| (a, b, true)))
        .collect();
    lobes.sort_by_key(|l| l.0);
    lobes
        .windows(2)
        .filter(|w| !w[0].2 && w[1].2 && w[1].0 - w[0].1 <= max_gap)
        .map(|w| {
            let lo = y[w[0].0..w[0].1].iter().copied().fold(f64::INFINITY, f64::min);
            let hi = y[w[1].0..w[1].1].iter().copied().fold(f64::NEG_INFINITY, f64::max);
            Biphasic { start: w[0].0, end: w[1].1, p2p: hi - lo }
        })
        .collect()
}

fn isolated(y: &[f64], c: &Biphasic, window: usize, ratio: f64) -> bool {
    let before = &y[c.start.saturating_sub(window)..c.start];
    let after = &y[c.end..(c.end + window).min(y.len())];
    before.iter().chain(after).all(|v| v.abs() <= ratio * c.p2p)
}

fn event(kind: TransientKind, channel: Channel, start: usize, end: usize, offset: usize, p2p: f64) -> Option<TransientEvent> {
    if end <= offset {
        return None;
    }
    Some(TransientEvent {
        kind,
        channel,
        t_start: sample_time(start.max(offset) - offset),
        t_end: sample_time(end - offset),
        peak_to_peak: p2p,
        arousal_associated: false,
    })
}

fn spindles(epoch: &Epoch, prev: Option<&Epoch>, cfg: &DetectorConfig) -> Vec<TransientEvent> {
    let (x, offset) = with_context(epoch, prev, Channel::C4M1);
    let (lo, hi) = cfg.spindle_band_hz;
    let sos = butter_bandpass(3, lo, hi, TARGET_RATE_HZ).expect("valid spindle band");
    let y = filtfilt(&sos, &x).expect("epoch longer than filter padding");
    let env = moving_rms(&y, (cfg.spindle_rms_window_s * TARGET_RATE_HZ).round() as usize);
    let threshold = cfg.spindle_min_uv.max(cfg.spindle_median_factor * median(&env[offset..]).unwrap_or(0.0));
    let min_len = (cfg.spindle_min_duration_s * TARGET_RATE_HZ).round() as usize;
    runs(env.len(), |i| env[i] >= threshold)
        .into_iter()
        .filter(|&(a, b)| b - a >= min_len && b > offset && b - a.max(offset) > 0)
        .filter_map(|(a, b)| {
            let seg = &y[a..b];
            let p2p = seg.iter().copied().fold(f64::NEG_INFINITY, f64::max) - seg.iter().copied().fold(f64::INFINITY, f64::min);
            event(TransientKind::Spindle, Channel::C4M1, a, b, offset, p2p)
        })
        .collect()
}

fn lowpassed(epoch: &Epoch, prev: Option<&Epoch>, channel: Channel, cutoff: f64) -> (Vec<f64>, usize) {
    let (x, offset) = with_context(epoch, prev, channel);
    let sos = butter_lowpass(4, cutoff, TARGET_RATE_HZ).expect("valid cutoff");
    (filtfilt(&sos, &x).expect("epoch longer than filter padding"), offset)
}

fn k_complexes(epoch: &Epoch, prev: Option<&Epoch>, cfg: &DetectorConfig) -> Vec<TransientEvent> {
    let (y, offset) = lowpassed(epoch, prev, Channel::F4M1, cfg.kc_lowpass_hz);
    let (dmin, dmax) = cfg.kc_duration_s;
    let window = (cfg.kc_isolation_s * TARGET_RATE_HZ).round() as usize;
    biphasic_candidates(&y, cfg.lobe_deadband_uv, 5)
        .into_iter()
        .filter(|c| {
            let d = sample_time(c.end - c.start);
            d >= dmin && d <= dmax && c.p2p >= cfg.kc_min_p2p_uv && isolated(&y, c, window, cfg.kc_isolation_ratio)
        })
        .filter_map(|c| event(TransientKind::KComplex, Channel::F4M1, c.start, c.end, offset, c.p2p))
        .collect()
}

fn vertex_waves(epoch: &Epoch, prev: Option<&Epoch>, cfg: &DetectorConfig) -> Vec<TransientEvent> {
    let (y, offset) = lowpassed(epoch, prev, Channel::C4M1, cfg.vertex_lowpass_hz);
    let (lo, hi) = cfg.vertex_p2p_uv;
    biphasic_candidates(&y, cfg.lobe_deadband_uv, 5)
        .into_iter()
        .filter(|c| sample_time(c.end - c.start) < cfg.vertex_max_duration_s && c.p2p >= lo && c.p2p < hi)
        .filter_map(|c| event(TransientKind::VertexSharp, Channel::C4M1, c.start, c.end, offset, c.p2p))
        .collect()
}

/// Transients in the current epoch, ordered by start time. K-complexes
/// within the association window of `arousal_onset_s` are flagged.
pub fn detect_transients(
    epoch: &Epoch,
    prev: Option<&Epoch>,
    arousal_onset_s: Option<f64>,
    cfg: &DetectorConfig,
) -> Vec<TransientEvent> {
    let mut out = spindles(epoch, prev, cfg);
    out.extend(k_complexes(epoch, prev, cfg).into_iter().map(|mut kc| {
        let w = cfg.arousal_association_s;
        kc.arousal_associated = arousal_onset_s.is_some_and(|t| t >= kc.t_start - w && t <= kc.t_end + w);
        kc
    }));
    out.extend(vertex_waves(epoch, prev, cfg));
    out.sort_by(|a, b| a.t_start.total_cmp(&b.t_start));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psg_io::synth::{synthesize_epoch, Component, Waveform};

    fn cfg() -> DetectorConfig {
        DetectorConfig::default()
    }

    #[test]
    fn rms_of_constant() {
        assert!(moving_rms(&[3.0; 50], 25).iter().all(|v| (v - 3.0).abs() < 1e-12));
    }

    #[test]
    fn zero_epoch_has_no_transients() {
        assert!(detect_transients(&Epoch::zeros(0), None, None, &cfg()).is_empty());
    }

    #[test]
    fn spindle_burst_detected_around_burst() {
        let comp = Component::new(Channel::C4M1, Waveform::SpindleBurst, 5.0, 1.0, 13.0, 30.0);
        let e = synthesize_epoch(&[comp], 0, 0).unwrap();
        let ev = detect_transients(&e, None, None, &cfg());
        assert_eq!(ev.len(), 1, "{ev:?}");
        let s = &ev[0];
        assert_eq!(s.kind, TransientKind::Spindle);
        assert!((s.t_start - 5.0).abs() <= 0.25 && (s.t_end - 6.0).abs() <= 0.25, "{s:?}");
        assert!(s.duration() >= 0.5);
    }

    #[test]
    fn spindle_envelope_matches_direct_rms() {
        // Oracle: RMS recomputed by explicit summation at a few samples.
        let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.37).sin() * 20.0).collect();
        let env = moving_rms(&x, 25);
        for i in [0usize, 7, 150, 299] {
            let lo = i.saturating_sub(12);
            let hi = (i + 13).min(300);
            let direct = (x[lo..hi].iter().map(|v| v * v).sum::<f64>() / (hi - lo) as f64).sqrt();
            assert!((env[i] - direct).abs() < 1e-9);
        }
    }

    #[test]
    fn k_complex_detected_without_arousal() {
        let kc = Component::new(Channel::F4M1, Waveform::KComplex, 8.0, 0.8, 0.0, 50.0);
        let e = synthesize_epoch(&[kc], 0, 0).unwrap();
        let ev = detect_transients(&e, None, None, &cfg());
        assert_eq!(ev.len(), 1, "{ev:?}");
        assert_eq!(ev[0].kind, TransientKind::KComplex);
        assert!(!ev[0].arousal_associated);
        assert!(ev[0].peak_to_peak >= 75.0);
        assert!((ev[0].t_start - 8.0).abs() < 0.2);
        let flagged = detect_transients(&e, None, Some(8.5), &cfg());
        assert!(flagged[0].arousal_associated);
    }

    #[test]
    fn slow_wave_train_is_not_k_complex() {
        let sw = Component::new(Channel::F4M1, Waveform::SlowWave, 5.0, 10.0, 1.0, 65.0);
        let e = synthesize_epoch(&[sw], 0, 0).unwrap();
        assert!(detect_transients(&e, None, None, &cfg()).is_empty());
    }

    #[test]
    fn vertex_sharp_wave() {
        let v = Component::new(Channel::C4M1, Waveform::KComplex, 12.0, 0.3, 0.0, 30.0);
        let e = synthesize_epoch(&[v], 0, 0).unwrap();
        let ev = detect_transients(&e, None, None, &cfg());
        assert_eq!(ev.len(), 1, "{ev:?}");
        assert_eq!(ev[0].kind, TransientKind::VertexSharp);
    }

    #[test]
    fn spindle_in_preceding_epoch_not_reported() {
        let prev = synthesize_epoch(&[Component::new(Channel::C4M1, Waveform::SpindleBurst, 20.0, 1.0, 13.0, 30.0)], 0, 0).unwrap();
        let cur = Epoch::zeros(1);
        assert!(detect_transients(&cur, Some(&prev), None, &cfg()).is_empty());
        assert_eq!(detect_transients(&prev, None, None, &cfg()).len(), 1);
    }
}
