//! Event detectors and per-epoch summary statistics consumed by the
//! staging rules.
//!
//! Every threshold lives in [`DetectorConfig`]. Detectors see the current
//! epoch plus, optionally, the preceding epoch; the preceding epoch only
//! provides filter context and the pre-arousal baseline, events are
//! reported for the current epoch alone.

mod eye;
mod slow_waves;
mod spectral;
mod transients;

pub use eye::detect_eye_events;
pub use slow_waves::{swa_coverage, swa_fraction};
pub use spectral::{alpha_fraction, chin_tone, detect_artifact, SecondStats};
pub use transients::detect_transients;

use crate::psg_io::{Channel, Epoch, EPOCH_SAMPLES, EPOCH_SECONDS, TARGET_RATE_HZ};
use serde::{Deserialize, Serialize};

/// Seconds of the preceding epoch used as context.
pub const TAIL_SECONDS: usize = 15;
const TAIL_SAMPLES: usize = TAIL_SECONDS * 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Alpha share of 0.3–30 Hz power for an alpha-dominant second.
    pub alpha_ratio: f64,
    pub spindle_band_hz: (f64, f64),
    pub spindle_rms_window_s: f64,
    pub spindle_min_uv: f64,
    pub spindle_median_factor: f64,
    pub spindle_min_duration_s: f64,
    pub kc_lowpass_hz: f64,
    pub kc_min_p2p_uv: f64,
    pub kc_duration_s: (f64, f64),
    /// Largest excursion allowed within the isolation window, as a fraction
    /// of the candidate's peak-to-peak amplitude.
    pub kc_isolation_ratio: f64,
    pub kc_isolation_s: f64,
    pub vertex_lowpass_hz: f64,
    pub vertex_p2p_uv: (f64, f64),
    pub vertex_max_duration_s: f64,
    /// Dead-band around zero used when splitting low-passed EEG into lobes.
    pub lobe_deadband_uv: f64,
    pub arousal_association_s: f64,
    pub swa_band_hz: (f64, f64),
    pub swa_min_p2p_uv: f64,
    pub eye_trigger_uv: f64,
    pub eye_baseline_s: f64,
    /// Event extent ends where deviation falls below this share of its peak.
    pub eye_extent_ratio: f64,
    pub eye_correlation: f64,
    pub sem_min_deflection_ms: f64,
    pub blink_interval_s: (f64, f64),
    pub chin_low_uv: f64,
    pub artifact_amplitude_uv: f64,
    /// EEG is high-passed here before the amplitude test, so slow waves and
    /// K-complexes do not count as artifact. `None` tests the raw signal.
    pub artifact_highpass_hz: Option<f64>,
    pub artifact_sample_fraction: f64,
    pub artifact_chin_mav_uv: f64,
    pub arousal_fast_ratio: f64,
    pub arousal_min_s: usize,
    pub arousal_quiet_s: usize,
    pub lamf_peak_hz: (f64, f64),
    pub lamf_max_p2p_uv: f64,
    pub theta_band_hz: (f64, f64),
    pub theta_drop_hz: f64,
    /// Waking dominant EEG frequency of the subject, when known.
    pub waking_baseline_hz: Option<f64>,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha_ratio: 0.5,
            spindle_band_hz: (11.0, 16.0),
            spindle_rms_window_s: 0.25,
            spindle_min_uv: 10.0,
            spindle_median_factor: 2.0,
            spindle_min_duration_s: 0.5,
            kc_lowpass_hz: 4.0,
            kc_min_p2p_uv: 75.0,
            kc_duration_s: (0.5, 2.0),
            kc_isolation_ratio: 0.4,
            kc_isolation_s: 3.0,
            vertex_lowpass_hz: 8.0,
            vertex_p2p_uv: (40.0, 75.0),
            vertex_max_duration_s: 0.5,
            lobe_deadband_uv: 1.0,
            arousal_association_s: 1.0,
            swa_band_hz: (0.5, 2.0),
            swa_min_p2p_uv: 75.0,
            eye_trigger_uv: 25.0,
            eye_baseline_s: 5.0,
            eye_extent_ratio: 0.1,
            eye_correlation: 0.5,
            sem_min_deflection_ms: 500.0,
            blink_interval_s: (0.5, 2.0),
            chin_low_uv: 5.0,
            artifact_amplitude_uv: 50.0,
            artifact_highpass_hz: Some(4.0),
            artifact_sample_fraction: 0.25,
            artifact_chin_mav_uv: 30.0,
            arousal_fast_ratio: 0.6,
            arousal_min_s: 3,
            arousal_quiet_s: 10,
            lamf_peak_hz: (2.0, 7.0),
            lamf_max_p2p_uv: 75.0,
            theta_band_hz: (4.0, 7.0),
            theta_drop_hz: 1.0,
            waking_baseline_hz: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientKind {
    Spindle,
    KComplex,
    VertexSharp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientEvent {
    pub kind: TransientKind,
    pub channel: Channel,
    pub t_start: f64,
    pub t_end: f64,
    pub peak_to_peak: f64,
    pub arousal_associated: bool,
}

impl TransientEvent {
    pub fn duration(&self) -> f64 {
        self.t_end - self.t_start
    }

    /// Spindles, and K-complexes not tied to an arousal.
    pub fn is_n2_marker(&self) -> bool {
        match self.kind {
            TransientKind::Spindle => true,
            TransientKind::KComplex => !self.arousal_associated,
            TransientKind::VertexSharp => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EyeEventKind {
    #[serde(rename = "blink")]
    Blink,
    #[serde(rename = "SEM")]
    Sem,
    #[serde(rename = "REM")]
    Rem,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeEvent {
    pub kind: EyeEventKind,
    pub t_start: f64,
    pub t_end: f64,
    /// Cosine similarity of the LOC and ROC deviations over the event.
    pub conjugacy: f64,
    pub initial_deflection_ms: f64,
    /// Largest absolute deviation from baseline on either channel, μV.
    pub peak_uv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochFeatures {
    pub epoch_index: usize,
    pub alpha_fraction: f64,
    pub lamf_fraction: f64,
    pub theta_slowing: bool,
    pub dominant_frequency_hz: Option<f64>,
    pub transients: Vec<TransientEvent>,
    pub swa_fraction: f64,
    pub eye_events: Vec<EyeEvent>,
    pub chin_mav_median: f64,
    pub chin_tone_low: bool,
    pub artifact_fraction: f64,
    pub arousal_present: bool,
    pub arousal_onset_s: Option<f64>,
}

impl EpochFeatures {
    pub fn eye_count(&self, kind: EyeEventKind) -> usize {
        self.eye_events.iter().filter(|e| e.kind == kind).count()
    }

    /// Share of the 30 seconds touched by at least one event of `kind`.
    pub fn eye_coverage(&self, kind: EyeEventKind) -> f64 {
        let mut touched = [false; EPOCH_SECONDS];
        for e in self.eye_events.iter().filter(|e| e.kind == kind) {
            let first = e.t_start.floor() as usize;
            let last = ((e.t_end.ceil() as usize).max(first + 1)).min(EPOCH_SECONDS);
            for t in touched.iter_mut().take(last).skip(first) {
                *t = true;
            }
        }
        touched.iter().filter(|&&t| t).count() as f64 / EPOCH_SECONDS as f64
    }

    pub fn has_spindle_or_kc(&self) -> bool {
        self.transients.iter().any(|t| matches!(t.kind, TransientKind::Spindle | TransientKind::KComplex))
    }

    /// N2 markers starting in `[from_s, to_s)`.
    pub fn n2_markers_in(&self, from_s: f64, to_s: f64) -> impl Iterator<Item = &TransientEvent> {
        self.transients.iter().filter(move |t| t.is_n2_marker() && t.t_start >= from_s && t.t_start < to_s)
    }

    pub fn has_vertex(&self) -> bool {
        self.transients.iter().any(|t| t.kind == TransientKind::VertexSharp)
    }
}

/// Channel samples with up to [`TAIL_SECONDS`] of the preceding epoch
/// prepended, and the number of prepended samples.
pub(crate) fn with_context(epoch: &Epoch, prev: Option<&Epoch>, channel: Channel) -> (Vec<f64>, usize) {
    match prev {
        Some(p) => {
            let tail = &p.channel(channel)[EPOCH_SAMPLES - TAIL_SAMPLES..];
            let mut v = Vec::with_capacity(TAIL_SAMPLES + EPOCH_SAMPLES);
            v.extend_from_slice(tail);
            v.extend_from_slice(epoch.channel(channel));
            (v, TAIL_SAMPLES)
        }
        None => (epoch.channel(channel).to_vec(), 0),
    }
}

pub(crate) fn sample_time(i: usize) -> f64 {
    i as f64 / TARGET_RATE_HZ
}

/// Runs every detector on one epoch.
pub fn extract_epoch_features(epoch: &Epoch, prev: Option<&Epoch>, cfg: &DetectorConfig) -> EpochFeatures {
    let stats = SecondStats::compute(epoch, prev, cfg);
    let swa_cover = swa_coverage(epoch, prev, cfg);
    let swa_fraction = swa_cover.iter().filter(|&&c| c).count() as f64 / EPOCH_SAMPLES as f64;
    let swa_seconds: Vec<bool> = swa_cover.chunks(100).map(|c| c.iter().filter(|&&v| v).count() > 50).collect();

    let lamf = (0..EPOCH_SECONDS)
        .filter(|&s| {
            !stats.alpha_dominant[s]
                && !swa_seconds[s]
                && !stats.artifact[s]
                && stats.c4_peak_hz[s].is_some_and(|f| f >= cfg.lamf_peak_hz.0 && f <= cfg.lamf_peak_hz.1)
                && stats.c4_p2p[s] < cfg.lamf_max_p2p_uv
        })
        .count();

    let dominant = stats.median_dominant_hz();
    let theta_slowing = dominant.is_some_and(|f| {
        f >= cfg.theta_band_hz.0
            && f <= cfg.theta_band_hz.1
            && cfg.waking_baseline_hz.is_none_or(|b| f <= b - cfg.theta_drop_hz)
    });

    let touches_artifact = |t0: f64, t1: f64| {
        let first = t0.floor().max(0.0) as usize;
        let last = (t1.ceil() as usize).clamp(first + 1, EPOCH_SECONDS);
        (first..last).any(|s| stats.artifact[s])
    };
    let mut transients = detect_transients(epoch, prev, stats.arousal_onset_s, cfg);
    transients.retain(|t| !touches_artifact(t.t_start, t.t_end));
    let mut eye_events = detect_eye_events(epoch, cfg);
    eye_events.retain(|e| !touches_artifact(e.t_start, e.t_end));

    let (chin_mav_median, chin_tone_low) = stats.chin_tone(cfg);
    EpochFeatures {
        epoch_index: epoch.index,
        alpha_fraction: stats.alpha_fraction(),
        lamf_fraction: lamf as f64 / EPOCH_SECONDS as f64,
        theta_slowing,
        dominant_frequency_hz: dominant,
        transients,
        swa_fraction,
        eye_events,
        chin_mav_median,
        chin_tone_low,
        artifact_fraction: stats.artifact_fraction(),
        arousal_present: stats.arousal_onset_s.is_some(),
        arousal_onset_s: stats.arousal_onset_s,
    }
}

/// Features for every epoch of a recording, each with its predecessor as
/// context.
pub fn extract_recording_features(epochs: &[Epoch], cfg: &DetectorConfig) -> Vec<EpochFeatures> {
    use rayon::prelude::*;
    (0..epochs.len())
        .into_par_iter()
        .map(|i| {
            let prev = i.checked_sub(1).map(|j| &epochs[j]).filter(|p| p.index + 1 == epochs[i].index);
            extract_epoch_features(&epochs[i], prev, cfg)
        })
        .collect()
}
