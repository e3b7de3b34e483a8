//! Raw PSG ingestion, channel conditioning, resampling and 30-s epoching.

mod condition;
mod load;
mod resample;
mod segment;
pub mod synth;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub use condition::{condition_channel, condition_recording};
pub use load::{load_recording, write_recording, ChannelManifest};
pub use resample::{resample_recording, resample_signal};
pub use segment::{concatenate_epochs, segment_epochs};

/// Sampling rate every conditioned channel ends up at.
pub const TARGET_RATE_HZ: f64 = 100.0;
/// Epoch length in seconds.
pub const EPOCH_SECONDS: usize = 30;
/// Samples per channel in one epoch at the target rate.
pub const EPOCH_SAMPLES: usize = 3000;

#[derive(Debug, thiserror::Error)]
pub enum PsgError {
    #[error("montage error: {0}")]
    Montage(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("signal too short: {seconds:.3} s (need at least {min_seconds} s)")]
    SignalTooShort { seconds: f64, min_seconds: f64 },
    #[error("resample error: {0}")]
    Resample(String),
    #[error("recording shorter than one 30-s epoch ({seconds:.3} s)")]
    EmptyRecording { seconds: f64 },
    #[error("synthesis component error: {0}")]
    Component(String),
    #[error("invalid conditioning config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Physiological signal type of a montage channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChannelKind {
    Eeg,
    Eog,
    Emg,
}

/// The six montage channels, in fixed top-to-bottom order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "F4-M1")]
    F4M1,
    #[serde(rename = "C4-M1")]
    C4M1,
    #[serde(rename = "O2-M1")]
    O2M1,
    #[serde(rename = "LOC")]
    Loc,
    #[serde(rename = "ROC")]
    Roc,
    #[serde(rename = "Chin")]
    Chin,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::F4M1,
        Channel::C4M1,
        Channel::O2M1,
        Channel::Loc,
        Channel::Roc,
        Channel::Chin,
    ];
    pub const EEG: [Channel; 3] = [Channel::F4M1, Channel::C4M1, Channel::O2M1];

    pub fn label(self) -> &'static str {
        match self {
            Channel::F4M1 => "F4-M1",
            Channel::C4M1 => "C4-M1",
            Channel::O2M1 => "O2-M1",
            Channel::Loc => "LOC",
            Channel::Roc => "ROC",
            Channel::Chin => "Chin",
        }
    }

    pub fn kind(self) -> ChannelKind {
        match self {
            Channel::F4M1 | Channel::C4M1 | Channel::O2M1 => ChannelKind::Eeg,
            Channel::Loc | Channel::Roc => ChannelKind::Eog,
            Channel::Chin => ChannelKind::Emg,
        }
    }

    /// Row of this channel in an epoch matrix.
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Channel {
    type Err = PsgError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.label() == s)
            .ok_or_else(|| PsgError::Montage(format!("unknown montage label {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSignal {
    pub channel: Channel,
    /// Amplitudes in μV.
    pub samples: Vec<f64>,
    pub sample_rate_hz: f64,
}

impl ChannelSignal {
    pub fn new(channel: Channel, samples: Vec<f64>, sample_rate_hz: f64) -> Self {
        Self { channel, samples, sample_rate_hz }
    }

    pub fn kind(&self) -> ChannelKind {
        self.channel.kind()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// One subject's six-channel recording. Channels are stored in montage order.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub subject_id: String,
    pub channels: Vec<ChannelSignal>,
    pub source_rate_hz: f64,
}

impl Recording {
    /// Builds a recording, truncating every channel to the shortest one.
    pub fn new(
        subject_id: impl Into<String>,
        mut channels: Vec<ChannelSignal>,
        source_rate_hz: f64,
    ) -> Result<Self, PsgError> {
        for want in Channel::ALL {
            if !channels.iter().any(|c| c.channel == want) {
                return Err(PsgError::Montage(format!("missing channel {want}")));
            }
        }
        if channels.len() != 6 {
            return Err(PsgError::Montage(format!(
                "expected exactly six channels, got {}",
                channels.len()
            )));
        }
        if channels.iter().any(|c| c.sample_rate_hz != channels[0].sample_rate_hz) {
            return Err(PsgError::Format("channels have different sample rates".into()));
        }
        channels.sort_by_key(|c| c.channel);
        let shortest = channels.iter().map(|c| c.samples.len()).min().unwrap_or(0);
        for c in &mut channels {
            c.samples.truncate(shortest);
        }
        Ok(Self { subject_id: subject_id.into(), channels, source_rate_hz })
    }

    pub fn channel(&self, channel: Channel) -> &ChannelSignal {
        &self.channels[channel.index()]
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.channels[0].sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.channels[0].samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration_s(&self) -> f64 {
        self.channels[0].duration_s()
    }
}

/// A 30-s, six-channel window at 100 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub index: usize,
    /// Channel-major, montage order, `EPOCH_SAMPLES` values each.
    pub matrix: [Vec<f64>; 6],
}

impl Epoch {
    pub fn zeros(index: usize) -> Self {
        Self { index, matrix: std::array::from_fn(|_| vec![0.0; EPOCH_SAMPLES]) }
    }

    /// Builds an epoch from six rows; each must hold exactly 3000 samples.
    pub fn from_rows(index: usize, rows: [Vec<f64>; 6]) -> Result<Self, PsgError> {
        if let Some(bad) = rows.iter().find(|r| r.len() != EPOCH_SAMPLES) {
            return Err(PsgError::Format(format!(
                "epoch rows must hold {EPOCH_SAMPLES} samples, got {}",
                bad.len()
            )));
        }
        Ok(Self { index, matrix: rows })
    }

    pub fn start_s(&self) -> f64 {
        (self.index * EPOCH_SECONDS) as f64
    }

    pub fn channel(&self, channel: Channel) -> &[f64] {
        &self.matrix[channel.index()]
    }

    pub fn channel_mut(&mut self, channel: Channel) -> &mut Vec<f64> {
        &mut self.matrix[channel.index()]
    }

    /// Samples of `channel` in second `sec` (0..30).
    pub fn second(&self, channel: Channel, sec: usize) -> &[f64] {
        let rate = TARGET_RATE_HZ as usize;
        &self.matrix[channel.index()][sec * rate..(sec + 1) * rate]
    }
}

/// Band edges and notch settings for conditioning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConditioningConfig {
    pub eeg_eog_band_hz: (f64, f64),
    pub emg_band_hz: (f64, f64),
    pub filter_order: usize,
    /// Mains frequency; 60 Hz for North American sources.
    pub notch_hz: f64,
    pub notch_q: f64,
    pub target_rate_hz: f64,
}

impl Default for ConditioningConfig {
    fn default() -> Self {
        Self {
            eeg_eog_band_hz: (0.3, 35.0),
            emg_band_hz: (10.0, 100.0),
            filter_order: 4,
            notch_hz: 50.0,
            notch_q: 20.0,
            target_rate_hz: TARGET_RATE_HZ,
        }
    }
}

impl ConditioningConfig {
    pub fn validate(&self, source_rate_hz: f64) -> Result<(), PsgError> {
        let nyquist = source_rate_hz / 2.0;
        for (name, (lo, hi)) in [("eeg_eog_band_hz", self.eeg_eog_band_hz), ("emg_band_hz", self.emg_band_hz)] {
            if !(lo > 0.0 && lo < hi) {
                return Err(PsgError::Config(format!("{name}: need 0 < low < high, got ({lo}, {hi})")));
            }
        }
        if !(self.notch_hz > 0.0 && self.notch_hz < nyquist) {
            return Err(PsgError::Config(format!(
                "notch {} Hz outside (0, {nyquist}) Hz",
                self.notch_hz
            )));
        }
        if self.filter_order == 0 || !(self.notch_q > 0.0) {
            return Err(PsgError::Config("filter order and notch Q must be positive".into()));
        }
        if self.target_rate_hz != TARGET_RATE_HZ {
            return Err(PsgError::Config("target rate is fixed at 100 Hz".into()));
        }
        Ok(())
    }
}
