//! Per-second band powers (dB) and mean absolute values (μV) for each
//! channel of an epoch, and their compact JSON target form.
//!
//! Each 1-s window is a single Hann-tapered segment (a one-segment Welch
//! estimate; the overlap setting has nothing to act on). Band power is the
//! trapezoidal integral of the density over the bins inside the band.

use crate::dsp::{periodogram, Spectrum};
use crate::psg_io::{Channel, ChannelKind, Epoch, EPOCH_SECONDS, TARGET_RATE_HZ};
use std::collections::BTreeMap;
use std::fmt::Write;

/// Added to linear band power before taking the log.
pub const POWER_EPSILON: f64 = 1e-10;
/// Lowest reportable band power.
pub const DB_FLOOR: f64 = -100.0;
/// Samples in one descriptor window.
pub const WINDOW_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DescriptorError {
    #[error("window error: {0}")]
    Window(String),
    #[error("target parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Band {
    Delta,
    Theta,
    Alpha,
    Beta,
}

impl Band {
    pub const ALL: [Band; 4] = [Band::Delta, Band::Theta, Band::Alpha, Band::Beta];

    pub fn edges_hz(self) -> (f64, f64) {
        match self {
            Band::Delta => (0.3, 4.0),
            Band::Theta => (4.0, 8.0),
            Band::Alpha => (8.0, 13.0),
            Band::Beta => (13.0, 30.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Band::Delta => "delta",
            Band::Theta => "theta",
            Band::Alpha => "alpha",
            Band::Beta => "beta",
        }
    }

    /// Whether `f` falls in this band. A shared edge belongs to the lower
    /// band; the lowest band is closed at both ends.
    pub fn contains(self, f: f64) -> bool {
        let (lo, hi) = self.edges_hz();
        let above_lo = if self == Band::Delta { f >= lo } else { f > lo };
        above_lo && f <= hi
    }

    /// Linear band power from a spectrum.
    pub fn power(self, spectrum: &Spectrum) -> f64 {
        let bins: Vec<usize> = (0..spectrum.density.len()).filter(|&k| self.contains(spectrum.freq(k))).collect();
        match (bins.first(), bins.last()) {
            (Some(&lo), Some(&hi)) => spectrum.integrate_bins(lo..=hi),
            _ => 0.0,
        }
    }
}

pub fn to_db(power: f64) -> f64 {
    (10.0 * (power + POWER_EPSILON).log10()).max(DB_FLOOR)
}

fn check_window(window: &[f64]) -> Result<(), DescriptorError> {
    if window.len() != WINDOW_SAMPLES {
        return Err(DescriptorError::Window(format!(
            "expected {WINDOW_SAMPLES} samples, got {}",
            window.len()
        )));
    }
    Ok(())
}

/// Linear powers of the four bands for one 1-s window at 100 Hz.
pub fn band_powers(window: &[f64]) -> Result<[f64; 4], DescriptorError> {
    check_window(window)?;
    let spectrum = periodogram(window, TARGET_RATE_HZ);
    Ok(Band::ALL.map(|b| b.power(&spectrum)))
}

pub fn band_power_db(window: &[f64], band: Band) -> Result<f64, DescriptorError> {
    check_window(window)?;
    Ok(to_db(band.power(&periodogram(window, TARGET_RATE_HZ))))
}

/// Mean absolute value.
pub fn mav(window: &[f64]) -> Result<f64, DescriptorError> {
    if window.is_empty() {
        return Err(DescriptorError::Window("empty window".into()));
    }
    Ok(window.iter().map(|v| v.abs()).sum::<f64>() / window.len() as f64)
}

/// Half-away-from-zero rounding to one decimal.
pub fn round1(x: f64) -> f64 {
    let r = (x * 10.0).round() / 10.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}

/// Thirty rows per present channel: `[delta, theta, alpha, beta, mav]` for
/// EEG/EOG, `[mav]` for chin.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescriptorFrame {
    pub channels: BTreeMap<Channel, Vec<Vec<f64>>>,
}

impl DescriptorFrame {
    pub fn rows(&self, channel: Channel) -> Option<&[Vec<f64>]> {
        self.channels.get(&channel).map(Vec::as_slice)
    }

    pub fn rounded(&self) -> Self {
        Self {
            channels: self
                .channels
                .iter()
                .map(|(c, rows)| (*c, rows.iter().map(|r| r.iter().map(|&v| round1(v)).collect()).collect()))
                .collect(),
        }
    }

    pub fn without(mut self, channel: Channel) -> Self {
        self.channels.remove(&channel);
        self
    }
}

fn row_width(channel: Channel) -> usize {
    if channel.kind() == ChannelKind::Emg {
        1
    } else {
        5
    }
}

/// Unrounded per-second descriptors for every channel.
pub fn epoch_descriptors_raw(epoch: &Epoch) -> DescriptorFrame {
    let mut channels = BTreeMap::new();
    for c in Channel::ALL {
        let rows = (0..EPOCH_SECONDS)
            .map(|s| {
                let w = epoch.second(c, s);
                let m = w.iter().map(|v| v.abs()).sum::<f64>() / w.len() as f64;
                if c.kind() == ChannelKind::Emg {
                    vec![m]
                } else {
                    let spectrum = periodogram(w, TARGET_RATE_HZ);
                    let mut row: Vec<f64> = Band::ALL.iter().map(|b| to_db(b.power(&spectrum))).collect();
                    row.push(m);
                    row
                }
            })
            .collect();
        channels.insert(c, rows);
    }
    DescriptorFrame { channels }
}

/// Per-second descriptors rounded to one decimal.
pub fn epoch_descriptors(epoch: &Epoch) -> DescriptorFrame {
    epoch_descriptors_raw(epoch).rounded()
}

/// Compact JSON with montage-ordered keys and exactly one fractional digit
/// per number.
pub fn serialize_phase1_target(frame: &DescriptorFrame) -> String {
    let mut out = String::from("{");
    for (i, (c, rows)) in frame.channels.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        let _ = write!(out, "\"{}\":[", c.label());
        for (j, row) in rows.iter().enumerate() {
            if j > 0 {
                out.push(',');
            }
            out.push('[');
            for (k, v) in row.iter().enumerate() {
                if k > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{:.1}", round1(*v));
            }
            out.push(']');
        }
        out.push(']');
    }
    out.push('}');
    out
}

/// Parses a target back into a frame, checking channel names and shapes.
pub fn parse_phase1_target(text: &str) -> Result<DescriptorFrame, DescriptorError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DescriptorError::Parse(e.to_string()))?;
    let obj = value.as_object().ok_or_else(|| DescriptorError::Parse("not an object".into()))?;
    let mut channels = BTreeMap::new();
    for (key, rows) in obj {
        let c: Channel = key.parse().map_err(|_| DescriptorError::Parse(format!("unknown channel {key:?}")))?;
        let rows = rows
            .as_array()
            .ok_or_else(|| DescriptorError::Parse(format!("{key}: not an array")))?;
        if rows.len() != EPOCH_SECONDS {
            return Err(DescriptorError::Parse(format!("{key}: {} rows, expected 30", rows.len())));
        }
        let parsed = rows
            .iter()
            .map(|r| {
                let vals = r
                    .as_array()
                    .filter(|a| a.len() == row_width(c))
                    .ok_or_else(|| DescriptorError::Parse(format!("{key}: bad row shape")))?;
                vals.iter()
                    .map(|v| v.as_f64().ok_or_else(|| DescriptorError::Parse(format!("{key}: non-number"))))
                    .collect::<Result<Vec<f64>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        channels.insert(c, parsed);
    }
    Ok(DescriptorFrame { channels })
}
