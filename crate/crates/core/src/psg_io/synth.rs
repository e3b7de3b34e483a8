//! Deterministic synthetic PSG fixtures built from a list of waveform
//! components.

use super::{Channel, Epoch, PsgError, EPOCH_SECONDS, TARGET_RATE_HZ};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Waveform {
    /// `amplitude · sin(2π f t + phase)`.
    Sine,
    /// Sine with 0.1 s cosine ramps at both ends.
    SpindleBurst,
    /// One negative-first full cycle spanning `duration`; peak-to-peak is
    /// twice the amplitude. `frequency` is ignored.
    KComplex,
    /// Negative-first sine at `frequency`.
    SlowWave,
    /// Half-sine bump over `duration`. Sign follows `amplitude`.
    Blink,
    Sem,
    Rem,
    /// Gaussian white noise with σ = amplitude.
    Noise,
    /// Broadband movement/muscle artifact, Gaussian with σ = amplitude.
    Artifact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub channel: Channel,
    pub kind: Waveform,
    pub t_start: f64,
    pub duration: f64,
    #[serde(default)]
    pub frequency: f64,
    pub amplitude: f64,
    #[serde(default)]
    pub phase: f64,
}

impl Component {
    pub fn new(channel: Channel, kind: Waveform, t_start: f64, duration: f64, frequency: f64, amplitude: f64) -> Self {
        Self { channel, kind, t_start, duration, frequency, amplitude, phase: 0.0 }
    }

    /// Full-epoch sine.
    pub fn sine(channel: Channel, frequency: f64, amplitude: f64) -> Self {
        Self::new(channel, Waveform::Sine, 0.0, EPOCH_SECONDS as f64, frequency, amplitude)
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    fn validate(&self) -> Result<(), PsgError> {
        let end = self.t_start + self.duration;
        let limit = EPOCH_SECONDS as f64;
        if !(self.t_start >= 0.0 && self.t_start < limit) || !(self.duration > 0.0) || end > limit + 1e-9 {
            return Err(PsgError::Component(format!(
                "{:?} on {} spans [{}, {}) s, outside [0, {limit})",
                self.kind, self.channel, self.t_start, end
            )));
        }
        if !self.amplitude.is_finite() || !self.frequency.is_finite() {
            return Err(PsgError::Component("non-finite component parameter".into()));
        }
        Ok(())
    }

    fn value(&self, t: f64) -> f64 {
        let local = t - self.t_start;
        let (a, f, d) = (self.amplitude, self.frequency, self.duration);
        match self.kind {
            Waveform::Sine => a * (2.0 * PI * f * local + self.phase).sin(),
            Waveform::SlowWave => -a * (2.0 * PI * f * local + self.phase).sin(),
            Waveform::SpindleBurst => {
                let ramp = 0.1f64.min(d / 2.0);
                let env = if local < ramp {
                    0.5 - 0.5 * (PI * local / ramp).cos()
                } else if local > d - ramp {
                    0.5 - 0.5 * (PI * (d - local) / ramp).cos()
                } else {
                    1.0
                };
                env * a * (2.0 * PI * f * local + self.phase).sin()
            }
            Waveform::KComplex => -a * (2.0 * PI * local / d).sin(),
            Waveform::Blink | Waveform::Sem | Waveform::Rem => a * (PI * local / d).sin(),
            Waveform::Noise | Waveform::Artifact => 0.0,
        }
    }
}

/// Renders components into six channel rows of `seconds × rate` samples.
/// Noise streams are keyed by `(seed, component position)`.
pub fn render_components(
    components: &[Component],
    rate_hz: f64,
    seconds: f64,
    seed: u64,
) -> Result<[Vec<f64>; 6], PsgError> {
    let n = (seconds * rate_hz).round() as usize;
    let mut rows: [Vec<f64>; 6] = std::array::from_fn(|_| vec![0.0; n]);
    for (k, comp) in components.iter().enumerate() {
        comp.validate()?;
        let row = &mut rows[comp.channel.index()];
        let first = (comp.t_start * rate_hz).ceil() as usize;
        let last = (((comp.t_start + comp.duration) * rate_hz).ceil() as usize).min(n);
        match comp.kind {
            Waveform::Noise | Waveform::Artifact => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(k as u64);
                let normal = Normal::new(0.0, comp.amplitude.abs()).map_err(|e| PsgError::Component(e.to_string()))?;
                for v in &mut row[first..last] {
                    *v += normal.sample(&mut rng);
                }
            }
            _ => {
                for (i, v) in row.iter_mut().enumerate().take(last).skip(first) {
                    *v += comp.value(i as f64 / rate_hz);
                }
            }
        }
    }
    Ok(rows)
}

/// Builds one 100 Hz epoch from a component list.
pub fn synthesize_epoch(components: &[Component], index: usize, seed: u64) -> Result<Epoch, PsgError> {
    let rows = render_components(components, TARGET_RATE_HZ, EPOCH_SECONDS as f64, seed)?;
    Epoch::from_rows(index, rows)
}
