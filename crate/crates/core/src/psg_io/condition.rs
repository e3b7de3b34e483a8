use super::{ChannelKind, ChannelSignal, ConditioningConfig, PsgError, Recording};
use crate::dsp::{butter_bandpass, butter_highpass, filtfilt, iir_notch, Sos};

const MIN_SECONDS: f64 = 2.0;

fn band_filter(kind: ChannelKind, cfg: &ConditioningConfig, fs: f64) -> Result<Sos, PsgError> {
    let (lo, hi) = match kind {
        ChannelKind::Eeg | ChannelKind::Eog => cfg.eeg_eog_band_hz,
        ChannelKind::Emg => cfg.emg_band_hz,
    };
    let design = if hi >= fs / 2.0 {
        // Upper edge at or past Nyquist: only the high-pass half applies.
        butter_highpass(cfg.filter_order, lo, fs)
    } else {
        butter_bandpass(cfg.filter_order, lo, hi, fs)
    };
    design.map_err(|e| PsgError::Config(e.to_string()))
}

/// Zero-phase band-pass (per channel kind) followed by a zero-phase notch,
/// at the signal's own rate.
pub fn condition_channel(
    signal: &ChannelSignal,
    cfg: &ConditioningConfig,
) -> Result<ChannelSignal, PsgError> {
    let fs = signal.sample_rate_hz;
    let seconds = signal.duration_s();
    if seconds < MIN_SECONDS {
        return Err(PsgError::SignalTooShort { seconds, min_seconds: MIN_SECONDS });
    }
    cfg.validate(fs)?;
    let band = band_filter(signal.kind(), cfg, fs)?;
    let notch = iir_notch(cfg.notch_hz, cfg.notch_q, fs).map_err(|e| PsgError::Config(e.to_string()))?;

    let too_short = || PsgError::SignalTooShort { seconds, min_seconds: MIN_SECONDS };
    let banded = filtfilt(&band, &signal.samples).ok_or_else(too_short)?;
    let samples = filtfilt(&notch, &banded).ok_or_else(too_short)?;
    Ok(ChannelSignal { channel: signal.channel, samples, sample_rate_hz: fs })
}

/// Conditions all six channels in parallel; rate is unchanged.
pub fn condition_recording(rec: &Recording, cfg: &ConditioningConfig) -> Result<Recording, PsgError> {
    use rayon::prelude::*;
    let channels = rec
        .channels
        .par_iter()
        .map(|c| condition_channel(c, cfg))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Recording { subject_id: rec.subject_id.clone(), channels, source_rate_hz: rec.source_rate_hz })
}
