use super::{Channel, ChannelSignal, Epoch, PsgError, Recording, EPOCH_SAMPLES, TARGET_RATE_HZ};

/// Cuts a conditioned 100 Hz recording into non-overlapping 30-s epochs;
/// a trailing partial window is dropped.
pub fn segment_epochs(rec: &Recording) -> Result<Vec<Epoch>, PsgError> {
    if rec.sample_rate_hz() != TARGET_RATE_HZ {
        return Err(PsgError::Format(format!(
            "segmentation expects {TARGET_RATE_HZ} Hz, recording is at {} Hz",
            rec.sample_rate_hz()
        )));
    }
    let n_epochs = rec.len() / EPOCH_SAMPLES;
    if n_epochs == 0 {
        return Err(PsgError::EmptyRecording { seconds: rec.duration_s() });
    }
    Ok((0..n_epochs)
        .map(|i| {
            let span = i * EPOCH_SAMPLES..(i + 1) * EPOCH_SAMPLES;
            Epoch {
                index: i,
                matrix: std::array::from_fn(|c| rec.channels[c].samples[span.clone()].to_vec()),
            }
        })
        .collect())
}

/// Inverse of [`segment_epochs`] for recordings whose length is a whole
/// number of epochs.
pub fn concatenate_epochs(subject_id: &str, epochs: &[Epoch]) -> Result<Recording, PsgError> {
    let channels = Channel::ALL
        .iter()
        .map(|&c| {
            let samples = epochs.iter().flat_map(|e| e.channel(c).iter().copied()).collect();
            ChannelSignal::new(c, samples, TARGET_RATE_HZ)
        })
        .collect();
    Recording::new(subject_id, channels, TARGET_RATE_HZ)
}
