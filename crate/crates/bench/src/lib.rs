//! Fixtures shared by the benchmarks.

use hypnokit_core::night::standard_nights;
use hypnokit_core::psg_io::{Epoch, Recording};
use hypnokit_core::metrics::SubjectPredictions;
use hypnokit_core::{LabeledPredictions, Stage};

/// The first scripted night as 100 Hz epochs.
pub fn night_epochs() -> Vec<Epoch> {
    standard_nights()[0].render_epochs(1).expect("scripted night renders")
}

/// The first scripted night as a raw 256 Hz recording.
pub fn night_recording() -> Recording {
    standard_nights()[0].render_recording(256.0, 1).expect("scripted night renders")
}

/// `subjects` subjects of 900 epochs with a fixed pattern of errors.
pub fn predictions(subjects: usize) -> LabeledPredictions {
    let data = (0..subjects)
        .map(|s| {
            let truth: Vec<Stage> = (0..900).map(|i| Stage::ALL[(i / 30 + s) % 5]).collect();
            let pred = truth
                .iter()
                .enumerate()
                .map(|(i, &t)| if (i * 7 + s) % 11 == 0 { Stage::ALL[(t.index() + 1) % 5] } else { t })
                .collect();
            SubjectPredictions { subject_id: format!("s{s:02}"), truth, pred }
        })
        .collect();
    LabeledPredictions::new(data).expect("aligned fixture")
}
