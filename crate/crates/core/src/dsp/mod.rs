//! Signal-processing primitives shared by conditioning, descriptors and the
//! event detectors.

mod filter;
mod psd;

pub use filter::{
    butter_bandpass, butter_highpass, butter_lowpass, filtfilt, iir_notch, sosfilt, sosfilt_zi,
    Biquad, FilterDesignError, Sos,
};
pub use psd::{hann_window, periodogram, Spectrum};
