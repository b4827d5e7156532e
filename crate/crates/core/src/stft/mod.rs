//! Streaming STFT analysis/synthesis with a fixed 32 kHz / 638 / 160 frame
//! geometry, amplitude compression and low-bin zeroing.

mod dump;
mod frame;
mod spectrogram;
mod stream;

pub use dump::{read_dump, write_dump};
pub use frame::{FrameSpec, LATENCY_LIMIT_MS};
pub use spectrogram::{
    compress_amplitude, expand_amplitude, zero_low_bins, AmplitudeTransform, Spectrogram,
    ZEROED_LOW_BINS,
};
pub use stream::{istft, stft, IstftStream, StftStream};

pub use rustfft::num_complex::Complex64;
