//! Converts a 48 kHz tone to the 32 kHz processing rate and back.

use sse::audio_io::{resample, AudioBuffer};

fn main() -> sse::Result<()> {
    let x = AudioBuffer::new(
        (0..48000).map(|n| (std::f64::consts::TAU * 1000.0 * n as f64 / 48000.0).sin()).collect(),
        48000,
    );
    let down = resample(&x, 32000)?;
    let up = resample(&down, 48000)?;
    let (lo, hi) = (2000, 46000);
    let sig: f64 = x.samples[lo..hi].iter().map(|v| v * v).sum();
    let err: f64 = x.samples[lo..hi].iter().zip(&up.samples[lo..hi]).map(|(a, b)| (a - b).powi(2)).sum();
    println!("{} -> {} -> {} samples", x.len(), down.len(), up.len());
    println!("round-trip snr {:.1} dB", 10.0 * (sig / err).log10());
    Ok(())
}
