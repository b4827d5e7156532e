//! Scores a tone against noisy copies at several SNRs with SI-SDR and
//! log-spectral distance. A pure tone leaves most bins nearly empty, so
//! the distance is dominated by the noise that fills them.

use sse::audio_io::AudioBuffer;
use sse::cli::{log_spectral_distance, si_sdr};
use sse::corruption::stages::add_noise;
use sse::stft::FrameSpec;
use sse::training::synthetic_tones;

fn main() -> sse::Result<()> {
    let clean = &synthetic_tones(1, 32000, 1.0, 2)[0];
    let noise = AudioBuffer::new(
        (0..32000).map(|n| ((n * 7919 % 32003) as f64 / 16001.5) - 1.0).collect(),
        32000,
    );
    for snr in [0.0, 10.0, 20.0, 40.0] {
        let y = add_noise(clean, &noise, snr)?;
        println!(
            "snr {snr:4.0} dB: si-sdr {:7.2} dB, lsd {:6.3} dB",
            si_sdr(&clean.samples, &y.samples)?,
            log_spectral_distance(&clean.samples, &y.samples, FrameSpec::default())?
        );
    }
    Ok(())
}
