//! Runs the causal gain control on a quiet lead-in followed by a broadband
//! buzz and prints when tracking starts and where the level settles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sse::agc::{apply_agc, compress_peaks, AgcConfig, AgcState};
use sse::audio_io::AudioBuffer;
use sse::stft::{stft, zero_low_bins, FrameSpec};

fn main() -> sse::Result<()> {
    let spec = FrameSpec::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x: Vec<f64> = (0..2 * 32000)
        .map(|n| {
            let t = n as f64 / 32000.0;
            let buzz: f64 = if t < 0.4 {
                0.0
            } else {
                (1..=75).map(|h| (std::f64::consts::TAU * 200.0 * h as f64 * t).cos()).sum::<f64>() / 300.0
            };
            let n: f64 = StandardNormal.sample(&mut rng);
            buzz + 1e-3 * n
        })
        .collect();

    let config = AgcConfig::default();
    let mut state = AgcState::new(config, spec)?;
    println!("vad needs {} frames above tau {}", state.hold_frames(), config.tau);
    let (out, gains) = apply_agc(&zero_low_bins(&stft(&x, spec)?), &mut state)?;
    let first = gains.iter().position(|&g| g != 1.0);
    println!("tracking starts at frame {first:?}");
    for k in (0..out.frames).step_by(50) {
        println!("frame {k:4} gain {:9.3} level {:.4}", gains[k], out.frame_mean_magnitude(k));
    }

    let loud = AudioBuffer::new(x.iter().map(|v| v * 4.0).collect(), 32000);
    let limited = compress_peaks(&loud, &config.compressor)?;
    let peak = |b: &AudioBuffer| 20.0 * b.samples[16000..].iter().fold(0.0f64, |m, v| m.max(v.abs())).log10();
    println!("peak after 0.5 s {:.2} dBFS -> {:.2} dBFS", peak(&loud), peak(&limited));
    Ok(())
}
