//! Streams a chirp through the analysis and synthesis filterbanks and reports
//! the frame geometry and reconstruction error.

use sse::stft::{compress_amplitude, expand_amplitude, AmplitudeTransform, FrameSpec, IstftStream, StftStream};

fn main() -> sse::Result<()> {
    let spec = FrameSpec::default();
    println!(
        "rate {} Hz, window {}, hop {}, {} bins, latency {} ms",
        spec.rate,
        spec.window_len,
        spec.hop,
        spec.bins(),
        spec.latency_ms()
    );

    let x: Vec<f64> = (0..spec.rate as usize)
        .map(|n| {
            let t = n as f64 / spec.rate as f64;
            (std::f64::consts::TAU * (200.0 + 3000.0 * t) * t).sin()
        })
        .collect();

    let mut analysis = StftStream::new(spec)?;
    let mut synthesis = IstftStream::new(spec)?;
    let mut y = Vec::new();
    for block in x.chunks(512) {
        for frame in analysis.push(block) {
            y.extend(synthesis.push(&frame)?);
        }
    }
    y.extend(synthesis.finish());

    let lo = spec.window_len;
    let hi = x.len().min(y.len()) - spec.window_len;
    let err = x[lo..hi].iter().zip(&y[lo..hi]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("interior max abs error {err:.2e}");

    let full = sse::stft::stft(&x, spec)?;
    let t = AmplitudeTransform::default();
    let back = expand_amplitude(&compress_amplitude(&full, &t)?, &t)?;
    let worst = full
        .data
        .iter()
        .zip(&back.data)
        .map(|(a, b)| (a - b).norm() / a.norm().max(1e-12))
        .fold(0.0, f64::max);
    println!("amplitude transform |z|^{} * {}: worst relative error {worst:.2e}", t.exponent, t.factor);
    Ok(())
}
