//! Runs the reverse predictor-corrector chain with the closed-form score of a
//! point-mass clean signal and shows how close it lands.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sse::diffusion::{enhance_spectrogram, GaussianPointMass, SdeParams};
use sse::stft::{Complex64, FrameSpec, Spectrogram};

fn main() -> sse::Result<()> {
    let p = SdeParams::default();
    let fill = |v: Complex64| {
        let mut s = Spectrogram::zeros(4, FrameSpec::default());
        s.data.iter_mut().for_each(|z| *z = v);
        s
    };
    let x0 = fill(Complex64::new(0.6, -0.3));
    let y = fill(Complex64::new(0.1, 0.2));
    println!("sigma(t_eps) {:.4}, sigma(T) {:.4}, {} steps", p.std(p.t_eps), p.std(p.t_horizon), p.n_steps);
    let oracle = GaussianPointMass { x0: x0.clone(), params: p };
    let out = enhance_spectrogram(&y, &oracle, &p, &mut ChaCha8Rng::seed_from_u64(0))?;
    let n = out.data.len() as f64;
    let rmse = (out.data.iter().map(|v| (v - x0.data[0]).norm_sqr()).sum::<f64>() / n).sqrt();
    let mean = out.data.iter().sum::<Complex64>() / n;
    println!("start {}, target {}, mean estimate {mean:.4}, rmse {rmse:.4}", y.data[0], x0.data[0]);
    Ok(())
}
