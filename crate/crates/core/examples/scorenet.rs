//! Builds the default score network, prints its layout and checks that
//! perturbing future frames leaves past outputs untouched.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sse::scorenet::{ScoreNet, ScoreNetConfig};
use sse::stft::{Complex64, FrameSpec, Spectrogram};

fn main() -> sse::Result<()> {
    let net = ScoreNet::new(ScoreNetConfig::default())?;
    println!("{}", net.describe());
    println!("{} parameters", net.param_count());

    let params = sse::cli::jittered_params(&net, 0, 0.1);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut random = |frames| {
        let mut s = Spectrogram::zeros(frames, FrameSpec::default());
        s.compressed = true;
        s.data.iter_mut().for_each(|z| *z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        s
    };
    let (x, y) = (random(24), random(24));
    let full = net.forward(&params, &x, &y, 0.5)?;
    let (mut x2, y2) = (x.clone(), y.clone());
    x2.data[16 * 320..].iter_mut().for_each(|z| *z *= -3.0);
    let edited = net.forward(&params, &x2, &y2, 0.5)?;
    let same = full.data[..16 * 320] == edited.data[..16 * 320];
    println!("frames 0..16 unchanged after editing frames 16..24: {same}");
    Ok(())
}
