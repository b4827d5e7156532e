//! End to end on a single file: corrupt a tone with white noise, enhance it
//! with an untrained small network through the full causal pipeline, and
//! score both against the clean reference.

use sse::cli::{si_sdr, Enhancer, RunConfig};
use sse::corruption::{apply_chain, sample_chain, AssetLibrary, ChainGrammar, Span};
use sse::scorenet::{ScoreNet, ScoreNetConfig};
use sse::training::synthetic_tones;

fn main() -> sse::Result<()> {
    let mut config = RunConfig::default();
    config.net = ScoreNetConfig {
        base_channels: 4,
        channel_multipliers: vec![1, 2],
        ..Default::default()
    };
    config.sde.n_steps = 10;
    let net = ScoreNet::new(config.net.clone())?;
    let weights = net.init_params(0).tensors;
    let enhancer = Enhancer::new(config, weights)?;
    println!("algorithmic latency {} ms", enhancer.latency_ms());

    let assets = AssetLibrary::white_only(32000, 0);
    let clean = &synthetic_tones(1, 32000, 0.5, 3)[0];
    let chain = sample_chain(&ChainGrammar::white_noise(Span::fixed(10.0)), &assets, 1)?;
    let noisy = apply_chain(clean, &chain, &assets, 1)?;
    let out = enhancer.enhance(&noisy, 0)?;
    println!("noisy    si-sdr {:7.2} dB", si_sdr(&clean.samples, &noisy.samples)?);
    println!("enhanced si-sdr {:7.2} dB", si_sdr(&clean.samples, &out.samples)?);
    println!("output peak {:.3}", out.samples.iter().fold(0.0f64, |m, v| m.max(v.abs())));
    Ok(())
}
