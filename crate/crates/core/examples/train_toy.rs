//! Trains a small network for a few dozen steps on synthetic tones under
//! white noise and prints the loss curve.

use sse::corruption::{AssetLibrary, ChainGrammar, Span};
use sse::diffusion::SdeParams;
use sse::scorenet::{ScoreNet, ScoreNetConfig};
use sse::stft::FrameSpec;
use sse::training::{synthetic_tones, train, TrainConfig, TrainJob};

fn main() -> sse::Result<()> {
    let net = ScoreNet::new(ScoreNetConfig {
        base_channels: 4,
        channel_multipliers: vec![1, 2],
        ..Default::default()
    })?;
    let config = TrainConfig {
        steps: 40,
        lr: 1e-3,
        crop_frames: 32,
        log_every: 10,
        ..Default::default()
    };
    let sde = SdeParams::default();
    let grammar = ChainGrammar::white_noise(Span(0.0, 20.0));
    let assets = AssetLibrary::white_only(32000, 0);
    let job = TrainJob {
        net: &net,
        sde: &sde,
        frame: FrameSpec::default(),
        grammar: &grammar,
        assets: &assets,
        config: &config,
    };
    let report = train(&job, &synthetic_tones(16, 32000, 1.0, 0), &std::env::temp_dir().join("sse_train_toy.ckpt"), None)?;
    for (k, chunk) in report.losses.chunks(10).enumerate() {
        println!("steps {:3}..{:3} mean loss {:.4}", 10 * k, 10 * k + chunk.len(), chunk.iter().sum::<f64>() / chunk.len() as f64);
    }
    Ok(())
}
