//! Samples a few corruption chains from the default grammar and applies them
//! to a synthetic tone.

use sse::corruption::{apply_chain, format_sidecar, sample_chain, AssetLibrary, ChainGrammar};
use sse::training::synthetic_tones;

fn main() -> sse::Result<()> {
    let assets = AssetLibrary::synthetic(32000, 0);
    let grammar = ChainGrammar::default();
    let clean = &synthetic_tones(1, 32000, 1.0, 5)[0];
    for seed in 0..4 {
        let chain = sample_chain(&grammar, &assets, seed)?;
        let y = apply_chain(clean, &chain, &assets, seed)?;
        let kinds: Vec<&str> = chain.stages.iter().map(|s| s.kind()).collect();
        println!("seed {seed}: {} -> rms {:.4}", kinds.join(" > "), y.power().sqrt());
        print!("{}", format_sidecar("tone", seed, &chain));
    }
    Ok(())
}
