use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sse::audio_io::AudioBuffer;
use sse::corruption::stages::{add_noise, gilbert_mask};
use sse::corruption::{apply_chain, sample_chain, AssetLibrary, ChainGrammar, StageTemplate};
use sse::training::synthetic_tones;

fn kinds(stages: &[StageTemplate]) -> Vec<&'static str> {
    stages
        .iter()
        .map(|s| match s {
            StageTemplate::Reverb { .. } => "reverb",
            StageTemplate::Noise { .. } => "noise",
            StageTemplate::Clip { .. } => "clip",
            StageTemplate::GainReduce { .. } => "gain_reduce",
            StageTemplate::PacketLoss { .. } => "packet_loss",
            StageTemplate::Codec { .. } => "codec",
        })
        .collect()
}

#[test]
fn candidate_frequencies_follow_weights() {
    let g = ChainGrammar::default();
    let lib = AssetLibrary::synthetic(32000, 0);
    let index: BTreeMap<Vec<&str>, usize> =
        g.candidates.iter().enumerate().map(|(i, c)| (kinds(&c.stages), i)).collect();
    assert_eq!(index.len(), g.candidates.len());
    let draws = 7000;
    let mut counts = vec![0usize; g.candidates.len()];
    for seed in 0..draws {
        let chain = sample_chain(&g, &lib, seed).unwrap();
        let k: Vec<&str> = chain.stages.iter().map(|s| s.kind()).collect();
        counts[index[&k]] += 1;
    }
    for (c, cand) in counts.iter().zip(&g.candidates) {
        let f = *c as f64 / draws as f64;
        // binomial std at p = 1/7 over 7000 draws is about 0.0042
        assert!((f - cand.weight).abs() < 0.02, "{counts:?}");
    }
}

#[test]
fn add_noise_hits_requested_snr() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = &synthetic_tones(1, 32000, 1.0, 4)[0];
    let noise = AudioBuffer::new((0..20000).map(|_| rng.sample(StandardNormal)).collect(), 32000);
    for snr in [-5.0, 0.0, 7.5, 20.0, 40.0] {
        let y = add_noise(x, &noise, snr).unwrap();
        let n: Vec<f64> = y.samples.iter().zip(&x.samples).map(|(a, b)| a - b).collect();
        let pn = n.iter().map(|v| v * v).sum::<f64>();
        let got = 10.0 * (x.power() * x.len() as f64 / pn).log10();
        assert!((got - snr).abs() <= 0.01, "{snr}: {got}");
    }
}

#[test]
fn gilbert_loss_rate_and_bursts() {
    for (i, &(rate, burst)) in [(0.05, 1.0), (0.1, 2.0), (0.3, 3.0), (0.6, 1.2)].iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let mask = gilbert_mask(100_000, rate, burst, &mut rng);
        let lost = mask.iter().filter(|&&l| l).count() as f64 / mask.len() as f64;
        assert!((lost - rate).abs() <= 0.01, "rate {rate}: {lost}");
        let bursts = mask.windows(2).filter(|w| !w[0] && w[1]).count().max(1);
        let mean_burst = mask.iter().filter(|&&l| l).count() as f64 / bursts as f64;
        let (_, q) = sse::corruption::stages::gilbert_transitions(rate, burst);
        assert!((mean_burst - 1.0 / q).abs() / (1.0 / q) < 0.05, "burst {burst}: {mean_burst}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chains_are_length_preserving_and_deterministic(seed in 0u64..10_000, len in 800usize..20_000) {
        let lib = AssetLibrary::synthetic(32000, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = AudioBuffer::new((0..len).map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal)).collect(), 32000);
        let chain = sample_chain(&ChainGrammar::default(), &lib, seed).unwrap();
        let a = apply_chain(&x, &chain, &lib, seed).unwrap();
        let b = apply_chain(&x, &chain, &lib, seed).unwrap();
        prop_assert_eq!(a.len(), x.len());
        prop_assert!(a.is_finite());
        prop_assert_eq!(a, b);
    }
}
