//! Sidecar metadata written next to every corrupted file.
//!
//! Plain text, one `key = value` pair per line, `#` starts a comment:
//!
//! ```text
//! # sse corruption sidecar v1
//! source = clean/p001.wav
//! seed = 17
//! stages = 2
//! stage.0.type = reverb
//! stage.0.rir_id = room_small
//! stage.0.drr_db = 4.25
//! stage.1.type = noise
//! ...
//! ```

use std::collections::BTreeMap;

use super::CorruptionChain;
use crate::error::{Error, Result};

pub fn format_sidecar(source: &str, seed: u64, chain: &CorruptionChain) -> String {
    let mut out = String::from("# sse corruption sidecar v1\n");
    out.push_str(&format!("source = {source}\n"));
    out.push_str(&format!("seed = {seed}\n"));
    out.push_str(&format!("stages = {}\n", chain.stages.len()));
    for (i, stage) in chain.stages.iter().enumerate() {
        out.push_str(&format!("stage.{i}.type = {}\n", stage.kind()));
        for (k, v) in stage.params() {
            out.push_str(&format!("stage.{i}.{k} = {v}\n"));
        }
    }
    out
}

pub fn parse_sidecar(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("sidecar line {}: missing '='", n + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corruption::CorruptionStage;

    #[test]
    fn format_and_parse() {
        let chain = CorruptionChain {
            stages: vec![
                CorruptionStage::Noise {
                    noise_id: "pink".into(),
                    snr_db: 7.125,
                    stationary: true,
                },
                CorruptionStage::Codec {
                    bandwidth_hz: 4000.0,
                    bits: 8,
                },
            ],
        };
        let text = format_sidecar("a.wav", 5, &chain);
        let kv = parse_sidecar(&text).unwrap();
        assert_eq!(kv["seed"], "5");
        assert_eq!(kv["stages"], "2");
        assert_eq!(kv["stage.0.type"], "noise");
        assert_eq!(kv["stage.0.snr_db"].parse::<f64>().unwrap(), 7.125);
        assert_eq!(kv["stage.1.bits"], "8");
        assert!(parse_sidecar("garbage").is_err());
    }
}
