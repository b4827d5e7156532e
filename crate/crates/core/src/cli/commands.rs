use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::metrics::{log_spectral_distance, si_sdr};
use super::pipeline::Enhancer;
use super::RunConfig;
use crate::audio_io::{read_wav, resample, write_wav, AudioBuffer, PROCESSING_RATE};
use crate::corruption::{apply_chain, format_sidecar, read_manifest, sample_chain, AssetLibrary};
use crate::error::{Error, Result};
use crate::scorenet::ScoreNet;
use crate::training::{train, TrainJob, TrainReport};

#[derive(Debug, Default)]
pub struct CorruptOutcome {
    pub written: Vec<PathBuf>,
    pub failed: Vec<(PathBuf, Error)>,
}

fn corrupt_one(
    src: &Path,
    dst: &Path,
    config: &RunConfig,
    assets: &AssetLibrary,
    seed: u64,
) -> Result<()> {
    let input = read_wav(src)?;
    let x = resample(&input, PROCESSING_RATE)?;
    let chain = sample_chain(&config.corruption.grammar, assets, seed)?;
    let y = apply_chain(&x, &chain, assets, seed)?;
    let mut y = resample(&y, input.rate)?;
    y.samples.resize(input.len(), 0.0);
    write_wav(dst, &y)?;
    let sidecar = dst.with_extension("txt");
    let text = format_sidecar(&src.display().to_string(), seed, &chain);
    std::fs::write(&sidecar, text).map_err(|e| Error::io(&sidecar, e))
}

/// Writes `<name>.wav` and a `<name>.txt` sidecar per manifest entry. File
/// `i` uses the `i`-th seed drawn from `seed`, so one bad file does not shift
/// the others.
pub fn cmd_corrupt(manifest: &Path, out_dir: &Path, config: &RunConfig, seed: u64) -> Result<CorruptOutcome> {
    config.corruption.grammar.validate(None)?;
    let inputs = read_manifest(manifest)?;
    if inputs.is_empty() {
        return Err(Error::Empty("manifest"));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let assets = config.corruption.assets(PROCESSING_RATE)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(4);
    let mut seen = BTreeSet::new();
    let mut outcome = CorruptOutcome::default();
    for src in inputs {
        let file_seed: u64 = rng.random();
        let name = src.file_name().map(|n| n.to_owned()).unwrap_or_default();
        let result = if !seen.insert(name.clone()) {
            Err(Error::InvalidParam(format!("duplicate output name {name:?}")))
        } else {
            let dst = out_dir.join(&name).with_extension("wav");
            corrupt_one(&src, &dst, config, &assets, file_seed).map(|()| dst)
        };
        match result {
            Ok(dst) => outcome.written.push(dst),
            Err(e) => {
                log::error!("{}: {e}", src.display());
                outcome.failed.push((src, e));
            }
        }
    }
    Ok(outcome)
}

fn load_clean(manifest: &Path) -> Result<Vec<AudioBuffer>> {
    read_manifest(manifest)?
        .iter()
        .map(|p| resample(&read_wav(p)?, PROCESSING_RATE))
        .collect()
}

/// Trains on the manifest's clean files; `seed` overrides `train.seed`.
pub fn cmd_train(
    manifest: &Path,
    config: &RunConfig,
    out: &Path,
    seed: Option<u64>,
    metrics: Option<&Path>,
) -> Result<TrainReport> {
    let mut config = config.clone();
    if let Some(s) = seed {
        config.train.seed = s;
    }
    config.validate()?;
    let clean = load_clean(manifest)?;
    let net = ScoreNet::new(config.net.clone())?;
    log::info!("{}", net.describe());
    let assets = config.corruption.assets(PROCESSING_RATE)?;
    let job = TrainJob {
        net: &net,
        sde: &config.sde,
        frame: config.io.frame,
        grammar: &config.corruption.grammar,
        assets: &assets,
        config: &config.train,
    };
    train(&job, &clean, out, metrics)
}

/// Returns the algorithmic latency in ms.
pub fn cmd_enhance(input: &Path, out: &Path, checkpoint: &Path, config: &RunConfig, seed: u64) -> Result<f64> {
    let enhancer = Enhancer::from_checkpoint(config.clone(), checkpoint)?;
    let audio = read_wav(input)?;
    let enhanced = enhancer.enhance(&audio, seed)?;
    write_wav(out, &enhanced)?;
    Ok(enhancer.latency_ms())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub name: String,
    pub sisdr_db: f64,
    pub lsd_db: f64,
}

fn wav_names(dir: &Path) -> Result<BTreeSet<String>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut names = BTreeSet::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            if let Some(n) = path.file_name().and_then(|n| n.to_str()) {
                names.insert(n.to_string());
            }
        }
    }
    Ok(names)
}

fn eval_pair(reference: &Path, degraded: &Path, config: &RunConfig) -> Result<(f64, f64)> {
    let r = resample(&read_wav(reference)?, PROCESSING_RATE)?;
    let d = resample(&read_wav(degraded)?, PROCESSING_RATE)?;
    Ok((
        si_sdr(&r.samples, &d.samples)?,
        log_spectral_distance(&r.samples, &d.samples, config.io.frame)?,
    ))
}

pub fn format_report(rows: &[EvalRow], unpaired: &[String]) -> String {
    let width = rows.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut out = format!("{:<width$}  {:>9}  {:>8}\n", "name", "sisdr_db", "lsd_db");
    for r in rows {
        let _ = writeln!(out, "{:<width$}  {:>9.3}  {:>8.3}", r.name, r.sisdr_db, r.lsd_db);
    }
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "file {} sisdr {:.4} lsd {:.4}", r.name, r.sisdr_db, r.lsd_db);
    }
    for n in unpaired {
        let _ = writeln!(out, "unpaired {n}");
    }
    out
}

/// Pairs WAVs by file name. The report is written even when some files are
/// unpaired; that case then returns an error naming them.
pub fn cmd_eval(ref_dir: &Path, deg_dir: &Path, report: &Path, config: &RunConfig) -> Result<Vec<EvalRow>> {
    let refs = wav_names(ref_dir)?;
    let degs = wav_names(deg_dir)?;
    let unpaired: Vec<String> = refs.symmetric_difference(&degs).cloned().collect();
    let rows = refs
        .intersection(&degs)
        .map(|name| {
            let (sisdr_db, lsd_db) = eval_pair(&ref_dir.join(name), &deg_dir.join(name), config)?;
            Ok(EvalRow {
                name: name.clone(),
                sisdr_db,
                lsd_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let text = format_report(&rows, &unpaired);
    std::fs::write(report, text).map_err(|e| Error::io(report, e))?;
    if !unpaired.is_empty() {
        return Err(Error::InvalidParam(format!("unpaired files: {}", unpaired.join(", "))));
    }
    Ok(rows)
}
