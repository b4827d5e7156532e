//! Flat binary spectrogram dump: four little-endian u32 (frames, bins, rate,
//! hop) followed by interleaved little-endian f32 (re, im), row-major by frame.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{Complex64, FrameSpec, Spectrogram};
use crate::error::{Error, Result};

pub fn write_dump(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let header = [
        spec.frames as u32,
        spec.bins as u32,
        spec.spec.rate,
        spec.spec.hop as u32,
    ];
    let mut bytes = Vec::with_capacity(16 + spec.data.len() * 8);
    for h in header {
        bytes.extend_from_slice(&h.to_le_bytes());
    }
    for z in &spec.data {
        bytes.extend_from_slice(&(z.re as f32).to_le_bytes());
        bytes.extend_from_slice(&(z.im as f32).to_le_bytes());
    }
    w.write_all(&bytes)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads a dump. The window length is not stored, so it is taken as
/// `2 * (bins - 1)`.
pub fn read_dump(path: impl AsRef<Path>) -> Result<Spectrogram> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 16 {
        return Err(Error::Shape("spectrogram dump shorter than header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    let (frames, bins, rate, hop) = (
        word(0) as usize,
        word(1) as usize,
        word(2),
        word(3) as usize,
    );
    if bins < 2 {
        return Err(Error::Shape(format!("dump declares {bins} bins")));
    }
    let expected = 16 + frames * bins * 8;
    if bytes.len() != expected {
        return Err(Error::Shape(format!(
            "dump has {} bytes, header implies {expected}",
            bytes.len()
        )));
    }
    let fs = FrameSpec {
        rate,
        window_len: 2 * (bins - 1),
        hop,
    };
    let f = |off: usize| f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as f64;
    let data = (0..frames * bins)
        .map(|i| Complex64::new(f(16 + 8 * i), f(20 + 8 * i)))
        .collect();
    Ok(Spectrogram {
        data,
        frames,
        bins,
        spec: fs,
        compressed: false,
    })
}
