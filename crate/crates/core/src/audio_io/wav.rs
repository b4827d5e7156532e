use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use super::AudioBuffer;
use crate::error::{Error, Result};

const PCM16_SCALE: f64 = 32768.0;

fn map_hound(path: &Path, err: hound::Error) -> Error {
    match err {
        hound::Error::IoError(e) => Error::io(path, e),
        hound::Error::FormatError(detail) => Error::WavFormat {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        },
        hound::Error::Unsupported => Error::WavHeader {
            path: path.to_path_buf(),
            field: "audio_format",
            detail: "only PCM and IEEE float encodings are supported".into(),
        },
        hound::Error::InvalidSampleFormat => Error::WavHeader {
            path: path.to_path_buf(),
            field: "bits_per_sample",
            detail: "sample format does not match declared bit depth".into(),
        },
        hound::Error::UnfinishedSample => Error::WavFormat {
            path: path.to_path_buf(),
            detail: "data chunk ends inside a sample".into(),
        },
        hound::Error::TooWide => Error::WavHeader {
            path: path.to_path_buf(),
            field: "bits_per_sample",
            detail: "sample width too large".into(),
        },
    }
}

/// Reads PCM16, PCM24 or float32 WAV, downmixing to mono by channel mean.
pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioBuffer> {
    let path = path.as_ref();
    let mut reader = WavReader::open(path).map_err(|e| map_hound(path, e))?;
    let spec = reader.spec();
    let header_err = |field: &'static str, detail: String| Error::WavHeader {
        path: path.to_path_buf(),
        field,
        detail,
    };
    if spec.channels == 0 {
        return Err(header_err("num_channels", "zero channels".into()));
    }
    if spec.sample_rate == 0 {
        return Err(header_err("sample_rate", "zero sample rate".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) | (SampleFormat::Int, 24) => {
            let scale = (1u32 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(|e| map_hound(path, e))?
        }
        (SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(|e| map_hound(path, e))?,
        (fmt, bits) => {
            return Err(header_err(
                "bits_per_sample",
                format!("{bits}-bit {fmt:?} (expected 16/24-bit PCM or 32-bit float)"),
            ))
        }
    };
    let channels = spec.channels as usize;
    let samples = interleaved
        .chunks_exact(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    Ok(AudioBuffer::new(samples, spec.sample_rate))
}

/// Writes mono PCM16, saturating anything outside [-1, 1].
pub fn write_wav(path: impl AsRef<Path>, buffer: &AudioBuffer) -> Result<()> {
    let path = path.as_ref();
    if !buffer.is_finite() {
        return Err(Error::NonFinite(format!(
            "cannot write non-finite samples to {}",
            path.display()
        )));
    }
    let spec = WavSpec {
        channels: 1,
        sample_rate: buffer.rate,
        bits_per_sample: 16,
        sample_format: SampleFormat::Int,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| map_hound(path, e))?;
    for &s in &buffer.samples {
        let v = (s * PCM16_SCALE).round().clamp(-32768.0, 32767.0) as i16;
        writer.write_sample(v).map_err(|e| map_hound(path, e))?;
    }
    writer.finalize().map_err(|e| map_hound(path, e))
}
