//! Binary checkpoint files.
//!
//! ```text
//! sse-checkpoint v1 <config digest>\n
//! repeated until EOF:
//!   u32 name_len | name bytes | u32 rank | rank x u32 dims | f32 payload
//! ```
//!
//! All integers and floats are little-endian. EMA tensors carry an
//! `ema/` name prefix.

use std::path::Path;

use super::model::{ParamTensors, ScoreNet, ScoreNetParams};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "sse-checkpoint";
const EMA_PREFIX: &str = "ema/";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&u32::try_from(v).expect("fits in u32").to_le_bytes());
}

fn put_tensor(out: &mut Vec<u8>, name: &str, t: &Tensor) {
    put_u32(out, name.len());
    out.extend_from_slice(name.as_bytes());
    put_u32(out, t.shape().len());
    for &d in t.shape() {
        put_u32(out, d);
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

pub fn encode_checkpoint(digest: &str, params: &ScoreNetParams) -> Vec<u8> {
    let mut out = format!("{MAGIC} v{CHECKPOINT_VERSION} {digest}\n").into_bytes();
    for (name, t) in &params.tensors {
        put_tensor(&mut out, name, t);
    }
    for (name, t) in &params.ema {
        put_tensor(&mut out, &format!("{EMA_PREFIX}{name}"), t);
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as usize)
    }
}

/// Returns the stored config digest and parameters.
pub fn decode_checkpoint(bytes: &[u8]) -> Result<(String, ScoreNetParams)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Checkpoint("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?;
    let mut parts = header.split(' ');
    if parts.next() != Some(MAGIC) {
        return Err(Error::Checkpoint("not an sse checkpoint".into()));
    }
    let version = parts.next().unwrap_or_default();
    if version != format!("v{CHECKPOINT_VERSION}") {
        return Err(Error::Checkpoint(format!("unsupported version {version:?}")));
    }
    let digest = parts
        .next()
        .filter(|d| !d.is_empty())
        .ok_or_else(|| Error::Checkpoint("missing config digest".into()))?
        .to_string();

    let mut r = Reader { buf: bytes, pos: nl + 1 };
    let mut tensors = ParamTensors::new();
    let mut ema = ParamTensors::new();
    while r.pos < bytes.len() {
        let len = r.u32()?;
        let name = String::from_utf8(r.take(len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()?;
        if rank > 8 {
            return Err(Error::Checkpoint(format!("{name}: rank {rank}")));
        }
        let dims = (0..rank).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
        let count = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let count = count.ok_or_else(|| Error::Checkpoint(format!("{name}: dims overflow")))?;
        let payload = r.take(count.checked_mul(4).unwrap_or(usize::MAX))?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let t = Tensor::from_vec(&dims, data);
        let slot = match name.strip_prefix(EMA_PREFIX) {
            Some(base) => ema.insert(base.to_string(), t),
            None => tensors.insert(name.clone(), t),
        };
        if slot.is_some() {
            return Err(Error::Checkpoint(format!("duplicate tensor {name}")));
        }
    }
    Ok((digest, ScoreNetParams { tensors, ema }))
}

pub fn save_checkpoint(path: &Path, net: &ScoreNet, params: &ScoreNetParams) -> Result<()> {
    let bytes = encode_checkpoint(&net.config().digest(), params);
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Loads and checks a checkpoint against `net`.
pub fn load_checkpoint(path: &Path, net: &ScoreNet) -> Result<ScoreNetParams> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (digest, params) = decode_checkpoint(&bytes)?;
    let want = net.config().digest();
    if digest != want {
        return Err(Error::Checkpoint(format!(
            "{}: config digest {digest} does not match net config {want}",
            path.display()
        )));
    }
    net.check_params(&params.tensors)?;
    net.check_params(&params.ema)?;
    Ok(params)
}
