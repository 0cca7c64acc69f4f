//! Binary dataset format.
//!
//! ```text
//! "PDDS" | version u32 | delta u32 | n_samples u32 | split u8
//! n_samples times: label u8 (0 = real, 1 = fake) | waveform f64 * delta
//! ```
//! Little-endian throughout.

use std::fs;
use std::path::Path;

use super::dataset::{LabeledDataset, Sample, Split};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::label::Label;

pub const MAGIC: &[u8; 4] = b"PDDS";
pub const VERSION: u32 = 1;

pub fn encode_dataset(ds: &LabeledDataset) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    w.u32(ds.delta() as u32);
    w.u32(ds.len() as u32);
    w.u8(ds.split().tag());
    for s in ds.samples() {
        w.u8(s.label.index() as u8);
        for &v in &s.waveform {
            w.f64(v);
        }
    }
    w.into_inner()
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset> {
    let mut r = ByteReader::new(bytes);
    let header = |e: Error| Error::CorruptHeader(format!("incomplete header: {e}"));
    let magic = r.take(4).map_err(header)?;
    if magic != MAGIC {
        return Err(Error::CorruptHeader(format!("bad magic {magic:?}")));
    }
    let version = r.u32().map_err(header)?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let delta = r.u32().map_err(header)? as usize;
    let n = r.u32().map_err(header)? as usize;
    let tag = r.u8().map_err(header)?;
    let split = Split::from_tag(tag)
        .ok_or_else(|| Error::CorruptHeader(format!("unknown split tag {tag}")))?;
    if delta == 0 {
        return Err(Error::CorruptHeader("waveform length is zero".into()));
    }
    let mut samples = Vec::with_capacity(n.min(r.remaining() / (1 + 8 * delta)));
    for i in 0..n {
        let tag = r.u8()?;
        let label = Label::from_index(tag)
            .ok_or_else(|| Error::CorruptHeader(format!("sample {i} has unknown label {tag}")))?;
        let mut waveform = Vec::with_capacity(delta);
        for _ in 0..delta {
            waveform.push(r.f64()?);
        }
        samples.push(Sample { waveform, label });
    }
    if !r.is_empty() {
        return Err(Error::CorruptHeader(format!(
            "{} trailing bytes after {n} samples",
            r.remaining()
        )));
    }
    LabeledDataset::new(delta, split, samples)
}

pub fn write_dataset(ds: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    decode_dataset(&fs::read(path)?)
}
