//! Binary checkpoint format.
//!
//! ```text
//! "PADD" | version u32
//! repeated until EOF:
//!   name_len u32 | name utf-8 | group u8 | rank u32 | dims u32 * rank | values f64 * prod(dims)
//! ```
//! All integers and floats are little-endian. The prompt is stored under
//! [`PROMPT_NAME`] with group tag [`PROMPT_TAG`].

use std::fs;
use std::path::Path;

use super::registry::{ParamGroup, ParamRegistry, Prompt};
use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::numerics::Tensor;

pub const MAGIC: &[u8; 4] = b"PADD";
pub const VERSION: u32 = 1;
pub const PROMPT_NAME: &str = "__prompt__";
pub const PROMPT_TAG: u8 = 3;

fn write_entry(w: &mut ByteWriter, name: &str, tag: u8, t: &Tensor) {
    w.u32(name.len() as u32);
    w.bytes(name.as_bytes());
    w.u8(tag);
    w.u32(t.rank() as u32);
    for &d in t.shape() {
        w.u32(d as u32);
    }
    for &v in t.data() {
        w.f64(v);
    }
}

pub fn encode_checkpoint(reg: &ParamRegistry) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(MAGIC);
    w.u32(VERSION);
    for p in reg.entries() {
        write_entry(&mut w, &p.name, p.group.tag(), &p.value);
    }
    if let Some(p) = reg.prompt() {
        write_entry(&mut w, PROMPT_NAME, PROMPT_TAG, p.values());
    }
    w.into_inner()
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ParamRegistry> {
    let mut r = ByteReader::new(bytes);
    let magic = r
        .take(4)
        .map_err(|_| Error::CorruptHeader("file shorter than the magic bytes".into()))?;
    if magic != MAGIC {
        return Err(Error::CorruptHeader(format!("bad magic {magic:?}")));
    }
    let version = r
        .u32()
        .map_err(|_| Error::CorruptHeader("missing format version".into()))?;
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let mut reg = ParamRegistry::new();
    while !r.is_empty() {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|e| Error::CorruptHeader(format!("parameter name is not utf-8: {e}")))?
            .to_owned();
        let tag = r.u8()?;
        let rank = r.u32()? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32()? as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = Vec::with_capacity(n.min(r.remaining() / 8));
        for _ in 0..n {
            data.push(r.f64()?);
        }
        let tensor = Tensor::new(dims, data)
            .map_err(|e| Error::CorruptHeader(format!("parameter `{name}`: {e}")))?;
        if name == PROMPT_NAME {
            if tag != PROMPT_TAG {
                return Err(Error::CorruptHeader(format!(
                    "prompt stored with group tag {tag}"
                )));
            }
            reg.set_prompt(Prompt::new(tensor)?);
        } else {
            let group = ParamGroup::from_tag(tag).ok_or_else(|| {
                Error::CorruptHeader(format!("unknown group tag {tag} for `{name}`"))
            })?;
            reg.push(name, tensor, group)
                .map_err(|e| Error::CorruptHeader(e.to_string()))?;
        }
    }
    Ok(reg)
}

pub fn write_checkpoint(reg: &ParamRegistry, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_checkpoint(reg))?;
    Ok(())
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ParamRegistry> {
    decode_checkpoint(&fs::read(path)?)
}
