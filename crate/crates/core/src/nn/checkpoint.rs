//! SCNN parameter checkpoints.
//!
//! ```text
//! "SCNN" | version u16 = 1 | block count u32
//!        | per block: name length u32 | UTF-8 name | dims count u32 | dims u32... | f64 data
//! ```
//!
//! All integers and floats are little-endian.

use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::params::Parameterized;
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SCNN";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedBlock {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

pub fn named_blocks<T: Scalar, P: Parameterized<T>>(params: &P) -> Vec<NamedBlock> {
    params
        .param_views()
        .into_iter()
        .map(|v| NamedBlock {
            name: v.name,
            dims: v.shape,
            data: v.data.iter().map(|x| x.as_f64()).collect(),
        })
        .collect()
}

/// Copies matching blocks into `params`. Every parameter block must be
/// present with identical dimensions; extra blocks are ignored.
pub fn load_into<T: Scalar, P: Parameterized<T>>(params: &mut P, blocks: &[NamedBlock]) -> Result<()> {
    let wanted: Vec<(String, Vec<usize>)> = params
        .param_views()
        .into_iter()
        .map(|v| (v.name, v.shape))
        .collect();
    for ((name, dims), dst) in wanted.iter().zip(params.param_slices_mut()) {
        let b = blocks
            .iter()
            .find(|b| &b.name == name)
            .ok_or_else(|| Error::Format(format!("checkpoint lacks block {name}")))?;
        if &b.dims != dims {
            return Err(Error::Shape(format!(
                "block {name}: checkpoint dims {:?}, model dims {dims:?}",
                b.dims
            )));
        }
        for (d, s) in dst.iter_mut().zip(&b.data) {
            *d = T::lit(*s);
        }
    }
    Ok(())
}

pub fn encode_checkpoint(blocks: &[NamedBlock]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.write_u16::<LittleEndian>(VERSION).unwrap();
    out.write_u32::<LittleEndian>(blocks.len() as u32).unwrap();
    for b in blocks {
        out.write_u32::<LittleEndian>(b.name.len() as u32).unwrap();
        out.extend_from_slice(b.name.as_bytes());
        out.write_u32::<LittleEndian>(b.dims.len() as u32).unwrap();
        for d in &b.dims {
            out.write_u32::<LittleEndian>(*d as u32).unwrap();
        }
        for v in &b.data {
            out.write_f64::<LittleEndian>(*v).unwrap();
        }
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Vec<NamedBlock>> {
    if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(Error::Format("missing SCNN magic".into()));
    }
    let mut r = Cursor::new(&bytes[4..]);
    let trunc = |e: std::io::Error| Error::Corrupt(format!("truncated checkpoint: {e}"));
    let version = r.read_u16::<LittleEndian>().map_err(trunc)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported SCNN version {version}")));
    }
    let count = r.read_u32::<LittleEndian>().map_err(trunc)?;
    let mut blocks = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let len = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        if len > bytes.len() {
            return Err(Error::Corrupt("block name length exceeds file".into()));
        }
        let mut name = vec![0u8; len];
        r.read_exact(&mut name).map_err(trunc)?;
        let name = String::from_utf8(name).map_err(|e| Error::Corrupt(format!("block name: {e}")))?;
        let ndims = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        if ndims > 8 {
            return Err(Error::Corrupt(format!("block {name} claims {ndims} dimensions")));
        }
        let mut dims = Vec::with_capacity(ndims);
        for _ in 0..ndims {
            dims.push(r.read_u32::<LittleEndian>().map_err(trunc)? as usize);
        }
        let n: usize = dims.iter().product();
        if n.saturating_mul(8) > bytes.len() {
            return Err(Error::Corrupt(format!("block {name} larger than the file")));
        }
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            data.push(r.read_f64::<LittleEndian>().map_err(trunc)?);
        }
        blocks.push(NamedBlock { name, dims, data });
    }
    if (r.position() as usize) != bytes.len() - 4 {
        return Err(Error::Corrupt("trailing bytes after last block".into()));
    }
    Ok(blocks)
}

pub fn save_checkpoint(path: impl AsRef<Path>, blocks: &[NamedBlock]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_checkpoint(blocks)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Vec<NamedBlock>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
