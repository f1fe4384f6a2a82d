//! Binary feature dumps.
//!
//! ```text
//! magic        b"SEPX"
//! version      u32 (= 1)
//! domain       u8    0 fft, 1 log-fft, 2 fbank, 3 log-fbank
//! frame_hop    u32
//! window_len   u32
//! sample_rate  u32
//! mel_bands    u32   0 for fft domains
//! gain         f32   analysis amplitude gain
//! frames       u32
//! dims         u32
//! values       f32 × frames × dims, row-major by frame
//! ```
//! All fields little-endian.

use std::path::Path;

use ndarray::Array2;

use super::{Domain, FeatureMatrix, FeatureMeta};
use crate::checkpoint::{push_f32, Reader};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SEPX";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DumpHeader {
    pub version: u32,
    pub domain: Domain,
    pub meta: FeatureMeta,
    pub frames: usize,
    pub dims: usize,
}

pub fn to_bytes(f: &FeatureMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(37 + 4 * f.values.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(f.domain.tag());
    for v in [
        f.meta.frame_hop as u32,
        f.meta.window_len as u32,
        f.meta.sample_rate,
        f.meta.mel_bands.unwrap_or(0) as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(f.meta.scale as f32).to_le_bytes());
    buf.extend_from_slice(&(f.frames() as u32).to_le_bytes());
    buf.extend_from_slice(&(f.dims() as u32).to_le_bytes());
    push_f32(&mut buf, f.values.iter());
    buf
}

fn read_header(r: &mut Reader<'_>) -> Result<DumpHeader> {
    if r.take(4)? != MAGIC {
        return Err(Error::Format("not a SEPX feature dump (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported feature dump version {version}")));
    }
    let domain = Domain::from_tag(r.u8()?)?;
    let frame_hop = r.u32()? as usize;
    let window_len = r.u32()? as usize;
    let sample_rate = r.u32()?;
    let mel = r.u32()? as usize;
    let scale = r.f32s(1)?[0];
    let frames = r.u32()? as usize;
    let dims = r.u32()? as usize;
    if domain.is_mel() != (mel > 0) {
        return Err(Error::Format(format!(
            "{domain} dump with mel band count {mel}"
        )));
    }
    if domain.is_mel() && mel != dims {
        return Err(Error::Format(format!("{mel} mel bands but {dims} dims")));
    }
    Ok(DumpHeader {
        version,
        domain,
        meta: FeatureMeta {
            frame_hop,
            window_len,
            sample_rate,
            mel_bands: (mel > 0).then_some(mel),
            scale,
        },
        frames,
        dims,
    })
}

pub fn header_from_bytes(bytes: &[u8]) -> Result<DumpHeader> {
    read_header(&mut Reader { bytes, pos: 0 })
}

pub fn from_bytes(bytes: &[u8]) -> Result<FeatureMatrix> {
    let mut r = Reader { bytes, pos: 0 };
    let h = read_header(&mut r)?;
    let n = h
        .frames
        .checked_mul(h.dims)
        .ok_or_else(|| Error::Format("size overflow".into()))?;
    let vals = r.f32s(n)?;
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after feature values".into()));
    }
    Ok(FeatureMatrix {
        values: Array2::from_shape_vec((h.frames, h.dims), vals).expect("length checked"),
        domain: h.domain,
        meta: h.meta,
    })
}

pub fn write(f: &FeatureMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(f)).map_err(|e| Error::io(path, e))
}

pub fn read(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
