//! Binary optical-flow container.
//!
//! Layout: magic `TFLW`, little-endian u32 triple (frames, height, width),
//! then per frame `H*W` little-endian f32 for `u` followed by `H*W` f32 for
//! `v`, row-major. The byte count is fully determined by the header and is
//! validated exactly.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::score::{FlowField, FlowFrame};

const MAGIC: &[u8; 4] = b"TFLW";
const HEADER_LEN: usize = 16;

pub fn write_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let (h, w) = flow.dim();
    let mut bytes =
        Vec::with_capacity(HEADER_LEN + flow.len() * h * w * 2 * std::mem::size_of::<f32>());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(flow.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&(h as u32).to_le_bytes());
    bytes.extend_from_slice(&(w as u32).to_le_bytes());
    for frame in flow.frames() {
        for channel in [&frame.u, &frame.v] {
            for v in channel.iter() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    super::atomic_write(path, &bytes)
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            path,
            format!("truncated header: expected {HEADER_LEN} bytes, found {}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(
            path,
            format!("bad magic {:?}, expected \"TFLW\"", &bytes[..4]),
        ));
    }
    let read_u32 = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let frames = read_u32(4) as usize;
    let h = read_u32(8) as usize;
    let w = read_u32(12) as usize;
    let expected = (frames as u64)
        .checked_mul(h as u64)
        .and_then(|v| v.checked_mul(w as u64))
        .and_then(|v| v.checked_mul(8))
        .and_then(|v| v.checked_add(HEADER_LEN as u64))
        .ok_or_else(|| Error::format(path, "header dimensions overflow"))?;
    if bytes.len() as u64 != expected {
        return Err(Error::format(
            path,
            format!("expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut offset = HEADER_LEN;
    let mut read_grid = || {
        let mut grid = Array2::zeros((h, w));
        for r in 0..h {
            for c in 0..w {
                grid[(r, c)] = f32::from_le_bytes(bytes[offset..offset + 4].try_into().unwrap());
                offset += 4;
            }
        }
        grid
    };
    let mut out = Vec::with_capacity(frames);
    for _ in 0..frames {
        let u = read_grid();
        let v = read_grid();
        out.push(FlowFrame { u, v });
    }
    FlowField::new(out)
}
