//! Grayscale frame sequences as binary PGM (P5, maxval 255) files named
//! `frame_%06d.pgm`, numbered consecutively from 000000.

use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// A grayscale frame image.
pub type GrayFrame = Array2<u8>;

pub fn write_frames(dir: &Path, frames: &[Array2<u8>]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (i, frame) in frames.iter().enumerate() {
        let (h, w) = frame.dim();
        let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
        bytes.extend(frame.iter());
        super::atomic_write(&dir.join(frame_name(i)), &bytes)?;
    }
    Ok(())
}

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:06}.pgm")
}

pub fn load_frames(dir: &Path) -> Result<Vec<Array2<u8>>> {
    let mut indices = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if let Some(idx) = parse_frame_name(&name) {
            indices.push(idx);
        }
    }
    if indices.is_empty() {
        return Err(Error::format(dir, "no frame_%06d.pgm files found"));
    }
    indices.sort_unstable();
    for (expected, &actual) in indices.iter().enumerate() {
        if actual != expected {
            return Err(Error::format(
                dir,
                format!("gap in frame numbering: missing {}", frame_name(expected)),
            ));
        }
    }
    indices
        .iter()
        .map(|&i| load_pgm(&dir.join(frame_name(i))))
        .collect()
}

fn parse_frame_name(name: &str) -> Option<usize> {
    let rest = name.strip_prefix("frame_")?.strip_suffix(".pgm")?;
    if rest.len() != 6 || !rest.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    rest.parse().ok()
}

pub fn load_pgm(path: &Path) -> Result<Array2<u8>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0usize;
    let mut next_token = |what: &str| -> Result<&[u8]> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            return Err(Error::format(path, "PGM comments are not supported"));
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::format(path, format!("missing PGM {what}")));
        }
        Ok(&bytes[start..pos])
    };

    let magic = next_token("magic")?;
    if magic != b"P5" {
        return Err(Error::format(
            path,
            format!(
                "expected binary PGM magic P5, found {:?}",
                String::from_utf8_lossy(magic)
            ),
        ));
    }
    let mut read_int = |what: &str| -> Result<usize> {
        let tok = next_token(what)?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(path, format!("invalid PGM {what}")))
    };
    let w = read_int("width")?;
    let h = read_int("height")?;
    let maxval = read_int("maxval")?;
    if maxval != 255 {
        return Err(Error::format(path, format!("maxval must be 255, found {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format(path, "missing raster separator"));
    }
    pos += 1;
    let expected = h
        .checked_mul(w)
        .ok_or_else(|| Error::format(path, "PGM dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() != expected {
        return Err(Error::format(
            path,
            format!("raster has {} bytes, expected {expected}", raster.len()),
        ));
    }
    Array2::from_shape_vec((h, w), raster.to_vec())
        .map_err(|e| Error::format(path, e.to_string()))
}
