//! HOG descriptors for appearance similarity.
//!
//! Patches are bilinearly resampled to 64x64, gradients are taken with
//! centered differences (replicated borders), and magnitudes are accumulated
//! into 9 unsigned orientation bins over 8x8-pixel cells. 2x2-cell blocks with
//! single-cell stride are L2-normalized (epsilon 1e-6) and concatenated,
//! giving 9 * 4 * 49 = 1764 values for a 64x64 patch.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const PATCH_SIZE: usize = 64;
pub const CELL_SIZE: usize = 8;
pub const ORIENTATION_BINS: usize = 9;
const BLOCK_EPSILON: f64 = 1e-6;

/// Bilinearly resamples the box region of a grayscale frame to a
/// `PATCH_SIZE` x `PATCH_SIZE` patch. Samples outside the frame clamp to the
/// border. Errors on a degenerate box.
pub fn resample_patch(frame: &Array2<u8>, b: &BoundingBox) -> Result<Array2<f64>> {
    if b.w <= 0.0 || b.h <= 0.0 {
        return Err(Error::invalid(format!(
            "cannot extract an empty patch ({} x {}) at frame {}",
            b.w, b.h, b.frame
        )));
    }
    let (h, w) = frame.dim();
    if h == 0 || w == 0 {
        return Err(Error::invalid("cannot sample from an empty frame"));
    }
    let mut out = Array2::zeros((PATCH_SIZE, PATCH_SIZE));
    let n = PATCH_SIZE as f64;
    for i in 0..PATCH_SIZE {
        let sy = (b.y + (i as f64 + 0.5) * b.h / n - 0.5).clamp(0.0, (h - 1) as f64);
        let r0 = sy.floor() as usize;
        let r1 = (r0 + 1).min(h - 1);
        let ty = sy - r0 as f64;
        for j in 0..PATCH_SIZE {
            let sx = (b.x + (j as f64 + 0.5) * b.w / n - 0.5).clamp(0.0, (w - 1) as f64);
            let c0 = sx.floor() as usize;
            let c1 = (c0 + 1).min(w - 1);
            let tx = sx - c0 as f64;
            let top = frame[(r0, c0)] as f64 * (1.0 - tx) + frame[(r0, c1)] as f64 * tx;
            let bot = frame[(r1, c0)] as f64 * (1.0 - tx) + frame[(r1, c1)] as f64 * tx;
            out[(i, j)] = top * (1.0 - ty) + bot * ty;
        }
    }
    Ok(out)
}

/// HOG descriptor of a resampled patch. The patch height and width must be
/// multiples of the cell size with at least two cells per axis.
pub fn hog_descriptor(patch: &Array2<f64>) -> Result<Vec<f64>> {
    let (h, w) = patch.dim();
    if h == 0 || w == 0 {
        return Err(Error::invalid("hog descriptor of an empty patch"));
    }
    if h % CELL_SIZE != 0 || w % CELL_SIZE != 0 || h < 2 * CELL_SIZE || w < 2 * CELL_SIZE {
        return Err(Error::invalid(format!(
            "patch {h}x{w} is not a multiple of the {CELL_SIZE}-pixel cell grid"
        )));
    }
    let cells_y = h / CELL_SIZE;
    let cells_x = w / CELL_SIZE;

    // Per-cell orientation histograms; hard assignment into unsigned bins.
    let mut hist = vec![0.0f64; cells_y * cells_x * ORIENTATION_BINS];
    let bin_width = std::f64::consts::PI / ORIENTATION_BINS as f64;
    for r in 0..h {
        for c in 0..w {
            let gx = patch[(r, c.min(w - 2) + 1)] - patch[(r, c.max(1) - 1)];
            let gy = patch[(r.min(h - 2) + 1, c)] - patch[(r.max(1) - 1, c)];
            let mag = gx.hypot(gy);
            if mag == 0.0 {
                continue;
            }
            let mut theta = gy.atan2(gx);
            if theta < 0.0 {
                theta += std::f64::consts::PI;
            }
            if theta >= std::f64::consts::PI {
                theta = 0.0;
            }
            let bin = ((theta / bin_width) as usize).min(ORIENTATION_BINS - 1);
            let cell = (r / CELL_SIZE) * cells_x + c / CELL_SIZE;
            hist[cell * ORIENTATION_BINS + bin] += mag;
        }
    }

    // 2x2-cell blocks, stride one cell, L2 normalization per block.
    let mut descriptor =
        Vec::with_capacity((cells_y - 1) * (cells_x - 1) * 4 * ORIENTATION_BINS);
    for by in 0..cells_y - 1 {
        for bx in 0..cells_x - 1 {
            let start = descriptor.len();
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let cell = (by + dy) * cells_x + (bx + dx);
                descriptor
                    .extend_from_slice(&hist[cell * ORIENTATION_BINS..(cell + 1) * ORIENTATION_BINS]);
            }
            let norm = descriptor[start..]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let denom = (norm * norm + BLOCK_EPSILON * BLOCK_EPSILON).sqrt();
            if denom > 0.0 {
                for v in &mut descriptor[start..] {
                    *v /= denom;
                }
            }
        }
    }
    Ok(descriptor)
}

/// Mean HOG descriptor over a set of boxes sampled from per-frame grayscale
/// images indexed by absolute frame number.
pub fn mean_hog(boxes: &[BoundingBox], frames: &[Array2<u8>]) -> Result<Vec<f64>> {
    if boxes.is_empty() {
        return Err(Error::invalid("mean hog over zero boxes"));
    }
    let mut acc: Vec<f64> = Vec::new();
    for b in boxes {
        let frame = frames.get(b.frame as usize).ok_or_else(|| {
            Error::invalid(format!("no frame image for frame {}", b.frame))
        })?;
        let patch = resample_patch(frame, b)?;
        let d = hog_descriptor(&patch)?;
        if acc.is_empty() {
            acc = d;
        } else {
            for (a, v) in acc.iter_mut().zip(&d) {
                *a += v;
            }
        }
    }
    let n = boxes.len() as f64;
    for a in &mut acc {
        *a /= n;
    }
    Ok(acc)
}
