//! Axis-aligned box and spatio-temporal tube arithmetic.
//!
//! Boxes are closed real-valued rectangles; a tube is a temporally contiguous
//! sequence of per-frame boxes. Overlap between tubes is the mean per-frame
//! IoU over the union of the two frame spans, counting zero on frames covered
//! by only one tube.

use crate::error::{Error, Result};

/// Per-frame axis-aligned box. `(x, y)` is the top-left corner in pixels,
/// `w`/`h` are non-negative real extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub frame: u32,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(frame: u32, x: f64, y: f64, w: f64, h: f64) -> Self {
        debug_assert!(w >= 0.0 && h >= 0.0, "negative box extent");
        Self { frame, x, y, w, h }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> (f64, f64) {
        (self.x + 0.5 * self.w, self.y + 0.5 * self.h)
    }
}

/// Intersection-over-union of two boxes. Degenerate input (zero union area)
/// yields 0. All areas derive from the corner coordinates, so identical
/// boxes score exactly 1.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax2, ay2) = (a.x + a.w, a.y + a.h);
    let (bx2, by2) = (b.x + b.w, b.y + b.h);
    let ix = ax2.min(bx2) - a.x.max(b.x);
    let iy = ay2.min(by2) - a.y.max(b.y);
    if ix <= 0.0 || iy <= 0.0 {
        return 0.0;
    }
    let inter = ix * iy;
    let union = (ax2 - a.x) * (ay2 - a.y) + (bx2 - b.x) * (by2 - b.y) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// A spatio-temporal action proposal: one box per frame over a contiguous
/// frame range.
#[derive(Debug, Clone, PartialEq)]
pub struct Tube {
    pub video_id: String,
    pub proposal_id: u32,
    boxes: Vec<BoundingBox>,
}

impl Tube {
    /// Builds a tube, validating that `boxes` is non-empty, frame indices are
    /// contiguous and increasing, and extents are non-negative.
    pub fn new(video_id: impl Into<String>, proposal_id: u32, boxes: Vec<BoundingBox>) -> Result<Self> {
        if boxes.is_empty() {
            return Err(Error::invalid("tube must contain at least one box"));
        }
        for pair in boxes.windows(2) {
            if pair[1].frame != pair[0].frame + 1 {
                return Err(Error::invalid(format!(
                    "tube frames must be contiguous: frame {} followed by {}",
                    pair[0].frame, pair[1].frame
                )));
            }
        }
        for b in &boxes {
            if b.w < 0.0 || b.h < 0.0 || !(b.x.is_finite() && b.y.is_finite() && b.w.is_finite() && b.h.is_finite()) {
                return Err(Error::invalid(format!(
                    "box at frame {} has invalid extent ({}, {})",
                    b.frame, b.w, b.h
                )));
            }
        }
        Ok(Self {
            video_id: video_id.into(),
            proposal_id,
            boxes,
        })
    }

    pub fn boxes(&self) -> &[BoundingBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        false // non-empty by construction
    }

    pub fn start_frame(&self) -> u32 {
        self.boxes[0].frame
    }

    /// Inclusive last frame.
    pub fn end_frame(&self) -> u32 {
        self.boxes[self.boxes.len() - 1].frame
    }

    pub fn box_at(&self, frame: u32) -> Option<&BoundingBox> {
        if frame < self.start_frame() || frame > self.end_frame() {
            return None;
        }
        Some(&self.boxes[(frame - self.start_frame()) as usize])
    }

    /// Extends the tube to cover `[start, end]` (inclusive) by replicating
    /// the terminal boxes. Frames already covered are untouched.
    pub fn padded_to(&self, start: u32, end: u32) -> Result<Tube> {
        if start > self.start_frame() || end < self.end_frame() {
            return Err(Error::invalid(format!(
                "padding range [{start}, {end}] does not cover tube span [{}, {}]",
                self.start_frame(),
                self.end_frame()
            )));
        }
        let mut boxes = Vec::with_capacity((end - start + 1) as usize);
        for frame in start..=end {
            let src = if frame < self.start_frame() {
                self.boxes[0]
            } else if frame > self.end_frame() {
                self.boxes[self.boxes.len() - 1]
            } else {
                *self.box_at(frame).unwrap()
            };
            boxes.push(BoundingBox { frame, ..src });
        }
        Tube::new(self.video_id.clone(), self.proposal_id, boxes)
    }

    /// Restriction of the tube to the half-open frame range `[start, end)`.
    /// Errors when the intersection is empty.
    pub fn clipped_to(&self, start: u32, end: u32) -> Result<Tube> {
        let s = start.max(self.start_frame());
        let e = end.min(self.end_frame() + 1);
        if s >= e {
            return Err(Error::invalid(format!(
                "tube span [{}, {}] does not intersect range [{start}, {end})",
                self.start_frame(),
                self.end_frame()
            )));
        }
        let boxes = (s..e).map(|f| *self.box_at(f).unwrap()).collect();
        Tube::new(self.video_id.clone(), self.proposal_id, boxes)
    }
}

/// Mean per-frame IoU over the union of the two tubes' frame sets; frames
/// covered by only one tube count as zero. Tubes are assumed to come from the
/// same video.
pub fn tube_overlap(a: &Tube, b: &Tube) -> f64 {
    let shared_start = a.start_frame().max(b.start_frame());
    let shared_end = a.end_frame().min(b.end_frame());
    let mut sum = 0.0;
    let mut frames = a.len() + b.len();
    if shared_start <= shared_end {
        frames -= (shared_end - shared_start + 1) as usize;
        for f in shared_start..=shared_end {
            sum += iou(a.box_at(f).unwrap(), b.box_at(f).unwrap());
        }
    }
    if frames == 0 {
        0.0
    } else {
        sum / frames as f64
    }
}

/// Greedy non-maximal suppression over tubes.
///
/// Repeatedly keeps the highest-score remaining tube and discards tubes whose
/// [`tube_overlap`] with any kept tube exceeds `threshold`. Score ties break
/// toward the lower `proposal_id`. Returns the kept indices in selection
/// (descending-score) order.
pub fn nms(tubes: &[Tube], scores: &[f64], threshold: f64) -> Vec<usize> {
    assert_eq!(tubes.len(), scores.len(), "one score per tube");
    let mut order: Vec<usize> = (0..tubes.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(tubes[i].proposal_id.cmp(&tubes[j].proposal_id))
    });
    let mut kept: Vec<usize> = Vec::new();
    for idx in order {
        let overlapped = kept
            .iter()
            .any(|&k| tube_overlap(&tubes[idx], &tubes[k]) > threshold);
        if !overlapped {
            kept.push(idx);
        }
    }
    kept
}
