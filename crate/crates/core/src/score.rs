//! Node and edge scores for sub-proposals.
//!
//! Node scores combine an ingested per-patch actionness probability with a
//! motion score derived from optical-flow gradients: flow channels are run
//! through a Sobel operator, the summed gradient magnitudes form a motion-edge
//! map, and boxes are scored by how much motion-contour mass they fully
//! enclose, normalized by perimeter. Edge scores combine boundary-box IoU
//! (shape consistency) with an exponential similarity between mean HOG
//! descriptors (appearance).

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, Tube};

/// Dense optical flow for one frame: horizontal (`u`) and vertical (`v`)
/// displacement grids of identical shape.
#[derive(Debug, Clone)]
pub struct FlowFrame {
    pub u: Array2<f32>,
    pub v: Array2<f32>,
}

/// Optical flow for a whole video. All frames share one resolution.
#[derive(Debug, Clone)]
pub struct FlowField {
    frames: Vec<FlowFrame>,
}

impl FlowField {
    pub fn new(frames: Vec<FlowFrame>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::invalid("flow field must contain at least one frame"));
        }
        let dim = frames[0].u.dim();
        for (i, f) in frames.iter().enumerate() {
            if f.u.dim() != dim || f.v.dim() != dim {
                return Err(Error::invalid(format!(
                    "flow frame {i} has shape {:?}/{:?}, expected {:?}",
                    f.u.dim(),
                    f.v.dim(),
                    dim
                )));
            }
        }
        Ok(Self { frames })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame(&self, idx: usize) -> &FlowFrame {
        &self.frames[idx]
    }

    pub fn frames(&self) -> &[FlowFrame] {
        &self.frames
    }

    /// (height, width) of every frame.
    pub fn dim(&self) -> (usize, usize) {
        self.frames[0].u.dim()
    }
}

/// Per-frame motion-edge magnitude grid (non-negative).
#[derive(Debug, Clone)]
pub struct MotionEdgeMap {
    pub magnitude: Array2<f64>,
}

const SOBEL_X: [[f64; 3]; 3] = [[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]];
const SOBEL_Y: [[f64; 3]; 3] = [[-1.0, -2.0, -1.0], [0.0, 0.0, 0.0], [1.0, 2.0, 1.0]];

fn sobel_magnitude(ch: &Array2<f32>) -> Array2<f64> {
    let (h, w) = ch.dim();
    let mut out = Array2::zeros((h, w));
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for dr in 0..3 {
                for dc in 0..3 {
                    let v = ch[(r + dr - 1, c + dc - 1)] as f64;
                    gx += SOBEL_X[dr][dc] * v;
                    gy += SOBEL_Y[dr][dc] * v;
                }
            }
            out[(r, c)] = gx.hypot(gy);
        }
    }
    out
}

/// Motion edges of one flow frame: Sobel gradient magnitude of each channel,
/// summed. Border pixels are zero.
pub fn motion_edges(frame: &FlowFrame) -> Result<MotionEdgeMap> {
    let (h, w) = frame.u.dim();
    if h < 3 || w < 3 {
        return Err(Error::invalid(format!(
            "flow frame {h}x{w} too small for a 3x3 gradient stencil"
        )));
    }
    let mut magnitude = sobel_magnitude(&frame.u);
    magnitude += &sobel_magnitude(&frame.v);
    Ok(MotionEdgeMap { magnitude })
}

/// An 8-connected component of above-threshold motion-edge pixels.
#[derive(Debug, Clone)]
pub struct Contour {
    /// Member pixels as (row, col), sorted row-major.
    pub pixels: Vec<(usize, usize)>,
    /// Sum of edge magnitudes over the member pixels.
    pub total_magnitude: f64,
    /// Inclusive bounding extent (min_row, min_col, max_row, max_col).
    pub extent: (usize, usize, usize, usize),
}

/// 8-connected components of `{pixels with magnitude >= threshold}`, in
/// row-major order of their first pixel.
pub fn extract_contours(map: &MotionEdgeMap, threshold: f64) -> Vec<Contour> {
    let (h, w) = map.magnitude.dim();
    let mut visited = vec![false; h * w];
    let mut contours = Vec::new();
    let mut stack = Vec::new();
    for r0 in 0..h {
        for c0 in 0..w {
            if visited[r0 * w + c0] || map.magnitude[(r0, c0)] < threshold {
                continue;
            }
            visited[r0 * w + c0] = true;
            stack.push((r0, c0));
            let mut pixels = Vec::new();
            let mut total = 0.0;
            while let Some((r, c)) = stack.pop() {
                pixels.push((r, c));
                total += map.magnitude[(r, c)];
                for dr in -1i64..=1 {
                    for dc in -1i64..=1 {
                        let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                        if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                            continue;
                        }
                        let (nr, nc) = (nr as usize, nc as usize);
                        if !visited[nr * w + nc] && map.magnitude[(nr, nc)] >= threshold {
                            visited[nr * w + nc] = true;
                            stack.push((nr, nc));
                        }
                    }
                }
            }
            pixels.sort_unstable();
            let extent = pixels.iter().fold(
                (usize::MAX, usize::MAX, 0, 0),
                |(r0, c0, r1, c1), &(r, c)| (r0.min(r), c0.min(c), r1.max(r), c1.max(c)),
            );
            contours.push(Contour {
                pixels,
                total_magnitude: total,
                extent,
            });
        }
    }
    contours
}

/// Otsu threshold over the nonzero magnitudes of an edge map (256-bin
/// histogram). Returns `None` when the map has no nonzero entries.
pub fn otsu_threshold(map: &MotionEdgeMap) -> Option<f64> {
    let values: Vec<f64> = map.magnitude.iter().copied().filter(|&v| v > 0.0).collect();
    if values.is_empty() {
        return None;
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max <= min {
        return Some(min);
    }
    const BINS: usize = 256;
    let width = (max - min) / BINS as f64;
    let mut hist = [0usize; BINS];
    for &v in &values {
        let b = (((v - min) / width) as usize).min(BINS - 1);
        hist[b] += 1;
    }
    let total = values.len() as f64;
    let bin_center = |b: usize| min + (b as f64 + 0.5) * width;
    let total_mean: f64 = hist
        .iter()
        .enumerate()
        .map(|(b, &n)| bin_center(b) * n as f64)
        .sum::<f64>()
        / total;
    let mut best = (0.0f64, 0usize);
    let mut w0 = 0.0;
    let mut sum0 = 0.0;
    for k in 0..BINS - 1 {
        w0 += hist[k] as f64;
        sum0 += bin_center(k) * hist[k] as f64;
        if w0 == 0.0 || w0 == total {
            continue;
        }
        let m0 = sum0 / w0;
        let w1 = total - w0;
        let m1 = (total_mean * total - sum0) / w1;
        let between = w0 * w1 * (m0 - m1) * (m0 - m1);
        if between > best.0 {
            best = (between, k);
        }
    }
    Some(min + width * (best.1 + 1) as f64)
}

/// Does every pixel of the contour lie strictly inside the box?
fn strictly_encloses(b: &BoundingBox, contour: &Contour) -> bool {
    let (min_r, min_c, max_r, max_c) = contour.extent;
    b.x < min_c as f64
        && (max_c as f64) < b.x + b.w
        && b.y < min_r as f64
        && (max_r as f64) < b.y + b.h
}

/// Perimeter-normalized contour-enclosure score: the summed magnitude of
/// contours that lie strictly inside the box, divided by `(2(w+h))^kappa`.
/// Contours touching or crossing the box boundary contribute nothing.
/// Degenerate boxes score 0.
pub fn box_contour_score(b: &BoundingBox, contours: &[Contour], kappa: f64) -> f64 {
    if b.w <= 0.0 || b.h <= 0.0 {
        return 0.0;
    }
    let enclosed: f64 = contours
        .iter()
        .filter(|c| strictly_encloses(b, c))
        .map(|c| c.total_magnitude)
        .sum();
    enclosed / (2.0 * (b.w + b.h)).powf(kappa)
}

/// Sliding-window grid and selection parameters for motion-box generation.
#[derive(Debug, Clone)]
pub struct MotionBoxParams {
    /// Window side lengths as fractions of `min(H, W)`.
    pub scales: Vec<f64>,
    /// Width/height ratios; a window of side `L` and aspect `a` has
    /// `w = L*sqrt(a)`, `h = L/sqrt(a)`.
    pub aspects: Vec<f64>,
    /// Stride as a fraction of the window side.
    pub stride_frac: f64,
    /// Number of boxes kept after NMS.
    pub top_m: usize,
    /// Box-level NMS IoU threshold.
    pub nms_iou: f64,
    /// Perimeter exponent of [`box_contour_score`].
    pub kappa: f64,
    /// Contour threshold; `None` selects Otsu per frame.
    pub contour_threshold: Option<f64>,
}

impl Default for MotionBoxParams {
    fn default() -> Self {
        Self {
            scales: vec![0.1, 0.2, 0.4, 0.6, 0.8],
            aspects: vec![0.5, 1.0, 2.0],
            stride_frac: 0.25,
            top_m: 200,
            nms_iou: 0.7,
            kappa: 1.5,
            contour_threshold: None,
        }
    }
}

/// Deterministic enumeration of the sliding-window grid for an `h` x `w`
/// frame. Scales and aspects are visited in listed order; window positions
/// advance in strides of `stride_frac * side` with a final position flush to
/// the frame border. The `frame` field of the returned boxes is 0.
pub fn enumerate_grid_boxes(h: usize, w: usize, params: &MotionBoxParams) -> Vec<BoundingBox> {
    let mut boxes = Vec::new();
    let min_side = h.min(w) as f64;
    for &scale in &params.scales {
        let side = scale * min_side;
        for &aspect in &params.aspects {
            let bw = side * aspect.sqrt();
            let bh = side / aspect.sqrt();
            if bw > w as f64 || bh > h as f64 || bw < 1.0 || bh < 1.0 {
                continue;
            }
            let stride = (side * params.stride_frac).max(1.0);
            let xs = axis_positions(w as f64, bw, stride);
            let ys = axis_positions(h as f64, bh, stride);
            for &y in &ys {
                for &x in &xs {
                    boxes.push(BoundingBox::new(0, x, y, bw, bh));
                }
            }
        }
    }
    boxes
}

fn axis_positions(extent: f64, window: f64, stride: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let last = extent - window;
    let mut p = 0.0;
    while p <= last + 1e-9 {
        out.push(p);
        p += stride;
    }
    if let Some(&tail) = out.last() {
        if last - tail > 1e-9 {
            out.push(last);
        }
    }
    out
}

/// Candidate moving-body boxes for one frame: every grid box is scored with
/// [`box_contour_score`], greedily NMS-filtered at `params.nms_iou`, and the
/// top `params.top_m` survivors are returned in descending score order.
pub fn generate_motion_boxes(
    edges: &MotionEdgeMap,
    params: &MotionBoxParams,
) -> Vec<(BoundingBox, f64)> {
    let (h, w) = edges.magnitude.dim();
    let contours = match params.contour_threshold.or_else(|| otsu_threshold(edges)) {
        Some(thr) => extract_contours(edges, thr),
        None => Vec::new(),
    };
    let grid = enumerate_grid_boxes(h, w, params);
    let mut scored: Vec<(usize, f64)> = grid
        .iter()
        .map(|b| box_contour_score(b, &contours, params.kappa))
        .enumerate()
        .collect();
    // Descending score; enumeration order breaks ties.
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    let mut kept: Vec<(BoundingBox, f64)> = Vec::with_capacity(params.top_m);
    for (idx, score) in scored {
        if kept.len() == params.top_m {
            break;
        }
        let candidate = grid[idx];
        if kept.iter().all(|(k, _)| iou(&candidate, k) <= params.nms_iou) {
            kept.push((candidate, score));
        }
    }
    kept
}

/// Motion score of a proposal patch: the score of the candidate box with the
/// highest IoU to it. Zero when no candidate overlaps.
pub fn patch_motion_score(b: &BoundingBox, candidates: &[(BoundingBox, f64)]) -> f64 {
    let mut best_iou = 0.0;
    let mut best_score = 0.0;
    for (cand, score) in candidates {
        let v = iou(b, cand);
        if v > best_iou {
            best_iou = v;
            best_score = *score;
        }
    }
    if best_iou > 0.0 {
        best_score
    } else {
        0.0
    }
}

/// One proposal restricted to one temporal segment: the trellis node unit.
#[derive(Debug, Clone)]
pub struct SubProposal {
    pub proposal_id: u32,
    pub segment_index: usize,
    pub boxes: Vec<BoundingBox>,
    /// Per-box actionness probabilities, aligned with `boxes` once attached.
    pub actionness: Vec<f64>,
    /// Mean appearance descriptor over the segment's patches.
    pub appearance: Vec<f64>,
}

impl SubProposal {
    pub fn new(proposal_id: u32, segment_index: usize, boxes: Vec<BoundingBox>) -> Self {
        debug_assert!(!boxes.is_empty());
        Self {
            proposal_id,
            segment_index,
            boxes,
            actionness: Vec::new(),
            appearance: Vec::new(),
        }
    }

    pub fn first_box(&self) -> &BoundingBox {
        &self.boxes[0]
    }

    pub fn last_box(&self) -> &BoundingBox {
        &self.boxes[self.boxes.len() - 1]
    }

    /// Fills per-box actionness from `lookup(proposal_id, frame)`.
    pub fn attach_actionness(&mut self, lookup: impl Fn(u32, u32) -> Option<f64>) -> Result<()> {
        let mut scores = Vec::with_capacity(self.boxes.len());
        for b in &self.boxes {
            match lookup(self.proposal_id, b.frame) {
                Some(s) => scores.push(s),
                None => {
                    return Err(Error::MissingActionness {
                        proposal_id: self.proposal_id,
                        frame: b.frame,
                    })
                }
            }
        }
        self.actionness = scores;
        Ok(())
    }
}

/// Mean motion score of the sub-proposal's patches. `candidates` is indexed
/// by absolute frame number and must cover every frame of the sub-proposal.
pub fn subproposal_motion_score(
    sp: &SubProposal,
    candidates: &[Vec<(BoundingBox, f64)>],
) -> Result<f64> {
    let mut sum = 0.0;
    for b in &sp.boxes {
        let frame = b.frame as usize;
        let per_frame = candidates.get(frame).ok_or_else(|| {
            Error::invalid(format!(
                "no motion-box candidates for frame {frame} (proposal {})",
                sp.proposal_id
            ))
        })?;
        sum += patch_motion_score(b, per_frame);
    }
    Ok(sum / sp.boxes.len() as f64)
}

/// Mean ingested actionness over the sub-proposal's patches. Errors (naming
/// the first uncovered frame) when actionness has not been attached for every
/// box.
pub fn subproposal_actionness(sp: &SubProposal) -> Result<f64> {
    if sp.actionness.len() != sp.boxes.len() {
        let frame = sp
            .boxes
            .get(sp.actionness.len())
            .map(|b| b.frame)
            .unwrap_or_default();
        return Err(Error::MissingActionness {
            proposal_id: sp.proposal_id,
            frame,
        });
    }
    Ok(sp.actionness.iter().sum::<f64>() / sp.actionness.len() as f64)
}

/// Linear weights of the node, edge, and path-energy combinations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreWeights {
    pub lambda_i: f64,
    pub lambda_m: f64,
    pub lambda_o: f64,
    pub lambda_a: f64,
    pub lambda_edge: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            lambda_i: 1.0,
            lambda_m: 1.0,
            lambda_o: 1.0,
            lambda_a: 1.0,
            lambda_edge: 1.0,
        }
    }
}

/// Node score: weighted sum of the actionness term and the (per-video
/// min-max-normalized) motion term.
pub fn node_score(phi_i: f64, phi_m: f64, w: &ScoreWeights) -> f64 {
    w.lambda_i * phi_i + w.lambda_m * phi_m
}

/// Edge score: weighted sum of shape consistency and appearance similarity.
pub fn edge_score(psi_o: f64, psi_a: f64, w: &ScoreWeights) -> f64 {
    w.lambda_o * psi_o + w.lambda_a * psi_a
}

/// Shape consistency between temporally adjacent sub-proposals: IoU between
/// the last box of `sp_i` and the first box of `sp_j`.
pub fn shape_score(sp_i: &SubProposal, sp_j: &SubProposal) -> Result<f64> {
    if sp_j.segment_index != sp_i.segment_index + 1 {
        return Err(Error::invalid(format!(
            "shape score requires adjacent segments, got {} and {}",
            sp_i.segment_index, sp_j.segment_index
        )));
    }
    Ok(iou(sp_i.last_box(), sp_j.first_box()))
}

/// Exponential Euclidean similarity `exp(-||a-b|| / sigma)` in (0, 1].
pub fn appearance_similarity(a: &[f64], b: &[f64], sigma: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "descriptor dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let dist = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    Ok((-dist / sigma).exp())
}

/// Min-max normalization to [0, 1]; a constant (or empty) input maps to all
/// zeros.
pub fn min_max_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !(max - min).is_finite() || max - min <= 0.0 {
        return vec![0.0; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}

/// Integer pixel columns `c` with `x <= c < x + w`, clamped to `[0, max)`.
pub(crate) fn pixel_range(start: f64, extent: f64, max: usize) -> std::ops::Range<usize> {
    let lo = start.ceil().max(0.0) as usize;
    let hi = ((start + extent).ceil().max(0.0) as usize).min(max);
    lo..hi.max(lo)
}

/// Mean motion-edge magnitude inside one box of a precomputed edge map.
pub fn box_edge_mean(b: &BoundingBox, edges: &MotionEdgeMap) -> f64 {
    let (h, w) = edges.magnitude.dim();
    let rows = pixel_range(b.y, b.h, h);
    let cols = pixel_range(b.x, b.w, w);
    let count = rows.len() * cols.len();
    if count == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    for r in rows {
        for c in cols.clone() {
            sum += edges.magnitude[(r, c)];
        }
    }
    sum / count as f64
}

/// Mean over the tube's frames of the mean edge magnitude inside its boxes,
/// over precomputed per-frame edge maps indexed by absolute frame number.
pub fn tube_edge_mean(tube: &Tube, edge_maps: &[MotionEdgeMap]) -> Result<f64> {
    let mut sum = 0.0;
    for b in tube.boxes() {
        let edges = edge_maps.get(b.frame as usize).ok_or_else(|| {
            Error::invalid(format!("flow does not cover tube frame {}", b.frame))
        })?;
        sum += box_edge_mean(b, edges);
    }
    Ok(sum / tube.len() as f64)
}

/// Mean optical-flow-derivative magnitude inside the tube: motion edges are
/// computed per frame and averaged inside the tube's boxes. Used as the
/// score source of the NMS pre-step.
pub fn flow_derivative_score(tube: &Tube, flow: &FlowField) -> Result<f64> {
    if (tube.end_frame() as usize) >= flow.len() {
        return Err(Error::invalid(format!(
            "flow has {} frames but tube ends at frame {}",
            flow.len(),
            tube.end_frame()
        )));
    }
    let mut sum = 0.0;
    for b in tube.boxes() {
        let edges = motion_edges(flow.frame(b.frame as usize))?;
        sum += box_edge_mean(b, &edges);
    }
    Ok(sum / tube.len() as f64)
}
