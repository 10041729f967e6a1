//! Deterministic synthetic scenes and brute-force oracles.
//!
//! A scene renders a textured rectangle moving over a static textured
//! background, with matching optical flow (the rectangle's velocity inside
//! its box, zero elsewhere, plus optional speckle clutter). Proposals are
//! jittered copies of the ground truth, fragment-corrupted variants (correct
//! in designated temporal segments, displaced elsewhere), and random
//! distractor tubes. Actionness is the per-frame IoU with the ground truth
//! plus clipped Gaussian noise.
//!
//! All randomness flows from one master seed through fixed ChaCha8 streams
//! (one per artifact kind), so a spec generates bit-identical artifacts on
//! every run.

pub mod oracles;

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox, Tube};
use crate::io;
use crate::score::{FlowField, FlowFrame};
use crate::trellis::split_lengths;

/// RNG stream ids, one per artifact kind.
mod stream {
    pub const BACKGROUND: u64 = 0;
    pub const TEXTURE: u64 = 1;
    pub const CLUTTER: u64 = 2;
    pub const JITTER: u64 = 3;
    pub const CORRUPTION: u64 = 4;
    pub const DISTRACTORS: u64 = 5;
    pub const ACTIONNESS: u64 = 6;
}

fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Full recipe for one synthetic scene.
#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub seed: u64,
    pub video_id: String,
    /// Frame count T.
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    /// Ground-truth start box (x, y, w, h).
    pub gt_start: (f64, f64, f64, f64),
    /// Per-step velocities; a single entry broadcasts to all T-1 steps.
    pub gt_velocity: Vec<(f64, f64)>,
    /// Positional jitter (pixels) of the jittered ground-truth copies.
    pub jitter_sigma: f64,
    pub n_jittered: usize,
    /// One corrupted proposal per entry: the inclusive range of segments in
    /// which the proposal follows the ground truth; elsewhere it is displaced
    /// to a random static location.
    pub corrupt_segments: Vec<(usize, usize)>,
    /// Temporal segment count used by the corruption recipe.
    pub f: usize,
    pub distractors: usize,
    /// Per-pixel probability of speckle flow noise.
    pub clutter_density: f64,
    /// Gaussian noise added to the IoU-derived actionness.
    pub actionness_sigma: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            video_id: "scene".into(),
            frames: 20,
            height: 64,
            width: 96,
            gt_start: (12.0, 14.0, 18.0, 14.0),
            gt_velocity: vec![(1.5, 0.5)],
            jitter_sigma: 0.0,
            n_jittered: 1,
            corrupt_segments: Vec::new(),
            f: 5,
            distractors: 0,
            clutter_density: 0.0,
            actionness_sigma: 0.0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.frames < 2 {
            return Err(Error::config("frames", "need at least 2 frames"));
        }
        if self.f == 0 {
            return Err(Error::config("f", "segment count must be at least 1"));
        }
        if self.frames < self.f {
            return Err(Error::config("frames", format!("must be >= f ({})", self.f)));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::config("height", "resolution must be at least 8x8"));
        }
        let (_, _, w, h) = self.gt_start;
        if w < 2.0 || h < 2.0 {
            return Err(Error::config("gt_w", "ground-truth box must be at least 2x2"));
        }
        if self.gt_velocity.is_empty() {
            return Err(Error::config("gt_vx", "velocity list must be non-empty"));
        }
        if self.gt_velocity.len() != 1 && self.gt_velocity.len() != self.frames - 1 {
            return Err(Error::config(
                "gt_vx",
                format!(
                    "velocity list must have 1 or {} entries, got {}",
                    self.frames - 1,
                    self.gt_velocity.len()
                ),
            ));
        }
        for (i, b) in self.gt_positions().iter().enumerate() {
            if b.x < 0.0
                || b.y < 0.0
                || b.x + b.w > self.width as f64
                || b.y + b.h > self.height as f64
            {
                return Err(Error::config(
                    "gt_vx",
                    format!("ground-truth box leaves the frame bounds at frame {i}"),
                ));
            }
        }
        for &(a, b) in &self.corrupt_segments {
            if a > b || b >= self.f {
                return Err(Error::config(
                    "corrupt_segments",
                    format!("range {a}-{b} is not within the {} segments", self.f),
                ));
            }
        }
        if self.jitter_sigma < 0.0 {
            return Err(Error::config("jitter_sigma", "must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.clutter_density) {
            return Err(Error::config("clutter_density", "must lie in [0, 1)"));
        }
        if self.actionness_sigma < 0.0 {
            return Err(Error::config("actionness_sigma", "must be non-negative"));
        }
        if self.n_jittered + self.corrupt_segments.len() + self.distractors == 0 {
            return Err(Error::config("n_jittered", "scene needs at least one proposal"));
        }
        Ok(())
    }

    /// Ground-truth box per frame, following the per-step velocities.
    pub fn gt_positions(&self) -> Vec<BoundingBox> {
        let (mut x, mut y, w, h) = self.gt_start;
        let mut out = Vec::with_capacity(self.frames);
        for t in 0..self.frames {
            out.push(BoundingBox::new(t as u32, x, y, w, h));
            if t + 1 < self.frames {
                let (vx, vy) = self.velocity_at(t);
                x += vx;
                y += vy;
            }
        }
        out
    }

    /// Velocity covering the step from frame `t` to `t + 1`.
    pub fn velocity_at(&self, t: usize) -> (f64, f64) {
        if self.gt_velocity.len() == 1 {
            self.gt_velocity[0]
        } else {
            self.gt_velocity[t.min(self.gt_velocity.len() - 1)]
        }
    }

    /// Loads a spec from flat `key = value` text.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut spec = Self::default();
        let mut vx: Vec<f64> = vec![];
        let mut vy: Vec<f64> = vec![];
        for (key, value, _) in io::config::parse_kv(path, &text)? {
            let parse_f64 = |v: &str| -> Result<f64> {
                v.parse()
                    .map_err(|_| Error::config(key.clone(), format!("cannot parse `{v}`")))
            };
            let parse_usize = |v: &str| -> Result<usize> {
                v.parse()
                    .map_err(|_| Error::config(key.clone(), format!("cannot parse `{v}`")))
            };
            let parse_f64_list = |v: &str| -> Result<Vec<f64>> {
                v.split(',').map(|s| parse_f64(s.trim())).collect()
            };
            match key.as_str() {
                "seed" => {
                    spec.seed = value
                        .parse()
                        .map_err(|_| Error::config("seed", format!("cannot parse `{value}`")))?
                }
                "video_id" => spec.video_id = value.clone(),
                "frames" => spec.frames = parse_usize(&value)?,
                "height" => spec.height = parse_usize(&value)?,
                "width" => spec.width = parse_usize(&value)?,
                "gt_x" => spec.gt_start.0 = parse_f64(&value)?,
                "gt_y" => spec.gt_start.1 = parse_f64(&value)?,
                "gt_w" => spec.gt_start.2 = parse_f64(&value)?,
                "gt_h" => spec.gt_start.3 = parse_f64(&value)?,
                "gt_vx" => vx = parse_f64_list(&value)?,
                "gt_vy" => vy = parse_f64_list(&value)?,
                "jitter_sigma" => spec.jitter_sigma = parse_f64(&value)?,
                "n_jittered" => spec.n_jittered = parse_usize(&value)?,
                "corrupt_segments" => {
                    spec.corrupt_segments = parse_segment_ranges(&key, &value)?;
                }
                "f" => spec.f = parse_usize(&value)?,
                "distractors" => spec.distractors = parse_usize(&value)?,
                "clutter_density" => spec.clutter_density = parse_f64(&value)?,
                "actionness_sigma" => spec.actionness_sigma = parse_f64(&value)?,
                _ => return Err(Error::config(key, "unknown key")),
            }
        }
        if !vx.is_empty() || !vy.is_empty() {
            if vx.len() != vy.len() {
                return Err(Error::config(
                    "gt_vy",
                    format!("gt_vx has {} entries but gt_vy has {}", vx.len(), vy.len()),
                ));
            }
            spec.gt_velocity = vx.into_iter().zip(vy).collect();
        }
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses `a-b,c-d` inclusive segment ranges.
fn parse_segment_ranges(key: &str, value: &str) -> Result<Vec<(usize, usize)>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value
        .split(',')
        .map(|tok| {
            let tok = tok.trim();
            let (a, b) = tok
                .split_once('-')
                .ok_or_else(|| Error::config(key, format!("expected `start-end`, found `{tok}`")))?;
            let a = a
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{a}`")))?;
            let b = b
                .trim()
                .parse()
                .map_err(|_| Error::config(key, format!("cannot parse `{b}`")))?;
            Ok((a, b))
        })
        .collect()
}

/// Fully generated scene, ready to use in memory or to write to disk.
#[derive(Debug, Clone)]
pub struct Scene {
    pub spec: SceneSpec,
    pub frames: Vec<Array2<u8>>,
    pub flow: FlowField,
    pub gt: Tube,
    pub proposals: Vec<Tube>,
    /// (proposal_id, frame, score) rows in (id, frame) order.
    pub actionness: Vec<(u32, u32, f64)>,
}

pub fn gen_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (h, w, t_count) = (spec.height, spec.width, spec.frames);
    let gt_boxes = spec.gt_positions();

    let mut bg_rng = rng_stream(spec.seed, stream::BACKGROUND);
    let background = Array2::from_shape_fn((h, w), |_| 16 + bg_rng.random::<u8>() % 64);

    let mut tex_rng = rng_stream(spec.seed, stream::TEXTURE);
    let tex_h = spec.gt_start.3.ceil() as usize;
    let tex_w = spec.gt_start.2.ceil() as usize;
    let texture = Array2::from_shape_fn((tex_h, tex_w), |_| 160 + tex_rng.random::<u8>() % 96);

    let mut frames = Vec::with_capacity(t_count);
    for b in &gt_boxes {
        let mut frame = background.clone();
        let top = b.y.round().max(0.0) as usize;
        let left = b.x.round().max(0.0) as usize;
        for i in 0..tex_h {
            for j in 0..tex_w {
                let (r, c) = (top + i, left + j);
                if r < h && c < w {
                    frame[(r, c)] = texture[(i, j)];
                }
            }
        }
        frames.push(frame);
    }

    let mut clutter_rng = rng_stream(spec.seed, stream::CLUTTER);
    let clutter = Normal::new(0.0, 2.0).expect("valid sigma");
    let mut flow_frames = Vec::with_capacity(t_count);
    for (t, b) in gt_boxes.iter().enumerate() {
        let (vx, vy) = spec.velocity_at(t.min(t_count.saturating_sub(2)));
        let mut u = Array2::zeros((h, w));
        let mut v = Array2::zeros((h, w));
        let rows = crate::score::pixel_range(b.y, b.h, h);
        let cols = crate::score::pixel_range(b.x, b.w, w);
        for r in rows {
            for c in cols.clone() {
                u[(r, c)] = vx as f32;
                v[(r, c)] = vy as f32;
            }
        }
        if spec.clutter_density > 0.0 {
            for r in 0..h {
                for c in 0..w {
                    if clutter_rng.random::<f64>() < spec.clutter_density {
                        u[(r, c)] += clutter.sample(&mut clutter_rng) as f32;
                        v[(r, c)] += clutter.sample(&mut clutter_rng) as f32;
                    }
                }
            }
        }
        flow_frames.push(FlowFrame { u, v });
    }
    let flow = FlowField::new(flow_frames)?;

    let gt = Tube::new(spec.video_id.clone(), 0, gt_boxes.clone())?;

    let mut proposals = Vec::new();
    let mut next_id = 0u32;

    let mut jitter_rng = rng_stream(spec.seed, stream::JITTER);
    for _ in 0..spec.n_jittered {
        let noise = Normal::new(0.0, spec.jitter_sigma.max(f64::MIN_POSITIVE)).expect("sigma");
        let boxes: Vec<BoundingBox> = gt_boxes
            .iter()
            .map(|b| {
                let (dx, dy) = if spec.jitter_sigma > 0.0 {
                    (noise.sample(&mut jitter_rng), noise.sample(&mut jitter_rng))
                } else {
                    (0.0, 0.0)
                };
                BoundingBox {
                    x: (b.x + dx).clamp(0.0, w as f64 - b.w),
                    y: (b.y + dy).clamp(0.0, h as f64 - b.h),
                    ..*b
                }
            })
            .collect();
        proposals.push(Tube::new(spec.video_id.clone(), next_id, boxes)?);
        next_id += 1;
    }

    let mut corrupt_rng = rng_stream(spec.seed, stream::CORRUPTION);
    let seg_lengths = split_lengths(t_count, spec.f);
    let seg_of_frame: Vec<usize> = seg_lengths
        .iter()
        .enumerate()
        .flat_map(|(s, &len)| std::iter::repeat(s).take(len))
        .collect();
    for &(first_ok, last_ok) in &spec.corrupt_segments {
        // One displaced static location per corrupted segment.
        let mut displaced: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
        for s in 0..spec.f {
            if s < first_ok || s > last_ok {
                let x = corrupt_rng.random::<f64>() * (w as f64 - spec.gt_start.2);
                let y = corrupt_rng.random::<f64>() * (h as f64 - spec.gt_start.3);
                displaced.insert(s, (x, y));
            }
        }
        let boxes: Vec<BoundingBox> = gt_boxes
            .iter()
            .enumerate()
            .map(|(t, b)| match displaced.get(&seg_of_frame[t]) {
                Some(&(x, y)) => BoundingBox { x, y, ..*b },
                None => *b,
            })
            .collect();
        proposals.push(Tube::new(spec.video_id.clone(), next_id, boxes)?);
        next_id += 1;
    }

    let mut distractor_rng = rng_stream(spec.seed, stream::DISTRACTORS);
    for _ in 0..spec.distractors {
        let dw = (0.15 + 0.25 * distractor_rng.random::<f64>()) * w as f64;
        let dh = (0.15 + 0.25 * distractor_rng.random::<f64>()) * h as f64;
        let mut x = distractor_rng.random::<f64>() * (w as f64 - dw);
        let mut y = distractor_rng.random::<f64>() * (h as f64 - dh);
        let vx = 4.0 * distractor_rng.random::<f64>() - 2.0;
        let vy = 4.0 * distractor_rng.random::<f64>() - 2.0;
        let mut boxes = Vec::with_capacity(t_count);
        for t in 0..t_count {
            boxes.push(BoundingBox::new(t as u32, x, y, dw, dh));
            x = (x + vx).clamp(0.0, w as f64 - dw);
            y = (y + vy).clamp(0.0, h as f64 - dh);
        }
        proposals.push(Tube::new(spec.video_id.clone(), next_id, boxes)?);
        next_id += 1;
    }

    let mut act_rng = rng_stream(spec.seed, stream::ACTIONNESS);
    let act_noise = Normal::new(0.0, spec.actionness_sigma.max(f64::MIN_POSITIVE)).expect("sigma");
    let mut actionness = Vec::new();
    for tube in &proposals {
        for b in tube.boxes() {
            let base = iou(b, &gt_boxes[b.frame as usize]);
            let noise = if spec.actionness_sigma > 0.0 {
                act_noise.sample(&mut act_rng)
            } else {
                0.0
            };
            actionness.push((tube.proposal_id, b.frame, (base + noise).clamp(0.0, 1.0)));
        }
    }

    Ok(Scene {
        spec: spec.clone(),
        frames,
        flow,
        gt,
        proposals,
        actionness,
    })
}

/// On-disk layout of a scene directory.
pub mod layout {
    pub const FRAMES_DIR: &str = "frames";
    pub const FLOW: &str = "flow.tflw";
    pub const PROPOSALS: &str = "proposals.csv";
    pub const ACTIONNESS: &str = "actionness.csv";
    pub const GROUND_TRUTH: &str = "gt.csv";
    pub const MANIFEST: &str = "manifest.txt";
}

/// Writes the scene in the pipeline's input formats plus a checksum manifest.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    io::write_frames(&dir.join(layout::FRAMES_DIR), &scene.frames)?;
    io::write_flow(&dir.join(layout::FLOW), &scene.flow)?;
    io::write_proposals(&dir.join(layout::PROPOSALS), &scene.proposals)?;
    io::write_proposals(&dir.join(layout::GROUND_TRUTH), std::slice::from_ref(&scene.gt))?;
    io::write_actionness(
        &dir.join(layout::ACTIONNESS),
        scene
            .actionness
            .iter()
            .map(|&(pid, frame, score)| (scene.spec.video_id.clone(), pid, frame, score)),
    )?;
    write_manifest(dir)
}

fn artifact_paths(dir: &Path) -> Result<Vec<String>> {
    let mut rel: Vec<String> = vec![
        layout::FLOW.into(),
        layout::PROPOSALS.into(),
        layout::ACTIONNESS.into(),
        layout::GROUND_TRUTH.into(),
    ];
    let frames_dir = dir.join(layout::FRAMES_DIR);
    for entry in std::fs::read_dir(&frames_dir).map_err(|e| Error::io(&frames_dir, e))? {
        let entry = entry.map_err(|e| Error::io(&frames_dir, e))?;
        rel.push(format!(
            "{}/{}",
            layout::FRAMES_DIR,
            entry.file_name().to_string_lossy()
        ));
    }
    rel.sort();
    Ok(rel)
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `manifest.txt`: one `sha256  relative-path` line per artifact,
/// sorted by path.
pub fn write_manifest(dir: &Path) -> Result<()> {
    let mut out = String::new();
    for rel in artifact_paths(dir)? {
        let path = dir.join(&rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        out.push_str(&format!("{}  {}\n", sha256_hex(&bytes), rel));
    }
    io::atomic_write(&dir.join(layout::MANIFEST), out.as_bytes())
}

/// Recomputes every checksum in the manifest and errors on any mismatch or
/// missing file.
pub fn verify_manifest(dir: &Path) -> Result<()> {
    let manifest_path = dir.join(layout::MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    for (idx, line) in text.lines().enumerate() {
        let (expected, rel) = line.split_once("  ").ok_or_else(|| {
            Error::parse(&manifest_path, idx + 1, "expected `<sha256>  <path>`")
        })?;
        let path = dir.join(rel);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let actual = sha256_hex(&bytes);
        if actual != expected {
            return Err(Error::format(
                &path,
                format!("checksum mismatch: manifest {expected}, actual {actual}"),
            ));
        }
    }
    Ok(())
}
