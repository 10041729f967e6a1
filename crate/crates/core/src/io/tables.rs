//! Tabular CSV formats: proposals/ground truth, actionness scores, and
//! feature vectors.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Tube};
use crate::walk::FeatureSet;

pub const PROPOSALS_HEADER: &str = "video_id,proposal_id,frame,x,y,w,h";
pub const ACTIONNESS_HEADER: &str = "video_id,proposal_id,frame,score";

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

fn expect_header(path: &Path, lines: &[String], header: &str) -> Result<()> {
    match lines.first() {
        Some(first) if first == header => Ok(()),
        Some(first) => Err(Error::parse(
            path,
            1,
            format!("expected header `{header}`, found `{first}`"),
        )),
        None => Err(Error::parse(path, 1, format!("missing header `{header}`"))),
    }
}

fn parse_field<T: std::str::FromStr>(
    path: &Path,
    line: usize,
    name: &str,
    raw: &str,
) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(path, line, format!("invalid {name}: `{raw}`")))
}

/// Parses the proposals CSV, groups rows by (video, proposal), sorts each
/// group by frame, and validates frame contiguity and box extents.
pub fn load_proposals(path: &Path) -> Result<Vec<Tube>> {
    let lines = read_lines(path)?;
    expect_header(path, &lines, PROPOSALS_HEADER)?;
    let mut groups: BTreeMap<(String, u32), Vec<(usize, BoundingBox)>> = BTreeMap::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 7 fields, found {}", fields.len()),
            ));
        }
        let video: String = fields[0].trim().to_owned();
        let pid: u32 = parse_field(path, line_no, "proposal_id", fields[1])?;
        let frame: u32 = parse_field(path, line_no, "frame", fields[2])?;
        let x: f64 = parse_field(path, line_no, "x", fields[3])?;
        let y: f64 = parse_field(path, line_no, "y", fields[4])?;
        let w: f64 = parse_field(path, line_no, "w", fields[5])?;
        let h: f64 = parse_field(path, line_no, "h", fields[6])?;
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::parse(path, line_no, "non-finite box coordinate"));
        }
        if w < 0.0 || h < 0.0 {
            return Err(Error::parse(
                path,
                line_no,
                format!("negative box extent ({w}, {h})"),
            ));
        }
        groups
            .entry((video, pid))
            .or_default()
            .push((line_no, BoundingBox { frame, x, y, w, h }));
    }
    let mut tubes = Vec::with_capacity(groups.len());
    for ((video, pid), mut rows) in groups {
        rows.sort_by_key(|(_, b)| b.frame);
        for pair in rows.windows(2) {
            let (_, prev) = pair[0];
            let (line_no, cur) = pair[1];
            if cur.frame == prev.frame {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("duplicate frame {} for proposal {pid}", cur.frame),
                ));
            }
            if cur.frame != prev.frame + 1 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!(
                        "non-contiguous frames for proposal {pid}: {} follows {}",
                        cur.frame, prev.frame
                    ),
                ));
            }
        }
        let boxes = rows.into_iter().map(|(_, b)| b).collect();
        tubes.push(Tube::new(video, pid, boxes)?);
    }
    Ok(tubes)
}

pub fn write_proposals(path: &Path, tubes: &[Tube]) -> Result<()> {
    let mut out = String::from(PROPOSALS_HEADER);
    out.push('\n');
    for tube in tubes {
        for b in tube.boxes() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                tube.video_id, tube.proposal_id, b.frame, b.x, b.y, b.w, b.h
            ));
        }
    }
    super::atomic_write(path, out.as_bytes())
}

/// Ingested per-patch actionness scores keyed by (video, proposal, frame).
#[derive(Debug, Clone, Default)]
pub struct ActionnessTable {
    map: HashMap<(String, u32, u32), f64>,
}

impl ActionnessTable {
    pub fn get(&self, video: &str, proposal_id: u32, frame: u32) -> Option<f64> {
        self.map
            .get(&(video.to_owned(), proposal_id, frame))
            .copied()
    }

    /// Inserts a score, returning any previous value for the key.
    pub fn insert(
        &mut self,
        video: impl Into<String>,
        proposal_id: u32,
        frame: u32,
        score: f64,
    ) -> Option<f64> {
        self.map.insert((video.into(), proposal_id, frame), score)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

pub fn load_actionness(path: &Path) -> Result<ActionnessTable> {
    let lines = read_lines(path)?;
    expect_header(path, &lines, ACTIONNESS_HEADER)?;
    let mut map = HashMap::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let video: String = fields[0].trim().to_owned();
        let pid: u32 = parse_field(path, line_no, "proposal_id", fields[1])?;
        let frame: u32 = parse_field(path, line_no, "frame", fields[2])?;
        let score: f64 = parse_field(path, line_no, "score", fields[3])?;
        if !(0.0..=1.0).contains(&score) {
            return Err(Error::parse(
                path,
                line_no,
                format!("score {score} outside [0, 1]"),
            ));
        }
        if map.insert((video.clone(), pid, frame), score).is_some() {
            return Err(Error::parse(
                path,
                line_no,
                format!("duplicate actionness key ({video}, {pid}, {frame})"),
            ));
        }
    }
    Ok(ActionnessTable { map })
}

pub fn write_actionness(
    path: &Path,
    rows: impl IntoIterator<Item = (String, u32, u32, f64)>,
) -> Result<()> {
    let mut out = String::from(ACTIONNESS_HEADER);
    out.push('\n');
    for (video, pid, frame, score) in rows {
        out.push_str(&format!("{video},{pid},{frame},{score}\n"));
    }
    super::atomic_write(path, out.as_bytes())
}

/// Feature CSV: first column `id`, remaining columns define the dimension.
pub fn load_features(path: &Path) -> Result<FeatureSet> {
    let lines = read_lines(path)?;
    let header = lines
        .first()
        .ok_or_else(|| Error::parse(path, 1, "missing feature header"))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"id") || cols.len() < 2 {
        return Err(Error::parse(
            path,
            1,
            "feature header must be `id` followed by at least one feature column",
        ));
    }
    let dim = cols.len() - 1;
    let mut items = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (idx, line) in lines.iter().enumerate().skip(1) {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != dim + 1 {
            return Err(Error::parse(
                path,
                line_no,
                format!("expected {} fields, found {}", dim + 1, fields.len()),
            ));
        }
        let id = fields[0].trim().to_owned();
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line_no, format!("duplicate id `{id}`")));
        }
        let mut psi = Vec::with_capacity(dim);
        for f in &fields[1..] {
            psi.push(parse_field::<f64>(path, line_no, "feature", f)?);
        }
        items.push((id, psi));
    }
    FeatureSet::new(items)
}

pub fn write_features(path: &Path, fs: &FeatureSet) -> Result<()> {
    let dim = fs.features().first().map(Vec::len).unwrap_or(0);
    let mut out = String::from("id");
    for d in 0..dim {
        out.push_str(&format!(",v{d}"));
    }
    out.push('\n');
    for (id, psi) in fs.ids().iter().zip(fs.features()) {
        out.push_str(id);
        for v in psi {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    super::atomic_write(path, out.as_bytes())
}
