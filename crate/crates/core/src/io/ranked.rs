//! Ranked-proposal JSONL: one object per line with a fixed field order and
//! the energy at 9 decimal digits, so re-serializing parsed output is
//! byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundingBox, Tube};
use crate::trellis::RankedProposal;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankedRecord {
    pub video_id: String,
    pub rank: usize,
    pub energy: f64,
    /// Selected proposal id per layer.
    pub path: Vec<u32>,
    /// Boxes as (frame, x, y, w, h).
    pub boxes: Vec<(u32, f64, f64, f64, f64)>,
}

impl RankedRecord {
    pub fn from_proposal(video_id: &str, rp: &RankedProposal) -> Self {
        Self {
            video_id: video_id.to_owned(),
            rank: rp.rank,
            energy: rp.energy,
            path: rp.path.clone(),
            boxes: rp
                .tube
                .boxes()
                .iter()
                .map(|b| (b.frame, b.x, b.y, b.w, b.h))
                .collect(),
        }
    }

    /// Reconstructs the recombined tube (proposal id = rank).
    pub fn tube(&self) -> Result<Tube> {
        let boxes = self
            .boxes
            .iter()
            .map(|&(frame, x, y, w, h)| BoundingBox { frame, x, y, w, h })
            .collect();
        Tube::new(self.video_id.clone(), self.rank as u32, boxes)
    }

    fn render(&self) -> String {
        let mut line = String::from("{\"video_id\":");
        line.push_str(&serde_json::to_string(&self.video_id).expect("string serializes"));
        line.push_str(&format!(",\"rank\":{},\"energy\":{:.9},\"path\":[", self.rank, self.energy));
        for (i, pid) in self.path.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&pid.to_string());
        }
        line.push_str("],\"boxes\":[");
        for (i, (frame, x, y, w, h)) in self.boxes.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("[{frame},{x},{y},{w},{h}]"));
        }
        line.push_str("]}");
        line
    }
}

pub fn write_ranked(path: &Path, records: &[RankedRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        out.push_str(&r.render());
        out.push('\n');
    }
    super::atomic_write(path, out.as_bytes())
}

pub fn load_ranked(path: &Path) -> Result<Vec<RankedRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let record: RankedRecord = serde_json::from_str(line)
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        records.push(record);
    }
    Ok(records)
}
