//! End-to-end ranking pipeline for one or more videos.
//!
//! Per video: proposals are padded to the full frame span, pre-filtered with
//! tube NMS scored by mean optical-flow-derivative magnitude, then (for
//! untrimmed input) the video is split into shots and each shot is ranked
//! independently: proposals are clipped to the shot, split into temporal
//! segments, scored (ingested actionness + per-shot normalized motion), and
//! recombined by the trellis search.

use std::collections::BTreeMap;

use ndarray::Array2;

use crate::changepoint::{auto_segment, frame_features, shots_to_ranges};
use crate::error::{Error, Result};
use crate::geometry::{nms, Tube};
use crate::hog::mean_hog;
use crate::io::tables::ActionnessTable;
use crate::io::{RankedRecord, RunConfig};
use crate::score::{
    generate_motion_boxes, min_max_normalize, motion_edges, subproposal_motion_score,
    tube_edge_mean, FlowField, MotionEdgeMap,
};
use crate::trellis::{build_trellis, rank_and_assemble, split_subproposals, ProposalChain};

/// Everything the pipeline needs for one video.
pub struct VideoData {
    pub video_id: String,
    pub tubes: Vec<Tube>,
    pub flow: FlowField,
    pub frames: Vec<Array2<u8>>,
    pub actionness: ActionnessTable,
}

/// Ranks one video, returning JSONL-ready records ordered by shot then rank.
pub fn rank_video(data: &VideoData, cfg: &RunConfig, untrimmed: bool) -> Result<Vec<RankedRecord>> {
    let t_count = data.flow.len();
    if data.frames.len() != t_count {
        return Err(Error::invalid(format!(
            "video `{}` has {} frames but {} flow frames",
            data.video_id,
            data.frames.len(),
            t_count
        )));
    }
    if data.tubes.is_empty() {
        return Err(Error::invalid(format!("video `{}` has no proposals", data.video_id)));
    }
    {
        let mut seen = std::collections::HashSet::new();
        for t in &data.tubes {
            if !seen.insert(t.proposal_id) {
                return Err(Error::invalid(format!(
                    "video `{}` has duplicate proposal id {}",
                    data.video_id, t.proposal_id
                )));
            }
        }
    }

    let edge_maps: Vec<MotionEdgeMap> = data
        .flow
        .frames()
        .iter()
        .map(motion_edges)
        .collect::<Result<_>>()?;

    // Pad every proposal to the full span, remembering the original span so
    // actionness lookups on padded frames reuse the terminal scores.
    let last_frame = (t_count - 1) as u32;
    let mut padded = Vec::with_capacity(data.tubes.len());
    let mut orig_span: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    for tube in &data.tubes {
        if tube.end_frame() > last_frame {
            return Err(Error::invalid(format!(
                "proposal {} of video `{}` ends at frame {} beyond the video length {t_count}",
                tube.proposal_id,
                data.video_id,
                tube.end_frame()
            )));
        }
        orig_span.insert(tube.proposal_id, (tube.start_frame(), tube.end_frame()));
        padded.push(tube.padded_to(0, last_frame)?);
    }

    // NMS pre-step scored by mean flow-derivative magnitude.
    let nms_scores: Vec<f64> = padded
        .iter()
        .map(|t| tube_edge_mean(t, &edge_maps))
        .collect::<Result<_>>()?;
    let kept_idx = nms(&padded, &nms_scores, cfg.nms_threshold);
    let mut kept: Vec<Tube> = kept_idx.into_iter().map(|i| padded[i].clone()).collect();
    kept.sort_by_key(|t| t.proposal_id);

    // Motion-box candidates per frame, shared across shots.
    let motion_params = cfg.motion_params();
    let candidates: Vec<_> = edge_maps
        .iter()
        .map(|em| generate_motion_boxes(em, &motion_params))
        .collect();

    let shots: Vec<(usize, usize)> = if untrimmed {
        let signal = frame_features(&kept, &data.frames)?;
        let solution = auto_segment(&signal, &cfg.tv_params())?;
        shots_to_ranges(&solution, t_count)
    } else {
        vec![(0, t_count)]
    };

    let mut records = Vec::new();
    for &shot in &shots {
        let (trellis, chains) = shot_trellis(data, cfg, shot, &kept, &orig_span, &candidates)?;
        for rp in rank_and_assemble(&trellis, &chains, cfg.k)? {
            records.push(RankedRecord::from_proposal(&data.video_id, &rp));
        }
    }
    Ok(records)
}

/// Builds the scored trellis of one shot from NMS-kept padded tubes:
/// clipped sub-proposals with attached actionness/appearance, raw motion
/// scores min-max normalized over the shot.
fn shot_trellis(
    data: &VideoData,
    cfg: &RunConfig,
    (start, end): (usize, usize),
    kept: &[Tube],
    orig_span: &BTreeMap<u32, (u32, u32)>,
    candidates: &[Vec<(crate::geometry::BoundingBox, f64)>],
) -> Result<(crate::trellis::Trellis, Vec<ProposalChain>)> {
    let f_eff = cfg.f.min(end - start);
    let mut chains = Vec::with_capacity(kept.len());
    for tube in kept {
        let clipped = tube.clipped_to(start as u32, end as u32)?;
        let mut subs = split_subproposals(&clipped, f_eff)?;
        let (os, oe) = orig_span[&tube.proposal_id];
        for sub in &mut subs {
            sub.attach_actionness(|pid, frame| {
                data.actionness
                    .get(&data.video_id, pid, frame.clamp(os, oe))
            })?;
            sub.appearance = mean_hog(&sub.boxes, &data.frames)?;
        }
        let motion = subs
            .iter()
            .map(|sp| subproposal_motion_score(sp, candidates))
            .collect::<Result<Vec<f64>>>()?;
        chains.push(ProposalChain {
            video_id: data.video_id.clone(),
            proposal_id: tube.proposal_id,
            subs,
            motion,
        });
    }

    // Per-shot min-max normalization of the raw motion scores.
    let raw: Vec<f64> = chains.iter().flat_map(|c| c.motion.iter().copied()).collect();
    let normalized = min_max_normalize(&raw);
    let mut offset = 0;
    for chain in &mut chains {
        let n = chain.motion.len();
        chain.motion.copy_from_slice(&normalized[offset..offset + n]);
        offset += n;
    }

    let trellis = build_trellis(&chains, &cfg.weights(), cfg.sigma)?;
    Ok((trellis, chains))
}

/// The scored full-span trellis of a trimmed video, for inspection and
/// verification against the enumeration oracle.
pub fn video_trellis(
    data: &VideoData,
    cfg: &RunConfig,
) -> Result<(crate::trellis::Trellis, Vec<ProposalChain>)> {
    let t_count = data.flow.len();
    let edge_maps: Vec<MotionEdgeMap> = data
        .flow
        .frames()
        .iter()
        .map(motion_edges)
        .collect::<Result<_>>()?;
    let last_frame = (t_count - 1) as u32;
    let mut padded = Vec::with_capacity(data.tubes.len());
    let mut orig_span: BTreeMap<u32, (u32, u32)> = BTreeMap::new();
    for tube in &data.tubes {
        orig_span.insert(tube.proposal_id, (tube.start_frame(), tube.end_frame()));
        padded.push(tube.padded_to(0, last_frame)?);
    }
    let motion_params = cfg.motion_params();
    let candidates: Vec<_> = edge_maps
        .iter()
        .map(|em| generate_motion_boxes(em, &motion_params))
        .collect();
    shot_trellis(data, cfg, (0, t_count), &padded, &orig_span, &candidates)
}

/// Ranks several videos, optionally in parallel; the output order (by video
/// id, then shot, then rank) does not depend on the job count.
pub fn rank_many(
    videos: &[VideoData],
    cfg: &RunConfig,
    untrimmed: bool,
    jobs: usize,
) -> Result<Vec<RankedRecord>> {
    let mut order: Vec<usize> = (0..videos.len()).collect();
    order.sort_by(|&a, &b| videos[a].video_id.cmp(&videos[b].video_id));
    let per_video: Vec<Vec<RankedRecord>> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::invalid(format!("cannot build thread pool: {e}")))?;
        pool.install(|| {
            order
                .par_iter()
                .map(|&i| rank_video(&videos[i], cfg, untrimmed))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        order
            .iter()
            .map(|&i| rank_video(&videos[i], cfg, untrimmed))
            .collect::<Result<Vec<_>>>()?
    };
    Ok(per_video.into_iter().flatten().collect())
}
