//! Localization metrics over ranked proposals and ground truth.
//!
//! A video may carry several top-1 proposals (one per shot for untrimmed
//! input); metrics take the best overlap over the pooled set. A video with
//! several ground-truth tubes scores against the best-matching one, except
//! CorLoc which counts every ground-truth instance separately.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::{tube_overlap, Tube};

/// Per-video collections, ordered by video id for deterministic iteration.
pub type PerVideo<T> = BTreeMap<String, T>;

/// Thresholds of the accuracy/CorLoc tables.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];

fn best_overlap(proposals: &[Tube], gts: &[Tube]) -> f64 {
    let mut best = 0.0f64;
    for p in proposals {
        for g in gts {
            best = best.max(tube_overlap(p, g));
        }
    }
    best
}

fn require_gt<'a>(gt: &'a PerVideo<Vec<Tube>>, video: &str) -> Result<&'a Vec<Tube>> {
    gt.get(video)
        .ok_or_else(|| Error::invalid(format!("video `{video}` has no ground truth")))
}

/// Fraction of videos whose top-1 overlap with ground truth reaches each
/// threshold.
pub fn localization_accuracy(
    top1: &PerVideo<Vec<Tube>>,
    gt: &PerVideo<Vec<Tube>>,
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let mut overlaps = Vec::with_capacity(top1.len());
    for (video, tubes) in top1 {
        overlaps.push(best_overlap(tubes, require_gt(gt, video)?));
    }
    let n = overlaps.len() as f64;
    Ok(thresholds
        .iter()
        .map(|&t| {
            let hits = overlaps.iter().filter(|&&o| o >= t).count() as f64;
            (t, if n > 0.0 { hits / n } else { 0.0 })
        })
        .collect())
}

/// Mean average best overlap: per video the best overlap among the top-K
/// proposals, averaged per class and then over classes. Without labels the
/// plain mean over videos is used.
pub fn mabo(
    ranked: &PerVideo<Vec<Tube>>,
    gt: &PerVideo<Vec<Tube>>,
    k: usize,
    labels: Option<&PerVideo<String>>,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("mabo requires k >= 1"));
    }
    let mut per_video: Vec<(&String, f64)> = Vec::with_capacity(ranked.len());
    for (video, tubes) in ranked {
        let top_k = &tubes[..tubes.len().min(k)];
        per_video.push((video, best_overlap(top_k, require_gt(gt, video)?)));
    }
    if per_video.is_empty() {
        return Ok(0.0);
    }
    match labels {
        None => Ok(per_video.iter().map(|(_, o)| o).sum::<f64>() / per_video.len() as f64),
        Some(labels) => {
            let mut by_class: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
            for (video, overlap) in &per_video {
                let class = labels.get(*video).ok_or_else(|| {
                    Error::invalid(format!("video `{video}` has no class label"))
                })?;
                let entry = by_class.entry(class).or_insert((0.0, 0));
                entry.0 += overlap;
                entry.1 += 1;
            }
            let sum: f64 = by_class.values().map(|(s, c)| s / *c as f64).sum();
            Ok(sum / by_class.len() as f64)
        }
    }
}

/// Fraction of (video, ground-truth instance) pairs localized at `threshold`
/// by the pooled top-1 proposals of the video.
pub fn corloc(
    top1: &PerVideo<Vec<Tube>>,
    gt: &PerVideo<Vec<Tube>>,
    threshold: f64,
) -> Result<f64> {
    let mut total = 0usize;
    let mut localized = 0usize;
    for (video, gts) in gt {
        let tubes = top1
            .get(video)
            .ok_or_else(|| Error::invalid(format!("video `{video}` has no proposals")))?;
        for g in gts {
            total += 1;
            let best = tubes
                .iter()
                .map(|t| tube_overlap(t, g))
                .fold(0.0f64, f64::max);
            if best >= threshold {
                localized += 1;
            }
        }
    }
    if total == 0 {
        return Ok(0.0);
    }
    Ok(localized as f64 / total as f64)
}

/// For each `K <= k_max`, the fraction of videos where any of the top-K
/// proposals reaches `threshold` overlap with ground truth.
pub fn recall_at_k(
    ranked: &PerVideo<Vec<Tube>>,
    gt: &PerVideo<Vec<Tube>>,
    threshold: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    // Rank of the first hit per video, if any.
    let mut first_hit: Vec<Option<usize>> = Vec::with_capacity(ranked.len());
    for (video, tubes) in ranked {
        let gts = require_gt(gt, video)?;
        first_hit.push(
            tubes
                .iter()
                .position(|t| gts.iter().any(|g| tube_overlap(t, g) >= threshold)),
        );
    }
    let n = first_hit.len() as f64;
    Ok((1..=k_max)
        .map(|k| {
            if n == 0.0 {
                return 0.0;
            }
            let hits = first_hit
                .iter()
                .filter(|h| matches!(h, Some(r) if *r < k))
                .count() as f64;
            hits / n
        })
        .collect())
}

/// Full metric bundle emitted by the evaluation command.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub accuracy: Vec<(f64, f64)>,
    pub mabo: f64,
    pub mabo_k: usize,
    pub corloc: Vec<(f64, f64)>,
    pub recall_threshold: f64,
    pub recall: Vec<f64>,
}

/// Computes the standard report: accuracy and CorLoc at the default
/// thresholds, MABO over all available proposals, and the recall series at
/// overlap 0.5 up to the deepest available rank.
pub fn evaluate(
    ranked: &PerVideo<Vec<Tube>>,
    top1: &PerVideo<Vec<Tube>>,
    gt: &PerVideo<Vec<Tube>>,
) -> Result<EvalReport> {
    for video in ranked.keys() {
        if !gt.contains_key(video) {
            return Err(Error::invalid(format!("video `{video}` has no ground truth")));
        }
    }
    for video in gt.keys() {
        if !ranked.contains_key(video) {
            return Err(Error::invalid(format!(
                "ground-truth video `{video}` has no ranked proposals"
            )));
        }
    }
    let k_max = ranked.values().map(Vec::len).max().unwrap_or(0).max(1);
    let accuracy = localization_accuracy(top1, gt, &DEFAULT_THRESHOLDS)?;
    let mabo_value = mabo(ranked, gt, k_max, None)?;
    let corloc_rows = DEFAULT_THRESHOLDS
        .iter()
        .map(|&t| Ok((t, corloc(top1, gt, t)?)))
        .collect::<Result<Vec<_>>>()?;
    let recall_threshold = 0.5;
    let recall = recall_at_k(ranked, gt, recall_threshold, k_max)?;
    Ok(EvalReport {
        accuracy,
        mabo: mabo_value,
        mabo_k: k_max,
        corloc: corloc_rows,
        recall_threshold,
        recall,
    })
}

impl EvalReport {
    /// CSV rendering: one row per threshold / per K, fixed 9-decimal values.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,key,value\n");
        for (t, v) in &self.accuracy {
            out.push_str(&format!("accuracy,{t},{v:.9}\n"));
        }
        out.push_str(&format!("mabo,{},{:.9}\n", self.mabo_k, self.mabo));
        for (t, v) in &self.corloc {
            out.push_str(&format!("corloc,{t},{v:.9}\n"));
        }
        for (i, v) in self.recall.iter().enumerate() {
            out.push_str(&format!(
                "recall@{},{},{v:.9}\n",
                self.recall_threshold,
                i + 1
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BoundingBox;

    /// Tube whose overlap with `gt_tube(n)` is exactly `hits / n`: identical
    /// boxes on the first `hits` frames, far-displaced boxes elsewhere.
    fn partial_tube(pid: u32, n: u32, hits: u32) -> Tube {
        let boxes = (0..n)
            .map(|f| {
                let x = if f < hits { 0.0 } else { 1000.0 };
                BoundingBox::new(f, x, 0.0, 10.0, 10.0)
            })
            .collect();
        Tube::new("v", pid, boxes).unwrap()
    }

    fn gt_tube(n: u32) -> Tube {
        Tube::new(
            "v",
            0,
            (0..n).map(|f| BoundingBox::new(f, 0.0, 0.0, 10.0, 10.0)).collect(),
        )
        .unwrap()
    }

    fn per_video(entries: Vec<(&str, Vec<Tube>)>) -> PerVideo<Vec<Tube>> {
        entries
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect()
    }

    #[test]
    fn accuracy_micro_fixture() {
        // overlaps 0.55, 0.25, 0.15
        let top1 = per_video(vec![
            ("a", vec![partial_tube(1, 20, 11)]),
            ("b", vec![partial_tube(1, 20, 5)]),
            ("c", vec![partial_tube(1, 20, 3)]),
        ]);
        let gt = per_video(vec![
            ("a", vec![gt_tube(20)]),
            ("b", vec![gt_tube(20)]),
            ("c", vec![gt_tube(20)]),
        ]);
        let table = localization_accuracy(&top1, &gt, &[0.2, 0.5]).unwrap();
        assert!((table[0].1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((table[1].1 - 1.0 / 3.0).abs() < 1e-12);
        let empty = localization_accuracy(&top1, &gt, &[]).unwrap();
        assert!(empty.is_empty());
    }

    #[test]
    fn accuracy_requires_ground_truth() {
        let top1 = per_video(vec![("a", vec![partial_tube(1, 20, 10)])]);
        let gt = per_video(vec![]);
        assert!(localization_accuracy(&top1, &gt, &[0.5]).is_err());
    }

    #[test]
    fn mabo_micro_fixture() {
        // best overlaps 0.3, 0.3, 0.35 -> 0.3167
        let ranked = per_video(vec![
            ("a", vec![partial_tube(1, 20, 6)]),
            ("b", vec![partial_tube(1, 20, 6)]),
            ("c", vec![partial_tube(1, 20, 7)]),
        ]);
        let gt = per_video(vec![
            ("a", vec![gt_tube(20)]),
            ("b", vec![gt_tube(20)]),
            ("c", vec![gt_tube(20)]),
        ]);
        let m = mabo(&ranked, &gt, 1, None).unwrap();
        assert!((m - 0.31666666666).abs() < 1e-4);
    }

    #[test]
    fn mabo_class_mean_ignores_class_sizes() {
        // class X: overlaps {0.2, 0.2}; class Y: {0.4} -> (0.2 + 0.4) / 2
        let ranked = per_video(vec![
            ("a", vec![partial_tube(1, 20, 4)]),
            ("b", vec![partial_tube(1, 20, 4)]),
            ("c", vec![partial_tube(1, 20, 8)]),
        ]);
        let gt = per_video(vec![
            ("a", vec![gt_tube(20)]),
            ("b", vec![gt_tube(20)]),
            ("c", vec![gt_tube(20)]),
        ]);
        let labels: PerVideo<String> = [("a", "x"), ("b", "x"), ("c", "y")]
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        let m = mabo(&ranked, &gt, 1, Some(&labels)).unwrap();
        assert!((m - 0.3).abs() < 1e-12);
    }

    #[test]
    fn mabo_perfect_proposals() {
        let ranked = per_video(vec![("a", vec![gt_tube(20)])]);
        let gt = per_video(vec![("a", vec![gt_tube(20)])]);
        assert_eq!(mabo(&ranked, &gt, 3, None).unwrap(), 1.0);
    }

    #[test]
    fn mabo_never_decreases_with_deeper_k() {
        let ranked = per_video(vec![(
            "a",
            vec![partial_tube(1, 20, 4), partial_tube(2, 20, 12), partial_tube(3, 20, 8)],
        )]);
        let gt = per_video(vec![("a", vec![gt_tube(20)])]);
        let mut last = 0.0;
        for k in 1..=4 {
            let m = mabo(&ranked, &gt, k, None).unwrap();
            assert!(m >= last, "mabo dropped at k={k}");
            last = m;
        }
        assert_eq!(mabo(&ranked, &gt, 2, None).unwrap(), 0.6);
    }

    #[test]
    fn corloc_counts_instances() {
        // 4 GT instances across 2 videos, 3 localized at 0.2: the second
        // instance of video b sits far from every proposal box.
        let far_gt = Tube::new(
            "v",
            9,
            (0..20)
                .map(|f| BoundingBox::new(f, 500.0, 500.0, 10.0, 10.0))
                .collect(),
        )
        .unwrap();
        let top1 = per_video(vec![
            ("a", vec![partial_tube(1, 20, 10)]),
            ("b", vec![partial_tube(1, 20, 4)]),
        ]);
        let gt = per_video(vec![
            ("a", vec![gt_tube(20), gt_tube(20)]),
            ("b", vec![gt_tube(20), far_gt]),
        ]);
        let c = corloc(&top1, &gt, 0.2).unwrap();
        assert!((c - 0.75).abs() < 1e-12);
        assert_eq!(corloc(&top1, &gt, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn recall_series_is_monotone_and_jumps_at_hit_rank() {
        let ranked = per_video(vec![(
            "a",
            vec![
                partial_tube(1, 20, 2),
                partial_tube(2, 20, 3),
                partial_tube(3, 20, 20), // perfect at rank 3
            ],
        )]);
        let gt = per_video(vec![("a", vec![gt_tube(20)])]);
        let series = recall_at_k(&ranked, &gt, 0.9, 5).unwrap();
        assert_eq!(series, vec![0.0, 0.0, 1.0, 1.0, 1.0]);
        for pair in series.windows(2) {
            assert!(pair[1] >= pair[0]);
        }
        // K = 1 equals localization accuracy at the same threshold.
        let top1 = per_video(vec![("a", vec![partial_tube(1, 20, 2)])]);
        let acc = localization_accuracy(&top1, &gt, &[0.9]).unwrap()[0].1;
        assert_eq!(series[0], acc);
    }

    #[test]
    fn report_csv_shape() {
        let ranked = per_video(vec![("a", vec![gt_tube(20)])]);
        let gt = per_video(vec![("a", vec![gt_tube(20)])]);
        let report = evaluate(&ranked, &ranked, &gt).unwrap();
        let csv = report.to_csv();
        let lines: Vec<&str> = csv.trim().lines().collect();
        assert_eq!(lines[0], "metric,key,value");
        assert_eq!(lines.len(), 1 + 6 + 1 + 6 + 1);
        assert!(lines[1].starts_with("accuracy,0.1,1.000000000"));
        assert!(csv.contains("mabo,1,1.000000000"));
        assert!(csv.contains("recall@0.5,1,1.000000000"));
    }

    #[test]
    fn evaluate_rejects_mismatched_videos() {
        let ranked = per_video(vec![("a", vec![gt_tube(20)])]);
        let gt = per_video(vec![("b", vec![gt_tube(20)])]);
        assert!(evaluate(&ranked, &ranked, &gt).is_err());
    }
}
