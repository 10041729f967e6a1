//! Acceptance suite: one test per criterion, each printing a PASS line with
//! its measured figures. Thresholds and tolerances are pinned in the
//! assertions.

use std::process::Command;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use tuberank_core::changepoint::{
    auto_segment, lambda_grid, lambda_max, tv_objective, tv_segment, SignalMatrix, TvParams,
    WeightMode,
};
use tuberank_core::eval::{localization_accuracy, mabo, PerVideo};
use tuberank_core::geometry::{tube_overlap, BoundingBox, Tube};
use tuberank_core::io::{self, RunConfig};
use tuberank_core::pipeline::{rank_video, VideoData};
use tuberank_core::score::{
    box_contour_score, enumerate_grid_boxes, extract_contours, motion_edges, otsu_threshold,
    MotionBoxParams,
};
use tuberank_core::synth::oracles::{oracle_best_path, oracle_segmentation, oracle_walk_stationary};
use tuberank_core::synth::{gen_scene, SceneSpec};
use tuberank_core::trellis::{best_path, energy_of_path, rank_proposals, Trellis, TrellisNode};
use tuberank_core::walk::{filter_outliers, random_walk, transition_matrix, FeatureSet, WalkParams};

fn random_trellis(rng: &mut ChaCha8Rng) -> Trellis {
    let n = rng.random_range(1..=6usize);
    let f = rng.random_range(1..=5usize);
    let layers: Vec<Vec<TrellisNode>> = (0..f)
        .map(|_| {
            (0..n)
                .map(|p| TrellisNode {
                    proposal_id: p as u32,
                    score: rng.random::<f64>(),
                })
                .collect()
        })
        .collect();
    let edges: Vec<Array2<f64>> = (0..f - 1)
        .map(|_| Array2::from_shape_fn((n, n), |_| rng.random::<f64>()))
        .collect();
    Trellis::new(layers, edges, 1.0).unwrap()
}

#[test]
fn criterion_01_dp_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let t = random_trellis(&mut rng);
        let (dp_path, dp_energy) = best_path(&t);
        let (oracle_path, oracle_energy) = oracle_best_path(&t).unwrap();
        assert!(
            (dp_energy - oracle_energy).abs() < 1e-9,
            "case {case}: {dp_energy} vs {oracle_energy}"
        );
        assert_eq!(dp_path, oracle_path, "case {case}");
    }
    let elapsed = start.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "200 trellises took {elapsed:.2}s");
    println!("PASS criterion 1: DP exact on 200 random trellises in {elapsed:.2}s");
}

#[test]
fn criterion_02_top_k_extraction() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let t = random_trellis(&mut rng);
        let n = t.layers()[0].len();
        let selected = rank_proposals(&t, n);
        assert_eq!(selected.len(), n, "case {case}");
        for f in 0..t.num_layers() {
            let mut used: Vec<u32> = selected.iter().map(|s| s.path[f]).collect();
            used.sort_unstable();
            used.dedup();
            assert_eq!(used.len(), n, "case {case}: node reused in layer {f}");
        }
        for s in &selected {
            let recomputed = energy_of_path(&t, &s.path).unwrap();
            assert!(
                (recomputed - s.energy).abs() < 1e-9,
                "case {case}: {} vs {recomputed}",
                s.energy
            );
        }
    }
    println!("PASS criterion 2: top-K paths disjoint, energies recompute within 1e-9");
}

fn corruption_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        seed,
        frames: 20,
        height: 64,
        width: 96,
        gt_start: (12.0, 14.0, 18.0, 14.0),
        gt_velocity: vec![(1.5, 0.5)],
        jitter_sigma: 0.0,
        n_jittered: 0,
        corrupt_segments: vec![(0, 2), (3, 4)],
        f: 5,
        distractors: 4,
        clutter_density: 0.01,
        actionness_sigma: 0.1,
        ..Default::default()
    }
}

fn video_data(spec: &SceneSpec) -> (VideoData, Tube, Vec<Tube>) {
    let scene = gen_scene(spec).unwrap();
    let mut table = io::tables::ActionnessTable::default();
    for &(pid, frame, score) in &scene.actionness {
        table.insert(spec.video_id.clone(), pid, frame, score);
    }
    let gt = scene.gt.clone();
    let proposals = scene.proposals.clone();
    (
        VideoData {
            video_id: spec.video_id.clone(),
            tubes: scene.proposals,
            flow: scene.flow,
            frames: scene.frames,
            actionness: table,
        },
        gt,
        proposals,
    )
}

#[test]
fn criterion_03_recombination_superiority() {
    let cfg = RunConfig::default();
    let mut wins = 0;
    let total = 50;
    for seed in 0..total {
        let spec = corruption_spec(seed);
        let (data, gt, proposals) = video_data(&spec);
        let best_input = proposals
            .iter()
            .map(|t| tube_overlap(t, &gt))
            .fold(0.0f64, f64::max);
        let records = rank_video(&data, &cfg, false).unwrap();
        let top = records[0].tube().unwrap();
        if tube_overlap(&top, &gt) > best_input {
            wins += 1;
        }
    }
    assert!(wins >= 48, "recombination beat the best input in only {wins}/50 scenes");
    println!("PASS criterion 3: rank-1 recombination beats best input in {wins}/50 scenes");
}

#[test]
fn criterion_04_end_to_end_localization() {
    let cfg = RunConfig::default();
    let mut hits = 0;
    let total = 100;
    for seed in 0..total {
        let spec = SceneSpec {
            seed,
            frames: 20,
            height: 64,
            width: 96,
            gt_start: (12.0, 14.0, 18.0, 14.0),
            gt_velocity: vec![(1.5, 0.5)],
            jitter_sigma: 2.0,
            n_jittered: 5,
            distractors: 10,
            clutter_density: 0.01,
            actionness_sigma: 0.1,
            ..Default::default()
        };
        let (data, gt, _) = video_data(&spec);
        let records = rank_video(&data, &cfg, false).unwrap();
        let top = records[0].tube().unwrap();
        if tube_overlap(&top, &gt) >= 0.5 {
            hits += 1;
        }
    }
    assert!(hits >= 90, "top-1 overlap >= 0.5 in only {hits}/100 scenes");
    println!("PASS criterion 4: top-1 overlap >= 0.5 in {hits}/100 standard scenes");
}

fn planted_signal(n: usize, k: usize, boundaries: &[usize], step: f64) -> Array2<f64> {
    let mut z = Array2::zeros((n, k));
    for c in 0..k {
        let mut level = 0.0;
        for r in 0..n {
            if boundaries.contains(&r) {
                level += step * if c % 2 == 0 { 1.0 } else { -1.0 };
            }
            z[(r, c)] = level;
        }
    }
    z
}

#[test]
fn criterion_05_changepoint_correctness() {
    // Noiseless planted jumps recover exactly.
    for (n, planted) in [(40usize, vec![20usize]), (60, vec![20, 40]), (36, vec![9, 27])] {
        let z = planted_signal(n, 3, &planted, 1.0);
        let sm = SignalMatrix::standardize(z).unwrap();
        let sol = auto_segment(&sm, &TvParams::default()).unwrap();
        assert_eq!(sol.boundaries, planted, "noiseless n={n}");
    }

    // Noise sigma = 0.1, jumps 5 sigma: within +-2 frames of the
    // matched-count DP oracle in at least 95% of 50 seeds.
    let sigma = 0.1;
    let normal = Normal::new(0.0, sigma).unwrap();
    let seeds = 50;
    let mut good = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut z = planted_signal(60, 3, &[20, 40], 5.0 * sigma);
        for v in z.iter_mut() {
            *v += normal.sample(&mut rng);
        }
        let sm = SignalMatrix::standardize(z).unwrap();
        let sol = auto_segment(&sm, &TvParams::default()).unwrap();
        if sol.boundaries.is_empty() {
            continue;
        }
        let oracle = oracle_segmentation(sm.z(), sol.boundaries.len() + 1).unwrap();
        if sol
            .boundaries
            .iter()
            .zip(&oracle)
            .all(|(a, b)| a.abs_diff(*b) <= 2)
        {
            good += 1;
        }
    }
    assert!(
        good * 100 >= seeds as usize * 95,
        "only {good}/{seeds} noisy seeds within +-2 of the oracle"
    );
    println!("PASS criterion 5: noiseless exact; noisy within +-2 of oracle in {good}/{seeds} seeds");
}

#[test]
fn criterion_06_tv_solver_optimality() {
    for (n, planted) in [(40usize, vec![20usize]), (36, vec![12, 24])] {
        let z = planted_signal(n, 2, &planted, 1.0);
        let sm = SignalMatrix::new(z.clone()).unwrap();
        let lam_max = lambda_max(&sm, WeightMode::Divide);
        let mut last_count = usize::MAX;
        for lambda in lambda_grid(lam_max) {
            let sol = tv_segment(&sm, lambda, &TvParams::default()).unwrap();
            assert!(
                sol.boundaries.len() <= last_count,
                "boundary count grew at lambda {lambda}"
            );
            last_count = sol.boundaries.len();

            let oracle = oracle_segmentation(&z, sol.boundaries.len() + 1).unwrap();
            let mut restricted = Array2::zeros((n, 2));
            let mut starts = vec![0usize];
            starts.extend(&oracle);
            starts.push(n);
            for w in starts.windows(2) {
                for c in 0..2 {
                    let mean: f64 =
                        (w[0]..w[1]).map(|r| z[(r, c)]).sum::<f64>() / (w[1] - w[0]) as f64;
                    for r in w[0]..w[1] {
                        restricted[(r, c)] = mean;
                    }
                }
            }
            let at_solution = tv_objective(&z, &sol.x, lambda, WeightMode::Divide);
            let at_restricted = tv_objective(&z, &restricted, lambda, WeightMode::Divide);
            let gap = (at_solution - at_restricted) / at_restricted.abs().max(1.0);
            assert!(gap <= 1e-6, "lambda {lambda}: relative gap {gap:.3e}");
        }
    }
    println!("PASS criterion 6: TV objective within 1e-6 of restricted optimum; counts monotone");
}

/// 90 clustered points plus 10 far, pairwise-separated outliers.
fn outlier_fixture(seed: u64) -> (FeatureSet, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = 6;
    let mut items = Vec::new();
    let mut outlier_ids = Vec::new();
    for i in 0..90 {
        let psi: Vec<f64> = (0..d).map(|_| rng.random::<f64>() * 0.5).collect();
        items.push((format!("in{i:03}"), psi));
    }
    for i in 0..10 {
        let radius = (15.0 + 5.0 * rng.random::<f64>()) * if i % 2 == 0 { 1.0 } else { -1.0 };
        let mut psi = vec![0.0; d];
        psi[i / 2] = radius;
        let id = format!("out{i:03}");
        outlier_ids.push(id.clone());
        items.push((id, psi));
    }
    (FeatureSet::new(items).unwrap(), outlier_ids)
}

#[test]
fn criterion_07_random_walk_correctness() {
    // Iterated scores match the linear-solve oracle on 20 random sets.
    let beta = 0.85;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..20 {
        let n = rng.random_range(5..=40usize);
        let d = rng.random_range(2..=8usize);
        let items = (0..n)
            .map(|i| {
                (
                    format!("i{i}"),
                    (0..d).map(|_| rng.random::<f64>() * 3.0).collect(),
                )
            })
            .collect();
        let fs = FeatureSet::new(items).unwrap();
        let p = transition_matrix(&fs, 1.0).unwrap();
        let z = vec![1.0 / n as f64; n];
        let iterated = random_walk(&p, &z, beta, 200).unwrap();
        let solved = oracle_walk_stationary(&p, &z, beta).unwrap();
        let max_err = iterated
            .iter()
            .zip(&solved)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 1e-6, "case {case}: max error {max_err:.3e}");
    }

    // The 10 planted outliers occupy the 10 lowest scores in all 20 seeds.
    for seed in 0..20 {
        let (fs, outlier_ids) = outlier_fixture(seed);
        let out = filter_outliers(
            &fs,
            &WalkParams {
                iterations: 200,
                ..Default::default()
            },
        )
        .unwrap();
        let mut order: Vec<usize> = (0..fs.len()).collect();
        order.sort_by(|&a, &b| out.scores[a].partial_cmp(&out.scores[b]).unwrap());
        let lowest: Vec<&String> = order[..10].iter().map(|&i| &fs.ids()[i]).collect();
        for id in &outlier_ids {
            assert!(lowest.contains(&id), "seed {seed}: {id} not among the 10 lowest");
        }
    }
    println!("PASS criterion 7: walk matches solve within 1e-6; outliers lowest in 20/20 seeds");
}

#[test]
fn criterion_08_motion_score_ordering() {
    let spec = SceneSpec {
        seed: 13,
        frames: 20,
        height: 64,
        width: 96,
        gt_start: (20.0, 20.0, 18.0, 14.0),
        gt_velocity: vec![(1.0, 0.4)],
        n_jittered: 1,
        ..Default::default()
    };
    let scene = gen_scene(&spec).unwrap();
    let params = MotionBoxParams::default();
    for t in 0..spec.frames {
        let edges = motion_edges(scene.flow.frame(t)).unwrap();
        let threshold = otsu_threshold(&edges).expect("moving rectangle has edges");
        let contours = extract_contours(&edges, threshold);
        assert_eq!(contours.len(), 1, "frame {t}: expected a single motion contour");
        let contour = &contours[0];
        let total_pixels = contour.pixels.len();

        let grid = enumerate_grid_boxes(spec.height, spec.width, &params);
        let mut min_enclosing: Option<f64> = None;
        let mut max_half_covering = 0.0f64;
        for b in &grid {
            let inside = contour
                .pixels
                .iter()
                .filter(|&&(r, c)| {
                    b.x < c as f64 && (c as f64) < b.x + b.w && b.y < r as f64 && (r as f64) < b.y + b.h
                })
                .count();
            let score = box_contour_score(b, &contours, params.kappa);
            if inside == total_pixels {
                min_enclosing = Some(min_enclosing.map_or(score, |m: f64| m.min(score)));
            } else if inside * 2 <= total_pixels {
                max_half_covering = max_half_covering.max(score);
            }
        }
        let min_enclosing = min_enclosing.unwrap_or_else(|| {
            panic!("frame {t}: no grid box fully encloses the motion contour")
        });
        assert!(
            min_enclosing > max_half_covering,
            "frame {t}: enclosing {min_enclosing:.3e} vs half-covering {max_half_covering:.3e}"
        );
    }
    println!("PASS criterion 8: enclosing boxes outscore half-covering boxes on all 20 frames");
}

#[test]
fn criterion_09_metric_fixtures() {
    // Overlap p/20 comes from p identical frames out of 20.
    let partial = |pid: u32, hits: u32| {
        let boxes = (0..20)
            .map(|f| {
                let x = if f < hits { 0.0 } else { 1000.0 };
                BoundingBox::new(f, x, 0.0, 10.0, 10.0)
            })
            .collect();
        Tube::new("v", pid, boxes).unwrap()
    };
    let gt_tube = || {
        Tube::new(
            "v",
            0,
            (0..20).map(|f| BoundingBox::new(f, 0.0, 0.0, 10.0, 10.0)).collect(),
        )
        .unwrap()
    };
    let per_video = |hits: [u32; 3]| -> PerVideo<Vec<Tube>> {
        ["a", "b", "c"]
            .iter()
            .zip(hits)
            .map(|(v, h)| (v.to_string(), vec![partial(1, h)]))
            .collect()
    };
    let gt: PerVideo<Vec<Tube>> = ["a", "b", "c"]
        .iter()
        .map(|v| (v.to_string(), vec![gt_tube()]))
        .collect();

    // overlaps 0.55, 0.25, 0.15
    let top1 = per_video([11, 5, 3]);
    let table = localization_accuracy(&top1, &gt, &[0.2, 0.5]).unwrap();
    assert!((table[0].1 - 2.0 / 3.0).abs() < 1e-12, "accuracy@0.2 = {}", table[0].1);
    assert!((table[1].1 - 1.0 / 3.0).abs() < 1e-12, "accuracy@0.5 = {}", table[1].1);

    // best overlaps 0.3, 0.3, 0.35 -> MABO 0.3167 within 1e-4
    let ranked = per_video([6, 6, 7]);
    let m = mabo(&ranked, &gt, 1, None).unwrap();
    assert!((m - 0.3167).abs() <= 1e-4, "mabo = {m}");
    println!("PASS criterion 9: accuracy@0.2 = 2/3, @0.5 = 1/3, MABO = {m:.4}");
}

#[test]
fn criterion_10_runtime_path_discovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = 100;
    let f = 5;
    let layers: Vec<Vec<TrellisNode>> = (0..f)
        .map(|_| {
            (0..n)
                .map(|p| TrellisNode {
                    proposal_id: p as u32,
                    score: rng.random::<f64>(),
                })
                .collect()
        })
        .collect();
    let edges: Vec<Array2<f64>> = (0..f - 1)
        .map(|_| Array2::from_shape_fn((n, n), |_| rng.random::<f64>()))
        .collect();
    let t = Trellis::new(layers, edges, 1.0).unwrap();

    // warm-up, then the best of 5 timed runs
    let _ = rank_proposals(&t, 20);
    let mut best = f64::INFINITY;
    for _ in 0..5 {
        let start = Instant::now();
        let selected = rank_proposals(&t, 20);
        let dt = start.elapsed().as_secs_f64();
        assert_eq!(selected.len(), 20);
        best = best.min(dt);
    }
    assert!(
        best < 0.02,
        "optimal-path discovery took {best:.4}s per video (limit 0.02s)"
    );
    println!("PASS criterion 10: DP + top-20 extraction in {best:.4}s at N=100, F=5");
}

#[test]
fn criterion_11_pipeline_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = tmp.path().join("scene.spec");
    std::fs::write(
        &spec,
        "seed = 21\nframes = 20\nheight = 64\nwidth = 96\n\
         gt_x = 12\ngt_y = 14\ngt_w = 18\ngt_h = 14\ngt_vx = 1.5\ngt_vy = 0.5\n\
         jitter_sigma = 2.0\nn_jittered = 4\ndistractors = 6\nclutter_density = 0.01\n\
         actionness_sigma = 0.1\n",
    )
    .unwrap();

    let run = |tag: &str| -> (Vec<u8>, Vec<u8>, Vec<u8>) {
        let scene = tmp.path().join(format!("scene_{tag}"));
        let ranked = tmp.path().join(format!("ranked_{tag}.jsonl"));
        let metrics = tmp.path().join(format!("metrics_{tag}.csv"));
        let bin = env!("CARGO_BIN_EXE_tuberank");
        let ok = |out: std::process::Output| {
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        };
        ok(Command::new(bin)
            .args(["synth", "--spec", spec.to_str().unwrap(), "--out", scene.to_str().unwrap()])
            .output()
            .unwrap());
        ok(Command::new(bin)
            .args([
                "rank",
                "--proposals",
                scene.join("proposals.csv").to_str().unwrap(),
                "--flow",
                scene.join("flow.tflw").to_str().unwrap(),
                "--frames",
                scene.join("frames").to_str().unwrap(),
                "--actionness",
                scene.join("actionness.csv").to_str().unwrap(),
                "--out",
                ranked.to_str().unwrap(),
            ])
            .output()
            .unwrap());
        ok(Command::new(bin)
            .args([
                "eval",
                "--ranked",
                ranked.to_str().unwrap(),
                "--gt",
                scene.join("gt.csv").to_str().unwrap(),
                "--out",
                metrics.to_str().unwrap(),
            ])
            .output()
            .unwrap());
        (
            std::fs::read(scene.join("manifest.txt")).unwrap(),
            std::fs::read(&ranked).unwrap(),
            std::fs::read(&metrics).unwrap(),
        )
    };

    let first = run("a");
    let second = run("b");
    assert_eq!(first.0, second.0, "scene manifests differ");
    assert_eq!(first.1, second.1, "ranked outputs differ");
    assert_eq!(first.2, second.2, "metrics differ");
    assert!(!first.1.is_empty());
    println!("PASS criterion 11: synth -> rank -> eval byte-identical across runs");
}
