//! Command-line driver: ingestion -> NMS -> scoring -> trellis ranking
//! (per shot for untrimmed input) -> metrics, plus standalone subcommands
//! for segmentation, feature filtering, evaluation, and scene synthesis.
//!
//! Exit codes: 0 success, 1 parse/validation errors, 2 numerical
//! non-convergence. Log level comes from `TUBERANK_LOG`
//! (error|warn|info|debug).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;

use tuberank_core::changepoint::{auto_segment, frame_features, shots_to_ranges};
use tuberank_core::error::{Error, Result};
use tuberank_core::eval::{evaluate, PerVideo};
use tuberank_core::geometry::Tube;
use tuberank_core::io;
use tuberank_core::pipeline::{rank_many, VideoData};
use tuberank_core::synth;
use tuberank_core::walk::filter_outliers;

#[derive(Parser)]
#[command(name = "tuberank", version, about = "Recombines and ranks action proposals in videos")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rank recombined proposals for each video.
    Rank {
        /// Proposals CSV (video_id,proposal_id,frame,x,y,w,h).
        #[arg(long)]
        proposals: PathBuf,
        /// Flow container (.tflw), or a directory of <video_id>.tflw files
        /// when the proposals CSV holds several videos.
        #[arg(long)]
        flow: PathBuf,
        /// Directory of frame_%06d.pgm files, or of <video_id>/ frame dirs.
        #[arg(long)]
        frames: PathBuf,
        /// Actionness CSV (video_id,proposal_id,frame,score).
        #[arg(long)]
        actionness: PathBuf,
        /// Run configuration file (flat key = value); defaults when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
        /// Split the video into shots first and rank within each shot.
        #[arg(long)]
        untrimmed: bool,
        /// Videos processed in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Config override, e.g. --set k=10 (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Detect shot boundaries and emit the ranges as CSV.
    Segment {
        #[arg(long)]
        proposals: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Remove feature-space outliers by random-walk scoring.
    FilterFeatures {
        /// Feature CSV (id,v0,v1,...).
        #[arg(long)]
        features: PathBuf,
        /// Output score CSV; kept/removed id lists are written next to it.
        #[arg(long)]
        out: PathBuf,
        /// Fraction of items to keep (overrides the config value).
        #[arg(long)]
        keep: Option<f64>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
    /// Score ranked proposals against ground truth.
    Eval {
        /// Ranked JSONL produced by `rank`.
        #[arg(long)]
        ranked: PathBuf,
        /// Ground-truth tubes in the proposals CSV format.
        #[arg(long)]
        gt: PathBuf,
        /// Output metrics CSV.
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic scene directory.
    Synth {
        /// Scene spec (flat key = value).
        #[arg(long)]
        spec: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("TUBERANK_LOG", "warn"),
    )
    .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                Error::NonConvergence { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Rank {
            proposals,
            flow,
            frames,
            actionness,
            config,
            out,
            untrimmed,
            jobs,
            set,
        } => {
            let cfg = load_config(config.as_deref(), &set)?;
            let loaded = load_videos(&proposals, &frames)?;
            let table = io::load_actionness(&actionness)?;
            let single = loaded.len() == 1;
            let videos: Vec<VideoData> = loaded
                .into_iter()
                .map(|v| {
                    let flow_path = if single && flow.is_file() {
                        flow.clone()
                    } else {
                        flow.join(format!("{}.tflw", v.video_id))
                    };
                    Ok(VideoData {
                        flow: io::load_flow(&flow_path)?,
                        actionness: table.clone(),
                        video_id: v.video_id,
                        tubes: v.tubes,
                        frames: v.frames,
                    })
                })
                .collect::<Result<_>>()?;
            info!("ranking {} video(s), jobs={jobs}", videos.len());
            let records = rank_many(&videos, &cfg, untrimmed, jobs)?;
            io::write_ranked(&out, &records)?;
            info!("wrote {} ranked proposals to {}", records.len(), out.display());
            Ok(())
        }
        Command::Segment {
            proposals,
            frames,
            config,
            out,
            set,
        } => {
            let cfg = load_config(config.as_deref(), &set)?;
            let videos = load_videos(&proposals, &frames)?;
            let mut csv = String::from("video_id,shot,start,end\n");
            for video in &videos {
                let t_count = video.frames.len();
                let last = (t_count.max(1) - 1) as u32;
                let padded: Vec<Tube> = video
                    .tubes
                    .iter()
                    .map(|t| t.padded_to(0, last))
                    .collect::<Result<_>>()?;
                let signal = frame_features(&padded, &video.frames)?;
                let solution = auto_segment(&signal, &cfg.tv_params())?;
                for (i, (start, end)) in shots_to_ranges(&solution, t_count).iter().enumerate() {
                    csv.push_str(&format!("{},{},{},{}\n", video.video_id, i, start, end));
                }
            }
            io::atomic_write(&out, csv.as_bytes())
        }
        Command::FilterFeatures {
            features,
            out,
            keep,
            config,
            set,
        } => {
            let mut cfg = load_config(config.as_deref(), &set)?;
            if let Some(k) = keep {
                cfg.apply("keep_fraction", &k.to_string())?;
            }
            let fs = io::load_features(&features)?;
            let outcome = filter_outliers(&fs, &cfg.walk_params())?;
            let kept: std::collections::HashSet<&String> = outcome.kept.iter().collect();
            let mut csv = String::from("id,score,kept\n");
            for (id, score) in fs.ids().iter().zip(&outcome.scores) {
                csv.push_str(&format!(
                    "{id},{score:.9},{}\n",
                    u8::from(kept.contains(id))
                ));
            }
            io::atomic_write(&out, csv.as_bytes())?;
            io::atomic_write(&sibling(&out, "kept.txt"), list_bytes(&outcome.kept).as_bytes())?;
            io::atomic_write(
                &sibling(&out, "removed.txt"),
                list_bytes(&outcome.removed).as_bytes(),
            )?;
            info!(
                "kept {} of {} items ({} removed)",
                outcome.kept.len(),
                fs.len(),
                outcome.removed.len()
            );
            Ok(())
        }
        Command::Eval { ranked, gt, out } => {
            let records = io::load_ranked(&ranked)?;
            let mut ranked_tubes: PerVideo<Vec<(usize, Tube)>> = BTreeMap::new();
            for r in &records {
                ranked_tubes
                    .entry(r.video_id.clone())
                    .or_default()
                    .push((r.rank, r.tube()?));
            }
            let mut per_video: PerVideo<Vec<Tube>> = BTreeMap::new();
            let mut top1: PerVideo<Vec<Tube>> = BTreeMap::new();
            for (video, mut tubes) in ranked_tubes {
                tubes.sort_by_key(|(rank, _)| *rank);
                top1.insert(
                    video.clone(),
                    tubes
                        .iter()
                        .filter(|(rank, _)| *rank == 1)
                        .map(|(_, t)| t.clone())
                        .collect(),
                );
                per_video.insert(video, tubes.into_iter().map(|(_, t)| t).collect());
            }
            let mut gt_tubes: PerVideo<Vec<Tube>> = BTreeMap::new();
            for tube in io::load_proposals(&gt)? {
                gt_tubes.entry(tube.video_id.clone()).or_default().push(tube);
            }
            let report = evaluate(&per_video, &top1, &gt_tubes)?;
            io::atomic_write(&out, report.to_csv().as_bytes())
        }
        Command::Synth { spec, out } => {
            let spec = synth::SceneSpec::load(&spec)?;
            let scene = synth::gen_scene(&spec)?;
            synth::write_scene(&scene, &out)?;
            info!(
                "scene `{}`: {} frames, {} proposals -> {}",
                spec.video_id,
                spec.frames,
                scene.proposals.len(),
                out.display()
            );
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>, set: &[String]) -> Result<io::RunConfig> {
    let mut cfg = match path {
        Some(p) => io::RunConfig::load(p)?,
        None => io::RunConfig::default(),
    };
    let pairs: Vec<(String, String)> = set
        .iter()
        .map(|s| {
            s.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| Error::Config {
                    key: s.clone(),
                    msg: "--set expects KEY=VALUE".into(),
                })
        })
        .collect::<Result<_>>()?;
    cfg.apply_overrides(&pairs)?;
    Ok(cfg)
}

struct LoadedVideo {
    video_id: String,
    tubes: Vec<Tube>,
    frames: Vec<io::frames::GrayFrame>,
}

/// Groups the proposals CSV by video and loads the matching frame images: a
/// single video may point --frames at its frame directory directly; several
/// videos expect <video_id>/ subdirectories.
fn load_videos(proposals: &Path, frames: &Path) -> Result<Vec<LoadedVideo>> {
    let mut by_video: BTreeMap<String, Vec<Tube>> = BTreeMap::new();
    for tube in io::load_proposals(proposals)? {
        by_video.entry(tube.video_id.clone()).or_default().push(tube);
    }
    if by_video.is_empty() {
        return Err(Error::InvalidInput(format!(
            "{}: no proposals",
            proposals.display()
        )));
    }
    let single = by_video.len() == 1;
    let mut videos = Vec::with_capacity(by_video.len());
    for (video_id, tubes) in by_video {
        let frames_dir = if single && frames.join("frame_000000.pgm").is_file() {
            frames.to_path_buf()
        } else {
            frames.join(&video_id)
        };
        videos.push(LoadedVideo {
            video_id,
            tubes,
            frames: io::load_frames(&frames_dir)?,
        });
    }
    Ok(videos)
}

fn sibling(out: &Path, suffix: &str) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn list_bytes(ids: &[String]) -> String {
    let mut s = String::new();
    for id in ids {
        s.push_str(id);
        s.push('\n');
    }
    s
}
