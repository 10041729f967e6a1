//! Unsupervised recombination and ranking of spatio-temporal action
//! proposals.
//!
//! Given candidate proposals (tubes of per-frame boxes), optical flow, frame
//! images, and ingested per-patch actionness scores, the pipeline splits each
//! proposal into temporal segments, scores segments with actionness and
//! motion-contour cues, connects temporally adjacent segments by shape and
//! appearance consistency, and extracts a few high-quality ranked proposals
//! as maximum-energy paths through the resulting trellis. Untrimmed videos
//! are first split into shots by total-variation change-point detection.

pub mod changepoint;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hog;
pub mod io;
pub mod pipeline;
pub mod score;
pub mod synth;
pub mod trellis;
pub mod walk;

pub use error::{Error, Result};
