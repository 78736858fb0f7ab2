//! Score fusion and re-ranking for person-action instance search.
//!
//! The crate turns per-keyframe face and action detections into per-topic
//! ranked shot lists and refines them:
//!
//! * [`ide`] fills short detection gaps inside a shot by linear interpolation.
//! * [`fusion`] gates action confidences by a face-confidence threshold,
//!   optionally weighted by face/action box overlap, and pools keyframes
//!   into shot scores.
//! * [`ste`] diffuses shot scores from stronger temporal neighbours.
//! * [`aggregate`] builds a robust consensus over several ranked lists with
//!   half-quadratic reweighting.
//! * [`feedback`] re-ranks with human (or simulated) labels, either by
//!   simple top-K rearrangement or by confidence-aware energy minimisation.
//! * [`eval`] computes trec-style average precision and rank distances.
//!
//! Everything here is pure computation over in-memory tables and works
//! without `std`; file formats, the pipeline driver and the session server
//! live in the `insfuse` crate.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod aggregate;
mod error;
pub mod eval;
pub mod feedback;
pub mod fusion;
pub mod ide;
mod math;
pub mod ste;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    DetectionRecord, DetectionTable, EntityKind, FeatureTable, Keyframe, Qrels, Ranking, Rect,
    Shot, ShotIndexTable, Topic,
};
