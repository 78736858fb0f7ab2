use alloc::string::String;
use alloc::vec::Vec;

use crate::types::Keyframe;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Everything that can go wrong inside the algorithmic core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[non_exhaustive]
pub enum Error {
    #[error("confidence {0} outside [0, 1]")]
    ConfidenceRange(f64),

    #[error("degenerate box ({x1}, {y1}, {x2}, {y2})")]
    DegenerateBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("duplicate key {0}")]
    DuplicateKey(String),

    #[error("ordinal gap in video {video_id}: expected {expected}, found {found}")]
    OrdinalGap {
        video_id: String,
        expected: u32,
        found: u32,
    },

    #[error("shot {shot_id} has keyframe_start {start} > keyframe_end {end}")]
    InvertedRange {
        shot_id: String,
        start: Keyframe,
        end: Keyframe,
    },

    #[error("unknown shot {0}")]
    UnknownShot(String),

    #[error("shot {shot_id} belongs to video {expected}, not {found}")]
    VideoMismatch {
        shot_id: String,
        expected: String,
        found: String,
    },

    #[error("keyframe {keyframe} outside shot {shot_id} range {start}..={end}")]
    KeyframeOutOfRange {
        shot_id: String,
        keyframe: Keyframe,
        start: Keyframe,
        end: Keyframe,
    },

    #[error("keyframe {keyframe} is not strictly between {left} and {right}")]
    OutsideGap {
        keyframe: Keyframe,
        left: Keyframe,
        right: Keyframe,
    },

    #[error("records belong to different tracks")]
    TrackMismatch,

    #[error("face and action records are on different keyframes ({face} vs {action})")]
    KeyframeMismatch { face: Keyframe, action: Keyframe },

    #[error("expected a {expected} detection")]
    WrongEntityKind { expected: &'static str },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("feature vector for {0} has zero norm")]
    ZeroVector(String),

    #[error("union of candidates is empty")]
    EmptyUnion,

    #[error("non-finite value during {0}")]
    NonFinite(&'static str),

    #[error("missing features for shots: {}", .0.join(", "))]
    MissingFeatures(Vec<String>),

    #[error("topic {0} has no relevant shots")]
    UndefinedTopic(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("candidate sets differ")]
    SetMismatch,

    #[error("non-monotone scores at position {0}")]
    NonMonotone(usize),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}
