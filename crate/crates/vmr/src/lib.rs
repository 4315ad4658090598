//! Zero-shot video moment retrieval engine.
//!
//! Localizes temporal spans in untrimmed videos from natural-language queries
//! without task-specific training. The engine is model-agnostic: all neural
//! capabilities (query rewriting, frame captioning, sentence embedding,
//! frame-query similarity) sit behind the [`providers`] traits with three
//! interchangeable backends (HTTP, file-backed caches, deterministic mock).
//!
//! Pipeline stages, each usable on its own:
//!
//! 1. [`rewrite`] — reformulate the query at two semantic granularities
//!    (simplified / detailed) and extract entity/action guidance.
//! 2. [`caption`] — dense query-agnostic captions for every frame plus sparse
//!    query-aware captions for the top-K% candidate frames.
//! 3. [`score`] — per-frame moment scores from the granularity-paired
//!    query/caption similarities.
//! 4. [`propose`] — histogram frame selection, gap merging, low-span
//!    filtering, span scoring, and IoU-based NMS.
//! 5. [`eval`] — R1@n, mAP@n, mAP@avg, mIoU, highlight-detection metrics, and
//!    per-query-type breakdowns.
//!
//! [`data`] loads the three benchmark formats and serializes predictions;
//! [`pipeline`] orchestrates end-to-end runs and hyperparameter sweeps.

pub mod caption;
pub mod core;
pub mod data;
pub mod eval;
pub mod pipeline;
pub mod propose;
pub mod providers;
pub mod rewrite;
pub mod score;

use providers::ProviderError;

pub type Result<T> = std::result::Result<T, Error>;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Provider(#[from] ProviderError),

    #[error("invalid time span [{start}, {end}]")]
    InvalidSpan { start: f64, end: f64 },

    #[error("invalid frame span [{start}, {end}]")]
    InvalidFrameSpan { start: usize, end: usize },

    #[error("invalid video {video_id}: {reason}")]
    InvalidVideo { video_id: String, reason: String },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("query rewriting failed for {query_id}: {reason}")]
    RewriteFailed { query_id: String, reason: String },

    #[error("query {query_id} contains no usable guidance tokens")]
    GuidanceEmpty { query_id: String },

    #[error("captioning failed on frame {frame} of {video_id}: {source}")]
    CaptionFailed {
        video_id: String,
        frame: usize,
        source: ProviderError,
    },

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("frame score series is empty")]
    EmptySeries,

    #[error("no prediction for query {query_id}")]
    MissingPrediction { query_id: String },

    #[error("saliency labels length {labels} does not match series length {series}")]
    LabelLengthMismatch { labels: usize, series: usize },

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing field `{field}` at line {line}")]
    Schema { field: String, line: usize },

    #[error("no duration for video {video_id}")]
    MissingDuration { video_id: String },

    #[error("timestamps/sentences length mismatch for video {video_id}")]
    LengthMismatch { video_id: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
