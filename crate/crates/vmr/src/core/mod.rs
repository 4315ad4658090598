//! Domain types, configuration, and interval algebra shared by all stages.

mod config;
mod span;
pub mod text;
mod types;

pub use config::PipelineConfig;
pub use span::{frames_to_time, temporal_iou, FrameIndexSpan, TimeSpan};
pub use types::{Query, VideoMeta};
