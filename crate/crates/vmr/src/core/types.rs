use serde::{Deserialize, Serialize};

use crate::core::text;
use crate::{Error, Result};

/// A natural-language query with its token count.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub text: String,
    /// Number of whitespace-delimited tokens.
    pub word_count: usize,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Result<Self> {
        let id = id.into();
        let text = text.into();
        let word_count = text::tokenize(&text).count();
        if word_count == 0 {
            return Err(Error::InvalidConfig(format!("query {id} has no tokens")));
        }
        Ok(Self {
            id,
            text,
            word_count,
        })
    }
}

/// Sampled-video metadata. `frame_count` is fixed at ingestion as
/// `floor(duration_s * fps)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoMeta {
    pub video_id: String,
    pub duration_s: f64,
    pub fps: f64,
    pub frame_count: usize,
}

impl VideoMeta {
    pub fn new(video_id: impl Into<String>, duration_s: f64, fps: f64) -> Result<Self> {
        let video_id = video_id.into();
        if fps <= 0.0 || !fps.is_finite() {
            return Err(Error::InvalidVideo {
                video_id,
                reason: format!("fps must be positive, got {fps}"),
            });
        }
        if !duration_s.is_finite() || duration_s < 0.0 {
            return Err(Error::InvalidVideo {
                video_id,
                reason: format!("invalid duration {duration_s}"),
            });
        }
        let frame_count = (duration_s * fps).floor() as usize;
        if frame_count < 1 {
            return Err(Error::InvalidVideo {
                video_id,
                reason: format!("duration {duration_s}s yields no frames at {fps} fps"),
            });
        }
        Ok(Self {
            video_id,
            duration_s,
            fps,
            frame_count,
        })
    }
}
