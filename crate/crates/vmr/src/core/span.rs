use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Continuous-time interval in seconds, the currency of predictions and
/// ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpan {
    pub start_s: f64,
    pub end_s: f64,
}

impl TimeSpan {
    pub fn new(start_s: f64, end_s: f64) -> Result<Self> {
        if !start_s.is_finite() || !end_s.is_finite() || start_s < 0.0 || start_s > end_s {
            return Err(Error::InvalidSpan {
                start: start_s,
                end: end_s,
            });
        }
        Ok(Self { start_s, end_s })
    }

    pub fn length(&self) -> f64 {
        self.end_s - self.start_s
    }
}

/// Inclusive frame-index interval; the discrete counterpart of [`TimeSpan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FrameIndexSpan {
    pub start_idx: usize,
    pub end_idx: usize,
}

impl FrameIndexSpan {
    pub fn new(start_idx: usize, end_idx: usize) -> Result<Self> {
        if start_idx > end_idx {
            return Err(Error::InvalidFrameSpan {
                start: start_idx,
                end: end_idx,
            });
        }
        Ok(Self { start_idx, end_idx })
    }

    /// Number of frames covered (inclusive ends, so never zero).
    pub fn frame_len(&self) -> usize {
        self.end_idx - self.start_idx + 1
    }
}

/// Intersection-over-union of two time spans.
///
/// Zero-length degenerate spans: two exactly equal point spans give 1,
/// any other zero-length union gives 0, so NMS stays total.
pub fn temporal_iou(a: TimeSpan, b: TimeSpan) -> f64 {
    let inter = (a.end_s.min(b.end_s) - a.start_s.max(b.start_s)).max(0.0);
    let union = a.length() + b.length() - inter;
    if union <= 0.0 {
        if a == b {
            1.0
        } else {
            0.0
        }
    } else {
        inter / union
    }
}

/// Converts a frame-index span to seconds. A frame at index `i` covers its
/// whole sampling interval `[i/fps, (i+1)/fps)`, so spans tile the video
/// without gaps.
pub fn frames_to_time(span: FrameIndexSpan, fps: f64) -> TimeSpan {
    debug_assert!(fps > 0.0);
    TimeSpan {
        start_s: span.start_idx as f64 / fps,
        end_s: (span.end_idx + 1) as f64 / fps,
    }
}
