use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Numeric knobs of the retrieval pipeline. Defaults are the reference
/// operating point: 0.5 fps sampling, top-10% candidate frames, 3 rewrite
/// pairs, gap merging up to 6 frames, bottom-20% span filtering, length
/// weight 0.3, NMS IoU 0.9, and a 10-bin histogram keeping the top 8 bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Frame sampling rate in frames per second.
    pub fps: f64,
    /// K: percentage of frames captioned query-aware.
    pub top_k_percent: f64,
    /// m: number of rewritten query pairs requested.
    pub num_rewrites: usize,
    /// tau: largest bridgeable gap between selected frames, in frames.
    pub merge_gap: usize,
    /// n: percentile of the frame-score distribution below which spans drop.
    pub bottom_percent: f64,
    /// lambda: weight of the span-length term in span scoring.
    pub length_weight: f64,
    /// theta: IoU above which NMS suppresses the lower-scored span.
    pub nms_iou: f64,
    pub histogram_bins: usize,
    pub histogram_top_bins: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            fps: 0.5,
            top_k_percent: 10.0,
            num_rewrites: 3,
            merge_gap: 6,
            bottom_percent: 20.0,
            length_weight: 0.3,
            nms_iou: 0.9,
            histogram_bins: 10,
            histogram_top_bins: 8,
        }
    }
}

impl PipelineConfig {
    /// Checks the config invariants, returning `self` for chaining.
    pub fn validate(self) -> Result<Self> {
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "fps must be > 0, got {}",
                self.fps
            )));
        }
        if !(self.top_k_percent > 0.0 && self.top_k_percent <= 100.0) {
            return Err(Error::InvalidConfig(format!(
                "top_k_percent must be in (0, 100], got {}",
                self.top_k_percent
            )));
        }
        if self.num_rewrites < 1 {
            return Err(Error::InvalidConfig("num_rewrites must be >= 1".into()));
        }
        if !(0.0..100.0).contains(&self.bottom_percent) {
            return Err(Error::InvalidConfig(format!(
                "bottom_percent must be in [0, 100), got {}",
                self.bottom_percent
            )));
        }
        if !(0.0..=1.0).contains(&self.length_weight) {
            return Err(Error::InvalidConfig(format!(
                "length_weight must be in [0, 1], got {}",
                self.length_weight
            )));
        }
        if !(self.nms_iou > 0.0 && self.nms_iou <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "nms_iou must be in (0, 1], got {}",
                self.nms_iou
            )));
        }
        if self.histogram_bins < 1
            || self.histogram_top_bins < 1
            || self.histogram_top_bins > self.histogram_bins
        {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= histogram_top_bins <= histogram_bins, got {}/{}",
                self.histogram_top_bins, self.histogram_bins
            )));
        }
        Ok(self)
    }

    /// Parses the flat key-value section of a TOML config string.
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(s).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()
    }
}
