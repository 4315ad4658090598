//! Dual caption set construction: dense query-agnostic captions for every
//! frame, sparse query-aware captions for the top-K% candidate frames. The
//! hybrid keeps query-conditioned captioning affordable while still covering
//! the regions that matter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::core::{Query, VideoMeta};
use crate::providers::{Caption, CaptionMode, FrameCaptioner, FrameSimilarity};
use crate::rewrite::SemanticGuidance;
use crate::{Error, Result};

/// Captions for one (video, query) pair. `agnostic` covers all frames;
/// `aware` exactly the candidate frames.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaptionSet {
    pub video_id: String,
    pub agnostic: Vec<Caption>,
    pub aware: BTreeMap<usize, Caption>,
    pub candidate_frames: Vec<usize>,
}

impl CaptionSet {
    pub fn frame_count(&self) -> usize {
        self.agnostic.len()
    }

    pub fn is_candidate(&self, frame: usize) -> bool {
        self.aware.contains_key(&frame)
    }
}

/// Number of candidate frames: `max(1, ceil(K/100 * L_v))`. The small bias
/// keeps exact products like 10% of 100 from ceiling up on float error.
pub fn candidate_count(top_k_percent: f64, frame_count: usize) -> usize {
    let raw = (top_k_percent * frame_count as f64) / 100.0;
    ((raw - 1e-9).ceil() as usize).max(1)
}

/// Picks the `max(1, ceil(K/100 * L_v))` frames most similar to the query,
/// ties broken toward the lower index; returns them sorted ascending.
pub fn select_candidate_frames(
    video: &VideoMeta,
    query: &Query,
    top_k_percent: f64,
    similarity: &dyn FrameSimilarity,
) -> Result<Vec<usize>> {
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(video.frame_count);
    for frame in 0..video.frame_count {
        let s = similarity.frame_query_similarity(&video.video_id, frame, &query.text)?;
        scored.push((frame, s));
    }
    scored.sort_by(|(ia, sa), (ib, sb)| sb.total_cmp(sa).then(ia.cmp(ib)));
    let k = candidate_count(top_k_percent, video.frame_count);
    let mut picked: Vec<usize> = scored.into_iter().take(k).map(|(i, _)| i).collect();
    picked.sort_unstable();
    Ok(picked)
}

/// Builds the full caption set for one query: agnostic captions for all
/// frames and aware captions for the candidates. A failure on any single
/// frame aborts the query — a silent hole would bias every downstream score.
pub fn build_caption_set(
    video: &VideoMeta,
    query: &Query,
    guidance: &SemanticGuidance,
    top_k_percent: f64,
    captioner: &dyn FrameCaptioner,
    similarity: &dyn FrameSimilarity,
) -> Result<CaptionSet> {
    let candidate_frames = select_candidate_frames(video, query, top_k_percent, similarity)?;

    let mut agnostic = Vec::with_capacity(video.frame_count);
    for frame in 0..video.frame_count {
        let c = captioner
            .caption_frame(&video.video_id, frame, None)
            .map_err(|source| Error::CaptionFailed {
                video_id: video.video_id.clone(),
                frame,
                source,
            })?;
        debug_assert_eq!(c.mode, CaptionMode::Agnostic);
        agnostic.push(c);
    }

    let mut aware = BTreeMap::new();
    for &frame in &candidate_frames {
        let c = captioner
            .caption_frame(&video.video_id, frame, Some(guidance))
            .map_err(|source| Error::CaptionFailed {
                video_id: video.video_id.clone(),
                frame,
                source,
            })?;
        debug_assert_eq!(c.mode, CaptionMode::Aware);
        aware.insert(frame, c);
    }

    Ok(CaptionSet {
        video_id: video.video_id.clone(),
        agnostic,
        aware,
        candidate_frames,
    })
}
