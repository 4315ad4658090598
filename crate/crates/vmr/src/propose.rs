//! Moment proposal generation and post-processing: histogram-based frame
//! selection, gap merging, low-relevance span filtering, span scoring, and
//! IoU-based non-maximum suppression.

use serde::{Deserialize, Serialize};

use crate::core::{frames_to_time, temporal_iou, FrameIndexSpan, PipelineConfig, TimeSpan};
use crate::score::FrameScoreSeries;
use crate::{Error, Result};

/// A candidate span with its mean frame score, normalized length share, and
/// combined score `(1 - lambda) * mu + lambda * rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredSpan {
    pub span: FrameIndexSpan,
    pub mu: f64,
    pub rho: f64,
    pub score: f64,
}

/// Final ranked prediction for one query, with the frame-score series kept
/// as the saliency signal for highlight detection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MomentPrediction {
    pub query_id: String,
    pub video_id: String,
    pub spans: Vec<(TimeSpan, f64)>,
    pub saliency: FrameScoreSeries,
}

/// Frames whose score lands in the top `top_bins` of `bins` equal-width bins
/// over the observed score range, i.e. score >= min + (bins - top_bins) /
/// bins * (max - min). A flat series selects every frame.
pub fn select_high_frames(
    series: &FrameScoreSeries,
    bins: usize,
    top_bins: usize,
) -> Result<Vec<usize>> {
    if series.is_empty() {
        return Err(Error::EmptySeries);
    }
    debug_assert!(bins >= 1 && top_bins >= 1 && top_bins <= bins);
    let min = series.scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series
        .scores
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == min {
        return Ok((0..series.len()).collect());
    }
    let cutoff = min + (bins - top_bins) as f64 / bins as f64 * (max - min);
    Ok(series
        .scores
        .iter()
        .enumerate()
        .filter(|(_, s)| **s >= cutoff)
        .map(|(i, _)| i)
        .collect())
}

/// Merges a sorted set of selected frames into maximal spans, bridging gaps
/// of up to `tau` missing frames between consecutive selected indices.
pub fn merge_frames(selected: &[usize], tau: usize) -> Vec<FrameIndexSpan> {
    debug_assert!(selected.windows(2).all(|w| w[0] < w[1]));
    let mut spans = Vec::new();
    let mut iter = selected.iter().copied();
    let Some(first) = iter.next() else {
        return spans;
    };
    let (mut start, mut end) = (first, first);
    for idx in iter {
        if idx - end - 1 <= tau {
            end = idx;
        } else {
            spans.push(FrameIndexSpan {
                start_idx: start,
                end_idx: end,
            });
            start = idx;
            end = idx;
        }
    }
    spans.push(FrameIndexSpan {
        start_idx: start,
        end_idx: end,
    });
    spans
}

/// Nearest-rank percentile of an unsorted sample.
fn percentile_nearest_rank(values: &[f64], percent: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((percent * sorted.len() as f64 / 100.0 - 1e-9).ceil() as usize).max(1);
    sorted[rank.min(sorted.len()) - 1]
}

fn span_mean(series: &FrameScoreSeries, span: FrameIndexSpan) -> f64 {
    let window = &series.scores[span.start_idx..=span.end_idx];
    window.iter().sum::<f64>() / window.len() as f64
}

/// Drops spans whose mean score sits below the bottom-n percentile of the
/// video's frame-score distribution. Never drops everything: if no span
/// survives, the one with the highest mean is retained.
pub fn filter_low_spans(
    spans: Vec<FrameIndexSpan>,
    series: &FrameScoreSeries,
    bottom_percent: f64,
) -> Vec<FrameIndexSpan> {
    if spans.is_empty() || bottom_percent <= 0.0 {
        return spans;
    }
    let threshold = percentile_nearest_rank(&series.scores, bottom_percent);
    let kept: Vec<FrameIndexSpan> = spans
        .iter()
        .copied()
        .filter(|s| span_mean(series, *s) >= threshold)
        .collect();
    if kept.is_empty() {
        let mut best = spans[0];
        let mut best_mu = span_mean(series, best);
        for s in &spans[1..] {
            let mu = span_mean(series, *s);
            if mu > best_mu {
                best = *s;
                best_mu = mu;
            }
        }
        return vec![best];
    }
    kept
}

/// Scores each span: `mu` is its mean frame score, `rho` its frame length
/// normalized by the batch's total frame length.
pub fn score_spans(
    spans: &[FrameIndexSpan],
    series: &FrameScoreSeries,
    lambda: f64,
) -> Vec<ScoredSpan> {
    let total_len: usize = spans.iter().map(FrameIndexSpan::frame_len).sum();
    spans
        .iter()
        .map(|&span| {
            let mu = span_mean(series, span);
            let rho = span.frame_len() as f64 / total_len as f64;
            ScoredSpan {
                span,
                mu,
                rho,
                score: (1.0 - lambda) * mu + lambda * rho,
            }
        })
        .collect()
}

/// Greedy NMS: spans ordered by (score desc, start asc, length desc); a span
/// is kept unless its IoU with an already-kept span strictly exceeds
/// `theta`. Output keeps that ordering.
pub fn nms(spans: Vec<(TimeSpan, f64)>, theta: f64) -> Vec<(TimeSpan, f64)> {
    let mut ordered = spans;
    ordered.sort_by(|(sa, a), (sb, b)| {
        b.total_cmp(a)
            .then(sa.start_s.total_cmp(&sb.start_s))
            .then(sb.length().total_cmp(&sa.length()))
    });
    let mut kept: Vec<(TimeSpan, f64)> = Vec::new();
    for (span, score) in ordered {
        if kept.iter().all(|(k, _)| temporal_iou(*k, span) <= theta) {
            kept.push((span, score));
        }
    }
    kept
}

/// Full proposal pipeline for one score series: frame selection, merging,
/// filtering, span scoring, conversion to seconds, and NMS.
pub fn propose(series: &FrameScoreSeries, cfg: &PipelineConfig) -> Result<MomentPrediction> {
    let selected = select_high_frames(series, cfg.histogram_bins, cfg.histogram_top_bins)?;
    let merged = merge_frames(&selected, cfg.merge_gap);
    let filtered = filter_low_spans(merged, series, cfg.bottom_percent);
    let scored = score_spans(&filtered, series, cfg.length_weight);
    let timed: Vec<(TimeSpan, f64)> = scored
        .iter()
        .map(|s| (frames_to_time(s.span, cfg.fps), s.score))
        .collect();
    let spans = nms(timed, cfg.nms_iou);
    Ok(MomentPrediction {
        query_id: series.query_id.clone(),
        video_id: series.video_id.clone(),
        spans,
        saliency: series.clone(),
    })
}
