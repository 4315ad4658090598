//! Browser bindings for the moment retrieval engine. Three operations back
//! the static demo page: a full pipeline run over a scripted synthetic
//! video, a proposal-stage explorer over an arbitrary score curve, and
//! query analysis (rewrites, guidance, type). All results are JSON strings
//! so the page stays framework-free.

use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use vmr::caption::build_caption_set;
use vmr::core::{frames_to_time, PipelineConfig, Query, VideoMeta};
use vmr::propose::{filter_low_spans, merge_frames, nms, propose, score_spans, select_high_frames};
use vmr::providers::{CaptionScriptRule, MockProvider};
use vmr::rewrite::{classify_query, extract_guidance, generate_rewrites};
use vmr::score::{score_video, FrameScoreSeries};

const DEMO_VIDEO: &str = "demo";
const DEMO_FRAMES: usize = 100;

/// One scripted scene of the synthetic video.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scene {
    pub start_frame: usize,
    pub end_frame: usize,
    pub tokens: String,
}

/// The scene script the page starts with.
pub fn default_scenes() -> Vec<Scene> {
    vec![
        Scene {
            start_frame: 0,
            end_frame: 24,
            tokens: "city street cars traffic lights".into(),
        },
        Scene {
            start_frame: 25,
            end_frame: 39,
            tokens: "people walking crowded plaza".into(),
        },
        Scene {
            start_frame: 40,
            end_frame: 60,
            tokens: "dog running park grass".into(),
        },
        Scene {
            start_frame: 61,
            end_frame: 99,
            tokens: "beach waves ocean sand".into(),
        },
    ]
}

fn json_err(msg: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": msg.to_string() }).to_string()
}

fn parse_config(cfg_json: &str) -> Result<PipelineConfig, String> {
    if cfg_json.trim().is_empty() {
        return Ok(PipelineConfig::default());
    }
    let cfg: PipelineConfig =
        serde_json::from_str(cfg_json).map_err(|e| format!("bad config: {e}"))?;
    cfg.validate().map_err(|e| e.to_string())
}

/// The bundled scene script as JSON, for populating the page.
#[wasm_bindgen]
pub fn demo_scenes() -> String {
    serde_json::to_string(&default_scenes()).unwrap_or_else(json_err)
}

#[derive(Serialize)]
struct PipelineDemoOutput {
    scores: Vec<f64>,
    candidate_frames: Vec<usize>,
    spans: Vec<SpanOut>,
    simplified: String,
    detailed: String,
    fps: f64,
}

#[derive(Serialize)]
struct SpanOut {
    start_s: f64,
    end_s: f64,
    score: f64,
}

/// Runs the whole pipeline for one query over the scripted 100-frame
/// synthetic video with the deterministic mock models.
#[wasm_bindgen]
pub fn run_pipeline_demo(query: &str, scenes_json: &str, seed: u32, cfg_json: &str) -> String {
    let cfg = match parse_config(cfg_json) {
        Ok(c) => c,
        Err(e) => return json_err(e),
    };
    let scenes: Vec<Scene> = if scenes_json.trim().is_empty() {
        default_scenes()
    } else {
        match serde_json::from_str(scenes_json) {
            Ok(s) => s,
            Err(e) => return json_err(format!("bad scenes: {e}")),
        }
    };
    let script: Vec<CaptionScriptRule> = scenes
        .into_iter()
        .map(|s| CaptionScriptRule {
            video_id: DEMO_VIDEO.into(),
            start_frame: s.start_frame,
            end_frame: s.end_frame,
            tokens: s.tokens,
        })
        .collect();
    let mock = MockProvider::new(seed as u64).with_caption_script(script);

    let run = (|| -> vmr::Result<PipelineDemoOutput> {
        let query = Query::new("demo-query", query)?;
        let video = VideoMeta::new(DEMO_VIDEO, DEMO_FRAMES as f64 / cfg.fps, cfg.fps)?;
        let rewrites = generate_rewrites(&query, &cfg, &mock, 1)?;
        let guidance = extract_guidance(&query, None)?;
        let captions =
            build_caption_set(&video, &query, &guidance, cfg.top_k_percent, &mock, &mock)?;
        let series = score_video(&rewrites, &captions, &mock)?;
        let prediction = propose(&series, &cfg)?;
        Ok(PipelineDemoOutput {
            scores: series.scores.clone(),
            candidate_frames: captions.candidate_frames.clone(),
            spans: prediction
                .spans
                .iter()
                .map(|(span, score)| SpanOut {
                    start_s: span.start_s,
                    end_s: span.end_s,
                    score: *score,
                })
                .collect(),
            simplified: rewrites.pairs[0].simplified.clone(),
            detailed: rewrites.pairs[0].detailed.clone(),
            fps: cfg.fps,
        })
    })();

    match run {
        Ok(out) => serde_json::to_string(&out).unwrap_or_else(json_err),
        Err(e) => json_err(e),
    }
}

#[derive(Serialize)]
struct ProposeDemoOutput {
    cutoff: Option<f64>,
    selected: Vec<usize>,
    merged: Vec<(usize, usize)>,
    filtered: Vec<(usize, usize)>,
    scored: Vec<ScoredOut>,
    kept: Vec<SpanOut>,
    fps: f64,
}

#[derive(Serialize)]
struct ScoredOut {
    start_idx: usize,
    end_idx: usize,
    mu: f64,
    rho: f64,
    score: f64,
}

/// Runs just the proposal stage over a caller-supplied score curve,
/// returning every intermediate artifact for visualization.
#[wasm_bindgen]
pub fn propose_demo(scores: Vec<f64>, cfg_json: &str) -> String {
    let cfg = match parse_config(cfg_json) {
        Ok(c) => c,
        Err(e) => return json_err(e),
    };
    let series = match FrameScoreSeries::new("demo-query", DEMO_VIDEO, scores) {
        Ok(s) => s,
        Err(e) => return json_err(e),
    };
    let selected = match select_high_frames(&series, cfg.histogram_bins, cfg.histogram_top_bins) {
        Ok(s) => s,
        Err(e) => return json_err(e),
    };
    let min = series.scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = series
        .scores
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let cutoff = (max > min).then(|| {
        min + (cfg.histogram_bins - cfg.histogram_top_bins) as f64 / cfg.histogram_bins as f64
            * (max - min)
    });
    let merged = merge_frames(&selected, cfg.merge_gap);
    let filtered = filter_low_spans(merged.clone(), &series, cfg.bottom_percent);
    let scored = score_spans(&filtered, &series, cfg.length_weight);
    let timed: Vec<_> = scored
        .iter()
        .map(|s| (frames_to_time(s.span, cfg.fps), s.score))
        .collect();
    let kept = nms(timed, cfg.nms_iou);

    let out = ProposeDemoOutput {
        cutoff,
        selected,
        merged: merged.iter().map(|s| (s.start_idx, s.end_idx)).collect(),
        filtered: filtered.iter().map(|s| (s.start_idx, s.end_idx)).collect(),
        scored: scored
            .iter()
            .map(|s| ScoredOut {
                start_idx: s.span.start_idx,
                end_idx: s.span.end_idx,
                mu: s.mu,
                rho: s.rho,
                score: s.score,
            })
            .collect(),
        kept: kept
            .iter()
            .map(|(span, score)| SpanOut {
                start_s: span.start_s,
                end_s: span.end_s,
                score: *score,
            })
            .collect(),
        fps: cfg.fps,
    };
    serde_json::to_string(&out).unwrap_or_else(json_err)
}

#[derive(Serialize)]
struct QueryDemoOutput {
    simplified: String,
    detailed: String,
    entities: Vec<String>,
    actions: Vec<String>,
    category: String,
    word_count: usize,
}

/// Shows what the rewrite stage does to a query: the mock simplified and
/// detailed forms, the extracted guidance, and the length/type class.
#[wasm_bindgen]
pub fn analyze_query_demo(query: &str, seed: u32) -> String {
    let mock = MockProvider::new(seed as u64);
    let run = (|| -> vmr::Result<QueryDemoOutput> {
        let query = Query::new("demo-query", query)?;
        let cfg = PipelineConfig {
            num_rewrites: 1,
            ..Default::default()
        };
        let rewrites = generate_rewrites(&query, &cfg, &mock, 1)?;
        let guidance = extract_guidance(&query, None)?;
        let qtype = classify_query(&query);
        Ok(QueryDemoOutput {
            simplified: rewrites.pairs[0].simplified.clone(),
            detailed: rewrites.pairs[0].detailed.clone(),
            entities: guidance.entities,
            actions: guidance.actions,
            category: format!("{:?}", qtype.category),
            word_count: query.word_count,
        })
    })();
    match run {
        Ok(out) => serde_json::to_string(&out).unwrap_or_else(json_err),
        Err(e) => json_err(e),
    }
}
