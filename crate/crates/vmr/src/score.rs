//! Granular moment scoring: each frame is scored by averaging the
//! granularity-paired similarities (simplified query vs agnostic caption,
//! detailed query vs aware caption) over all rewrite pairs.

use std::collections::HashMap;
use std::sync::RwLock;

use serde::{Deserialize, Serialize};

use crate::caption::CaptionSet;
use crate::providers::{Embedding, TextEmbedder};
use crate::rewrite::RewriteSet;
use crate::{Error, Result};

/// Per-frame moment scores for one (query, video) pair; also reused as the
/// saliency series for highlight detection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameScoreSeries {
    pub query_id: String,
    pub video_id: String,
    pub scores: Vec<f64>,
}

impl FrameScoreSeries {
    pub fn new(
        query_id: impl Into<String>,
        video_id: impl Into<String>,
        scores: Vec<f64>,
    ) -> Result<Self> {
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(Error::InvalidConfig(format!(
                "frame score {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            query_id: query_id.into(),
            video_id: video_id.into(),
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Similarity of two unit embeddings mapped onto [0, 1]: `(1 + cos) / 2`,
/// clamped against rounding. Downstream histogram and percentile logic
/// assumes a nonnegative bounded score.
pub fn similarity_g(a: &Embedding, b: &Embedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let dot: f64 = a.vector().iter().zip(b.vector()).map(|(x, y)| x * y).sum();
    Ok(((1.0 + dot) / 2.0).clamp(0.0, 1.0))
}

fn combine(
    qs: &[Embedding],
    qd: &[Embedding],
    agnostic: &Embedding,
    aware: &Embedding,
) -> Result<f64> {
    let m = qs.len();
    let mut sum = 0.0;
    for i in 0..m {
        sum += similarity_g(&qs[i], agnostic)?;
        sum += similarity_g(&qd[i], aware)?;
    }
    Ok(sum / (2.0 * m as f64))
}

/// The moment score of one frame. For frames without an aware caption the
/// agnostic caption substitutes, keeping the two-term shape everywhere.
pub fn frame_score(
    rewrites: &RewriteSet,
    captions: &CaptionSet,
    frame: usize,
    embedder: &dyn TextEmbedder,
) -> Result<f64> {
    let qs: Vec<Embedding> = rewrites
        .pairs
        .iter()
        .map(|p| embedder.embed(&p.simplified))
        .collect::<std::result::Result<_, _>>()?;
    let qd: Vec<Embedding> = rewrites
        .pairs
        .iter()
        .map(|p| embedder.embed(&p.detailed))
        .collect::<std::result::Result<_, _>>()?;
    let agnostic = embedder.embed(&captions.agnostic[frame].text)?;
    let aware = match captions.aware.get(&frame) {
        Some(c) => embedder.embed(&c.text)?,
        None => agnostic.clone(),
    };
    combine(&qs, &qd, &agnostic, &aware)
}

/// Text-keyed embedding memo; safe under concurrent read/insert.
struct EmbedMemo<'a> {
    embedder: &'a dyn TextEmbedder,
    memo: RwLock<HashMap<String, Embedding>>,
}

impl<'a> EmbedMemo<'a> {
    fn new(embedder: &'a dyn TextEmbedder) -> Self {
        Self {
            embedder,
            memo: RwLock::new(HashMap::new()),
        }
    }

    fn get(&self, text: &str) -> Result<Embedding> {
        if let Some(hit) = self.memo.read().unwrap().get(text) {
            return Ok(hit.clone());
        }
        let e = self.embedder.embed(text)?;
        self.memo
            .write()
            .unwrap()
            .entry(text.to_string())
            .or_insert_with(|| e.clone());
        Ok(e)
    }
}

/// Scores every frame of the video. Query and caption embeddings are
/// computed once each and memoized within the call; results are bitwise
/// identical to per-frame [`frame_score`] calls.
pub fn score_video(
    rewrites: &RewriteSet,
    captions: &CaptionSet,
    embedder: &dyn TextEmbedder,
) -> Result<FrameScoreSeries> {
    let memo = EmbedMemo::new(embedder);
    let qs: Vec<Embedding> = rewrites
        .pairs
        .iter()
        .map(|p| memo.get(&p.simplified))
        .collect::<Result<_>>()?;
    let qd: Vec<Embedding> = rewrites
        .pairs
        .iter()
        .map(|p| memo.get(&p.detailed))
        .collect::<Result<_>>()?;

    let mut scores = Vec::with_capacity(captions.frame_count());
    for frame in 0..captions.frame_count() {
        let agnostic = memo.get(&captions.agnostic[frame].text)?;
        let aware = match captions.aware.get(&frame) {
            Some(c) => memo.get(&c.text)?,
            None => agnostic.clone(),
        };
        scores.push(combine(&qs, &qd, &agnostic, &aware)?);
    }
    FrameScoreSeries::new(
        rewrites.original.id.clone(),
        captions.video_id.clone(),
        scores,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::build_caption_set;
    use crate::core::{PipelineConfig, Query, VideoMeta};
    use crate::providers::{Caption, CaptionScriptRule, MockProvider, ProviderError};
    use crate::rewrite::{extract_guidance, generate_rewrites, RewrittenQueryPair};
    use std::collections::BTreeMap;

    fn unit(dim2: (f64, f64)) -> Embedding {
        Embedding::new(vec![dim2.0, dim2.1]).unwrap()
    }

    /// Maps fixed texts to fixed unit vectors.
    struct TableEmbedder(HashMap<String, Embedding>);

    impl TableEmbedder {
        fn new(entries: &[(&str, (f64, f64))]) -> Self {
            Self(
                entries
                    .iter()
                    .map(|(t, v)| (t.to_string(), unit(*v)))
                    .collect(),
            )
        }
    }

    impl TextEmbedder for TableEmbedder {
        fn embed(&self, text: &str) -> std::result::Result<Embedding, ProviderError> {
            self.0
                .get(text)
                .cloned()
                .ok_or_else(|| ProviderError::CacheMiss(text.into()))
        }
    }

    fn rewrite_set(pairs: &[(&str, &str)]) -> RewriteSet {
        let pairs: Vec<RewrittenQueryPair> = pairs
            .iter()
            .map(|(s, d)| RewrittenQueryPair {
                simplified: s.to_string(),
                detailed: d.to_string(),
            })
            .collect();
        RewriteSet {
            original: Query::new("q", "placeholder query").unwrap(),
            m: pairs.len(),
            pairs,
        }
    }

    fn caption_set(agnostic: &[&str], aware: &[(usize, &str)]) -> CaptionSet {
        CaptionSet {
            video_id: "v1".into(),
            agnostic: agnostic
                .iter()
                .map(|t| Caption::agnostic(*t).unwrap())
                .collect(),
            aware: aware
                .iter()
                .map(|(f, t)| (*f, Caption::aware(*t, "fp".into()).unwrap()))
                .collect::<BTreeMap<_, _>>(),
            candidate_frames: aware.iter().map(|(f, _)| *f).collect(),
        }
    }

    #[test]
    fn g_identity_antipodal_orthogonal() {
        let v = unit((1.0, 0.0));
        let anti = unit((-1.0, 0.0));
        let orth = unit((0.0, 1.0));
        assert_eq!(similarity_g(&v, &v).unwrap(), 1.0);
        assert_eq!(similarity_g(&v, &anti).unwrap(), 0.0);
        assert_eq!(similarity_g(&v, &orth).unwrap(), 0.5);
    }

    #[test]
    fn g_dimension_mismatch() {
        let a = unit((1.0, 0.0));
        let b = Embedding::new(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            similarity_g(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn frame_score_m1_direct_substitution() {
        // g values 0.6 and 0.8 -> (0.6 + 0.8) / 2 = 0.7
        let emb = TableEmbedder::new(&[
            ("qs", (1.0, 0.0)),
            ("qd", (1.0, 0.0)),
            ("agn", (0.2, 0.9797958971132712)),
            ("awr", (0.6, 0.8)),
        ]);
        let rs = rewrite_set(&[("qs", "qd")]);
        let cs = caption_set(&["agn"], &[(0, "awr")]);
        let s = frame_score(&rs, &cs, 0, &emb).unwrap();
        assert!((s - 0.7).abs() < 1e-9, "got {s}");
    }

    #[test]
    fn frame_score_m2_constant_average() {
        let emb = TableEmbedder::new(&[
            ("s1", (1.0, 0.0)),
            ("d1", (1.0, 0.0)),
            ("s2", (1.0, 0.0)),
            ("d2", (1.0, 0.0)),
            ("agn", (0.0, 1.0)),
            ("awr", (0.0, 1.0)),
        ]);
        let rs = rewrite_set(&[("s1", "d1"), ("s2", "d2")]);
        let cs = caption_set(&["agn"], &[(0, "awr")]);
        let s = frame_score(&rs, &cs, 0, &emb).unwrap();
        assert!((s - 0.5).abs() < 1e-12, "got {s}");
    }

    #[test]
    fn frame_score_m3_hand_summed() {
        // g pairs {(0.9, 0.7), (0.8, 0.6), (1.0, 0.0)} -> 4.0 / 6
        let sin = |c: f64| (1.0 - c * c).sqrt();
        let emb = TableEmbedder::new(&[
            ("s1", (0.8, sin(0.8))), // vs agn (1,0): g = 0.9
            ("s2", (0.6, sin(0.6))), // g = 0.8
            ("s3", (1.0, 0.0)),      // g = 1.0
            ("d1", (sin(0.4), 0.4)), // vs awr (0,1): g = 0.7
            ("d2", (sin(0.2), 0.2)), // g = 0.6
            ("d3", (0.0, -1.0)),     // g = 0.0
            ("agn", (1.0, 0.0)),
            ("awr", (0.0, 1.0)),
        ]);
        let rs = rewrite_set(&[("s1", "d1"), ("s2", "d2"), ("s3", "d3")]);
        let cs = caption_set(&["agn"], &[(0, "awr")]);
        let s = frame_score(&rs, &cs, 0, &emb).unwrap();
        assert!((s - 4.0 / 6.0).abs() < 1e-9, "got {s}");
    }

    #[test]
    fn non_candidate_frames_substitute_agnostic() {
        // frame 1 has no aware caption: both terms read the agnostic one
        let emb = TableEmbedder::new(&[
            ("qs", (1.0, 0.0)),
            ("qd", (1.0, 0.0)),
            ("a0", (1.0, 0.0)),
            ("w0", (1.0, 0.0)),
            ("a1", (0.6, 0.8)),
        ]);
        let rs = rewrite_set(&[("qs", "qd")]);
        let cs = caption_set(&["a0", "a1"], &[(0, "w0")]);
        let s1 = frame_score(&rs, &cs, 1, &emb).unwrap();
        let g = similarity_g(&emb.embed("qs").unwrap(), &emb.embed("a1").unwrap()).unwrap();
        assert_eq!(s1, g, "collapse case: S_f must equal g exactly");
    }

    #[test]
    fn score_video_matches_frame_score_bitwise() {
        let mock = MockProvider::new(5);
        let q = Query::new("q", "A dog running in the park").unwrap();
        let cfg = PipelineConfig::default();
        let rs = generate_rewrites(&q, &cfg, &mock, 1).unwrap();
        let g = extract_guidance(&q, None).unwrap();
        let v = VideoMeta::new("v1", 20.0, 0.5).unwrap();
        let cs = build_caption_set(&v, &q, &g, 20.0, &mock, &mock).unwrap();
        let series = score_video(&rs, &cs, &mock).unwrap();
        assert_eq!(series.len(), 10);
        for f in 0..10 {
            let direct = frame_score(&rs, &cs, f, &mock).unwrap();
            assert_eq!(
                direct.to_bits(),
                series.scores[f].to_bits(),
                "memoization changed frame {f}"
            );
        }
    }

    #[test]
    fn single_frame_video_reduces_to_frame_score() {
        let mock = MockProvider::new(0);
        let q = Query::new("q", "A dog running in the park").unwrap();
        let rs = generate_rewrites(&q, &PipelineConfig::default(), &mock, 1).unwrap();
        let g = extract_guidance(&q, None).unwrap();
        let v = VideoMeta::new("v1", 2.0, 0.5).unwrap();
        let cs = build_caption_set(&v, &q, &g, 10.0, &mock, &mock).unwrap();
        let series = score_video(&rs, &cs, &mock).unwrap();
        assert_eq!(series.len(), 1);
        assert_eq!(series.scores[0], frame_score(&rs, &cs, 0, &mock).unwrap());
    }

    #[test]
    fn identical_captions_give_constant_series() {
        let emb = MockProvider::new(0);
        let rs = rewrite_set(&[("dog park", "a dog in the park")]);
        let cs = caption_set(&["same caption", "same caption", "same caption"], &[]);
        let series = score_video(&rs, &cs, &emb).unwrap();
        assert!(series.scores.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn planted_plateau_dominates_scores() {
        let mock = MockProvider::new(42).with_caption_script(vec![CaptionScriptRule {
            video_id: "v1".into(),
            start_frame: 40,
            end_frame: 60,
            tokens: "dog running park grass".into(),
        }]);
        let q = Query::new("q", "A dog running in the park").unwrap();
        let cfg = PipelineConfig::default();
        let rs = generate_rewrites(&q, &cfg, &mock, 1).unwrap();
        let g = extract_guidance(&q, None).unwrap();
        let v = VideoMeta::new("v1", 200.0, 0.5).unwrap();
        let cs = build_caption_set(&v, &q, &g, cfg.top_k_percent, &mock, &mock).unwrap();
        let series = score_video(&rs, &cs, &mock).unwrap();
        let argmax = series
            .scores
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.total_cmp(b))
            .map(|(i, _)| i)
            .unwrap();
        assert!((40..=60).contains(&argmax), "argmax {argmax} off-plateau");
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let mock = MockProvider::new(17);
        let q = Query::new("q", "A chef flipping pancakes in a kitchen").unwrap();
        let rs = generate_rewrites(&q, &PipelineConfig::default(), &mock, 1).unwrap();
        let g = extract_guidance(&q, None).unwrap();
        let v = VideoMeta::new("v9", 60.0, 0.5).unwrap();
        let cs = build_caption_set(&v, &q, &g, 10.0, &mock, &mock).unwrap();
        let series = score_video(&rs, &cs, &mock).unwrap();
        assert!(series.scores.iter().all(|s| (0.0..=1.0).contains(s)));
    }

    #[test]
    fn permuting_pairs_leaves_scores_unchanged() {
        let mock = MockProvider::new(3);
        let rs = rewrite_set(&[
            ("dog park", "a dog in the park"),
            ("puppy grass", "a puppy on the grass"),
            ("animal outside", "an animal playing outside"),
        ]);
        let mut reversed = rs.clone();
        reversed.pairs.reverse();
        let cs = caption_set(&["a dog running", "a cat sleeping"], &[]);
        let a = score_video(&rs, &cs, &mock).unwrap();
        let b = score_video(&reversed, &cs, &mock).unwrap();
        for (x, y) in a.scores.iter().zip(&b.scores) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}
