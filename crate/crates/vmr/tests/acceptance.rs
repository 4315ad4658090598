//! Acceptance suite: one test per release criterion, each with an
//! independent oracle and a pinned tolerance. Run with
//! `cargo test -p vmr --test acceptance -- --nocapture` to see one PASS line
//! per criterion.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use vmr::caption::CaptionSet;
use vmr::core::{frames_to_time, temporal_iou, FrameIndexSpan, PipelineConfig, Query, TimeSpan};
use vmr::data::{load_qvhighlights, read_predictions, Split};
use vmr::eval::{evaluate, GroundTruth};
use vmr::propose::{merge_frames, nms, score_spans, select_high_frames, MomentPrediction};
use vmr::providers::{Caption, Embedding, ProviderError, TextEmbedder};
use vmr::rewrite::{RewriteSet, RewrittenQueryPair};
use vmr::score::{frame_score, FrameScoreSeries};

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

fn span(s: f64, e: f64) -> TimeSpan {
    TimeSpan::new(s, e).unwrap()
}

/// Random unit vector.
fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Embedding {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if let Ok(e) = Embedding::from_unnormalized(v) {
            return e;
        }
    }
}

struct TableEmbedder(HashMap<String, Embedding>);

impl TextEmbedder for TableEmbedder {
    fn embed(&self, text: &str) -> Result<Embedding, ProviderError> {
        self.0
            .get(text)
            .cloned()
            .ok_or_else(|| ProviderError::CacheMiss(text.into()))
    }
}

fn rewrite_set(pairs: Vec<(String, String)>) -> RewriteSet {
    let pairs: Vec<RewrittenQueryPair> = pairs
        .into_iter()
        .map(|(simplified, detailed)| RewrittenQueryPair {
            simplified,
            detailed,
        })
        .collect();
    RewriteSet {
        original: Query::new("q", "query text").unwrap(),
        m: pairs.len(),
        pairs,
    }
}

fn single_frame_captions(agnostic: &str, aware: &str) -> CaptionSet {
    CaptionSet {
        video_id: "v".into(),
        agnostic: vec![Caption::agnostic(agnostic).unwrap()],
        aware: [(0usize, Caption::aware(aware, "fp".into()).unwrap())]
            .into_iter()
            .collect(),
        candidate_frames: vec![0],
    }
}

// 1. Frame score suite: hand-computed values to 1e-9, permutation
//    invariance over 500 randomized cases, under one second.
#[test]
fn acceptance_frame_score_suite() {
    let clock = Instant::now();

    // hand-computed cases: g pairs -> expected mean
    let sin = |c: f64| (1.0 - c * c).sqrt();
    let emb = TableEmbedder(
        [
            ("s1", (0.2, sin(0.2))),
            ("d1", (0.6, 0.8)),
            ("agn", (1.0, 0.0)),
            ("awr", (1.0, 0.0)),
        ]
        .into_iter()
        .map(|(t, (x, y))| (t.to_string(), Embedding::new(vec![x, y]).unwrap()))
        .collect(),
    );
    // g = (1 + cos)/2: cos 0.2 -> 0.6 and cos 0.6 -> 0.8; mean 0.7
    let rs = rewrite_set(vec![("s1".into(), "d1".into())]);
    let cs = single_frame_captions("agn", "awr");
    let got = frame_score(&rs, &cs, 0, &emb).unwrap();
    assert!((got - 0.7).abs() < 1e-9, "m=1 case: {got}");

    // m=3 hand-summed case: {(0.9,0.7),(0.8,0.6),(1.0,0.0)} -> 4/6
    let emb = TableEmbedder(
        [
            ("s1", (0.8, sin(0.8))),
            ("s2", (0.6, sin(0.6))),
            ("s3", (1.0, 0.0)),
            ("d1", (sin(0.4), 0.4)),
            ("d2", (sin(0.2), 0.2)),
            ("d3", (0.0, -1.0)),
            ("agn", (1.0, 0.0)),
            ("awr", (0.0, 1.0)),
        ]
        .into_iter()
        .map(|(t, (x, y))| (t.to_string(), Embedding::new(vec![x, y]).unwrap()))
        .collect(),
    );
    let rs = rewrite_set(vec![
        ("s1".into(), "d1".into()),
        ("s2".into(), "d2".into()),
        ("s3".into(), "d3".into()),
    ]);
    let cs = single_frame_captions("agn", "awr");
    let got = frame_score(&rs, &cs, 0, &emb).unwrap();
    assert!((got - 4.0 / 6.0).abs() < 1e-9, "m=3 case: {got}");

    // permutation invariance over 500 randomized cases
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..500 {
        let m = rng.random_range(1..=6);
        let dim = 8;
        let mut table = HashMap::new();
        let mut pairs = Vec::new();
        for i in 0..m {
            table.insert(format!("s{i}"), unit_vec(&mut rng, dim));
            table.insert(format!("d{i}"), unit_vec(&mut rng, dim));
            pairs.push((format!("s{i}"), format!("d{i}")));
        }
        table.insert("agn".into(), unit_vec(&mut rng, dim));
        table.insert("awr".into(), unit_vec(&mut rng, dim));
        let emb = TableEmbedder(table);
        let cs = single_frame_captions("agn", "awr");

        let forward = frame_score(&rewrite_set(pairs.clone()), &cs, 0, &emb).unwrap();
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng);
        let permuted = frame_score(&rewrite_set(shuffled), &cs, 0, &emb).unwrap();
        assert!(
            (forward - permuted).abs() < 1e-9,
            "permutation changed the score: {forward} vs {permuted}"
        );
    }

    let elapsed = clock.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "runtime {elapsed:?} exceeds 1 s"
    );
    println!("PASS: frame score suite (hand values 1e-9, 500 permutations, {elapsed:?})");
}

// 2. Span score suite: direct substitution to 1e-12, lambda=0
//    collapse, rho summing to one over 500 randomized batches, under one
//    second.
#[test]
fn acceptance_span_score_suite() {
    let clock = Instant::now();

    // lambda=0.3, mu=0.8, rho=0.5 -> 0.71
    let series = FrameScoreSeries::new("q", "v", vec![0.8, 0.8, 0.3, 0.5]).unwrap();
    let spans = [
        FrameIndexSpan::new(0, 1).unwrap(),
        FrameIndexSpan::new(2, 3).unwrap(),
    ];
    let scored = score_spans(&spans, &series, 0.3);
    assert!((scored[0].score - 0.71).abs() < 1e-12);

    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..500 {
        let frames = rng.random_range(4..80);
        let scores: Vec<f64> = (0..frames).map(|_| rng.random_range(0.0..=1.0)).collect();
        let series = FrameScoreSeries::new("q", "v", scores.clone()).unwrap();
        let selected: Vec<usize> = (0..frames).filter(|_| rng.random_bool(0.4)).collect();
        if selected.is_empty() {
            continue;
        }
        let spans = merge_frames(&selected, rng.random_range(0..3));
        let lambda: f64 = rng.random_range(0.0..=1.0);
        let scored = score_spans(&spans, &series, lambda);

        // direct substitution with independently recomputed terms
        let total_len: usize = spans.iter().map(|s| s.end_idx - s.start_idx + 1).sum();
        for (s, sc) in spans.iter().zip(&scored) {
            let mut mu: f64 = scores[s.start_idx..=s.end_idx].iter().sum();
            mu /= (s.end_idx - s.start_idx + 1) as f64;
            let rho = (s.end_idx - s.start_idx + 1) as f64 / total_len as f64;
            let expect = (1.0 - lambda) * mu + lambda * rho;
            assert!(
                (sc.score - expect).abs() < 1e-12,
                "{} vs {expect}",
                sc.score
            );
        }

        let rho_sum: f64 = scored.iter().map(|s| s.rho).sum();
        assert!((rho_sum - 1.0).abs() < 1e-9, "rho sum {rho_sum}");

        // lambda = 0 collapse
        for sc in score_spans(&spans, &series, 0.0) {
            assert_eq!(sc.score, sc.mu);
        }
    }

    let elapsed = clock.elapsed();
    assert!(
        elapsed.as_secs_f64() < 1.0,
        "runtime {elapsed:?} exceeds 1 s"
    );
    println!("PASS: span score suite (substitution 1e-12, 500 batches, {elapsed:?})");
}

/// Reference NMS: precomputed suppression matrix walked in rank order.
fn nms_reference(spans: &[(TimeSpan, f64)], theta: f64) -> Vec<(TimeSpan, f64)> {
    let n = spans.len();
    let mut overlap = vec![vec![false; n]; n];
    for i in 0..n {
        for j in 0..n {
            overlap[i][j] = temporal_iou(spans[i].0, spans[j].0) > theta;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        spans[j]
            .1
            .total_cmp(&spans[i].1)
            .then(spans[i].0.start_s.total_cmp(&spans[j].0.start_s))
            .then(spans[j].0.length().total_cmp(&spans[i].0.length()))
    });
    let mut kept_idx: Vec<usize> = Vec::new();
    for &i in &order {
        if kept_idx.iter().all(|&k| !overlap[k][i]) {
            kept_idx.push(i);
        }
    }
    kept_idx.into_iter().map(|i| spans[i]).collect()
}

// 3. Greedy NMS equals the quadratic reference on 1000 random
//    instances of up to 50 spans, exact set and order, under five seconds.
#[test]
fn acceptance_nms_oracle() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for case in 0..1000 {
        let n = rng.random_range(1..=50);
        let mut spans = Vec::with_capacity(n);
        for _ in 0..n {
            let start = rng.random_range(0.0..100.0);
            let len = rng.random_range(0.5..40.0);
            // duplicate scores are common on purpose to exercise ties
            let score = (rng.random_range(0..20) as f64) / 20.0;
            spans.push((span(start, start + len), score));
        }
        let theta = rng.random_range(0.05..1.0);
        let fast = nms(spans.clone(), theta);
        let slow = nms_reference(&spans, theta);
        assert_eq!(fast, slow, "case {case} diverged at theta {theta}");
    }
    let elapsed = clock.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "runtime {elapsed:?} exceeds 5 s"
    );
    println!("PASS: NMS equals the quadratic reference on 1000 instances ({elapsed:?})");
}

/// Reference merge: paint selected frames onto a boolean axis and scan,
/// bridging runs of at most tau holes.
fn merge_reference(selected: &[usize], tau: usize) -> Vec<(usize, usize)> {
    if selected.is_empty() {
        return vec![];
    }
    let max = *selected.last().unwrap();
    let mut on = vec![false; max + 1];
    for &i in selected {
        on[i] = true;
    }
    let mut spans = vec![];
    let mut i = 0;
    while i <= max {
        if !on[i] {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i;
        let mut j = i + 1;
        let mut holes = 0;
        while j <= max {
            if on[j] {
                end = j;
                holes = 0;
            } else {
                holes += 1;
                if holes > tau {
                    break;
                }
            }
            j += 1;
        }
        spans.push((start, end));
        i = end + 1;
    }
    spans
}

// 4. merge_frames equals the brute-force scan on 1000 random index
//    sets with tau in 0..=8, exact, under five seconds.
#[test]
fn acceptance_merge_oracle() {
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    for case in 0..1000 {
        let universe = rng.random_range(1..120);
        let density = rng.random_range(0.05..0.9);
        let selected: Vec<usize> = (0..universe).filter(|_| rng.random_bool(density)).collect();
        let tau = rng.random_range(0..=8);
        let got: Vec<(usize, usize)> = merge_frames(&selected, tau)
            .into_iter()
            .map(|s| (s.start_idx, s.end_idx))
            .collect();
        assert_eq!(
            got,
            merge_reference(&selected, tau),
            "case {case}, tau {tau}"
        );
    }
    let elapsed = clock.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "runtime {elapsed:?} exceeds 5 s"
    );
    println!("PASS: merge_frames equals brute force on 1000 index sets ({elapsed:?})");
}

// 5. select_high_frames matches the cutoff formula on randomized
//    series; a constant series selects every frame. Exact.
#[test]
fn acceptance_select_high_frames() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    for _ in 0..200 {
        let frames = rng.random_range(1..200);
        let scores: Vec<f64> = (0..frames).map(|_| rng.random_range(0.0..=1.0)).collect();
        let series = FrameScoreSeries::new("q", "v", scores.clone()).unwrap();
        let bins = rng.random_range(1..=20);
        let top = rng.random_range(1..=bins);
        let got = select_high_frames(&series, bins, top).unwrap();

        let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expect: Vec<usize> = if max == min {
            (0..frames).collect()
        } else {
            let cutoff = min + (bins - top) as f64 / bins as f64 * (max - min);
            (0..frames).filter(|&i| scores[i] >= cutoff).collect()
        };
        assert_eq!(got, expect);
    }
    let series = FrameScoreSeries::new("q", "v", vec![0.37; 23]).unwrap();
    assert_eq!(select_high_frames(&series, 10, 8).unwrap().len(), 23);
    println!("PASS: select_high_frames matches the cutoff formula exactly");
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

// 6. The bundled five-query fixture reproduces the hand-computed
//    metric values exactly to two decimal places.
#[test]
fn acceptance_metric_fixtures() {
    let records = load_qvhighlights(&fixture("eval/dataset.jsonl"), 0.5, Split::Val).unwrap();
    let preds = read_predictions(&fixture("eval/predictions.jsonl")).unwrap();
    let gts: Vec<GroundTruth> = records.iter().map(|r| r.ground_truth.clone()).collect();
    let report = evaluate(&preds, &gts, None, false).unwrap();

    // frozen by-hand oracle values:
    //   top-1 IoUs are {1.0, 0.8, 0.6, 1.0, 0.0}
    //   per-query APs: q4 ranked [hit, miss, hit] over 2 windows = 5/6
    //   mAP@t = 23/30 for t <= 0.6, 17/30 for t <= 0.8, 11/30 above
    //   VHD APs: {1, 5/6, 1, 7/12, 0}
    let m = &report.overall;
    assert_eq!(round2(m.r1["0.50"]), 80.00);
    assert_eq!(round2(m.r1["0.70"]), 60.00);
    assert_eq!(round2(m.map_at["0.50"]), 76.67);
    assert_eq!(round2(m.map_at["0.75"]), 56.67);
    assert_eq!(round2(m.map_avg), 56.67);
    assert_eq!(round2(m.miou), 68.00);
    let vhd = report
        .vhd
        .as_ref()
        .expect("fixture carries saliency labels");
    assert_eq!(round2(vhd.map), 68.33);
    assert_eq!(round2(vhd.hit_at_1), 60.00);
    println!("PASS: metric fixture reproduces all hand-computed values to 2 decimals");
}

// 7. R1@t is non-increasing in t across 100 randomized
//    prediction/ground-truth sets.
#[test]
fn acceptance_metric_monotonicity() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    for _ in 0..100 {
        let queries = rng.random_range(1..15);
        let mut preds = Vec::new();
        let mut gts = Vec::new();
        for q in 0..queries {
            let qid = format!("q{q}");
            let ps = rng.random_range(0.0..50.0);
            let pl = rng.random_range(0.5..30.0);
            let gs = rng.random_range(0.0..50.0);
            let gl = rng.random_range(0.5..30.0);
            preds.push(MomentPrediction {
                query_id: qid.clone(),
                video_id: "v".into(),
                spans: vec![(span(ps, ps + pl), 0.9)],
                saliency: FrameScoreSeries::new(&qid, "v", vec![0.5]).unwrap(),
            });
            gts.push(GroundTruth {
                query_id: qid,
                windows: vec![span(gs, gs + gl)],
                saliency_labels: None,
            });
        }
        let grid: Vec<f64> = (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect();
        let values: Vec<f64> = grid
            .iter()
            .map(|&t| vmr::eval::recall_at_1(&preds, &gts, t).unwrap())
            .collect();
        for w in values.windows(2) {
            assert!(w[0] >= w[1], "recall increased with threshold: {values:?}");
        }
    }
    println!("PASS: R1@t non-increasing in t over 100 randomized sets");
}

// 8. Two `run` invocations with mock providers over the synthetic
//    100-frame fixture yield byte-identical prediction files, and the top-1
//    span overlaps the planted [40,60]-frame ground truth at IoU >= 0.7.
#[test]
fn acceptance_end_to_end_determinism() {
    let bin = env!("CARGO_BIN_EXE_vmr");
    let dataset = fixture("synthetic/dataset.jsonl");
    let config = fixture("synthetic/config.toml");
    let tmp = tempfile::tempdir().unwrap();

    let mut outs = Vec::new();
    for run in 0..2 {
        let out = tmp.path().join(format!("run{run}"));
        let status = std::process::Command::new(bin)
            .args(["run"])
            .arg(&dataset)
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .env("RUST_LOG", "error")
            .status()
            .expect("binary runs");
        assert!(status.success(), "run {run} exited with {status}");
        outs.push(std::fs::read(out.join("predictions.jsonl")).unwrap());
    }
    assert_eq!(outs[0], outs[1], "prediction files differ between runs");

    let text = String::from_utf8(outs[0].clone()).unwrap();
    let first_line = text.lines().next().expect("query 1 prediction present");
    let parsed: serde_json::Value = serde_json::from_str(first_line).unwrap();
    assert_eq!(parsed["qid"], 1);
    let window = &parsed["pred_relevant_windows"][0];
    let top = span(window[0].as_f64().unwrap(), window[1].as_f64().unwrap());
    // frames [40, 60] at 0.5 fps are seconds [80, 122]
    let planted = frames_to_time(FrameIndexSpan::new(40, 60).unwrap(), 0.5);
    let iou = temporal_iou(top, planted);
    assert!(
        iou >= 0.7,
        "top-1 span {top:?} has IoU {iou} with the plant"
    );
    println!("PASS: byte-identical reruns; top-1 IoU {iou:.3} >= 0.7 on the planted span");
}

// 9. A positive affine transform of all frame scores leaves the
//    selected frame set and the mu-ranking of proposals unchanged on 100
//    randomized series.
#[test]
fn acceptance_selection_invariance() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for _ in 0..100 {
        let frames = rng.random_range(2..150);
        let scores: Vec<f64> = (0..frames).map(|_| rng.random_range(0.0..=1.0)).collect();
        let a = rng.random_range(0.05..0.95);
        let b = rng.random_range(0.0..(1.0 - a));
        let orig = FrameScoreSeries::new("q", "v", scores.clone()).unwrap();
        let mapped =
            FrameScoreSeries::new("q", "v", scores.iter().map(|s| a * s + b).collect()).unwrap();

        let sel_orig = select_high_frames(&orig, 10, 8).unwrap();
        let sel_mapped = select_high_frames(&mapped, 10, 8).unwrap();
        assert_eq!(sel_orig, sel_mapped, "selection changed under affine map");

        let spans = merge_frames(&sel_orig, 3);
        let rank = |series: &FrameScoreSeries| -> Vec<usize> {
            let scored = score_spans(&spans, series, 0.0);
            let mut idx: Vec<usize> = (0..spans.len()).collect();
            idx.sort_by(|&i, &j| scored[j].mu.total_cmp(&scored[i].mu).then(i.cmp(&j)));
            idx
        };
        assert_eq!(
            rank(&orig),
            rank(&mapped),
            "mu-ranking changed under affine map"
        );
    }
    println!("PASS: selection and mu-ranking invariant under positive affine maps");
}

// 10. Documented target, not CI: the default configuration is the
//     reference operating point used for the documented full-provider
//     results (see README): 0.5 fps, K=10, m=3, tau=6, n=20, lambda=0.3,
//     theta=0.9, 10 bins / top 8.
#[test]
fn acceptance_reference_defaults() {
    let c = PipelineConfig::default();
    assert_eq!(
        (
            c.fps,
            c.top_k_percent,
            c.num_rewrites,
            c.merge_gap,
            c.bottom_percent,
            c.length_weight,
            c.nms_iou,
            c.histogram_bins,
            c.histogram_top_bins,
        ),
        (0.5, 10.0, 3, 6, 20.0, 0.3, 0.9, 10, 8)
    );
    println!("PASS: defaults pinned to the reference operating point");
}
