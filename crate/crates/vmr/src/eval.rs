//! Retrieval and highlight-detection metrics: R1@n, mAP@n, mAP@avg, mIoU,
//! VHD mAP/HIT@1, and the per-query-type breakdown.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::core::{temporal_iou, TimeSpan};
use crate::propose::MomentPrediction;
use crate::rewrite::{QueryCategory, QueryType};
use crate::{Error, Result};

/// IoU thresholds averaged into mAP@avg: 0.5 to 0.95, step 0.05.
pub fn map_thresholds() -> Vec<f64> {
    (0..10).map(|k| (50 + 5 * k) as f64 / 100.0).collect()
}

/// Default R1 reporting thresholds.
pub const R1_THRESHOLDS: &[f64] = &[0.3, 0.5, 0.7];

/// Annotated moments (and optional per-clip relevance labels) for one query.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    pub query_id: String,
    pub windows: Vec<TimeSpan>,
    pub saliency_labels: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VhdMetrics {
    pub map: f64,
    pub hit_at_1: f64,
}

/// One block of VMR metrics, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub r1: BTreeMap<String, f64>,
    pub map_at: BTreeMap<String, f64>,
    pub map_avg: f64,
    pub miou: f64,
    pub num_queries: usize,
}

/// Full evaluation report: overall metrics, optional highlight-detection
/// metrics, and per-query-type slices.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub overall: MetricSet,
    pub vhd: Option<VhdMetrics>,
    pub by_query_type: BTreeMap<String, MetricSet>,
}

fn threshold_key(t: f64) -> String {
    format!("{t:.2}")
}

fn meets(iou: f64, threshold: f64, strict: bool) -> bool {
    if strict {
        iou > threshold
    } else {
        iou >= threshold
    }
}

/// Pairs every ground-truth query with its prediction, by query id.
fn align<'a>(
    preds: &'a [MomentPrediction],
    gts: &'a [GroundTruth],
) -> Result<Vec<(&'a MomentPrediction, &'a GroundTruth)>> {
    let by_id: HashMap<&str, &MomentPrediction> =
        preds.iter().map(|p| (p.query_id.as_str(), p)).collect();
    gts.iter()
        .map(|gt| {
            let pred = by_id
                .get(gt.query_id.as_str())
                .copied()
                .filter(|p| !p.spans.is_empty())
                .ok_or_else(|| Error::MissingPrediction {
                    query_id: gt.query_id.clone(),
                })?;
            Ok((pred, gt))
        })
        .collect()
}

fn top1_best_iou(pred: &MomentPrediction, gt: &GroundTruth) -> f64 {
    let (top, _) = pred.spans[0];
    gt.windows
        .iter()
        .map(|w| temporal_iou(top, *w))
        .fold(0.0, f64::max)
}

/// Percent of queries whose top-1 span reaches the IoU threshold against at
/// least one ground-truth window.
pub fn recall_at_1(preds: &[MomentPrediction], gts: &[GroundTruth], threshold: f64) -> Result<f64> {
    recall_at_1_opts(preds, gts, threshold, false)
}

pub fn recall_at_1_opts(
    preds: &[MomentPrediction],
    gts: &[GroundTruth],
    threshold: f64,
    strict: bool,
) -> Result<f64> {
    let pairs = align(preds, gts)?;
    let hits = pairs
        .iter()
        .filter(|(p, g)| meets(top1_best_iou(p, g), threshold, strict))
        .count();
    Ok(100.0 * hits as f64 / pairs.len().max(1) as f64)
}

/// Mean over queries of the top-1 prediction's best IoU, in percent.
pub fn mean_iou(preds: &[MomentPrediction], gts: &[GroundTruth]) -> Result<f64> {
    let pairs = align(preds, gts)?;
    let total: f64 = pairs.iter().map(|(p, g)| top1_best_iou(p, g)).sum();
    Ok(100.0 * total / pairs.len().max(1) as f64)
}

/// Average precision of one query's ranked spans: walking down the ranking,
/// a span is a true positive if it reaches the threshold against a
/// not-yet-matched window (best-IoU unmatched window is consumed); AP is the
/// mean precision at the true-positive ranks over the recall base.
fn average_precision(
    pred: &MomentPrediction,
    gt: &GroundTruth,
    threshold: f64,
    strict: bool,
) -> f64 {
    let mut matched = vec![false; gt.windows.len()];
    let mut precision_sum = 0.0;
    let mut tp = 0usize;
    for (rank, (span, _)) in pred.spans.iter().enumerate() {
        let mut best: Option<(usize, f64)> = None;
        for (gi, w) in gt.windows.iter().enumerate() {
            if matched[gi] {
                continue;
            }
            let iou = temporal_iou(*span, *w);
            if meets(iou, threshold, strict) && best.is_none_or(|(_, b)| iou > b) {
                best = Some((gi, iou));
            }
        }
        if let Some((gi, _)) = best {
            matched[gi] = true;
            tp += 1;
            precision_sum += tp as f64 / (rank + 1) as f64;
        }
    }
    precision_sum / gt.windows.len() as f64
}

/// Mean average precision at one IoU threshold, in percent.
pub fn map_at(preds: &[MomentPrediction], gts: &[GroundTruth], threshold: f64) -> Result<f64> {
    map_at_opts(preds, gts, threshold, false)
}

pub fn map_at_opts(
    preds: &[MomentPrediction],
    gts: &[GroundTruth],
    threshold: f64,
    strict: bool,
) -> Result<f64> {
    let pairs = align(preds, gts)?;
    let total: f64 = pairs
        .iter()
        .map(|(p, g)| average_precision(p, g, threshold, strict))
        .sum();
    Ok(100.0 * total / pairs.len().max(1) as f64)
}

/// First index of the maximum score.
fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate().skip(1) {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Binary average precision of a score-ranked clip list (score descending,
/// index ascending on ties). Zero when nothing is relevant.
pub fn binary_average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LabelLengthMismatch {
            labels: labels.len(),
            series: scores.len(),
        });
    }
    let relevant = labels.iter().filter(|l| **l).count();
    if relevant == 0 {
        return Ok(0.0);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]).then(i.cmp(&j)));
    let mut tp = 0usize;
    let mut precision_sum = 0.0;
    for (rank, &idx) in order.iter().enumerate() {
        if labels[idx] {
            tp += 1;
            precision_sum += tp as f64 / (rank + 1) as f64;
        }
    }
    Ok(precision_sum / relevant as f64)
}

/// Highlight-detection metrics over all queries that carry saliency labels:
/// HIT@1 is whether the top-scored clip is labeled relevant, mAP the binary
/// average precision of the full ranking. Both in percent.
pub fn vhd_metrics(preds: &[MomentPrediction], gts: &[GroundTruth]) -> Result<Option<VhdMetrics>> {
    let pairs = align(preds, gts)?;
    let mut n = 0usize;
    let mut map_total = 0.0;
    let mut hit_total = 0.0;
    for (pred, gt) in pairs {
        let Some(labels) = &gt.saliency_labels else {
            continue;
        };
        let scores = &pred.saliency.scores;
        if scores.len() != labels.len() {
            return Err(Error::LabelLengthMismatch {
                labels: labels.len(),
                series: scores.len(),
            });
        }
        map_total += binary_average_precision(scores, labels)?;
        if labels[argmax_first(scores)] {
            hit_total += 1.0;
        }
        n += 1;
    }
    if n == 0 {
        return Ok(None);
    }
    Ok(Some(VhdMetrics {
        map: 100.0 * map_total / n as f64,
        hit_at_1: 100.0 * hit_total / n as f64,
    }))
}

fn metric_set(
    preds: &[MomentPrediction],
    gts: &[GroundTruth],
    r1_thresholds: &[f64],
    strict: bool,
) -> Result<MetricSet> {
    let mut r1 = BTreeMap::new();
    for &t in r1_thresholds {
        r1.insert(threshold_key(t), recall_at_1_opts(preds, gts, t, strict)?);
    }
    let mut map_values = Vec::new();
    let mut map_at_table = BTreeMap::new();
    for t in map_thresholds() {
        let v = map_at_opts(preds, gts, t, strict)?;
        map_values.push(v);
        map_at_table.insert(threshold_key(t), v);
    }
    Ok(MetricSet {
        r1,
        map_at: map_at_table,
        map_avg: map_values.iter().sum::<f64>() / map_values.len() as f64,
        miou: mean_iou(preds, gts)?,
        num_queries: gts.len(),
    })
}

/// Recomputes the metric block inside each query-type slice. The three
/// length categories partition the queries; the Error slice overlaps them
/// and is reported independently. Empty slices are omitted.
pub fn breakdown(
    preds: &[MomentPrediction],
    gts: &[GroundTruth],
    types: &HashMap<String, QueryType>,
    strict: bool,
) -> Result<BTreeMap<String, MetricSet>> {
    let mut out = BTreeMap::new();
    let slice = |keep: &dyn Fn(&QueryType) -> bool| -> Vec<GroundTruth> {
        gts.iter()
            .filter(|g| types.get(&g.query_id).map(keep).unwrap_or(false))
            .cloned()
            .collect()
    };
    let categories: [(&str, QueryCategory); 3] = [
        ("Simple", QueryCategory::Simple),
        ("Detail", QueryCategory::Detail),
        ("Else", QueryCategory::Else),
    ];
    for (name, cat) in categories {
        let sub = slice(&|t: &QueryType| t.category == cat);
        if !sub.is_empty() {
            out.insert(
                name.to_string(),
                metric_set(preds, &sub, R1_THRESHOLDS, strict)?,
            );
        }
    }
    let errors = slice(&|t: &QueryType| t.error_flag);
    if !errors.is_empty() {
        out.insert(
            "Error".to_string(),
            metric_set(preds, &errors, R1_THRESHOLDS, strict)?,
        );
    }
    Ok(out)
}

/// Assembles the full report; `types` enables the per-type breakdown.
pub fn evaluate(
    preds: &[MomentPrediction],
    gts: &[GroundTruth],
    types: Option<&HashMap<String, QueryType>>,
    strict: bool,
) -> Result<EvalReport> {
    let overall = metric_set(preds, gts, R1_THRESHOLDS, strict)?;
    let vhd = vhd_metrics(preds, gts)?;
    let by_query_type = match types {
        Some(t) => breakdown(preds, gts, t, strict)?,
        None => BTreeMap::new(),
    };
    Ok(EvalReport {
        overall,
        vhd,
        by_query_type,
    })
}

impl EvalReport {
    /// Human-readable fixed-width table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let header = format!(
            "{:<10} {:>4} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8}\n",
            "slice", "n", "R1@0.3", "R1@0.5", "R1@0.7", "mAP@0.5", "mAP@avg", "mIoU"
        );
        out.push_str(&header);
        out.push_str(&"-".repeat(header.len() - 1));
        out.push('\n');
        let row = |name: &str, m: &MetricSet| {
            format!(
                "{:<10} {:>4} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
                name,
                m.num_queries,
                m.r1.get("0.30").copied().unwrap_or(f64::NAN),
                m.r1.get("0.50").copied().unwrap_or(f64::NAN),
                m.r1.get("0.70").copied().unwrap_or(f64::NAN),
                m.map_at.get("0.50").copied().unwrap_or(f64::NAN),
                m.map_avg,
                m.miou
            )
        };
        out.push_str(&row("overall", &self.overall));
        for (name, m) in &self.by_query_type {
            out.push_str(&row(name, m));
        }
        if let Some(vhd) = &self.vhd {
            out.push_str(&format!(
                "VHD: mAP {:.2}  HIT@1 {:.2}\n",
                vhd.map, vhd.hit_at_1
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::FrameScoreSeries;
    use proptest::prelude::*;

    fn tspan(s: f64, e: f64) -> TimeSpan {
        TimeSpan::new(s, e).unwrap()
    }

    fn pred(qid: &str, spans: &[(f64, f64, f64)]) -> MomentPrediction {
        MomentPrediction {
            query_id: qid.into(),
            video_id: format!("v_{qid}"),
            spans: spans
                .iter()
                .map(|(s, e, sc)| (tspan(*s, *e), *sc))
                .collect(),
            saliency: FrameScoreSeries::new(qid, format!("v_{qid}"), vec![0.5]).unwrap(),
        }
    }

    fn gt(qid: &str, windows: &[(f64, f64)]) -> GroundTruth {
        GroundTruth {
            query_id: qid.into(),
            windows: windows.iter().map(|(s, e)| tspan(*s, *e)).collect(),
            saliency_labels: None,
        }
    }

    #[test]
    fn recall_exact_match_is_100() {
        let preds = vec![pred("q1", &[(90.0, 142.0, 0.9)])];
        let gts = vec![gt("q1", &[(90.0, 142.0)])];
        assert_eq!(recall_at_1(&preds, &gts, 0.5).unwrap(), 100.0);
    }

    #[test]
    fn recall_disjoint_is_0() {
        let preds = vec![pred("q1", &[(0.0, 10.0, 0.9)])];
        let gts = vec![gt("q1", &[(20.0, 30.0)])];
        for t in [0.1, 0.5, 0.9] {
            assert_eq!(recall_at_1(&preds, &gts, t).unwrap(), 0.0);
        }
    }

    #[test]
    fn recall_counts_fraction() {
        // IoUs 1.0 and 0.4 -> 50% at threshold 0.5
        let preds = vec![
            pred("q1", &[(0.0, 10.0, 0.9)]),
            pred("q2", &[(0.0, 4.0, 0.9)]),
        ];
        let gts = vec![gt("q1", &[(0.0, 10.0)]), gt("q2", &[(0.0, 10.0)])];
        assert_eq!(recall_at_1(&preds, &gts, 0.5).unwrap(), 50.0);
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let preds = vec![pred("q1", &[(0.0, 10.0, 0.9)])];
        let gts = vec![gt("q1", &[(0.0, 10.0)]), gt("q2", &[(0.0, 10.0)])];
        assert!(matches!(
            recall_at_1(&preds, &gts, 0.5),
            Err(Error::MissingPrediction { .. })
        ));
    }

    #[test]
    fn miou_means_over_queries() {
        let preds = vec![
            pred("q1", &[(0.0, 10.0, 0.9)]),
            pred("q2", &[(0.0, 5.0, 0.9)]),
        ];
        let gts = vec![gt("q1", &[(0.0, 10.0)]), gt("q2", &[(0.0, 10.0)])];
        assert_eq!(mean_iou(&preds, &gts).unwrap(), 75.0);
        let solo = vec![pred("q1", &[(3.0, 7.0, 1.0)])];
        let solo_gt = vec![gt("q1", &[(3.0, 7.0)])];
        assert_eq!(mean_iou(&solo, &solo_gt).unwrap(), 100.0);
    }

    #[test]
    fn miou_takes_best_window() {
        // overlapping only the second of two windows at IoU 0.6
        let preds = vec![pred("q1", &[(10.0, 16.0, 0.9)])];
        let gts = vec![gt("q1", &[(0.0, 5.0), (10.0, 20.0)])];
        assert!((mean_iou(&preds, &gts).unwrap() - 60.0).abs() < 1e-9);
    }

    #[test]
    fn map_perfect_single() {
        let preds = vec![pred("q1", &[(0.0, 10.0, 0.9)])];
        let gts = vec![gt("q1", &[(0.0, 10.0)])];
        assert_eq!(map_at(&preds, &gts, 0.5).unwrap(), 100.0);
    }

    #[test]
    fn map_hand_computed_ap() {
        // 2 windows, ranked [hit, miss, hit] -> AP = (1/1 + 2/3) / 2
        let preds = vec![pred(
            "q1",
            &[(2.0, 4.0, 0.9), (6.0, 8.0, 0.5), (14.0, 16.0, 0.4)],
        )];
        let gts = vec![gt("q1", &[(2.0, 4.0), (14.0, 16.0)])];
        let expect = 100.0 * (1.0 + 2.0 / 3.0) / 2.0;
        assert!((map_at(&preds, &gts, 0.5).unwrap() - expect).abs() < 1e-9);
        assert!((expect - 83.3333).abs() < 0.01);
    }

    #[test]
    fn map_zero_when_nothing_matches() {
        let preds = vec![pred("q1", &[(0.0, 1.0, 0.9)])];
        let gts = vec![gt("q1", &[(50.0, 60.0)])];
        assert_eq!(map_at(&preds, &gts, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn vhd_hand_computed() {
        let mut p = pred("q1", &[(0.0, 2.0, 0.9)]);
        p.saliency = FrameScoreSeries::new("q1", "v", vec![0.9, 0.8, 0.7]).unwrap();
        let mut g = gt("q1", &[(0.0, 2.0)]);
        g.saliency_labels = Some(vec![true, false, true]);
        let vhd = vhd_metrics(&[p], &[g]).unwrap().unwrap();
        let expect_ap = 100.0 * (1.0 + 2.0 / 3.0) / 2.0;
        assert!((vhd.map - expect_ap).abs() < 1e-9);
        assert_eq!(vhd.hit_at_1, 100.0);
    }

    #[test]
    fn vhd_all_irrelevant_is_zero() {
        let mut p = pred("q1", &[(0.0, 2.0, 0.9)]);
        p.saliency = FrameScoreSeries::new("q1", "v", vec![0.9, 0.8]).unwrap();
        let mut g = gt("q1", &[(0.0, 2.0)]);
        g.saliency_labels = Some(vec![false, false]);
        let vhd = vhd_metrics(&[p], &[g]).unwrap().unwrap();
        assert_eq!(vhd.map, 0.0);
        assert_eq!(vhd.hit_at_1, 0.0);
    }

    #[test]
    fn vhd_length_mismatch_errors() {
        let mut p = pred("q1", &[(0.0, 2.0, 0.9)]);
        p.saliency = FrameScoreSeries::new("q1", "v", vec![0.9]).unwrap();
        let mut g = gt("q1", &[(0.0, 2.0)]);
        g.saliency_labels = Some(vec![true, false]);
        assert!(matches!(
            vhd_metrics(&[p], &[g]),
            Err(Error::LabelLengthMismatch { .. })
        ));
    }

    #[test]
    fn vhd_none_without_labels() {
        let preds = vec![pred("q1", &[(0.0, 2.0, 0.9)])];
        let gts = vec![gt("q1", &[(0.0, 2.0)])];
        assert!(vhd_metrics(&preds, &gts).unwrap().is_none());
    }

    fn qtype(cat: QueryCategory, err: bool) -> QueryType {
        QueryType {
            category: cat,
            error_flag: err,
        }
    }

    #[test]
    fn breakdown_single_category_equals_overall() {
        let preds = vec![
            pred("q1", &[(0.0, 10.0, 0.9)]),
            pred("q2", &[(0.0, 4.0, 0.9)]),
        ];
        let gts = vec![gt("q1", &[(0.0, 10.0)]), gt("q2", &[(0.0, 10.0)])];
        let types: HashMap<String, QueryType> = [
            ("q1".to_string(), qtype(QueryCategory::Simple, false)),
            ("q2".to_string(), qtype(QueryCategory::Simple, false)),
        ]
        .into();
        let slices = breakdown(&preds, &gts, &types, false).unwrap();
        assert_eq!(slices.len(), 1);
        let overall = metric_set(&preds, &gts, R1_THRESHOLDS, false).unwrap();
        assert_eq!(slices["Simple"], overall);
    }

    #[test]
    fn breakdown_error_slice_overlaps_length_slices() {
        let preds = vec![
            pred("q1", &[(0.0, 10.0, 0.9)]),
            pred("q2", &[(0.0, 10.0, 0.9)]),
            pred("q3", &[(0.0, 10.0, 0.9)]),
            pred("q4", &[(0.0, 10.0, 0.9)]),
        ];
        let gts: Vec<GroundTruth> = ["q1", "q2", "q3", "q4"]
            .iter()
            .map(|q| gt(q, &[(0.0, 10.0)]))
            .collect();
        let types: HashMap<String, QueryType> = [
            ("q1".to_string(), qtype(QueryCategory::Simple, true)),
            ("q2".to_string(), qtype(QueryCategory::Simple, false)),
            ("q3".to_string(), qtype(QueryCategory::Detail, false)),
            ("q4".to_string(), qtype(QueryCategory::Else, false)),
        ]
        .into();
        let slices = breakdown(&preds, &gts, &types, false).unwrap();
        assert_eq!(slices["Error"].num_queries, 1);
        assert_eq!(
            slices["Simple"].num_queries, 2,
            "error query stays in its length slice"
        );
        assert_eq!(slices["Detail"].num_queries, 1);
        assert_eq!(slices["Else"].num_queries, 1);
    }

    #[test]
    fn breakdown_omits_empty_slices() {
        let preds = vec![pred("q1", &[(0.0, 10.0, 0.9)])];
        let gts = vec![gt("q1", &[(0.0, 10.0)])];
        let types: HashMap<String, QueryType> =
            [("q1".to_string(), qtype(QueryCategory::Else, false))].into();
        let slices = breakdown(&preds, &gts, &types, false).unwrap();
        assert!(slices.contains_key("Else"));
        assert!(!slices.contains_key("Simple"));
        assert!(!slices.contains_key("Error"));
    }

    #[test]
    fn strict_mode_flips_the_equality_case() {
        // IoU exactly 0.5
        let preds = vec![pred("q1", &[(0.0, 5.0, 0.9)])];
        let gts = vec![gt("q1", &[(0.0, 10.0)])];
        assert_eq!(recall_at_1_opts(&preds, &gts, 0.5, false).unwrap(), 100.0);
        assert_eq!(recall_at_1_opts(&preds, &gts, 0.5, true).unwrap(), 0.0);
    }

    #[test]
    fn self_evaluation_is_perfect() {
        let gts = vec![gt("q1", &[(3.0, 9.0)]), gt("q2", &[(1.0, 2.0)])];
        let preds: Vec<MomentPrediction> = gts
            .iter()
            .map(|g| {
                pred(
                    &g.query_id,
                    &[(g.windows[0].start_s, g.windows[0].end_s, 1.0)],
                )
            })
            .collect();
        assert_eq!(mean_iou(&preds, &gts).unwrap(), 100.0);
    }

    proptest! {
        #[test]
        fn recall_monotone_in_threshold(
            cases in proptest::collection::vec(
                (0.0f64..50.0, 1.0f64..30.0, 0.0f64..50.0, 1.0f64..30.0), 1..12),
            t1 in 0.05f64..0.95,
            t2 in 0.05f64..0.95,
        ) {
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let mut preds = vec![];
            let mut gts = vec![];
            for (i, (ps, pl, gs, gl)) in cases.iter().enumerate() {
                let qid = format!("q{i}");
                preds.push(pred(&qid, &[(*ps, ps + pl, 0.9)]));
                gts.push(gt(&qid, &[(*gs, gs + gl)]));
            }
            let r_lo = recall_at_1(&preds, &gts, lo).unwrap();
            let r_hi = recall_at_1(&preds, &gts, hi).unwrap();
            prop_assert!(r_lo >= r_hi);
        }

        #[test]
        fn map_avg_between_extremes(
            cases in proptest::collection::vec(
                (0.0f64..50.0, 1.0f64..30.0, 0.0f64..50.0, 1.0f64..30.0), 1..10),
        ) {
            let mut preds = vec![];
            let mut gts = vec![];
            for (i, (ps, pl, gs, gl)) in cases.iter().enumerate() {
                let qid = format!("q{i}");
                preds.push(pred(&qid, &[(*ps, ps + pl, 0.9)]));
                gts.push(gt(&qid, &[(*gs, gs + gl)]));
            }
            let m = metric_set(&preds, &gts, R1_THRESHOLDS, false).unwrap();
            let lo = m.map_at.values().cloned().fold(f64::INFINITY, f64::min);
            let hi = m.map_at.values().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.map_avg >= lo - 1e-9 && m.map_avg <= hi + 1e-9);
        }

        #[test]
        fn metrics_invariant_under_query_reorder(
            cases in proptest::collection::vec(
                (0.0f64..50.0, 1.0f64..30.0, 0.0f64..50.0, 1.0f64..30.0), 2..10),
        ) {
            let mut preds = vec![];
            let mut gts = vec![];
            for (i, (ps, pl, gs, gl)) in cases.iter().enumerate() {
                let qid = format!("q{i}");
                preds.push(pred(&qid, &[(*ps, ps + pl, 0.9)]));
                gts.push(gt(&qid, &[(*gs, gs + gl)]));
            }
            let fwd = metric_set(&preds, &gts, R1_THRESHOLDS, false).unwrap();
            let mut rev_gts = gts.clone();
            rev_gts.reverse();
            let rev = metric_set(&preds, &rev_gts, R1_THRESHOLDS, false).unwrap();
            prop_assert!((fwd.miou - rev.miou).abs() < 1e-9);
            prop_assert!((fwd.map_avg - rev.map_avg).abs() < 1e-9);
            prop_assert_eq!(fwd.r1, rev.r1);
        }
    }
}
