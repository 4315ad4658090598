//! Dataset ingestion for the three benchmark formats, plus prediction
//! serialization in the submission convention
//! `{qid, pred_relevant_windows, pred_saliency_scores}`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::core::{Query, TimeSpan, VideoMeta};
use crate::eval::GroundTruth;
use crate::propose::MomentPrediction;
use crate::score::FrameScoreSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidConfig(format!("unknown split {other}"))),
        }
    }
}

/// One (query, video, ground truth) triple.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub query: Query,
    pub video: VideoMeta,
    pub ground_truth: GroundTruth,
    pub split: Split,
}

/// Clamps a raw window into [0, duration], logging when it moves.
fn clamp_window(
    query_id: &str,
    start: f64,
    end: f64,
    duration: f64,
    line: usize,
) -> Result<TimeSpan> {
    if !start.is_finite() || !end.is_finite() || start < 0.0 || end < start {
        return Err(Error::Parse {
            line,
            msg: format!("invalid ground-truth window [{start}, {end}] for query {query_id}"),
        });
    }
    let (cs, ce) = (start.min(duration), end.min(duration));
    if cs != start || ce != end {
        log::warn!("query {query_id}: window [{start}, {end}] clamped to [{cs}, {ce}]");
    }
    TimeSpan::new(cs, ce)
}

fn field<'v>(obj: &'v Value, name: &str, line: usize) -> Result<&'v Value> {
    obj.get(name).ok_or_else(|| Error::Schema {
        field: name.to_string(),
        line,
    })
}

/// Maps 2-second clip ids onto frame-index relevance labels. At the default
/// 0.5 fps a clip and a frame coincide.
fn clip_labels(clip_ids: &[usize], frame_count: usize, fps: f64) -> Vec<bool> {
    let mut labels = vec![false; frame_count];
    for &clip in clip_ids {
        let start_s = 2.0 * clip as f64;
        let first = (start_s * fps).floor() as usize;
        let last = (((start_s + 2.0) * fps).ceil() as usize).saturating_sub(1);
        let end = last.min(frame_count.saturating_sub(1));
        for label in labels.iter_mut().take(end + 1).skip(first) {
            *label = true;
        }
    }
    labels
}

/// Loads the QVHighlights JSONL format: one object per query with `qid`,
/// `query`, `vid`, `duration`, optional `relevant_windows` (absent on the
/// hidden test split) and optional `relevant_clip_ids`.
pub fn load_qvhighlights(path: &Path, fps: f64, split: Split) -> Result<Vec<DatasetRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let qid = match field(&obj, "qid", line_no)? {
            Value::Number(n) => n.to_string(),
            Value::String(s) => s.clone(),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("qid must be a number or string, got {other}"),
                })
            }
        };
        let query_text = field(&obj, "query", line_no)?
            .as_str()
            .ok_or_else(|| Error::Schema {
                field: "query".into(),
                line: line_no,
            })?;
        let vid = field(&obj, "vid", line_no)?
            .as_str()
            .ok_or_else(|| Error::Schema {
                field: "vid".into(),
                line: line_no,
            })?;
        let duration = field(&obj, "duration", line_no)?
            .as_f64()
            .ok_or_else(|| Error::Schema {
                field: "duration".into(),
                line: line_no,
            })?;
        let video = VideoMeta::new(vid, duration, fps).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;

        let windows = match obj.get("relevant_windows") {
            Some(Value::Array(ws)) => ws
                .iter()
                .map(|w| {
                    let pair = w.as_array().filter(|a| a.len() == 2).ok_or(Error::Parse {
                        line: line_no,
                        msg: "relevant_windows entries must be [start, end]".into(),
                    })?;
                    let (s, e) = (
                        pair[0].as_f64().unwrap_or(f64::NAN),
                        pair[1].as_f64().unwrap_or(f64::NAN),
                    );
                    clamp_window(&qid, s, e, duration, line_no)
                })
                .collect::<Result<Vec<_>>>()?,
            Some(other) => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("relevant_windows must be an array, got {other}"),
                })
            }
            None if split == Split::Test => Vec::new(),
            None => {
                return Err(Error::Schema {
                    field: "relevant_windows".into(),
                    line: line_no,
                })
            }
        };

        let saliency_labels = match obj.get("relevant_clip_ids") {
            Some(Value::Array(ids)) => {
                let clip_ids: Vec<usize> = ids
                    .iter()
                    .map(|v| {
                        v.as_u64().map(|x| x as usize).ok_or(Error::Parse {
                            line: line_no,
                            msg: "relevant_clip_ids must be non-negative integers".into(),
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Some(clip_labels(&clip_ids, video.frame_count, fps))
            }
            _ => None,
        };

        out.push(DatasetRecord {
            query: Query::new(qid.clone(), query_text)?,
            video,
            ground_truth: GroundTruth {
                query_id: qid,
                windows,
                saliency_labels,
            },
            split,
        });
    }
    Ok(out)
}

/// Loads the Charades-STA annotation format: lines of
/// `video_id start end##sentence`, with durations supplied by a sidecar
/// JSON index `{video_id: duration_s}`.
pub fn load_charades(
    path: &Path,
    duration_index: &HashMap<String, f64>,
    fps: f64,
    split: Split,
) -> Result<Vec<DatasetRecord>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (head, sentence) = line.split_once("##").ok_or(Error::Parse {
            line: line_no,
            msg: "expected `video_id start end##sentence`".into(),
        })?;
        let parts: Vec<&str> = head.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected 3 header fields, got {}", parts.len()),
            });
        }
        let vid = parts[0];
        let start: f64 = parts[1].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad start time {:?}", parts[1]),
        })?;
        let end: f64 = parts[2].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad end time {:?}", parts[2]),
        })?;
        let duration = *duration_index
            .get(vid)
            .ok_or_else(|| Error::MissingDuration {
                video_id: vid.to_string(),
            })?;
        let qid = format!("{vid}#{line_no}");
        let window = clamp_window(&qid, start, end, duration, line_no)?;
        out.push(DatasetRecord {
            query: Query::new(qid.clone(), sentence.trim())?,
            video: VideoMeta::new(vid, duration, fps).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?,
            ground_truth: GroundTruth {
                query_id: qid,
                windows: vec![window],
                saliency_labels: None,
            },
            split,
        });
    }
    Ok(out)
}

/// Loads the Charades duration sidecar: a JSON object `{video_id: seconds}`.
pub fn load_duration_index(path: &Path) -> Result<HashMap<String, f64>> {
    let raw = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&raw)?)
}

/// Deterministic validation carve-out: every tenth query by content hash.
/// Keeps the split reproducible without a recorded seed.
pub fn charades_val_split(records: Vec<DatasetRecord>) -> (Vec<DatasetRecord>, Vec<DatasetRecord>) {
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut r in records {
        let digest = crate::providers::sha256_hex(&format!("{}|{}", r.query.id, r.query.text));
        let bucket = u8::from_str_radix(&digest[..2], 16).expect("hex digest");
        if bucket.is_multiple_of(10) {
            r.split = Split::Val;
            val.push(r);
        } else {
            train.push(r);
        }
    }
    (train, val)
}

/// Loads the ActivityNet-Captions format: a JSON object keyed by video id
/// with `duration`, `timestamps`, and `sentences` of equal length; one
/// record per (video, sentence) pair.
pub fn load_activitynet(path: &Path, fps: f64, split: Split) -> Result<Vec<DatasetRecord>> {
    let raw = std::fs::read_to_string(path)?;
    let root: Value = serde_json::from_str(&raw).map_err(|e| Error::Parse {
        line: e.line(),
        msg: e.to_string(),
    })?;
    let map = root.as_object().ok_or(Error::Parse {
        line: 1,
        msg: "expected a top-level JSON object keyed by video id".into(),
    })?;
    let mut out = Vec::new();
    for (vid, entry) in map {
        let duration = field(entry, "duration", 0)?.as_f64().ok_or(Error::Schema {
            field: "duration".into(),
            line: 0,
        })?;
        let timestamps = field(entry, "timestamps", 0)?
            .as_array()
            .ok_or(Error::Schema {
                field: "timestamps".into(),
                line: 0,
            })?;
        let sentences = field(entry, "sentences", 0)?
            .as_array()
            .ok_or(Error::Schema {
                field: "sentences".into(),
                line: 0,
            })?;
        if timestamps.len() != sentences.len() {
            return Err(Error::LengthMismatch {
                video_id: vid.clone(),
            });
        }
        for (k, (ts, sent)) in timestamps.iter().zip(sentences).enumerate() {
            let pair = ts.as_array().filter(|a| a.len() == 2).ok_or(Error::Parse {
                line: 0,
                msg: format!("timestamps of {vid} must be [start, end] pairs"),
            })?;
            let (s, e) = (
                pair[0].as_f64().unwrap_or(f64::NAN),
                pair[1].as_f64().unwrap_or(f64::NAN),
            );
            let text = sent.as_str().ok_or(Error::Parse {
                line: 0,
                msg: format!("sentences of {vid} must be strings"),
            })?;
            let qid = format!("{vid}#{k}");
            let window = clamp_window(&qid, s, e, duration, 0)?;
            out.push(DatasetRecord {
                query: Query::new(qid.clone(), text.trim())?,
                video: VideoMeta::new(vid.clone(), duration, fps).map_err(|e| Error::Parse {
                    line: 0,
                    msg: e.to_string(),
                })?,
                ground_truth: GroundTruth {
                    query_id: qid,
                    windows: vec![window],
                    saliency_labels: None,
                },
                split,
            });
        }
    }
    Ok(out)
}

fn round4(x: f64) -> f64 {
    (x * 10000.0).round() / 10000.0
}

/// Writes predictions as JSONL, one object per query:
/// `{qid, pred_relevant_windows: [[start, end, score], ...],
///   pred_saliency_scores: [...]}`, floats rounded to 4 decimals. Numeric
/// query ids are written as numbers, matching the submission convention.
pub fn write_predictions(preds: &[MomentPrediction], path: &Path) -> Result<()> {
    let mut file = File::create(path)?;
    for p in preds {
        let qid: Value = match p.query_id.parse::<i64>() {
            Ok(n) => Value::from(n),
            Err(_) => Value::from(p.query_id.clone()),
        };
        let windows: Vec<Vec<f64>> = p
            .spans
            .iter()
            .map(|(span, score)| vec![round4(span.start_s), round4(span.end_s), round4(*score)])
            .collect();
        let saliency: Vec<f64> = p.saliency.scores.iter().map(|s| round4(*s)).collect();
        let line = serde_json::json!({
            "qid": qid,
            "pred_relevant_windows": windows,
            "pred_saliency_scores": saliency,
        });
        writeln!(file, "{line}")?;
    }
    Ok(())
}

/// Reads predictions back from the format written by [`write_predictions`].
/// The wire format carries no video id, so it comes back empty.
pub fn read_predictions(path: &Path) -> Result<Vec<MomentPrediction>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let obj: Value = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            msg: e.to_string(),
        })?;
        let qid = match field(&obj, "qid", line_no)? {
            Value::Number(n) => n.to_string(),
            Value::String(s) => s.clone(),
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    msg: format!("qid must be a number or string, got {other}"),
                })
            }
        };
        let windows = field(&obj, "pred_relevant_windows", line_no)?
            .as_array()
            .ok_or(Error::Schema {
                field: "pred_relevant_windows".into(),
                line: line_no,
            })?;
        let mut spans = Vec::with_capacity(windows.len());
        for w in windows {
            let triple = w.as_array().filter(|a| a.len() == 3).ok_or(Error::Parse {
                line: line_no,
                msg: "pred_relevant_windows entries must be [start, end, score]".into(),
            })?;
            let span = TimeSpan::new(
                triple[0].as_f64().unwrap_or(f64::NAN),
                triple[1].as_f64().unwrap_or(f64::NAN),
            )
            .map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?;
            spans.push((span, triple[2].as_f64().unwrap_or(f64::NAN)));
        }
        let saliency: Vec<f64> = field(&obj, "pred_saliency_scores", line_no)?
            .as_array()
            .ok_or(Error::Schema {
                field: "pred_saliency_scores".into(),
                line: line_no,
            })?
            .iter()
            .map(|v| v.as_f64().unwrap_or(f64::NAN))
            .collect();
        out.push(MomentPrediction {
            query_id: qid.clone(),
            video_id: String::new(),
            spans,
            saliency: FrameScoreSeries::new(qid, "", saliency).map_err(|e| Error::Parse {
                line: line_no,
                msg: e.to_string(),
            })?,
        });
    }
    Ok(out)
}
