//! End-to-end orchestration: config resolution, per-query pipeline
//! execution with bounded parallelism, evaluation, manifests, and
//! hyperparameter sweeps. Every stage writes plain files so any stage can be
//! cached and resumed.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caption::build_caption_set;
use crate::core::PipelineConfig;
use crate::data::DatasetRecord;
use crate::eval::{evaluate, EvalReport, GroundTruth};
use crate::propose::{propose, MomentPrediction};
use crate::providers::{CachingCaptioner, ProviderSet, ProviderSpec};
use crate::rewrite::{classify_query, extract_guidance, generate_rewrites, QueryType};
use crate::score::score_video;
use crate::{Error, Result};

/// Provider wiring for a run: one default backend plus optional
/// per-capability overrides.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProvidersConfig {
    #[serde(flatten)]
    pub default: ProviderSpec,
    pub rewriter: Option<ProviderSpec>,
    pub captioner: Option<ProviderSpec>,
    pub embedder: Option<ProviderSpec>,
    pub scorer: Option<ProviderSpec>,
}

impl Default for ProvidersConfig {
    fn default() -> Self {
        Self {
            default: ProviderSpec::mock(0),
            rewriter: None,
            captioner: None,
            embedder: None,
            scorer: None,
        }
    }
}

/// Full run configuration: the flat pipeline knobs plus run-level options
/// and provider wiring, all loadable from one TOML file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub instruction_pair: usize,
    pub strict_iou: bool,
    /// Parallel query workers; 0 picks the rayon default.
    pub jobs: usize,
    pub providers: ProvidersConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            instruction_pair: 1,
            strict_iou: false,
            jobs: 0,
            providers: ProvidersConfig::default(),
        }
    }
}

impl RunConfig {
    /// Loads a TOML config file; relative provider paths resolve against the
    /// config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig =
            toml::from_str(&raw).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.pipeline = cfg.pipeline.validate()?;
        if let Some(dir) = path.parent() {
            let anchor = |spec: &mut ProviderSpec| {
                if let Some(p) = &spec.caption_script {
                    if p.is_relative() {
                        spec.caption_script = Some(dir.join(p));
                    }
                }
                if let Some(p) = &spec.cache_dir {
                    if p.is_relative() {
                        spec.cache_dir = Some(dir.join(p));
                    }
                }
            };
            anchor(&mut cfg.providers.default);
            for spec in [
                &mut cfg.providers.rewriter,
                &mut cfg.providers.captioner,
                &mut cfg.providers.embedder,
                &mut cfg.providers.scorer,
            ]
            .into_iter()
            .flatten()
            {
                anchor(spec);
            }
        }
        Ok(cfg)
    }
}

/// Builds the provider set, applying per-capability overrides and an
/// optional write-through caption cache.
pub fn build_providers(cfg: &ProvidersConfig, cache_dir: Option<&Path>) -> Result<ProviderSet> {
    let mut set = ProviderSet::from_spec(&cfg.default)?;
    if let Some(spec) = &cfg.rewriter {
        let sub = ProviderSet::from_spec(spec)?;
        set.rewriter = sub.rewriter;
        if sub.guidance.is_some() {
            set.guidance = sub.guidance;
        }
    }
    if let Some(spec) = &cfg.captioner {
        set.captioner = ProviderSet::from_spec(spec)?.captioner;
    }
    if let Some(spec) = &cfg.embedder {
        set.embedder = ProviderSet::from_spec(spec)?.embedder;
    }
    if let Some(spec) = &cfg.scorer {
        set.similarity = ProviderSet::from_spec(spec)?.similarity;
    }
    if let Some(dir) = cache_dir {
        set.captioner = std::sync::Arc::new(CachingCaptioner::open(dir, set.captioner)?);
    }
    Ok(set)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum QueryStatus {
    Ok,
    Failed { reason: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QueryRun {
    pub query_id: String,
    #[serde(flatten)]
    pub status: QueryStatus,
}

/// Snapshot of everything that shaped a run, with per-query outcomes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub dataset: String,
    pub split: String,
    pub stage_timings_ms: BTreeMap<String, u64>,
    pub queries: Vec<QueryRun>,
}

pub struct RunOutput {
    pub predictions: Vec<MomentPrediction>,
    pub report: Option<EvalReport>,
    pub manifest: RunManifest,
}

/// Runs the whole pipeline for one query.
pub fn process_query(
    record: &DatasetRecord,
    cfg: &PipelineConfig,
    instruction_pair: usize,
    providers: &ProviderSet,
    timings: Option<&Mutex<BTreeMap<String, u64>>>,
) -> Result<MomentPrediction> {
    let clock = Instant::now();
    let rewrites = generate_rewrites(
        &record.query,
        cfg,
        providers.rewriter.as_ref(),
        instruction_pair,
    )?;
    let t_rewrite = clock.elapsed();

    let clock = Instant::now();
    let guidance = extract_guidance(&record.query, providers.guidance.as_deref())?;
    let captions = build_caption_set(
        &record.video,
        &record.query,
        &guidance,
        cfg.top_k_percent,
        providers.captioner.as_ref(),
        providers.similarity.as_ref(),
    )?;
    let t_caption = clock.elapsed();

    let clock = Instant::now();
    let series = score_video(&rewrites, &captions, providers.embedder.as_ref())?;
    let t_score = clock.elapsed();

    let clock = Instant::now();
    let prediction = propose(&series, cfg)?;
    let t_propose = clock.elapsed();

    if let Some(timings) = timings {
        let mut t = timings.lock().unwrap();
        for (stage, d) in [
            ("rewrite", t_rewrite),
            ("caption", t_caption),
            ("score", t_score),
            ("propose", t_propose),
        ] {
            *t.entry(stage.to_string()).or_insert(0) += d.as_millis() as u64;
        }
    }
    Ok(prediction)
}

fn with_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if jobs == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Executes the pipeline over a dataset. Individual query failures are
/// recorded in the manifest and excluded from metrics; they never abort the
/// run or disturb other queries. Results keep dataset order regardless of
/// scheduling.
pub fn run_pipeline(
    records: &[DatasetRecord],
    cfg: &RunConfig,
    providers: &ProviderSet,
    dataset_label: &str,
    split_label: &str,
) -> Result<RunOutput> {
    let timings = Mutex::new(BTreeMap::new());
    let clock = Instant::now();

    let results: Vec<Result<MomentPrediction>> = with_pool(cfg.jobs, || {
        records
            .par_iter()
            .map(|record| {
                process_query(
                    record,
                    &cfg.pipeline,
                    cfg.instruction_pair,
                    providers,
                    Some(&timings),
                )
            })
            .collect()
    })?;

    let mut predictions = Vec::new();
    let mut queries = Vec::new();
    let mut ok_ids: Vec<&str> = Vec::new();
    for (record, result) in records.iter().zip(&results) {
        match result {
            Ok(pred) => {
                predictions.push(pred.clone());
                ok_ids.push(&record.query.id);
                queries.push(QueryRun {
                    query_id: record.query.id.clone(),
                    status: QueryStatus::Ok,
                });
            }
            Err(e) => {
                log::warn!("query {} failed: {e}", record.query.id);
                queries.push(QueryRun {
                    query_id: record.query.id.clone(),
                    status: QueryStatus::Failed {
                        reason: e.to_string(),
                    },
                });
            }
        }
    }
    let failed = records.len() - predictions.len();
    if failed > 0 {
        log::warn!(
            "{failed} of {} queries failed and are excluded from metrics",
            records.len()
        );
    }

    let gts: Vec<GroundTruth> = records
        .iter()
        .filter(|r| ok_ids.contains(&r.query.id.as_str()))
        .filter(|r| !r.ground_truth.windows.is_empty())
        .map(|r| r.ground_truth.clone())
        .collect();
    let report = if gts.is_empty() {
        None
    } else {
        let types: HashMap<String, QueryType> = records
            .iter()
            .map(|r| (r.query.id.clone(), classify_query(&r.query)))
            .collect();
        Some(evaluate(&predictions, &gts, Some(&types), cfg.strict_iou)?)
    };

    let mut stage_timings_ms = timings.into_inner().unwrap();
    stage_timings_ms.insert("total_wall".into(), clock.elapsed().as_millis() as u64);

    Ok(RunOutput {
        predictions,
        report,
        manifest: RunManifest {
            config: cfg.clone(),
            dataset: dataset_label.to_string(),
            split: split_label.to_string(),
            stage_timings_ms,
            queries,
        },
    })
}

/// Parameters that [`sweep`] can vary.
pub const SWEEPABLE: &[&str] = &[
    "num_rewrites",
    "length_weight",
    "top_k_percent",
    "merge_gap",
    "bottom_percent",
    "nms_iou",
];

fn apply_sweep_value(cfg: &mut PipelineConfig, parameter: &str, value: f64) -> Result<()> {
    match parameter {
        "num_rewrites" => cfg.num_rewrites = value as usize,
        "length_weight" => cfg.length_weight = value,
        "top_k_percent" => cfg.top_k_percent = value,
        "merge_gap" => cfg.merge_gap = value as usize,
        "bottom_percent" => cfg.bottom_percent = value,
        "nms_iou" => cfg.nms_iou = value,
        other => {
            return Err(Error::InvalidConfig(format!(
                "unknown sweep parameter {other}; expected one of {SWEEPABLE:?}"
            )))
        }
    }
    Ok(())
}

/// One full run per value, everything else fixed; pairs each value with the
/// resulting report.
pub fn sweep(
    records: &[DatasetRecord],
    base: &RunConfig,
    providers: &ProviderSet,
    parameter: &str,
    values: &[f64],
) -> Result<Vec<(f64, EvalReport)>> {
    if values.is_empty() {
        return Err(Error::InvalidConfig(
            "sweep needs at least one value".into(),
        ));
    }
    let mut out = Vec::with_capacity(values.len());
    for &value in values {
        let mut cfg = base.clone();
        apply_sweep_value(&mut cfg.pipeline, parameter, value)?;
        cfg.pipeline = cfg.pipeline.validate()?;
        let run = run_pipeline(records, &cfg, providers, "sweep", "sweep")?;
        let report = run.report.ok_or_else(|| {
            Error::InvalidConfig("sweep requires ground truth for evaluation".into())
        })?;
        out.push((value, report));
    }
    Ok(out)
}

/// Renders sweep results in the ablation-table layout.
pub fn render_sweep_table(parameter: &str, rows: &[(f64, EvalReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<14} {:>8} {:>8} {:>8} {:>8}\n",
        parameter, "R1@0.5", "R1@0.7", "mAP@0.5", "mAP@avg"
    ));
    out.push_str(&"-".repeat(50));
    out.push('\n');
    for (value, report) in rows {
        let m = &report.overall;
        out.push_str(&format!(
            "{:<14} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
            value,
            m.r1.get("0.50").copied().unwrap_or(f64::NAN),
            m.r1.get("0.70").copied().unwrap_or(f64::NAN),
            m.map_at.get("0.50").copied().unwrap_or(f64::NAN),
            m.map_avg
        ));
    }
    out
}
