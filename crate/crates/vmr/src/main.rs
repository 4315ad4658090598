//! Command-line front end. Each stage reads and writes plain files, so runs
//! can be cached, resumed, and inspected stage by stage.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vmr::data::{
    charades_val_split, load_activitynet, load_charades, load_duration_index, load_qvhighlights,
    read_predictions, write_predictions, DatasetRecord, Split,
};
use vmr::eval::evaluate;
use vmr::pipeline::{
    build_providers, render_sweep_table, run_pipeline, sweep, QueryStatus, RunConfig,
};
use vmr::propose::propose;
use vmr::rewrite::{classify_query, generate_rewrites, instruction_pairs};
use vmr::score::FrameScoreSeries;
use vmr::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vmr",
    version,
    about = "Zero-shot video moment retrieval engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// TOML config file (flat pipeline keys plus a [providers] table).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Dataset format.
    #[arg(long, default_value = "qvhighlights")]
    dataset: String,

    /// Dataset split.
    #[arg(long, default_value = "val")]
    split: String,

    /// Charades duration sidecar (JSON object of video_id -> seconds).
    #[arg(long)]
    durations: Option<PathBuf>,

    /// Frame sampling rate (frames per second).
    #[arg(long)]
    fps: Option<f64>,

    /// K: percentage of frames captioned query-aware.
    #[arg(long = "top-k")]
    top_k: Option<f64>,

    /// m: number of rewritten query pairs.
    #[arg(long = "m")]
    num_rewrites: Option<usize>,

    /// tau: largest bridgeable frame gap when merging.
    #[arg(long = "tau")]
    merge_gap: Option<usize>,

    /// n: bottom percentile of frame scores below which spans drop.
    #[arg(long = "bottom-n")]
    bottom_percent: Option<f64>,

    /// lambda: weight of the span-length term.
    #[arg(long = "lambda")]
    length_weight: Option<f64>,

    /// theta: NMS IoU threshold.
    #[arg(long = "nms-iou")]
    nms_iou: Option<f64>,

    /// Histogram bin count for frame selection.
    #[arg(long)]
    bins: Option<usize>,

    /// Number of top histogram bins kept.
    #[arg(long = "top-bins")]
    top_bins: Option<usize>,

    /// Rewriting instruction pair id (1-5).
    #[arg(long = "instruction-pair")]
    instruction_pair: Option<usize>,

    /// Caption cache directory (write-through).
    #[arg(long = "cache-dir")]
    cache_dir: Option<PathBuf>,

    /// Parallel query workers (0 = auto).
    #[arg(long)]
    jobs: Option<usize>,

    /// Output path: a directory for `run`, a file elsewhere.
    #[arg(long)]
    out: Option<PathBuf>,

    /// Treat IoU thresholds strictly (> instead of >=).
    #[arg(long = "strict-iou")]
    strict_iou: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Populate the query-agnostic caption cache for a dataset split.
    Precaption {
        /// Annotation file.
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Generate rewrite pairs for every query, as JSONL.
    Rewrite {
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Compute frame-score series for every query, as JSONL.
    Score {
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Turn a frame-score file into ranked moment predictions.
    Retrieve {
        /// Score JSONL produced by `score`.
        scores: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Evaluate a prediction file against dataset ground truth.
    Eval {
        /// Prediction JSONL.
        predictions: PathBuf,
        /// Annotation file.
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Run the full pipeline: rewrite, caption, score, propose, evaluate.
    Run {
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Re-run the pipeline over a list of values for one parameter.
    Sweep {
        data: PathBuf,
        /// Parameter to vary.
        #[arg(long)]
        param: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

impl CommonArgs {
    /// Config file first, then flag overrides.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        let p = &mut cfg.pipeline;
        if let Some(v) = self.fps {
            p.fps = v;
        }
        if let Some(v) = self.top_k {
            p.top_k_percent = v;
        }
        if let Some(v) = self.num_rewrites {
            p.num_rewrites = v;
        }
        if let Some(v) = self.merge_gap {
            p.merge_gap = v;
        }
        if let Some(v) = self.bottom_percent {
            p.bottom_percent = v;
        }
        if let Some(v) = self.length_weight {
            p.length_weight = v;
        }
        if let Some(v) = self.nms_iou {
            p.nms_iou = v;
        }
        if let Some(v) = self.bins {
            p.histogram_bins = v;
        }
        if let Some(v) = self.top_bins {
            p.histogram_top_bins = v;
        }
        cfg.pipeline = cfg.pipeline.validate()?;
        if let Some(v) = self.instruction_pair {
            if !instruction_pairs().iter().any(|pair| pair.id == v) {
                return Err(Error::InvalidConfig(format!(
                    "instruction pair {v} does not exist"
                )));
            }
            cfg.instruction_pair = v;
        }
        if let Some(v) = self.jobs {
            cfg.jobs = v;
        }
        if self.strict_iou {
            cfg.strict_iou = true;
        }
        Ok(cfg)
    }

    fn load_dataset(&self, data: &Path, fps: f64) -> Result<Vec<DatasetRecord>> {
        let split: Split = self.split.parse()?;
        match self.dataset.to_lowercase().as_str() {
            "qvhighlights" => load_qvhighlights(data, fps, split),
            "charades" => {
                let durations = self.durations.as_ref().ok_or_else(|| {
                    Error::InvalidConfig("charades needs --durations <index.json>".into())
                })?;
                let index = load_duration_index(durations)?;
                let records = load_charades(data, &index, fps, split)?;
                if split == Split::Val {
                    // validation is carved deterministically out of train
                    Ok(charades_val_split(records).1)
                } else {
                    Ok(records)
                }
            }
            "activitynet" => load_activitynet(data, fps, split),
            other => Err(Error::InvalidConfig(format!("unknown dataset {other}"))),
        }
    }

    fn out_or(&self, default: &str) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Precaption { data, common } => {
            let cfg = common.resolve()?;
            let cache_dir = common
                .cache_dir
                .clone()
                .ok_or_else(|| Error::InvalidConfig("precaption needs --cache-dir".into()))?;
            let records = common.load_dataset(&data, cfg.pipeline.fps)?;
            let providers = build_providers(&cfg.providers, Some(&cache_dir))?;
            let mut videos: Vec<_> = records.iter().map(|r| &r.video).collect();
            videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
            videos.dedup_by(|a, b| a.video_id == b.video_id);
            let mut captioned = 0usize;
            for video in videos {
                for frame in 0..video.frame_count {
                    providers
                        .captioner
                        .caption_frame(&video.video_id, frame, None)
                        .map_err(Error::Provider)?;
                    captioned += 1;
                }
            }
            println!(
                "cached {captioned} agnostic captions under {}",
                cache_dir.display()
            );
            Ok(ExitCode::SUCCESS)
        }

        Command::Rewrite { data, common } => {
            let cfg = common.resolve()?;
            let records = common.load_dataset(&data, cfg.pipeline.fps)?;
            let providers = build_providers(&cfg.providers, None)?;
            let out = common.out_or("rewrites.jsonl");
            let mut file = File::create(&out)?;
            let mut failed = 0usize;
            for r in &records {
                match generate_rewrites(
                    &r.query,
                    &cfg.pipeline,
                    providers.rewriter.as_ref(),
                    cfg.instruction_pair,
                ) {
                    Ok(set) => {
                        let line = serde_json::json!({
                            "query_id": r.query.id,
                            "pairs": set.pairs,
                        });
                        writeln!(file, "{line}")?;
                    }
                    Err(e) => {
                        log::warn!("{e}");
                        failed += 1;
                    }
                }
            }
            println!("wrote {}", out.display());
            Ok(exit_for_failures(failed, records.len()))
        }

        Command::Score { data, common } => {
            let cfg = common.resolve()?;
            let records = common.load_dataset(&data, cfg.pipeline.fps)?;
            let providers = build_providers(&cfg.providers, common.cache_dir.as_deref())?;
            let out = common.out_or("scores.jsonl");
            let mut file = File::create(&out)?;
            let mut failed = 0usize;
            for r in &records {
                let series = vmr::pipeline::process_query(
                    r,
                    &cfg.pipeline,
                    cfg.instruction_pair,
                    &providers,
                    None,
                )
                .map(|pred| pred.saliency);
                match series {
                    Ok(series) => writeln!(file, "{}", serde_json::to_string(&series)?)?,
                    Err(e) => {
                        log::warn!("query {} failed: {e}", r.query.id);
                        failed += 1;
                    }
                }
            }
            println!("wrote {}", out.display());
            Ok(exit_for_failures(failed, records.len()))
        }

        Command::Retrieve { scores, common } => {
            let cfg = common.resolve()?;
            let reader = BufReader::new(File::open(&scores)?);
            let mut predictions = Vec::new();
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let series: FrameScoreSeries =
                    serde_json::from_str(&line).map_err(|e| Error::Parse {
                        line: i + 1,
                        msg: e.to_string(),
                    })?;
                predictions.push(propose(&series, &cfg.pipeline)?);
            }
            let out = common.out_or("predictions.jsonl");
            write_predictions(&predictions, &out)?;
            println!("wrote {}", out.display());
            Ok(ExitCode::SUCCESS)
        }

        Command::Eval {
            predictions,
            data,
            common,
        } => {
            let cfg = common.resolve()?;
            let records = common.load_dataset(&data, cfg.pipeline.fps)?;
            let preds = read_predictions(&predictions)?;
            let gts: Vec<_> = records
                .iter()
                .filter(|r| !r.ground_truth.windows.is_empty())
                .map(|r| r.ground_truth.clone())
                .collect();
            if gts.is_empty() {
                return Err(Error::InvalidConfig(
                    "dataset has no ground-truth windows to evaluate against".into(),
                ));
            }
            let types: HashMap<_, _> = records
                .iter()
                .map(|r| (r.query.id.clone(), classify_query(&r.query)))
                .collect();
            let report = evaluate(&preds, &gts, Some(&types), cfg.strict_iou)?;
            print!("{}", report.render_table());
            if let Some(out) = &common.out {
                std::fs::write(out, serde_json::to_string_pretty(&report)?)?;
                println!("wrote {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }

        Command::Run { data, common } => {
            let cfg = common.resolve()?;
            let records = common.load_dataset(&data, cfg.pipeline.fps)?;
            let providers = build_providers(&cfg.providers, common.cache_dir.as_deref())?;
            let out_dir = common.out_or("out");
            std::fs::create_dir_all(&out_dir)?;
            let output = run_pipeline(&records, &cfg, &providers, &common.dataset, &common.split)?;

            write_predictions(&output.predictions, &out_dir.join("predictions.jsonl"))?;
            std::fs::write(
                out_dir.join("manifest.json"),
                serde_json::to_string_pretty(&output.manifest)?,
            )?;
            if let Some(report) = &output.report {
                std::fs::write(
                    out_dir.join("report.json"),
                    serde_json::to_string_pretty(report)?,
                )?;
                print!("{}", report.render_table());
            }
            println!("wrote {}", out_dir.display());

            let failed = output
                .manifest
                .queries
                .iter()
                .filter(|q| matches!(q.status, QueryStatus::Failed { .. }))
                .count();
            Ok(exit_for_failures(failed, records.len()))
        }

        Command::Sweep {
            data,
            param,
            values,
            common,
        } => {
            let cfg = common.resolve()?;
            let records = common.load_dataset(&data, cfg.pipeline.fps)?;
            let providers = build_providers(&cfg.providers, common.cache_dir.as_deref())?;
            let rows = sweep(&records, &cfg, &providers, &param, &values)?;
            print!("{}", render_sweep_table(&param, &rows));
            if let Some(out) = &common.out {
                let table: Vec<_> = rows
                    .iter()
                    .map(|(v, r)| serde_json::json!({ "value": v, "report": r }))
                    .collect();
                std::fs::write(out, serde_json::to_string_pretty(&table)?)?;
                println!("wrote {}", out.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn exit_for_failures(failed: usize, total: usize) -> ExitCode {
    if failed > 0 && failed == total {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}
