//! Command implementations behind the `replaygm` binary.
//!
//! Exit codes: 0 success, 2 input error, 3 configuration error,
//! 4 internal invariant violation.

pub mod config;

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use replaygm_core::ingest::{
    export_coco, parse_coco, parse_coco_str, split_tasks, synthetic_stream, IngestError, LoadReport,
};
use replaygm_core::loss::{read_predictions, LossError, PredictionFileOracle};
use replaygm_core::report::{buffer_stats, BufferStats};
use replaygm_core::report::{compare_strategies, ComparisonTable};
use replaygm_core::scheduler::{BatchRecord, ScheduleError};
use replaygm_core::strategy::{DecisionRecord, StrategyError, StreamOrder};
use replaygm_core::{
    run_pipeline, DatasetManifest, DistributionReport, ImageId, Oracle, PipelineError, StrategyKind, TaskOutcome,
    TaskSplit, Threshold,
};

pub use config::{CompareSettings, DatasetSpec, ErCer, Overrides, RunConfig};

/// The 200-sample, 80-class synthetic dataset shipped with the binary.
pub const BUNDLED_FIXTURE: &str = include_str!("../fixtures/synthetic_200.json");

#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Config(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::MalformedFile(_) | IngestError::NegativeExtent { .. } | IngestError::Io(_) => {
                CliError::Input(e.to_string())
            }
            IngestError::BoundaryMismatch { .. }
            | IngestError::InvalidSplit(_)
            | IngestError::InvalidConfig(_)
            | IngestError::TaskOutOfRange { .. } => CliError::Config(e.to_string()),
        }
    }
}

impl From<LossError> for CliError {
    fn from(e: LossError) -> Self {
        match e {
            LossError::InvalidConfig(_) => CliError::Config(e.to_string()),
            LossError::NoPredictions(_) | LossError::InvalidPrediction(_) | LossError::File(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

impl From<ScheduleError> for CliError {
    fn from(e: ScheduleError) -> Self {
        match e {
            ScheduleError::InvalidConfig(_) => CliError::Config(e.to_string()),
            ScheduleError::EmptyDataset => CliError::Input(e.to_string()),
            ScheduleError::EmptyBuffer => CliError::Internal(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ingest(e) => e.into(),
            PipelineError::Schedule(e) => e.into(),
            PipelineError::Loss(e) => e.into(),
            PipelineError::Strategy(StrategyError::Loss(e)) => e.into(),
            PipelineError::Strategy(e @ StrategyError::InvalidConfig(_)) => CliError::Config(e.to_string()),
            PipelineError::Strategy(e) => CliError::Internal(e.to_string()),
        }
    }
}

fn out_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("cannot write {}: {e}", path.display()))
}

fn create_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| out_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| out_err(path, e))
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(|e| out_err(path, e))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| out_err(path, e))?;
        w.write_all(b"\n").map_err(|e| out_err(path, e))?;
    }
    w.flush().map_err(|e| out_err(path, e))
}

/// Loads the dataset named by the config along with its load report.
pub fn load_dataset(spec: &DatasetSpec) -> Result<(DatasetManifest, LoadReport), CliError> {
    match spec {
        DatasetSpec::Bundled => Ok(parse_coco_str(BUNDLED_FIXTURE)?),
        DatasetSpec::Coco { path } => parse_coco(path).map_err(|e| match e {
            IngestError::Io(io) => CliError::Input(format!("{}: {io}", path.display())),
            other => other.into(),
        }),
        DatasetSpec::Synthetic { config } => {
            let m = synthetic_stream(config)?;
            let report = LoadReport {
                images: m.len(),
                annotations: m.samples.iter().map(|s| s.annotations().len()).sum(),
                samples: m.len(),
                class_frequencies: m.class_frequencies(),
                ..LoadReport::default()
            };
            Ok((m, report))
        }
    }
}

fn load_predictions(cfg: &RunConfig) -> Result<Option<PredictionFileOracle>, CliError> {
    let Some(path) = &cfg.predictions else { return Ok(None) };
    let file = fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let predictions = read_predictions(BufReader::new(file))?;
    Ok(Some(PredictionFileOracle { predictions, loss: cfg.loss }))
}

struct Prepared {
    manifest: DatasetManifest,
    load_report: LoadReport,
    split: TaskSplit,
}

fn prepare(cfg: &RunConfig) -> Result<Prepared, CliError> {
    cfg.validate()?;
    let (manifest, load_report) = load_dataset(&cfg.dataset)?;
    let split = split_tasks(&manifest, &cfg.split.0)?;
    Ok(Prepared { manifest, load_report, split })
}

/// Normalizes a COCO file: re-parses `input` and writes the dataset back out
/// with renumbered annotation ids, plus a load report next to
/// `output` (`<stem>.report.json`). Running it on its own output reproduces
/// the same file.
pub fn cmd_ingest(input: &Path, output: &Path) -> Result<LoadReport, CliError> {
    let (manifest, report) = parse_coco(input).map_err(|e| match e {
        IngestError::Io(io) => CliError::Input(format!("{}: {io}", input.display())),
        other => other.into(),
    })?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(output, &export_coco(&manifest))?;
    write_json(&report_path(output), &report)?;
    Ok(report)
}

pub fn report_path(output: &Path) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    output.with_file_name(format!("{stem}.report.json"))
}

#[derive(Debug, Serialize)]
struct RunMetadata {
    strategy: StrategyKind,
    threshold: Threshold,
    stream_order: StreamOrder,
    /// How images are assigned to tasks.
    task_membership: &'static str,
    reference: &'static str,
    new_samples: usize,
    previous_buffer: usize,
    merged_images: usize,
}

#[derive(Debug, Serialize)]
struct TaskReport<'a> {
    task: usize,
    classes: Vec<u32>,
    distribution: &'a DistributionReport,
    buffer: BufferStats,
    metadata: RunMetadata,
}

const TASK_MEMBERSHIP: &str =
    "an image belongs to every task it has an annotation for; annotations of other tasks are stripped";
const REFERENCE: &str = "all task data up to and including this task";

fn write_task(dir: &Path, cfg: &RunConfig, split: &TaskSplit, o: &TaskOutcome) -> Result<(), CliError> {
    create_dir(dir)?;
    write_jsonl(&dir.join("buffer.jsonl"), o.buffer.entries())?;
    write_jsonl::<&DecisionRecord>(&dir.join("decisions.jsonl"), &o.log)?;
    let plans = o.schedule(&cfg.schedule)?;
    write_jsonl(&dir.join("plans.jsonl"), plans.iter().flat_map(|p| p.records()))?;
    let report = TaskReport {
        task: o.index,
        classes: split.tasks[o.index].iter().map(|l| l.0).collect(),
        distribution: &o.report,
        buffer: buffer_stats(&o.buffer),
        metadata: RunMetadata {
            strategy: cfg.strategy.kind,
            threshold: o.report.threshold,
            stream_order: cfg.strategy.order,
            task_membership: TASK_MEMBERSHIP,
            reference: REFERENCE,
            new_samples: o.view.len(),
            previous_buffer: o.previous_buffer_ids.len(),
            merged_images: o.merged_images,
        },
    };
    write_json(&dir.join("report.json"), &report)
}

fn failed_marker(out: &Path) -> PathBuf {
    out.join("FAILED")
}

/// Runs the full pipeline and writes `config.json`, `load_report.json` and
/// one `task_<t>` directory per task. On failure a `FAILED` marker holding
/// the error is left next to whatever was written.
pub fn cmd_run(cfg: &RunConfig) -> Result<Vec<TaskOutcome>, CliError> {
    let result = run_inner(cfg);
    if let Err(e) = &result {
        if cfg.out.is_dir() {
            let _ = fs::write(failed_marker(&cfg.out), format!("{e}\n"));
        }
    }
    result
}

fn run_inner(cfg: &RunConfig) -> Result<Vec<TaskOutcome>, CliError> {
    create_dir(&cfg.out)?;
    let marker = failed_marker(&cfg.out);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| out_err(&marker, e))?;
    }
    write_json(&cfg.out.join("config.json"), cfg)?;
    let p = prepare(cfg)?;
    write_json(&cfg.out.join("load_report.json"), &p.load_report)?;
    let predictions = load_predictions(cfg)?;
    let oracle = predictions.as_ref().map_or(Oracle::Surrogate, Oracle::Predictions);
    let outcomes = run_pipeline(&p.manifest, &p.split, &cfg.pipeline(), oracle)?;
    for o in &outcomes {
        write_task(&cfg.out.join(format!("task_{}", o.index)), cfg, &p.split, o)?;
    }
    log::info!("wrote {} task(s) to {}", outcomes.len(), cfg.out.display());
    Ok(outcomes)
}

/// Runs every configured strategy × seed cell with the surrogate detector and
/// writes `compare.csv` and `compare.json`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<ComparisonTable, CliError> {
    if cfg.predictions.is_some() {
        return Err(CliError::Config("compare uses the surrogate detector; drop `predictions`".into()));
    }
    let p = prepare(cfg)?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    let s = &cfg.compare;
    let table = compare_strategies(&p.manifest, &p.split, &s.strategies, &s.seeds, &cfg.pipeline());
    let csv_path = cfg.out.join("compare.csv");
    fs::write(&csv_path, table.to_csv()).map_err(|e| out_err(&csv_path, e))?;
    write_json(&cfg.out.join("compare.json"), &table)?;
    Ok(table)
}

#[derive(Serialize)]
struct TaskBatchRecord {
    task: usize,
    #[serde(flatten)]
    batch: BatchRecord,
}

pub fn plan_file_name(r: ErCer) -> String {
    format!("plans_er{}_cer{}.jsonl", r.er, r.cer)
}

/// Builds the buffers once, then writes one plan file per ratio in
/// `er_cer_sweep`, covering every task.
pub fn cmd_schedule(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = prepare(cfg)?;
    for r in &cfg.er_cer_sweep {
        cfg.schedule.with_ratio(r.er, r.cer).validate()?;
    }
    let predictions = load_predictions(cfg)?;
    let oracle = predictions.as_ref().map_or(Oracle::Surrogate, Oracle::Predictions);
    let outcomes = run_pipeline(&p.manifest, &p.split, &cfg.pipeline(), oracle)?;
    create_dir(&cfg.out)?;
    write_json(&cfg.out.join("config.json"), cfg)?;
    let mut written = Vec::new();
    for &r in &cfg.er_cer_sweep {
        let sc = cfg.schedule.with_ratio(r.er, r.cer);
        let mut records = Vec::new();
        for o in &outcomes {
            for plan in o.schedule(&sc)? {
                records.extend(plan.records().map(|batch| TaskBatchRecord { task: o.index, batch }));
            }
        }
        let path = cfg.out.join(plan_file_name(r));
        write_jsonl(&path, records)?;
        written.push(path);
    }
    Ok(written)
}

/// Writes a synthetic dataset as COCO JSON.
pub fn cmd_synth(cfg: &replaygm_core::ingest::SyntheticStreamConfig, output: &Path) -> Result<(), CliError> {
    let m = synthetic_stream(cfg)?;
    if let Some(dir) = output.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_json(output, &export_coco(&m))
}

/// Image ids of a buffer file written by `run`.
pub fn read_buffer_ids(path: &Path) -> Result<Vec<ImageId>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str::<replaygm_core::Sample>(l)
                .map(|s| s.image_id())
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
        })
        .collect()
}
