//! Replay-buffer construction and replay scheduling for class-incremental
//! object detection.
//!
//! The engine works on annotation metadata only. A per-sample loss from a
//! [`loss::LossOracle`] (a surrogate detector or external predictions) drives
//! the guarantee-minimum buffer construction in [`strategy`]; [`scheduler`]
//! turns a task's data and buffer into ER / circular-replay epoch plans; and
//! [`report`] measures how well a buffer tracks the class distribution of the
//! data it stands in for.

pub mod buffer;
pub mod ingest;
pub mod loss;
pub mod pipeline;
pub mod report;
pub mod scheduler;
pub mod seed;
pub mod strategy;

pub use buffer::{Annotation, BoundingBox, Buffer, BufferError, ImageId, LabelId, Sample, SampleError};
pub use ingest::{DatasetManifest, SplitSpec, TaskSplit};
pub use loss::{LossBreakdown, LossConfig, LossOracle, Prediction, SurrogateConfig};
pub use pipeline::{run_pipeline, Oracle, PipelineConfig, PipelineError, TaskOutcome};
pub use report::{DistributionReport, Threshold};
pub use scheduler::{EpochKind, EpochPlan, ScheduleConfig, Source};
pub use strategy::{StrategyConfig, StrategyKind};
