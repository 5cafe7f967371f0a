//! The incremental run: for each task, build its view, rebuild the buffer
//! from the previous buffer plus the task's data, and report the buffer's
//! fidelity to all data seen so far.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::{Buffer, ImageId};
use crate::ingest::{cumulative_view, merge_views, task_view, DatasetManifest, IngestError, TaskSplit};
use crate::loss::{LossConfig, LossError, LossOracle, PredictionFileOracle, SurrogateConfig, SurrogateOracle};
use crate::report::{distribution_fidelity, DistributionReport};
use crate::scheduler::{make_task_schedule, EpochPlan, ScheduleConfig, ScheduleError};
use crate::seed::derive_seed;
use crate::strategy::{run_strategy, DecisionRecord, StrategyConfig, StrategyError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Loss(#[from] LossError),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub strategy: StrategyConfig,
    pub schedule: ScheduleConfig,
    pub surrogate: SurrogateConfig,
    pub loss: LossConfig,
}

impl PipelineConfig {
    /// Overwrites every component seed with one derived from `seed`.
    pub fn with_derived_seeds(mut self) -> Self {
        self.strategy.seed = derive_seed(self.seed, "strategy");
        self.schedule.seed = derive_seed(self.seed, "schedule");
        self.surrogate.seed = derive_seed(self.seed, "surrogate");
        self
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.strategy.validate()?;
        self.schedule.validate()?;
        self.surrogate.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TaskOutcome {
    pub index: usize,
    pub view: DatasetManifest,
    /// Buffer entering this task (what the task trains against).
    pub previous_buffer_ids: Vec<ImageId>,
    pub buffer: Buffer,
    pub log: Vec<DecisionRecord>,
    pub report: DistributionReport,
    /// Task images already in the previous buffer, merged into that entry.
    pub merged_images: usize,
}

impl TaskOutcome {
    pub fn new_ids(&self) -> Vec<ImageId> {
        self.view.samples.iter().map(|s| s.image_id()).collect()
    }

    /// Epoch plans for training on this task's data with the previous buffer.
    pub fn schedule(&self, cfg: &ScheduleConfig) -> Result<Vec<EpochPlan>, ScheduleError> {
        let task_cfg = ScheduleConfig { seed: derive_seed(cfg.seed, &format!("task/{}", self.index)), ..*cfg };
        make_task_schedule(&self.new_ids(), &self.previous_buffer_ids, &task_cfg)
    }
}

/// Oracle source for the run: the surrogate detector or external predictions.
pub enum Oracle<'a> {
    Surrogate,
    Predictions(&'a PredictionFileOracle),
}

enum TaskOracle<'a> {
    Surrogate(SurrogateOracle),
    Predictions(&'a PredictionFileOracle),
}

impl LossOracle for TaskOracle<'_> {
    fn loss(&self, s: &crate::buffer::Sample) -> Result<f64, LossError> {
        match self {
            TaskOracle::Surrogate(o) => o.loss(s),
            TaskOracle::Predictions(o) => o.loss(s),
        }
    }
}

/// Runs every task in order. `cfg` seeds are used as given; call
/// [`PipelineConfig::with_derived_seeds`] first to derive them from the
/// global seed.
pub fn run_pipeline(
    manifest: &DatasetManifest,
    split: &TaskSplit,
    cfg: &PipelineConfig,
    oracle: Oracle<'_>,
) -> Result<Vec<TaskOutcome>, PipelineError> {
    cfg.validate()?;
    let universe = manifest.class_universe();
    let mut previous = Buffer::new(cfg.strategy.capacity).map_err(StrategyError::from)?;
    let mut seen = 0usize;
    let mut outcomes = Vec::with_capacity(split.len());
    for t in 0..split.len() {
        let view = task_view(manifest, split, t)?;
        let (prev_entries, new_data, merged) = merge_views(previous.entries(), &view.samples);
        let task_oracle = match oracle {
            Oracle::Surrogate => TaskOracle::Surrogate(SurrogateOracle {
                surrogate: SurrogateConfig {
                    seed: derive_seed(cfg.surrogate.seed, &format!("task/{t}")),
                    ..cfg.surrogate
                },
                loss: cfg.loss,
                n_classes: universe,
            }),
            Oracle::Predictions(p) => TaskOracle::Predictions(p),
        };
        let strategy = StrategyConfig { seed: derive_seed(cfg.strategy.seed, &format!("task/{t}")), ..cfg.strategy };
        let out = run_strategy(&prev_entries, &new_data, &task_oracle, &strategy, seen)?;
        seen += view.samples.len();

        let reference = cumulative_view(manifest, split, t)?;
        let report = distribution_fidelity(&out.buffer, &reference, cfg.strategy.capacity);
        let previous_buffer_ids = previous.entries().iter().map(|s| s.image_id()).collect();
        previous = out.buffer.clone();
        outcomes.push(TaskOutcome {
            index: t,
            view,
            previous_buffer_ids,
            buffer: out.buffer,
            log: out.log,
            report,
            merged_images: merged,
        });
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{split_tasks, synthetic_stream, SyntheticStreamConfig};
    use crate::scheduler::EpochKind;
    use crate::strategy::StrategyKind;

    fn small() -> (DatasetManifest, TaskSplit) {
        let m = synthetic_stream(&SyntheticStreamConfig {
            n_classes: 6,
            n_samples: 120,
            ..SyntheticStreamConfig::default()
        })
        .unwrap();
        let split = split_tasks(&m, &[3, 3]).unwrap();
        (m, split)
    }

    fn cfg(kind: StrategyKind) -> PipelineConfig {
        PipelineConfig {
            seed: 9,
            strategy: StrategyConfig { capacity: 20, min_guarantee: 2, kind, ..StrategyConfig::default() },
            ..PipelineConfig::default()
        }
        .with_derived_seeds()
    }

    #[test]
    fn runs_every_task_for_every_strategy() {
        let (m, split) = small();
        for kind in StrategyKind::ALL {
            let out = run_pipeline(&m, &split, &cfg(kind), Oracle::Surrogate).unwrap();
            assert_eq!(out.len(), 2);
            assert!(out[0].previous_buffer_ids.is_empty());
            assert_eq!(out[1].previous_buffer_ids.len(), 20);
            for o in &out {
                assert_eq!(o.buffer.len(), 20);
                assert_eq!(&o.buffer.recount(), o.buffer.class_counts());
            }
        }
    }

    #[test]
    fn deterministic() {
        let (m, split) = small();
        let a = run_pipeline(&m, &split, &cfg(StrategyKind::Ebts), Oracle::Surrogate).unwrap();
        let b = run_pipeline(&m, &split, &cfg(StrategyKind::Ebts), Oracle::Surrogate).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.buffer, y.buffer);
            assert_eq!(x.log, y.log);
        }
    }

    #[test]
    fn schedules_follow_the_buffer() {
        let (m, split) = small();
        let out = run_pipeline(&m, &split, &cfg(StrategyKind::Ebts), Oracle::Surrogate).unwrap();
        let sc = ScheduleConfig { total_epochs: 5, er_epochs: 4, cer_epochs: 1, ..ScheduleConfig::default() };
        let first = out[0].schedule(&sc).unwrap();
        assert!(first.iter().all(|p| p.kind == EpochKind::Er));
        let second = out[1].schedule(&sc).unwrap();
        assert_eq!(second.last().unwrap().kind, EpochKind::Cer);
    }

    #[test]
    fn invalid_config_is_reported() {
        let (m, split) = small();
        let mut c = cfg(StrategyKind::Ebts);
        c.schedule.er_epochs = 1;
        assert!(matches!(run_pipeline(&m, &split, &c, Oracle::Surrogate), Err(PipelineError::Schedule(_))));
    }
}
