use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::min_guarantee_violations;
use crate::ingest::{cumulative_view, DatasetManifest, TaskSplit};
use crate::pipeline::{run_pipeline, Oracle, PipelineConfig};
use crate::strategy::{StrategyConfig, StrategyKind};

pub const COMPARE_SCHEMA_VERSION: u32 = 1;

/// One strategy × seed run, measured on the final buffer against all data
/// seen across the tasks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: StrategyKind,
    pub seed: u64,
    pub satisfied_count: usize,
    pub total_classes: usize,
    pub min_guarantee_violations: usize,
    pub mean_buffer_loss: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    /// Sample standard deviation; zero for fewer than two values.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std =
            if n < 2 { 0.0 } else { (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub strategy: StrategyKind,
    pub seeds: usize,
    pub failed: usize,
    pub satisfied_count: MeanStd,
    pub min_guarantee_violations: MeanStd,
    pub mean_buffer_loss: MeanStd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub schema_version: u32,
    pub rows: Vec<ComparisonRow>,
    pub cells: Vec<CellResult>,
}

fn run_cell(
    manifest: &DatasetManifest,
    split: &TaskSplit,
    kind: StrategyKind,
    seed: u64,
    base: &PipelineConfig,
) -> CellResult {
    let cfg = PipelineConfig { seed, strategy: StrategyConfig { kind, ..base.strategy }, ..*base }.with_derived_seeds();
    let mut cell = CellResult {
        strategy: kind,
        seed,
        satisfied_count: 0,
        total_classes: 0,
        min_guarantee_violations: 0,
        mean_buffer_loss: 0.0,
        error: None,
    };
    let result = run_pipeline(manifest, split, &cfg, Oracle::Surrogate).and_then(|outcomes| {
        let last = outcomes.last().expect("at least one task");
        let reference = cumulative_view(manifest, split, last.index)?;
        Ok((last.report.clone(), min_guarantee_violations(&last.buffer, &reference, cfg.strategy.min_guarantee), {
            let losses: Vec<f64> = last.buffer.entries().iter().filter_map(|e| e.loss()).collect();
            losses.iter().sum::<f64>() / losses.len().max(1) as f64
        }))
    });
    match result {
        Ok((report, violations, loss)) => {
            cell.satisfied_count = report.satisfied_count;
            cell.total_classes = report.total_classes;
            cell.min_guarantee_violations = violations;
            cell.mean_buffer_loss = loss;
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Runs every strategy × seed cell (in parallel) and aggregates per strategy.
/// Seeds are shared across strategies, so cells with equal seeds see the
/// same surrogate losses.
pub fn compare_strategies(
    manifest: &DatasetManifest,
    split: &TaskSplit,
    kinds: &[StrategyKind],
    seeds: &[u64],
    cfg: &PipelineConfig,
) -> ComparisonTable {
    let grid: Vec<(StrategyKind, u64)> = kinds.iter().flat_map(|&k| seeds.iter().map(move |&s| (k, s))).collect();
    let cells: Vec<CellResult> = grid.par_iter().map(|&(k, s)| run_cell(manifest, split, k, s, cfg)).collect();
    let rows = kinds
        .iter()
        .map(|&kind| {
            let ok: Vec<&CellResult> = cells.iter().filter(|c| c.strategy == kind && c.error.is_none()).collect();
            let col = |f: fn(&CellResult) -> f64| MeanStd::of(&ok.iter().map(|c| f(c)).collect::<Vec<_>>());
            ComparisonRow {
                strategy: kind,
                seeds: seeds.len(),
                failed: seeds.len() - ok.len(),
                satisfied_count: col(|c| c.satisfied_count as f64),
                min_guarantee_violations: col(|c| c.min_guarantee_violations as f64),
                mean_buffer_loss: col(|c| c.mean_buffer_loss),
            }
        })
        .collect();
    ComparisonTable { schema_version: COMPARE_SCHEMA_VERSION, rows, cells }
}

impl ComparisonTable {
    /// CSV with a leading `# schema_version=N` line.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# schema_version={}\n", self.schema_version);
        out.push_str(
            "strategy,seeds,failed,satisfied_mean,satisfied_std,violations_mean,violations_std,loss_mean,loss_std\n",
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                r.strategy,
                r.seeds,
                r.failed,
                r.satisfied_count.mean,
                r.satisfied_count.std,
                r.min_guarantee_violations.mean,
                r.min_guarantee_violations.std,
                r.mean_buffer_loss.mean,
                r.mean_buffer_loss.std
            ));
        }
        out
    }

    pub fn row(&self, kind: StrategyKind) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.strategy == kind)
    }

    /// Per-seed satisfied counts of one strategy, in seed order.
    pub fn satisfied_by_seed(&self, kind: StrategyKind) -> Vec<(u64, usize)> {
        self.cells
            .iter()
            .filter(|c| c.strategy == kind && c.error.is_none())
            .map(|c| (c.seed, c.satisfied_count))
            .collect()
    }
}
