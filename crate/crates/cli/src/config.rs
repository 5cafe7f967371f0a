use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use replaygm_core::ingest::SyntheticStreamConfig;
use replaygm_core::loss::{LossConfig, SurrogateConfig};
use replaygm_core::scheduler::ER_CER_SWEEP;
use replaygm_core::{PipelineConfig, ScheduleConfig, SplitSpec, StrategyConfig, StrategyKind};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// The 200-sample synthetic fixture compiled into the binary.
    #[default]
    Bundled,
    Coco {
        path: PathBuf,
    },
    Synthetic {
        config: SyntheticStreamConfig,
    },
}

/// An ER:CER epoch split such as `48:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ErCer {
    pub er: usize,
    pub cer: usize,
}

impl FromStr for ErCer {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CliError::Config(format!("invalid ER:CER ratio {s:?}; expected e.g. 48:2"));
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        let er = a.trim().parse().map_err(|_| bad())?;
        let cer = b.trim().parse().map_err(|_| bad())?;
        if er + cer == 0 {
            return Err(bad());
        }
        Ok(Self { er, cer })
    }
}

impl fmt::Display for ErCer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.er, self.cer)
    }
}

impl Serialize for ErCer {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ErCer {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSettings {
    pub strategies: Vec<StrategyKind>,
    pub seeds: Vec<u64>,
}

impl Default for CompareSettings {
    fn default() -> Self {
        Self { strategies: StrategyKind::ALL.to_vec(), seeds: (0..5).collect() }
    }
}

/// Everything a run needs. Component seeds are always derived from `seed`
/// when the config is resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dataset: DatasetSpec,
    pub split: SplitSpec,
    pub strategy: StrategyConfig,
    pub schedule: ScheduleConfig,
    pub surrogate: SurrogateConfig,
    pub loss: LossConfig,
    /// External predictions (JSON Lines) replacing the surrogate detector.
    pub predictions: Option<PathBuf>,
    pub out: PathBuf,
    pub compare: CompareSettings,
    pub er_cer_sweep: Vec<ErCer>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dataset: DatasetSpec::default(),
            split: SplitSpec(vec![40, 40]),
            strategy: StrategyConfig::default(),
            schedule: ScheduleConfig::default(),
            surrogate: SurrogateConfig::default(),
            loss: LossConfig::default(),
            predictions: None,
            out: PathBuf::from("runs/default"),
            compare: CompareSettings::default(),
            er_cer_sweep: ER_CER_SWEEP.iter().map(|&(er, cer)| ErCer { er, cer }).collect(),
        }
    }
}

/// Command-line overrides; flags win over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub strategy: Option<String>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub split: Option<String>,
    /// Comma-separated list of `ER:CER` ratios.
    pub er_cer: Option<String>,
}

impl RunConfig {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            strategy: self.strategy,
            schedule: self.schedule,
            surrogate: self.surrogate,
            loss: self.loss,
        }
    }

    /// Reads a config file (or starts from defaults), applies overrides,
    /// resolves relative paths against the config file's directory, derives
    /// component seeds and validates.
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Input(format!("cannot read config {}: {e}", p.display())))?;
                let mut cfg: RunConfig =
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let base = p.parent().unwrap_or(Path::new(""));
                cfg.rebase_paths(base);
                cfg
            }
            None => RunConfig::default(),
        };
        cfg.apply(overrides)?;
        Ok(cfg.resolved())
    }

    fn rebase_paths(&mut self, base: &Path) {
        let join = |p: &PathBuf| if p.is_relative() { base.join(p) } else { p.clone() };
        if let DatasetSpec::Coco { path } = &mut self.dataset {
            *path = join(path);
        }
        if let Some(p) = &self.predictions {
            self.predictions = Some(join(p));
        }
        self.out = join(&self.out);
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = &o.strategy {
            self.strategy.kind =
                s.parse().map_err(|e: replaygm_core::strategy::StrategyError| CliError::Config(e.to_string()))?;
        }
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(split) = &o.split {
            self.split =
                split.parse().map_err(|e: replaygm_core::ingest::IngestError| CliError::Config(e.to_string()))?;
        }
        if let Some(list) = &o.er_cer {
            let ratios: Vec<ErCer> = list.split(',').map(str::parse).collect::<Result<_, _>>()?;
            if let [single] = ratios[..] {
                self.schedule = self.schedule.with_ratio(single.er, single.cer);
            }
            self.er_cer_sweep = ratios;
        }
        Ok(())
    }

    pub fn resolved(mut self) -> Self {
        let p = self.pipeline().with_derived_seeds();
        self.strategy = p.strategy;
        self.schedule = p.schedule;
        self.surrogate = p.surrogate;
        self
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.pipeline().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.er_cer_sweep.is_empty() {
            return Err(CliError::Config("er_cer_sweep must not be empty".into()));
        }
        if self.compare.seeds.is_empty() || self.compare.strategies.is_empty() {
            return Err(CliError::Config("compare needs at least one seed and one strategy".into()));
        }
        if let DatasetSpec::Synthetic { config } = &self.dataset {
            config.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_materialize() {
        let cfg = RunConfig::load(None, &Overrides::default()).unwrap();
        assert_eq!(cfg.strategy.capacity, 1200);
        assert_eq!(cfg.strategy.min_guarantee, 12);
        assert_eq!((cfg.schedule.total_epochs, cfg.schedule.er_epochs, cfg.schedule.cer_epochs), (50, 48, 2));
        assert_eq!(cfg.schedule.batch_size, 3);
        assert_ne!(cfg.strategy.seed, cfg.schedule.seed);
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.resolved(), cfg);
    }

    #[test]
    fn overrides_win() {
        let o = Overrides {
            strategy: Some("random".into()),
            seed: Some(5),
            split: Some("70+10".into()),
            er_cer: Some("40:10".into()),
            ..Overrides::default()
        };
        let cfg = RunConfig::load(None, &o).unwrap();
        assert_eq!(cfg.strategy.kind, StrategyKind::Random);
        assert_eq!(cfg.split, SplitSpec(vec![70, 10]));
        assert_eq!((cfg.schedule.er_epochs, cfg.schedule.cer_epochs), (40, 10));
        assert_eq!(cfg.strategy.seed, replaygm_core::seed::derive_seed(5, "strategy"));
    }

    #[test]
    fn bad_strategy_lists_valid_names() {
        let o = Overrides { strategy: Some("greedy".into()), ..Overrides::default() };
        let err = RunConfig::load(None, &o).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(err.to_string().contains("many_labels"));
    }

    #[test]
    fn ratio_parsing() {
        assert_eq!("48:2".parse::<ErCer>().unwrap(), ErCer { er: 48, cer: 2 });
        assert!("48-2".parse::<ErCer>().is_err());
    }
}
