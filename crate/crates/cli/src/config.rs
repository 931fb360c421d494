use std::path::{Path, PathBuf};

use actorscene::longterm::WindowingConfig;
use actorscene::relation_model::ModelConfig;
use actorscene::set_matching::LossConfig;
use actorscene::synthdata::ScenarioConfig;
use actorscene::training::{OptimizerConfig, TrainingConfig};
use actorscene::{Error, Result};
use serde::{Deserialize, Serialize};

/// Training switches that are not part of the model or optimiser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub actor_only: bool,
    pub augment_range: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainingConfig::default();
        TrainingSection {
            actor_only: t.actor_only,
            augment_range: t.augment_range,
        }
    }
}

/// Fallback locations used when the matching flag is absent.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

/// Everything a run needs, read from one TOML file. The top-level seed
/// drives both the scenario and training.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub scenario: ScenarioConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub aggregation: OptimizerConfig,
    pub windowing: WindowingConfig,
    pub training: TrainingSection,
    pub paths: PathsSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainingConfig::default();
        let mut c = RunConfig {
            seed: 7,
            scenario: ScenarioConfig::default(),
            model: t.model,
            loss: t.loss,
            optimizer: t.optimizer,
            aggregation: t.aggregation,
            windowing: t.windowing,
            training: TrainingSection::default(),
            paths: PathsSection::default(),
        };
        c.scenario.seed = c.seed;
        c
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &str) -> Result<RunConfig> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::Config(format!("{origin}: {e}")))?;
        if let Some(toml::Value::Table(s)) = table.get("scenario") {
            if s.contains_key("seed") {
                return Err(Error::Config(format!(
                    "{origin}: scenario.seed is not allowed; set the top-level seed"
                )));
            }
        }
        let mut merged = RunConfig::default().to_table()?;
        merge(&mut merged, table);
        let no_decay: Vec<bool> = ["optimizer", "aggregation"]
            .iter()
            .map(|k| match merged.get(*k) {
                Some(toml::Value::Table(t)) => !t.contains_key("decay_epoch"),
                _ => false,
            })
            .collect();
        let mut cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(format!("{origin}: {e}")))?;
        if no_decay[0] {
            cfg.optimizer.decay_epoch = None;
        }
        if no_decay[1] {
            cfg.aggregation.decay_epoch = None;
        }
        cfg.scenario.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.model.num_classes != self.scenario.num_classes {
            return Err(Error::Config(format!(
                "model.num_classes ({}) differs from scenario.num_classes ({})",
                self.model.num_classes, self.scenario.num_classes
            )));
        }
        self.training_config().validate()
    }

    pub fn training_config(&self) -> TrainingConfig {
        TrainingConfig {
            model: self.model.clone(),
            loss: self.loss.clone(),
            optimizer: self.optimizer.clone(),
            aggregation: self.aggregation.clone(),
            windowing: self.windowing.clone(),
            seed: self.seed,
            actor_only: self.training.actor_only,
            augment_range: self.training.augment_range,
        }
    }

    fn to_table(&self) -> Result<toml::Table> {
        let mut table = toml::Table::try_from(self).map_err(|e| Error::Config(format!("cannot serialise config: {e}")))?;
        if let Some(toml::Value::Table(s)) = table.get_mut("scenario") {
            s.remove("seed");
        }
        Ok(table)
    }

    /// The resolved config as TOML that [`RunConfig::parse`] accepts again.
    /// A `decay_epoch` left out of an optimiser section means no decay.
    pub fn to_toml(&self) -> Result<String> {
        Ok(self.to_table()?.to_string())
    }
}

/// Overlays `over` onto `base`, descending into tables present in both.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
