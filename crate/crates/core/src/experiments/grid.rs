use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::config::TrainConfig;
use super::train::{train, ExperimentReport};
use crate::embeddings::EmbeddingKind;
use crate::error::{Error, Result};
use crate::nn::MlpModel;
use crate::rules::RuleId;
use crate::seed::derive_seed;

fn all_rules() -> Vec<RuleId> {
    RuleId::ALL.to_vec()
}

fn all_embeddings() -> Vec<EmbeddingKind> {
    EmbeddingKind::ALL.to_vec()
}

/// A rules x embeddings sweep sharing one config template.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "all_rules")]
    pub rules: Vec<RuleId>,
    #[serde(default = "all_embeddings")]
    pub embeddings: Vec<EmbeddingKind>,
    #[serde(default)]
    pub master_seed: u64,
    /// Any [`TrainConfig`] fields except `rule`, `embedding` and `seed`.
    #[serde(default)]
    pub template: Map<String, Value>,
}

impl GridConfig {
    pub fn cells(&self) -> Vec<(RuleId, EmbeddingKind)> {
        self.rules
            .iter()
            .flat_map(|&r| self.embeddings.iter().map(move |&e| (r, e)))
            .collect()
    }
}

/// Seed of one cell: fixed by its position in the full 7 x 3 table, so it
/// does not depend on which other cells run.
pub fn cell_seed(master_seed: u64, rule: RuleId, embedding: EmbeddingKind) -> u64 {
    let counter = rule.index() * EmbeddingKind::ALL.len() + embedding.index();
    derive_seed(master_seed, counter as u64)
}

pub fn cell_config(
    template: &Map<String, Value>,
    master_seed: u64,
    rule: RuleId,
    embedding: EmbeddingKind,
) -> Result<TrainConfig> {
    for key in ["rule", "embedding", "seed"] {
        if template.contains_key(key) {
            return Err(Error::Config(format!("grid template must not set `{key}`")));
        }
    }
    let mut fields = template.clone();
    fields.insert("rule".into(), serde_json::to_value(rule)?);
    fields.insert("embedding".into(), serde_json::to_value(embedding)?);
    fields.insert("seed".into(), cell_seed(master_seed, rule, embedding).into());
    TrainConfig::from_value(Value::Object(fields))
}

/// Trains the given cells, at most `jobs` at a time. Results keep the cell order.
pub fn run_cells(
    cells: &[(RuleId, EmbeddingKind)],
    template: &Map<String, Value>,
    master_seed: u64,
    jobs: usize,
) -> Result<Vec<(ExperimentReport, MlpModel)>> {
    // Validate every cell before any training starts.
    let configs = cells
        .iter()
        .map(|&(r, e)| cell_config(template, master_seed, r, e))
        .collect::<Result<Vec<_>>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} workers: {e}")))?;
    pool.install(|| configs.par_iter().map(train).collect())
}

pub fn run_grid(config: &GridConfig, jobs: usize) -> Result<Vec<(ExperimentReport, MlpModel)>> {
    if config.rules.is_empty() || config.embeddings.is_empty() {
        return Err(Error::Config("grid needs at least one rule and one embedding".into()));
    }
    run_cells(&config.cells(), &config.template, config.master_seed, jobs)
}
