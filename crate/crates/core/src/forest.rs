use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{validate_config, ForestConfig};
use crate::dataset::Dataset;
use crate::error::{GroveError, Result};
use crate::exec::Exec;
use crate::sampling::{derive_stream, SubsampleRecord};
use crate::tree::{grow_tree, Tree};

pub const FOREST_FORMAT_VERSION: u32 = 1;

/// Subsample draws allowed per tree before giving up on a dataset whose
/// treatment arms are too unbalanced.
pub const MAX_SUBSAMPLE_ATTEMPTS: usize = 100;

/// An ensemble of trees grown on independent subsamples, together with the
/// configuration and training-set size needed for variance estimation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub version: u32,
    pub config: ForestConfig,
    pub n_train: usize,
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn train(data: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
        Forest::train_with(data, cfg, Exec::default())
    }

    /// Tree `b` is grown from `derive_stream(cfg.seed, b)` alone, so the
    /// result does not depend on `exec` or on scheduling.
    pub fn train_with(data: &Dataset, cfg: &ForestConfig, exec: Exec) -> Result<Forest> {
        validate_config(cfg, data)?;
        let trees = exec.try_map(cfg.num_trees, |b| grow_one(data, cfg, b))?;
        Ok(Forest { version: FOREST_FORMAT_VERSION, config: cfg.clone(), n_train: data.n(), trees })
    }

    /// Builds a forest from already-grown trees.
    pub fn from_trees(config: ForestConfig, n_train: usize, trees: Vec<Tree>) -> Forest {
        Forest { version: FOREST_FORMAT_VERSION, config, n_train, trees }
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    /// Per-tree estimates at `x`, in tree order.
    pub fn tree_predictions(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    /// Mean of the tree estimates, summed in tree order.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(x)).sum();
        sum / self.trees.len() as f64
    }

    pub fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        self.predict_batch_with(xs, Exec::default())
    }

    pub fn predict_batch_with(&self, xs: &[Vec<f64>], exec: Exec) -> Vec<f64> {
        exec.map(xs.len(), |i| self.predict(&xs[i]))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        let mut de = serde_json::Deserializer::from_str(text);
        // Unbalanced trees can nest deeper than serde_json's default limit.
        de.disable_recursion_limit();
        let forest = Forest::deserialize(&mut de)?;
        de.end()?;
        if forest.version != FOREST_FORMAT_VERSION {
            return Err(GroveError::Unsupported(format!("forest format version {}", forest.version)));
        }
        Ok(forest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Forest> {
        Forest::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `train`: see [`Forest::train`].
pub fn train(data: &Dataset, cfg: &ForestConfig) -> Result<Forest> {
    Forest::train(data, cfg)
}

fn grow_one(data: &Dataset, cfg: &ForestConfig, b: usize) -> Result<Tree> {
    let mut stream = derive_stream(cfg.seed, b as u64);
    for _ in 0..MAX_SUBSAMPLE_ATTEMPTS {
        let record = SubsampleRecord::draw(
            &mut stream,
            b,
            data.n(),
            cfg.subsample_size,
            cfg.mode.is_double_sample(),
        )?;
        match grow_tree(data, record, cfg, &mut stream) {
            Err(GroveError::DegenerateSubsample { .. }) => continue,
            other => return other,
        }
    }
    Err(GroveError::RetryBudgetExhausted { tree_index: b, attempts: MAX_SUBSAMPLE_ATTEMPTS })
}
