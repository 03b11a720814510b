use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{GroveError, Result};

/// How trees place their splits and what their leaves estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestMode {
    /// Double-sample regression trees: MSE splits on J, leaf means on I.
    RegressionDoubleSample,
    /// Double-sample causal trees: treatment-effect variance splits on J,
    /// leaf effects on I.
    CausalDoubleSample,
    /// Propensity trees: Gini splits on the treatment indicator only.
    Propensity,
    /// Adaptive (not honest) causal trees: splits and leaf effects share
    /// the whole subsample. Only meant as a comparison baseline.
    CausalAdaptive,
}

impl ForestMode {
    pub const ALL: [ForestMode; 4] = [
        ForestMode::RegressionDoubleSample,
        ForestMode::CausalDoubleSample,
        ForestMode::Propensity,
        ForestMode::CausalAdaptive,
    ];

    /// Leaves estimate a treatment effect rather than a mean response.
    pub fn is_causal(self) -> bool {
        !matches!(self, ForestMode::RegressionDoubleSample)
    }

    pub fn is_double_sample(self) -> bool {
        matches!(self, ForestMode::RegressionDoubleSample | ForestMode::CausalDoubleSample)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ForestMode::RegressionDoubleSample => "regression_double_sample",
            ForestMode::CausalDoubleSample => "causal_double_sample",
            ForestMode::Propensity => "propensity",
            ForestMode::CausalAdaptive => "causal_adaptive",
        }
    }
}

impl std::fmt::Display for ForestMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ForestMode {
    type Err = GroveError;

    fn from_str(s: &str) -> Result<Self> {
        ForestMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| GroveError::Parameter(format!("unknown forest mode `{s}`")))
    }
}

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_PI: f64 = 0.25;
pub const DEFAULT_MIN_LEAF: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestConfig {
    pub num_trees: usize,
    pub subsample_size: usize,
    pub min_leaf: usize,
    pub alpha: f64,
    pub pi: f64,
    pub mode: ForestMode,
    pub seed: u64,
}

impl ForestConfig {
    /// Defaults for a training set of `n` rows: `B = n` trees on half-size
    /// subsamples.
    pub fn new(mode: ForestMode, n: usize) -> Self {
        ForestConfig {
            num_trees: n.max(2),
            subsample_size: (n / 2).max(2),
            min_leaf: DEFAULT_MIN_LEAF,
            alpha: DEFAULT_ALPHA,
            pi: DEFAULT_PI,
            mode,
            seed: 0,
        }
    }

    pub fn with_trees(mut self, num_trees: usize) -> Self {
        self.num_trees = num_trees;
        self
    }

    pub fn with_subsample_size(mut self, s: usize) -> Self {
        self.subsample_size = s;
        self
    }

    pub fn with_min_leaf(mut self, k: usize) -> Self {
        self.min_leaf = k;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn with_pi(mut self, pi: f64) -> Self {
        self.pi = pi;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Checks the parameters that do not depend on a dataset.
    pub fn check_parameters(&self) -> Result<()> {
        if self.num_trees == 0 {
            return Err(GroveError::Config("num_trees must be positive".into()));
        }
        if self.subsample_size == 0 {
            return Err(GroveError::Config("subsample_size must be positive".into()));
        }
        if self.min_leaf == 0 {
            return Err(GroveError::Config("min_leaf must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= 0.2) {
            return Err(GroveError::Config(format!("alpha = {} outside (0, 0.2]", self.alpha)));
        }
        if !(self.pi > 0.0 && self.pi <= 1.0) {
            return Err(GroveError::Config(format!("pi = {} outside (0, 1]", self.pi)));
        }
        let s = self.subsample_size;
        let k = self.min_leaf;
        if self.mode.is_double_sample() && s / 2 < k {
            return Err(GroveError::Config(format!(
                "half-subsample {} smaller than min_leaf {k}",
                s / 2
            )));
        }
        if !self.mode.is_double_sample() && s < 2 * k {
            return Err(GroveError::Config(format!(
                "subsample {s} cannot hold min_leaf {k} of each treatment class"
            )));
        }
        Ok(())
    }
}

/// Succeeds iff `cfg` is usable for training on `data`.
pub fn validate_config(cfg: &ForestConfig, data: &Dataset) -> Result<()> {
    cfg.check_parameters()?;
    if cfg.subsample_size > data.n() {
        return Err(GroveError::Config(format!(
            "subsample exceeds n ({} > {})",
            cfg.subsample_size,
            data.n()
        )));
    }
    if cfg.mode.is_causal() && !data.has_treatment() {
        return Err(GroveError::Config(format!(
            "mode {} requires a treatment column",
            cfg.mode
        )));
    }
    Ok(())
}

/// Lower end of the admissible subsample-scaling exponents: subsamples of
/// size `n^beta` with `beta_min < beta < 1` give asymptotically normal,
/// centred forest predictions.
pub fn beta_min(alpha: f64, pi: f64, d: usize) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 0.2) {
        return Err(GroveError::Parameter(format!("alpha = {alpha} outside (0, 0.2]")));
    }
    if !(pi > 0.0 && pi <= 1.0) {
        return Err(GroveError::Parameter(format!("pi = {pi} outside (0, 1]")));
    }
    if d == 0 {
        return Err(GroveError::Parameter("d must be at least 1".into()));
    }
    let ratio = (1.0 / alpha).ln() / (1.0 / (1.0 - alpha)).ln();
    Ok(1.0 - 1.0 / (1.0 + (d as f64 / pi) * ratio))
}
