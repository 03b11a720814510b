//! Infinitesimal-jackknife variance for subsampled forests, Gaussian
//! confidence intervals, and the exhaustive trivial-tree forest used to
//! check the estimator exactly.
//!
//! For a query point `x` with per-tree estimates `t_b` and membership
//! indicators `N_ib` (row `i` was in tree `b`'s subsample, either half for
//! double-sample trees):
//!
//! ```text
//! V_IJ(x) = (n - 1) / n * (n / (n - s))^2 * sum_i Cov_b[t_b, N_ib]^2
//! ```
//!
//! where the covariance runs over the `B` trees with `1/B` normalisation.
//!
//! With finitely many trees each empirical covariance carries Monte Carlo
//! noise, which inflates the sum of squares by roughly
//! `sum_i Var_b[N_ib] * Var_b[t_b] / B`. [`VarianceKind::Corrected`] subtracts
//! that term (scaled by the same finite-sample factor) and is what interval
//! reporting uses for a single point; [`VarianceKind::Raw`] is the plain
//! estimator.
//!
//! The debiased estimate is itself noisy when `B` is not much larger than
//! `n`. [`VarianceKind::Calibrated`] treats the debiased values at a batch
//! of query points as noisy measurements of their true variances, estimates
//! the noise level by recomputing them from the first half of the trees, and
//! shrinks each value toward the batch mean by the usual normal-normal
//! empirical Bayes factor.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{ForestConfig, ForestMode};
use crate::dataset::Dataset;
use crate::error::{GroveError, Result};
use crate::exec::Exec;
use crate::forest::Forest;
use crate::sampling::SubsampleRecord;
use crate::tree::Tree;

pub const DEFAULT_CI_LEVEL: f64 = 0.95;

/// Largest number of subsamples [`enumerate_exact_forest`] will build.
pub const EXACT_FOREST_BUDGET: u128 = 1_000_000;

/// Which jackknife estimate to report.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceKind {
    Raw,
    /// Raw estimate minus its Monte Carlo bias, floored at zero.
    Corrected,
    /// Corrected estimates shrunk across a batch of query points.
    #[default]
    Calibrated,
}

impl VarianceKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VarianceKind::Raw => "raw",
            VarianceKind::Corrected => "corrected",
            VarianceKind::Calibrated => "calibrated",
        }
    }
}

impl fmt::Display for VarianceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VarianceKind {
    type Err = GroveError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(VarianceKind::Raw),
            "corrected" => Ok(VarianceKind::Corrected),
            "calibrated" => Ok(VarianceKind::Calibrated),
            _ => Err(GroveError::Parameter(format!("unknown variance kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionResult {
    pub estimate: f64,
    pub variance: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub ci_level: f64,
}

impl PredictionResult {
    pub fn new(estimate: f64, variance: f64, ci_level: f64) -> Result<Self> {
        let (ci_low, ci_high) = confidence_interval(estimate, variance, ci_level)?;
        Ok(PredictionResult { estimate, variance, ci_low, ci_high, ci_level })
    }

    /// Closed-interval coverage check.
    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }
}

/// Subsample membership `N_ib` of every tree, read from the subsample
/// records.
#[derive(Debug, Clone)]
pub struct MembershipMatrix {
    n: usize,
    s: usize,
    members: Vec<u32>,
    offsets: Vec<usize>,
    /// `sum_i Var_b[N_ib]` with `1/B` normalisation.
    inclusion_variance: f64,
}

impl MembershipMatrix {
    pub fn from_records<'a>(n: usize, records: impl IntoIterator<Item = &'a SubsampleRecord>) -> Self {
        let mut members = Vec::new();
        let mut offsets = vec![0];
        let mut s = 0;
        for rec in records {
            members.extend(rec.indices.iter().map(|&i| i as u32));
            offsets.push(members.len());
            s = rec.indices.len();
        }
        let b = (offsets.len() - 1).max(1) as f64;
        let mut counts = vec![0u32; n];
        for &i in &members {
            counts[i as usize] += 1;
        }
        let inclusion_variance = counts
            .iter()
            .map(|&c| {
                let p = c as f64 / b;
                p * (1.0 - p)
            })
            .sum();
        MembershipMatrix { n, s, members, offsets, inclusion_variance }
    }

    pub fn from_forest(forest: &Forest) -> Self {
        MembershipMatrix::from_records(forest.n_train, forest.trees.iter().map(|t| &t.record))
    }

    pub fn num_trees(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn tree_members(&self, b: usize) -> &[u32] {
        &self.members[self.offsets[b]..self.offsets[b + 1]]
    }

    pub fn contains(&self, b: usize, i: usize) -> bool {
        self.tree_members(b).binary_search(&(i as u32)).is_ok()
    }

    /// Jackknife variance at one point. `Calibrated` needs a batch and is
    /// treated as `Corrected` here.
    pub fn variance_of_kind(&self, tree_predictions: &[f64], kind: VarianceKind) -> Result<f64> {
        match kind {
            VarianceKind::Raw => self.variance(tree_predictions),
            _ => Ok(self.debiased(tree_predictions)?.max(0.0)),
        }
    }

    /// Raw estimate minus its Monte Carlo bias; may be negative.
    pub fn debiased(&self, tree_predictions: &[f64]) -> Result<f64> {
        let raw = self.variance(tree_predictions)?;
        let b = tree_predictions.len() as f64;
        let mean = tree_predictions.iter().sum::<f64>() / b;
        let spread = tree_predictions.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / b;
        Ok(raw - correction_factor(self.n, self.s)? * self.inclusion_variance * spread / b)
    }

    /// Raw jackknife variance from per-tree estimates given in tree order.
    pub fn variance(&self, tree_predictions: &[f64]) -> Result<f64> {
        let b_count = self.num_trees();
        if tree_predictions.len() != b_count {
            return Err(GroveError::Parameter(format!(
                "{} tree predictions for {b_count} trees",
                tree_predictions.len()
            )));
        }
        if b_count < 2 {
            return Err(GroveError::Insufficient("jackknife variance needs at least 2 trees".into()));
        }
        let factor = correction_factor(self.n, self.s)?;
        let mean = tree_predictions.iter().sum::<f64>() / b_count as f64;
        // With centred predictions, Cov_b[t_b, N_ib] = mean_b[(t_b - mean) N_ib].
        let mut acc = vec![0.0; self.n];
        for (b, &t) in tree_predictions.iter().enumerate() {
            let centred = t - mean;
            for &i in self.tree_members(b) {
                acc[i as usize] += centred;
            }
        }
        let inv_b = 1.0 / b_count as f64;
        let sum_sq: f64 = acc.iter().map(|a| (a * inv_b) * (a * inv_b)).sum();
        Ok(factor * sum_sq)
    }
}

/// `(n - 1) / n * (n / (n - s))^2`; undefined when `s >= n`.
pub fn correction_factor(n: usize, s: usize) -> Result<f64> {
    if s >= n {
        return Err(GroveError::Unsupported(format!(
            "jackknife correction undefined for subsample size {s} >= n = {n}"
        )));
    }
    let (n, s) = (n as f64, s as f64);
    Ok((n - 1.0) / n * (n / (n - s)).powi(2))
}

/// Jackknife variance of `forest`'s prediction at `x`.
pub fn variance_ij(forest: &Forest, x: &[f64]) -> Result<f64> {
    MembershipMatrix::from_forest(forest).variance(&forest.tree_predictions(x))
}

/// Monte Carlo bias-corrected jackknife variance at `x`.
pub fn variance_ij_corrected(forest: &Forest, x: &[f64]) -> Result<f64> {
    MembershipMatrix::from_forest(forest).variance_of_kind(&forest.tree_predictions(x), VarianceKind::Corrected)
}

/// Fewest query points for which a batch is calibrated.
pub const MIN_CALIBRATION_POINTS: usize = 10;

/// Shrinks debiased variances toward their mean. `half` holds the same
/// estimates recomputed from the first half of the trees; their spread
/// around `full` measures the Monte Carlo noise of `full`.
pub fn calibrate_variances(full: &[f64], half: &[f64]) -> Vec<f64> {
    let m = full.len() as f64;
    let mean = full.iter().sum::<f64>() / m;
    let total = full.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
    let noise = full.iter().zip(half).map(|(f, h)| (f - h) * (f - h)).sum::<f64>() / m;
    let signal = (total - noise).max(0.0);
    let weight = if signal + noise > 0.0 { signal / (signal + noise) } else { 1.0 };
    full.iter().map(|v| (mean + weight * (v - mean)).max(0.0)).collect()
}

/// `sum (y - mean)^2 / (n (n - 1))`, the unbiased variance of a sample mean.
pub fn variance_simple(ys: &[f64]) -> Result<f64> {
    let n = ys.len();
    if n < 2 {
        return Err(GroveError::Insufficient("variance needs at least 2 values".into()));
    }
    let mean = ys.iter().sum::<f64>() / n as f64;
    let ss: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    Ok(ss / (n as f64 * (n as f64 - 1.0)))
}

/// Two-sided standard-normal quantile for coverage `level`.
pub fn z_value(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(GroveError::Parameter(format!("confidence level {level} outside (0, 1)")));
    }
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(normal.inverse_cdf(0.5 + level / 2.0))
}

pub fn confidence_interval(estimate: f64, variance: f64, level: f64) -> Result<(f64, f64)> {
    if variance.is_nan() || variance < 0.0 {
        return Err(GroveError::Parameter(format!("variance {variance} is negative")));
    }
    let half = z_value(level)? * variance.sqrt();
    Ok((estimate - half, estimate + half))
}

impl Forest {
    /// Point estimate, jackknife variance and interval for every query point.
    pub fn predict_with_ci(&self, xs: &[Vec<f64>], level: f64) -> Result<Vec<PredictionResult>> {
        self.predict_with_ci_exec(xs, level, Exec::default())
    }

    pub fn predict_with_ci_exec(&self, xs: &[Vec<f64>], level: f64, exec: Exec) -> Result<Vec<PredictionResult>> {
        self.predict_with_ci_using(xs, level, VarianceKind::default(), exec)
    }

    pub fn predict_with_ci_using(
        &self,
        xs: &[Vec<f64>],
        level: f64,
        kind: VarianceKind,
        exec: Exec,
    ) -> Result<Vec<PredictionResult>> {
        z_value(level)?;
        if self.num_trees() < self.n_train {
            log::warn!(
                "forest has {} trees for {} training rows; jackknife variance carries extra Monte Carlo noise",
                self.num_trees(),
                self.n_train
            );
        }
        let membership = MembershipMatrix::from_forest(self);
        let half_trees = self.num_trees() / 2;
        let calibrate = kind == VarianceKind::Calibrated && xs.len() >= MIN_CALIBRATION_POINTS && half_trees >= 2;
        if !calibrate {
            return exec.try_map(xs.len(), |i| {
                let preds = self.tree_predictions(&xs[i]);
                let estimate = preds.iter().sum::<f64>() / preds.len() as f64;
                PredictionResult::new(estimate, membership.variance_of_kind(&preds, kind)?, level)
            });
        }
        let half = MembershipMatrix::from_records(self.n_train, self.trees[..half_trees].iter().map(|t| &t.record));
        let per_point = exec.try_map(xs.len(), |i| {
            let preds = self.tree_predictions(&xs[i]);
            let estimate = preds.iter().sum::<f64>() / preds.len() as f64;
            Ok((estimate, membership.debiased(&preds)?, half.debiased(&preds[..half_trees])?))
        })?;
        let full: Vec<f64> = per_point.iter().map(|p| p.1).collect();
        let halves: Vec<f64> = per_point.iter().map(|p| p.2).collect();
        calibrate_variances(&full, &halves)
            .into_iter()
            .zip(&per_point)
            .map(|(variance, p)| PredictionResult::new(p.0, variance, level))
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// The forest of depth-0 trees over every size-`s` subsample, each exactly
/// once: the infinite-tree limit of a subsampled forest of trivial trees.
pub fn enumerate_exact_forest(data: &Dataset, s: usize) -> Result<Forest> {
    let n = data.n();
    if s == 0 || s > n {
        return Err(GroveError::Parameter(format!("subsample size {s} not in 1..={n}")));
    }
    let count = binomial(n, s);
    if count > EXACT_FOREST_BUDGET {
        return Err(GroveError::Unsupported(format!(
            "C({n}, {s}) = {count} subsamples exceeds budget {EXACT_FOREST_BUDGET}"
        )));
    }
    let mut trees = Vec::with_capacity(count as usize);
    let mut combo: Vec<usize> = (0..s).collect();
    loop {
        let record = SubsampleRecord {
            tree_index: trees.len(),
            indices: combo.clone(),
            i_half: Vec::new(),
            j_half: Vec::new(),
        };
        trees.push(Tree::trivial(data, record));
        // Next combination in lexicographic order.
        let mut pos = s;
        while pos > 0 && combo[pos - 1] == n - s + pos - 1 {
            pos -= 1;
        }
        if pos == 0 {
            break;
        }
        combo[pos - 1] += 1;
        for j in pos..s {
            combo[j] = combo[j - 1] + 1;
        }
    }
    let config = ForestConfig::new(ForestMode::RegressionDoubleSample, n)
        .with_trees(trees.len())
        .with_subsample_size(s);
    Ok(Forest::from_trees(config, n, trees))
}

/// Writes `x1..xd,estimate,variance,ci_low,ci_high`, plus a trailing
/// `method` column when `method` is given.
pub fn write_predictions_csv<W: Write>(
    writer: W,
    points: &[Vec<f64>],
    results: &[PredictionResult],
    method: Option<&str>,
) -> Result<()> {
    let d = points.first().map_or(0, Vec::len);
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (1..=d).map(|j| format!("x{j}")).collect();
    header.extend(["estimate", "variance", "ci_low", "ci_high"].map(String::from));
    if method.is_some() {
        header.push("method".into());
    }
    wtr.write_record(&header)?;
    for (x, r) in points.iter().zip(results) {
        let mut row: Vec<String> = x.iter().map(f64::to_string).collect();
        row.extend([r.estimate, r.variance, r.ci_low, r.ci_high].map(|v| v.to_string()));
        if let Some(m) = method {
            row.push(m.to_string());
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}
