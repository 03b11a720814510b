//! Replicated simulation experiments.
//!
//! A replicate draws its test points, then its training data, then a forest
//! seed, all from `derive_stream_in(REPLICATE_DOMAIN, seed, r)`. Every method
//! in a [`CellGroup`] sees the same replicate data, so methods are compared on
//! paired samples, and results never depend on scheduling.

mod output;
mod qq;
mod tables;

pub use output::{write_cells_csv, write_metadata, write_table_layout, Metric, RunMetadata};
pub use qq::{qq_diagnostic, write_qq_csv, QqPair, QqReport};
pub use tables::{
    honesty_subsample, run_honesty, run_table, scale_size, table_cells, ScaledSize, TableId, TEST_POINT_NOTE,
};

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::baselines::KnnMatcher;
use crate::config::{ForestConfig, ForestMode, DEFAULT_ALPHA, DEFAULT_MIN_LEAF, DEFAULT_PI};
use crate::error::{GroveError, Result};
use crate::exec::Exec;
use crate::forest::Forest;
use crate::inference::{PredictionResult, VarianceKind, DEFAULT_CI_LEVEL};
use crate::sampling::{derive_stream_in, RandomStream, REPLICATE_DOMAIN};
use crate::simgen::Design;

/// Fresh test points drawn per replicate unless stated otherwise.
pub const DEFAULT_TEST_POINTS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestSpec {
    pub mode: ForestMode,
    pub num_trees: usize,
    pub subsample_size: usize,
    pub min_leaf: usize,
    pub alpha: f64,
    pub pi: f64,
    #[serde(default)]
    pub variance: VarianceKind,
}

impl ForestSpec {
    /// Default `alpha`, `pi` and a minimum leaf size of 1.
    pub fn new(mode: ForestMode, num_trees: usize, subsample_size: usize) -> Self {
        ForestSpec { mode, num_trees, subsample_size, min_leaf: DEFAULT_MIN_LEAF, alpha: DEFAULT_ALPHA, pi: DEFAULT_PI, variance: VarianceKind::default() }
    }

    pub fn with_min_leaf(mut self, k: usize) -> Self {
        self.min_leaf = k;
        self
    }

    pub fn config(&self, n: usize, seed: u64) -> ForestConfig {
        ForestConfig::new(self.mode, n)
            .with_trees(self.num_trees)
            .with_subsample_size(self.subsample_size)
            .with_min_leaf(self.min_leaf)
            .with_alpha(self.alpha)
            .with_pi(self.pi)
            .with_seed(seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Method {
    Forest(ForestSpec),
    Knn { k: usize },
    /// Returns the true effect with a fixed variance; checks the plumbing.
    Oracle { variance: f64 },
    /// Returns a constant with a fixed variance.
    Constant { value: f64, variance: f64 },
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Forest(f) => f.mode.to_string(),
            Method::Knn { k } => format!("knn-{k}"),
            Method::Oracle { .. } => "oracle".into(),
            Method::Constant { .. } => "constant".into(),
        }
    }

    fn check(&self) -> Result<()> {
        match self {
            Method::Knn { k } if *k < 2 => Err(GroveError::Parameter("k-NN intervals need k >= 2".into())),
            Method::Oracle { variance } | Method::Constant { variance, .. } if variance.is_nan() || *variance < 0.0 => {
                Err(GroveError::Parameter(format!("variance {variance} is negative")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestPoints {
    /// This many fresh uniform draws per replicate.
    Random(usize),
    /// The same points in every replicate.
    Fixed(Vec<Vec<f64>>),
}

/// Several methods evaluated on shared replicates of one design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellGroup {
    pub design: Design,
    pub n: usize,
    pub methods: Vec<Method>,
    pub replications: usize,
    pub test_points: TestPoints,
    pub ci_level: f64,
    /// Row of the table this group belongs to.
    pub row: usize,
}

impl CellGroup {
    pub fn new(design: Design, n: usize, methods: Vec<Method>, replications: usize) -> Self {
        CellGroup {
            design,
            n,
            methods,
            replications,
            test_points: TestPoints::Random(DEFAULT_TEST_POINTS),
            ci_level: DEFAULT_CI_LEVEL,
            row: 0,
        }
    }

    pub fn with_test_points(mut self, test_points: TestPoints) -> Self {
        self.test_points = test_points;
        self
    }

    pub fn with_row(mut self, row: usize) -> Self {
        self.row = row;
        self
    }
}

/// Aggregate performance of one method on one design over replicates.
/// Standard errors are the across-replicate SD over `sqrt(R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentCell {
    pub row: usize,
    pub design: String,
    pub n: usize,
    pub d: usize,
    pub q: Option<usize>,
    pub s: Option<usize>,
    #[serde(rename = "B")]
    pub b: Option<usize>,
    pub k: usize,
    pub method: String,
    pub replications: usize,
    pub failed: usize,
    pub mse: f64,
    pub mse_se: f64,
    pub coverage: f64,
    pub coverage_se: f64,
    pub mean_variance: f64,
    /// Mean of `estimate - tau` over test points and replicates.
    pub bias: f64,
    pub bias_se: f64,
}

impl ExperimentCell {
    pub fn rmse(&self) -> f64 {
        self.mse.sqrt()
    }
}

/// Per-replicate summary of one method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateOutcome {
    pub mse: f64,
    pub coverage: f64,
    pub mean_variance: f64,
    pub bias: f64,
}

impl ReplicateOutcome {
    pub fn from_predictions(predictions: &[PredictionResult], truth: &[f64]) -> ReplicateOutcome {
        let m = predictions.len() as f64;
        let (mut se, mut hits, mut var, mut bias) = (0.0, 0usize, 0.0, 0.0);
        for (p, &t) in predictions.iter().zip(truth) {
            let err = p.estimate - t;
            se += err * err;
            bias += err;
            var += p.variance;
            hits += p.covers(t) as usize;
        }
        ReplicateOutcome { mse: se / m, coverage: hits as f64 / m, mean_variance: var / m, bias: bias / m }
    }
}

/// Mean and standard error (sample SD over `sqrt(len)`); NaN where undefined.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let r = values.len();
    if r == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / r as f64;
    if r < 2 {
        return (mean, f64::NAN);
    }
    let ss: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum();
    (mean, (ss / (r as f64 - 1.0)).sqrt() / (r as f64).sqrt())
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    method: &Method,
    design: &Design,
    data: &crate::dataset::Dataset,
    knn: &Option<KnnMatcher<'_>>,
    points: &[Vec<f64>],
    forest_seed: u64,
    level: f64,
    exec: Exec,
) -> Result<Vec<PredictionResult>> {
    match method {
        Method::Forest(spec) => {
            let forest = Forest::train_with(data, &spec.config(data.n(), forest_seed), exec)?;
            forest.predict_with_ci_using(points, level, spec.variance, exec)
        }
        Method::Knn { k } => {
            let matcher = knn.as_ref().expect("matcher built for k-NN methods");
            points.iter().map(|x| matcher.estimate(x, *k)?.to_prediction(level)).collect()
        }
        Method::Oracle { variance } => {
            points.iter().map(|x| PredictionResult::new(design.tau(x), *variance, level)).collect()
        }
        Method::Constant { value, variance } => {
            points.iter().map(|_| PredictionResult::new(*value, *variance, level)).collect()
        }
    }
}

fn run_replicate(group: &CellGroup, seed: u64, r: usize, exec: Exec) -> Result<Vec<Result<ReplicateOutcome>>> {
    let mut stream: RandomStream = derive_stream_in(REPLICATE_DOMAIN, seed, r as u64);
    let points = match &group.test_points {
        TestPoints::Random(m) => group.design.draw_points(*m, &mut stream),
        TestPoints::Fixed(p) => p.clone(),
    };
    let truth: Vec<f64> = points.iter().map(|x| group.design.tau(x)).collect();
    let (data, _) = group.design.generate(group.n, &mut stream)?;
    let forest_seed = stream.next_u64();
    let knn = if group.methods.iter().any(|m| matches!(m, Method::Knn { .. })) {
        Some(KnnMatcher::new(&data)?)
    } else {
        None
    };
    Ok(group
        .methods
        .iter()
        .map(|method| {
            let preds = evaluate(method, &group.design, &data, &knn, &points, forest_seed, group.ci_level, exec)?;
            Ok(ReplicateOutcome::from_predictions(&preds, &truth))
        })
        .collect())
}

/// Per-method, per-replicate outcomes: `result[method][replicate]`.
pub fn run_replicates(group: &CellGroup, seed: u64, exec: Exec) -> Result<Vec<Vec<Result<ReplicateOutcome>>>> {
    for m in &group.methods {
        m.check()?;
    }
    if let TestPoints::Fixed(p) = &group.test_points {
        if p.iter().any(|x| x.len() != group.design.d) {
            return Err(GroveError::Parameter("test point dimension does not match the design".into()));
        }
    }
    let per_rep = exec.try_map(group.replications, |r| run_replicate(group, seed, r, exec))?;
    let mut by_method: Vec<Vec<Result<ReplicateOutcome>>> = group.methods.iter().map(|_| Vec::new()).collect();
    for rep in per_rep {
        for (slot, outcome) in by_method.iter_mut().zip(rep) {
            slot.push(outcome);
        }
    }
    Ok(by_method)
}

/// Runs every method of `group`; failed replicates are logged, counted and
/// left out of the aggregates.
pub fn run_cells(group: &CellGroup, seed: u64, exec: Exec) -> Result<Vec<ExperimentCell>> {
    let outcomes = run_replicates(group, seed, exec)?;
    Ok(group
        .methods
        .iter()
        .zip(outcomes)
        .map(|(method, reps)| {
            let mut ok = Vec::with_capacity(reps.len());
            let mut failed = 0;
            for (r, rep) in reps.into_iter().enumerate() {
                match rep {
                    Ok(o) => ok.push(o),
                    Err(e) => {
                        log::warn!("{} replicate {r} failed: {e}", method.label());
                        failed += 1;
                    }
                }
            }
            aggregate(group, method, &ok, failed)
        })
        .collect())
}

/// Single-method convenience wrapper around [`run_cells`].
pub fn run_cell(design: Design, n: usize, method: Method, replications: usize, seed: u64) -> Result<ExperimentCell> {
    let group = CellGroup::new(design, n, vec![method], replications);
    Ok(run_cells(&group, seed, Exec::default())?.remove(0))
}

fn aggregate(group: &CellGroup, method: &Method, ok: &[ReplicateOutcome], failed: usize) -> ExperimentCell {
    let col = |f: fn(&ReplicateOutcome) -> f64| mean_and_se(&ok.iter().map(f).collect::<Vec<_>>());
    let (mse, mse_se) = col(|o| o.mse);
    let (coverage, coverage_se) = col(|o| o.coverage);
    let (mean_variance, _) = col(|o| o.mean_variance);
    let (bias, bias_se) = col(|o| o.bias);
    let (s, b, k) = match method {
        Method::Forest(f) => (Some(f.subsample_size), Some(f.num_trees), f.min_leaf),
        Method::Knn { k } => (None, None, *k),
        _ => (None, None, 0),
    };
    let design = &group.design;
    ExperimentCell {
        row: group.row,
        design: design.name().to_string(),
        n: group.n,
        d: design.d,
        q: (design.kind == crate::simgen::DesignKind::Dense).then_some(design.q),
        s,
        b,
        k,
        method: method.label(),
        replications: ok.len() + failed,
        failed,
        mse,
        mse_se,
        coverage,
        coverage_se,
        mean_variance,
        bias,
        bias_se,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_group(methods: Vec<Method>) -> CellGroup {
        CellGroup::new(Design::smooth(2).unwrap(), 120, methods, 3).with_test_points(TestPoints::Random(40))
    }

    #[test]
    fn oracle_has_zero_error_and_full_coverage() {
        for variance in [1.0, 0.0] {
            let cells = run_cells(&small_group(vec![Method::Oracle { variance }]), 1, Exec::Sequential).unwrap();
            let c = &cells[0];
            assert_eq!(c.mse, 0.0);
            assert_eq!(c.coverage, 1.0);
            assert_eq!(c.mean_variance, variance);
            assert_eq!(c.failed, 0);
            assert_eq!(c.replications, 3);
        }
    }

    #[test]
    fn replicates_are_deterministic_and_backend_free() {
        let spec = ForestSpec::new(ForestMode::CausalDoubleSample, 20, 40);
        let group = small_group(vec![Method::Forest(spec), Method::Knn { k: 5 }]);
        let a = run_cells(&group, 7, Exec::Sequential).unwrap();
        let b = run_cells(&group, 7, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].method, "causal_double_sample");
        assert_eq!(a[1].method, "knn-5");
        assert_eq!(a[0].s, Some(40));
        assert_eq!(a[1].b, None);
        let c = run_cells(&group, 8, Exec::Sequential).unwrap();
        assert_ne!(a[0].mse, c[0].mse);
    }

    #[test]
    fn constant_predictor_mse_is_mean_squared_effect() {
        // E[tau^2] = E[f(U)^2]^2 for the smooth design, f(u) = 1 + sigmoid(20 (u - 1/3)).
        let m = 200_000;
        let f2: f64 = (0..m)
            .map(|i| {
                let u = (i as f64 + 0.5) / m as f64;
                let f = 1.0 + 1.0 / (1.0 + (-20.0 * (u - 1.0 / 3.0)).exp());
                f * f
            })
            .sum::<f64>()
            / m as f64;
        let expected = f2 * f2;
        let group = CellGroup::new(Design::smooth(2).unwrap(), 10, vec![Method::Constant { value: 0.0, variance: 1.0 }], 40)
            .with_test_points(TestPoints::Random(1000));
        let c = &run_cells(&group, 3, Exec::default()).unwrap()[0];
        assert!((c.mse - expected).abs() < 4.0 * c.mse_se + 1e-3, "{} vs {expected} (se {})", c.mse, c.mse_se);
    }

    #[test]
    fn gaussian_oracle_coverage_is_nominal() {
        // Estimates are tau + N(0, 1) noise reported with variance 1.
        let level = 0.9;
        let mut s = derive_stream_in(REPLICATE_DOMAIN, 99, 0);
        let m = 20_000;
        let preds: Vec<PredictionResult> =
            (0..m).map(|_| PredictionResult::new(s.standard_normal(), 1.0, level).unwrap()).collect();
        let o = ReplicateOutcome::from_predictions(&preds, &vec![0.0; m]);
        let se = (level * (1.0 - level) / m as f64).sqrt();
        assert!((o.coverage - level).abs() < 4.0 * se, "{}", o.coverage);
    }

    #[test]
    fn failed_replicates_are_counted() {
        // Subsample larger than n fails in every replicate.
        let spec = ForestSpec::new(ForestMode::Propensity, 5, 500);
        let c = &run_cells(&small_group(vec![Method::Forest(spec)]), 1, Exec::Sequential).unwrap()[0];
        assert_eq!(c.failed, 3);
        assert!(c.mse.is_nan());
    }

    #[test]
    fn invalid_methods_are_rejected() {
        assert!(run_cells(&small_group(vec![Method::Knn { k: 1 }]), 1, Exec::Sequential).is_err());
        assert!(run_cells(&small_group(vec![Method::Oracle { variance: -1.0 }]), 1, Exec::Sequential).is_err());
    }

    #[test]
    fn mean_and_se_values() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0).sqrt() / 2.0).abs() < 1e-15);
        assert!(mean_and_se(&[1.0]).1.is_nan());
        assert!(mean_and_se(&[]).0.is_nan());
    }
}
