//! Parameter grids of the benchmark tables and their desk-scale reduction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{run_cells, Metric, CellGroup, ExperimentCell, ForestSpec, Method, TestPoints};
use crate::config::ForestMode;
use crate::error::{GroveError, Result};
use crate::exec::Exec;
use crate::simgen::{Design, CORNER_DIM};

pub const TEST_POINT_NOTE: &str =
    "test points are fresh uniform draws on the unit cube, independent of the training data, redrawn per replicate";

const SMALLEST_SCALED_N: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TableId {
    T1,
    T2,
    T3,
    Grid,
    Dense,
    Honesty,
}

impl TableId {
    pub const ALL: [TableId; 6] = [TableId::T1, TableId::T2, TableId::T3, TableId::Grid, TableId::Dense, TableId::Honesty];

    pub fn as_str(self) -> &'static str {
        match self {
            TableId::T1 => "t1",
            TableId::T2 => "t2",
            TableId::T3 => "t3",
            TableId::Grid => "grid",
            TableId::Dense => "dense",
            TableId::Honesty => "honesty",
        }
    }

    /// Columns of the wide table layout.
    pub fn layout_metrics(self) -> &'static [Metric] {
        match self {
            TableId::Grid => &[Metric::Mse, Metric::Coverage, Metric::Variance],
            TableId::Honesty => &[Metric::Bias, Metric::Rmse, Metric::Coverage],
            _ => &[Metric::Mse, Metric::Coverage],
        }
    }

    /// Replications at full scale.
    pub fn replications(self) -> usize {
        match self {
            TableId::T1 => 500,
            TableId::T2 => 25,
            TableId::T3 => 40,
            TableId::Grid => 10,
            TableId::Dense => 20,
            TableId::Honesty => 40,
        }
    }
}

impl fmt::Display for TableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TableId {
    type Err = GroveError;

    fn from_str(s: &str) -> Result<Self> {
        TableId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| GroveError::Parameter(format!("unknown table '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScaledSize {
    pub replications: usize,
    pub n: usize,
    pub s: usize,
    pub num_trees: usize,
}

/// Reduces replications first. Only when fewer than two would remain is `n`
/// shrunk too (never below 200), with `s` kept in proportion and `B`
/// following `n` when `trees_equal_n`.
pub fn scale_size(replications: usize, n: usize, s: usize, num_trees: usize, trees_equal_n: bool, scale: f64) -> Result<ScaledSize> {
    if !(scale > 0.0 && scale <= 1.0) {
        return Err(GroveError::Parameter(format!("scale {scale} outside (0, 1]")));
    }
    let target = replications as f64 * scale;
    let reps = (target.round() as usize).max(2);
    if target >= 2.0 || n <= SMALLEST_SCALED_N {
        return Ok(ScaledSize { replications: reps, n, s, num_trees });
    }
    let n2 = ((n as f64 * target / 2.0).round() as usize).max(SMALLEST_SCALED_N);
    let s2 = ((s as f64 * n2 as f64 / n as f64).round() as usize).clamp(4.min(n2 - 1), n2 - 1);
    let trees = if trees_equal_n { n2 } else { num_trees };
    Ok(ScaledSize { replications: reps, n: n2, s: s2, num_trees: trees })
}

/// Subsample sizes of the honesty comparison: `n^0.8` adaptive, twice that honest.
pub fn honesty_subsample(n: usize, honest: bool) -> usize {
    let base = (n as f64).powf(0.8).round() as usize;
    if honest {
        2 * base
    } else {
        base
    }
}

const HONESTY_NS: [usize; 3] = [1000, 2500, 5000];
const HONESTY_TREES: usize = 500;

struct Layout {
    kind: fn(usize) -> Result<Design>,
    n: usize,
    s: usize,
    trees: usize,
    mode: ForestMode,
    knn: &'static [usize],
}

fn comparison_groups(table: TableId, layout: Layout, dims: &[usize], scale: f64) -> Result<Vec<CellGroup>> {
    let size = scale_size(table.replications(), layout.n, layout.s, layout.trees, false, scale)?;
    dims.iter()
        .enumerate()
        .map(|(row, &d)| {
            let mut methods = vec![Method::Forest(ForestSpec::new(layout.mode, size.num_trees, size.s))];
            methods.extend(layout.knn.iter().map(|&k| Method::Knn { k }));
            Ok(CellGroup::new((layout.kind)(d)?, size.n, methods, size.replications).with_row(row))
        })
        .collect()
}

/// The cell groups of `table` at `scale`.
pub fn table_cells(table: TableId, scale: f64) -> Result<Vec<CellGroup>> {
    const DIMS: [usize; 6] = [2, 3, 4, 5, 6, 8];
    match table {
        TableId::T1 => comparison_groups(
            table,
            Layout { kind: Design::confounded, n: 500, s: 50, trees: 1000, mode: ForestMode::Propensity, knn: &[10, 100] },
            &[2, 5, 10, 15, 20, 30],
            scale,
        ),
        TableId::T2 => comparison_groups(
            table,
            Layout { kind: Design::smooth, n: 5000, s: 2500, trees: 2000, mode: ForestMode::CausalDoubleSample, knn: &[7, 50] },
            &DIMS,
            scale,
        ),
        TableId::T3 => comparison_groups(
            table,
            Layout { kind: Design::spike, n: 10000, s: 2000, trees: 10000, mode: ForestMode::CausalDoubleSample, knn: &[10, 100] },
            &DIMS,
            scale,
        ),
        TableId::Grid => {
            const FRACTIONS: [f64; 6] = [0.1, 0.2, 0.25, 1.0 / 3.0, 0.5, 2.0 / 3.0];
            let mut groups = Vec::new();
            for n in [1000, 2000, 5000, 10000] {
                for d in DIMS {
                    for frac in FRACTIONS {
                        let s = (n as f64 * frac).round() as usize;
                        let size = scale_size(table.replications(), n, s, n, true, scale)?;
                        let spec = ForestSpec::new(ForestMode::CausalDoubleSample, size.num_trees, size.s);
                        let row = groups.len();
                        groups.push(CellGroup::new(Design::smooth(d)?, size.n, vec![Method::Forest(spec)], size.replications).with_row(row));
                    }
                }
            }
            Ok(groups)
        }
        TableId::Dense => {
            let size = scale_size(table.replications(), 5000, 2500, 2000, false, scale)?;
            [(2, 6), (4, 6), (6, 6), (2, 12), (4, 12), (6, 12)]
                .into_iter()
                .enumerate()
                .map(|(row, (q, d))| {
                    let methods = vec![
                        Method::Forest(ForestSpec::new(ForestMode::CausalDoubleSample, size.num_trees, size.s)),
                        Method::Knn { k: 10 },
                        Method::Knn { k: 100 },
                    ];
                    Ok(CellGroup::new(Design::dense(d, q)?, size.n, methods, size.replications).with_row(row))
                })
                .collect()
        }
        TableId::Honesty => honesty_groups(&HONESTY_NS, table.replications(), HONESTY_TREES, scale),
    }
}

fn honesty_groups(ns: &[usize], replications: usize, trees: usize, scale: f64) -> Result<Vec<CellGroup>> {
    ns.iter()
        .enumerate()
        .map(|(row, &n)| {
            let size = scale_size(replications, n, 0, trees, false, scale)?;
            let methods = vec![
                Method::Forest(ForestSpec::new(ForestMode::CausalDoubleSample, trees, honesty_subsample(size.n, true))),
                Method::Forest(ForestSpec::new(ForestMode::CausalAdaptive, trees, honesty_subsample(size.n, false))),
            ];
            Ok(CellGroup::new(Design::corner(), size.n, methods, size.replications)
                .with_test_points(TestPoints::Fixed(vec![vec![0.0; CORNER_DIM]]))
                .with_row(row))
        })
        .collect()
}

/// Honest and adaptive causal forests predicting at the origin of the corner
/// design, one row per `n`.
pub fn run_honesty(ns: &[usize], replications: usize, trees: usize, seed: u64, exec: Exec) -> Result<Vec<ExperimentCell>> {
    let mut cells = Vec::new();
    for group in honesty_groups(ns, replications, trees, 1.0)? {
        cells.extend(run_cells(&group, seed, exec)?);
    }
    Ok(cells)
}

pub fn run_table(table: TableId, scale: f64, seed: u64, exec: Exec) -> Result<Vec<ExperimentCell>> {
    let mut cells = Vec::new();
    for group in table_cells(table, scale)? {
        log::info!("{table} row {}: {} n={} d={}", group.row, group.design.name(), group.n, group.design.d);
        cells.extend(run_cells(&group, seed, exec)?);
    }
    Ok(cells)
}
