//! CSV and JSON writers for experiment results.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::ExperimentCell;
use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mse,
    Coverage,
    Variance,
    Bias,
    Rmse,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mse => "mse",
            Metric::Coverage => "coverage",
            Metric::Variance => "variance",
            Metric::Bias => "bias",
            Metric::Rmse => "rmse",
        }
    }

    pub fn of(self, cell: &ExperimentCell) -> f64 {
        match self {
            Metric::Mse => cell.mse,
            Metric::Coverage => cell.coverage,
            Metric::Variance => cell.mean_variance,
            Metric::Bias => cell.bias,
            Metric::Rmse => cell.rmse(),
        }
    }
}

/// Run-level provenance written next to the per-cell results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub tool_version: String,
    pub experiment: String,
    pub scale: f64,
    pub seed: u64,
    pub parallel: bool,
    pub threads: usize,
    pub started_unix_seconds: u64,
    pub elapsed_seconds: f64,
    pub rng: String,
    pub test_points: String,
    pub notes: Vec<String>,
}

impl RunMetadata {
    pub fn new(experiment: &str, scale: f64, seed: u64) -> Self {
        let started = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        RunMetadata {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: experiment.to_string(),
            scale,
            seed,
            parallel: crate::exec::Exec::default().is_parallel(),
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            started_unix_seconds: started,
            elapsed_seconds: 0.0,
            rng: "ChaCha20; replicate r uses the replicate domain, stream r; tree b uses the tree domain, stream b".into(),
            test_points: super::TEST_POINT_NOTE.into(),
            notes: Vec::new(),
        }
    }
}

pub fn write_metadata<W: Write>(writer: W, meta: &RunMetadata) -> Result<()> {
    serde_json::to_writer_pretty(writer, meta)?;
    Ok(())
}

/// One row per cell with every [`ExperimentCell`] field.
pub fn write_cells_csv<W: Write>(writer: W, cells: &[ExperimentCell]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for cell in cells {
        wtr.serialize(cell)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Wide layout: one line per table row, then for each metric one column
/// per method, in the order methods first appear.
pub fn write_table_layout<W: Write>(writer: W, cells: &[ExperimentCell], metrics: &[Metric]) -> Result<()> {
    let mut methods: Vec<&str> = Vec::new();
    let mut rows: Vec<usize> = Vec::new();
    for c in cells {
        if !methods.contains(&c.method.as_str()) {
            methods.push(&c.method);
        }
        if !rows.contains(&c.row) {
            rows.push(c.row);
        }
    }
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["design", "n", "d", "q", "s", "B"].map(String::from).to_vec();
    for m in metrics {
        header.extend(methods.iter().map(|meth| format!("{meth}_{}", m.as_str())));
    }
    wtr.write_record(&header)?;
    let opt = |v: Option<usize>| v.map_or(String::new(), |v| v.to_string());
    for row in rows {
        let in_row: Vec<&ExperimentCell> = cells.iter().filter(|c| c.row == row).collect();
        let first = in_row[0];
        let forest = in_row.iter().find(|c| c.s.is_some()).unwrap_or(&first);
        let mut record = vec![
            first.design.clone(),
            first.n.to_string(),
            first.d.to_string(),
            opt(first.q),
            opt(forest.s),
            opt(forest.b),
        ];
        for m in metrics {
            for meth in &methods {
                record.push(in_row.iter().find(|c| c.method == *meth).map_or(String::new(), |c| m.of(c).to_string()));
            }
        }
        wtr.write_record(&record)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cell(row: usize, method: &str, mse: f64, s: Option<usize>) -> ExperimentCell {
        ExperimentCell {
            row,
            design: "smooth".into(),
            n: 100,
            d: 2 + row,
            q: None,
            s,
            b: s.map(|_| 50),
            k: 1,
            method: method.into(),
            replications: 2,
            failed: 0,
            mse,
            mse_se: 0.0,
            coverage: 0.9,
            coverage_se: 0.0,
            mean_variance: 0.1,
            bias: 0.0,
            bias_se: 0.0,
        }
    }

    #[test]
    fn layout_pivots_methods_into_columns() {
        let cells = vec![
            cell(0, "cf", 0.1, Some(50)),
            cell(0, "knn-10", 0.2, None),
            cell(1, "cf", 0.3, Some(50)),
            cell(1, "knn-10", 0.4, None),
        ];
        let mut buf = Vec::new();
        write_table_layout(&mut buf, &cells, &[Metric::Mse, Metric::Coverage]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "design,n,d,q,s,B,cf_mse,knn-10_mse,cf_coverage,knn-10_coverage");
        assert_eq!(lines[1], "smooth,100,2,,50,50,0.1,0.2,0.9,0.9");
        assert_eq!(lines.len(), 3);
    }

    #[test]
    fn cells_csv_has_all_fields() {
        let mut buf = Vec::new();
        write_cells_csv(&mut buf, &[cell(0, "cf", 0.1, Some(50))]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(
            "row,design,n,d,q,s,B,k,method,replications,failed,mse,mse_se,coverage,coverage_se,mean_variance,bias,bias_se\n"
        ));
    }

    #[test]
    fn metadata_is_json() {
        let mut buf = Vec::new();
        write_metadata(&mut buf, &RunMetadata::new("t1", 0.1, 7)).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(v["experiment"], "t1");
    }
}
