//! Normality of forest predictions across independent training sets.

use std::io::Write;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::ForestSpec;
use crate::error::{GroveError, Result};
use crate::exec::Exec;
use crate::forest::Forest;
use crate::sampling::{derive_stream_in, REPLICATE_DOMAIN};
use crate::simgen::Design;

/// Stream index reserved for the shared test points.
const TEST_POINT_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPair {
    pub theoretical: f64,
    pub sample: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqReport {
    pub pairs: Vec<QqPair>,
    /// Pearson correlation of the pairs.
    pub correlation: f64,
    pub skewness: f64,
    pub num_training_sets: usize,
    pub num_test_points: usize,
    /// Test points whose predictions did not vary and were left out.
    pub constant_points: usize,
}

/// Trains one forest per training set, standardises each test point's
/// predictions by their mean and SD across sets, and pools the results.
pub fn qq_diagnostic(
    design: &Design,
    n: usize,
    forest: &ForestSpec,
    num_training_sets: usize,
    num_test_points: usize,
    seed: u64,
    exec: Exec,
) -> Result<QqReport> {
    if num_training_sets < 10 {
        return Err(GroveError::Parameter(format!("need at least 10 training sets, got {num_training_sets}")));
    }
    let points = design.draw_points(num_test_points, &mut derive_stream_in(REPLICATE_DOMAIN, seed, TEST_POINT_STREAM));
    let predictions = exec.try_map(num_training_sets, |r| {
        let mut stream = derive_stream_in(REPLICATE_DOMAIN, seed, r as u64);
        let (data, _) = design.generate(n, &mut stream)?;
        let cfg = forest.config(n, stream.next_u64());
        Ok(Forest::train_with(&data, &cfg, exec)?.predict_batch_with(&points, exec))
    })?;

    let sets = num_training_sets as f64;
    let mut pooled = Vec::with_capacity(num_training_sets * num_test_points);
    let mut constant_points = 0;
    for j in 0..num_test_points {
        let mean = predictions.iter().map(|p| p[j]).sum::<f64>() / sets;
        let var = predictions.iter().map(|p| (p[j] - mean).powi(2)).sum::<f64>() / sets;
        if var <= 0.0 {
            constant_points += 1;
            continue;
        }
        let sd = var.sqrt();
        pooled.extend(predictions.iter().map(|p| (p[j] - mean) / sd));
    }
    if pooled.len() < 3 {
        return Err(GroveError::Insufficient("predictions did not vary across training sets".into()));
    }
    pooled.sort_by(f64::total_cmp);
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let m = pooled.len() as f64;
    let pairs: Vec<QqPair> = pooled
        .iter()
        .enumerate()
        .map(|(i, &sample)| QqPair { theoretical: normal.inverse_cdf((i as f64 + 0.5) / m), sample })
        .collect();
    let theoretical: Vec<f64> = pairs.iter().map(|p| p.theoretical).collect();
    Ok(QqReport {
        correlation: correlation(&theoretical, &pooled),
        skewness: skewness(&pooled),
        pairs,
        num_training_sets,
        num_test_points,
        constant_points,
    })
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let m = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / m, b.iter().sum::<f64>() / m);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Moment skewness `m3 / m2^(3/2)`.
fn skewness(v: &[f64]) -> f64 {
    let m = v.len() as f64;
    let mean = v.iter().sum::<f64>() / m;
    let m2 = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / m;
    let m3 = v.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / m;
    m3 / m2.powf(1.5)
}

pub fn write_qq_csv<W: Write>(writer: W, report: &QqReport) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for pair in &report.pairs {
        wtr.serialize(pair)?;
    }
    wtr.flush()?;
    Ok(())
}
