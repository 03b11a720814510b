//! k-nearest-neighbour matching: the difference between the mean response
//! of the `k` closest treated and the `k` closest control rows.
//!
//! Distances are Euclidean on raw coordinates. Ties are broken by a
//! canonical row order, rows sorted by `(x lexicographic, y, w)`, so the
//! result does not depend on the order of rows in the dataset.

use std::cmp::Ordering;

use crate::dataset::Dataset;
use crate::error::{GroveError, Result};
use crate::inference::PredictionResult;

#[derive(Debug, Clone, PartialEq)]
pub struct KnnEstimate {
    pub estimate: f64,
    /// `(V(S_0) + V(S_1)) / (k (k - 1))` with `V` the within-set sum of
    /// squares; `None` when `k < 2`.
    pub variance: Option<f64>,
    /// Training-row indices, nearest first.
    pub neighbors_treated: Vec<usize>,
    pub neighbors_control: Vec<usize>,
}

impl KnnEstimate {
    pub fn to_prediction(&self, level: f64) -> Result<PredictionResult> {
        let variance = self
            .variance
            .ok_or_else(|| GroveError::Insufficient("k-NN variance needs k >= 2".into()))?;
        PredictionResult::new(self.estimate, variance, level)
    }
}

/// Precomputed canonical order of a dataset, reusable across queries.
#[derive(Debug, Clone)]
pub struct KnnMatcher<'a> {
    data: &'a Dataset,
    /// Training rows of each arm, each in canonical order.
    treated: Vec<usize>,
    control: Vec<usize>,
}

fn canonical_cmp(data: &Dataset, a: usize, b: usize) -> Ordering {
    let (sa, sb) = (data.sample(a), data.sample(b));
    sa.x.iter()
        .zip(&sb.x)
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
        .then(sa.y.total_cmp(&sb.y))
        .then(sa.w.cmp(&sb.w))
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

impl<'a> KnnMatcher<'a> {
    pub fn new(data: &'a Dataset) -> Result<Self> {
        if !data.has_treatment() {
            return Err(GroveError::Insufficient("k-NN matching needs a treatment column".into()));
        }
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.sort_by(|&a, &b| canonical_cmp(data, a, b));
        let (treated, control) = order.into_iter().partition(|&i| data.sample(i).treated());
        Ok(KnnMatcher { data, treated, control })
    }

    /// The `k` rows of `arm` nearest to `x`, ordered by (distance, canonical rank).
    fn nearest(&self, arm: &[usize], x: &[f64], k: usize) -> Vec<usize> {
        let mut cands: Vec<(f64, usize)> = arm
            .iter()
            .enumerate()
            .map(|(rank, &i)| (squared_distance(&self.data.sample(i).x, x), rank))
            .collect();
        let by_key = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < cands.len() {
            cands.select_nth_unstable_by(k - 1, by_key);
            cands.truncate(k);
        }
        cands.sort_unstable_by(by_key);
        cands.into_iter().map(|(_, rank)| arm[rank]).collect()
    }

    pub fn estimate(&self, x: &[f64], k: usize) -> Result<KnnEstimate> {
        if k == 0 {
            return Err(GroveError::Parameter("k must be positive".into()));
        }
        if x.len() != self.data.d() {
            return Err(GroveError::Parameter(format!(
                "query has {} features, data has {}",
                x.len(),
                self.data.d()
            )));
        }
        if self.treated.len() < k || self.control.len() < k {
            return Err(GroveError::Insufficient(format!(
                "k = {k} needs k rows per arm, have {} treated and {} control",
                self.treated.len(),
                self.control.len()
            )));
        }
        let neighbors_treated = self.nearest(&self.treated, x, k);
        let neighbors_control = self.nearest(&self.control, x, k);
        let (mean_t, ss_t) = self.mean_and_ss(&neighbors_treated);
        let (mean_c, ss_c) = self.mean_and_ss(&neighbors_control);
        let variance = (k >= 2).then(|| (ss_t + ss_c) / (k as f64 * (k as f64 - 1.0)));
        Ok(KnnEstimate { estimate: mean_t - mean_c, variance, neighbors_treated, neighbors_control })
    }

    fn mean_and_ss(&self, rows: &[usize]) -> (f64, f64) {
        let k = rows.len() as f64;
        let mean = rows.iter().map(|&i| self.data.sample(i).y).sum::<f64>() / k;
        let ss = rows.iter().map(|&i| (self.data.sample(i).y - mean).powi(2)).sum();
        (mean, ss)
    }
}

/// One-off k-NN estimate at `x`; build a [`KnnMatcher`] for many queries.
pub fn knn_estimate(data: &Dataset, x: &[f64], k: usize) -> Result<KnnEstimate> {
    KnnMatcher::new(data)?.estimate(x, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Sample;
    use crate::sampling::derive_stream;

    fn random_data(n: usize, seed: u64, grid: bool) -> Dataset {
        let mut s = derive_stream(seed, 77);
        let samples = (0..n)
            .map(|i| {
                let mut coord = || if grid { s.below(4) as f64 / 4.0 } else { s.uniform() };
                let x = vec![coord(), coord()];
                let w = i < 2 || (i >= 4 && s.bernoulli(0.5));
                let w = if i == 2 || i == 3 { false } else { w };
                Sample::new(x, s.standard_normal(), Some(w))
            })
            .collect();
        Dataset::new(samples).unwrap()
    }

    /// Full sort by distance, then by canonical rank.
    fn oracle(data: &Dataset, x: &[f64], k: usize) -> (Vec<usize>, Vec<usize>, f64) {
        let mut order: Vec<usize> = (0..data.n()).collect();
        order.sort_by(|&a, &b| canonical_cmp(data, a, b));
        let rank: Vec<usize> = {
            let mut r = vec![0; data.n()];
            for (pos, &i) in order.iter().enumerate() {
                r[i] = pos;
            }
            r
        };
        let pick = |treated: bool| {
            let mut rows: Vec<usize> = (0..data.n()).filter(|&i| data.sample(i).treated() == treated).collect();
            rows.sort_by(|&a, &b| {
                squared_distance(&data.sample(a).x, x)
                    .total_cmp(&squared_distance(&data.sample(b).x, x))
                    .then(rank[a].cmp(&rank[b]))
            });
            rows.truncate(k);
            rows
        };
        let (t, c) = (pick(true), pick(false));
        let mean = |rows: &[usize]| rows.iter().map(|&i| data.sample(i).y).sum::<f64>() / k as f64;
        let est = mean(&t) - mean(&c);
        (t, c, est)
    }

    #[test]
    fn one_neighbour_each() {
        let d = Dataset::new(vec![
            Sample::new(vec![0.1], 1.0, Some(true)),
            Sample::new(vec![0.9], 0.0, Some(false)),
        ])
        .unwrap();
        let e = knn_estimate(&d, &[0.5], 1).unwrap();
        assert_eq!(e.estimate, 1.0);
        assert_eq!(e.variance, None);
        assert!(e.to_prediction(0.95).is_err());
    }

    #[test]
    fn constant_responses() {
        let samples = (0..12).map(|i| Sample::new(vec![i as f64 / 12.0], if i % 2 == 0 { 3.0 } else { 1.25 }, Some(i % 2 == 0))).collect();
        let d = Dataset::new(samples).unwrap();
        let e = knn_estimate(&d, &[0.4], 4).unwrap();
        assert_eq!(e.estimate, 1.75);
        assert_eq!(e.variance, Some(0.0));
    }

    #[test]
    fn variance_is_sum_of_arm_mean_variances() {
        let samples = vec![
            Sample::new(vec![0.0], 1.0, Some(true)),
            Sample::new(vec![0.1], 3.0, Some(true)),
            Sample::new(vec![0.0], 0.0, Some(false)),
            Sample::new(vec![0.1], 4.0, Some(false)),
        ];
        let e = knn_estimate(&Dataset::new(samples).unwrap(), &[0.0], 2).unwrap();
        // Per-arm sample variances 2 and 8, each divided by k = 2.
        assert_eq!(e.estimate, 0.0);
        assert_eq!(e.variance, Some(5.0));
    }

    #[test]
    fn insufficient_arm_is_an_error() {
        let d = random_data(10, 1, false);
        let treated = d.count_treated();
        assert!(matches!(knn_estimate(&d, &[0.5, 0.5], treated.max(10 - treated) + 1), Err(GroveError::Insufficient(_))));
        assert!(knn_estimate(&d, &[0.5], 1).is_err());
        let no_w = Dataset::new(vec![Sample::new(vec![0.0], 1.0, None)]).unwrap();
        assert!(knn_estimate(&no_w, &[0.0], 1).is_err());
    }

    #[test]
    fn matches_sorting_oracle() {
        for seed in 0..30 {
            let grid = seed % 2 == 0;
            let d = random_data(20, seed, grid);
            let mut s = derive_stream(seed, 5);
            let x = vec![s.uniform(), s.uniform()];
            for k in [1, 2, 3] {
                let e = knn_estimate(&d, &x, k).unwrap();
                let (t, c, est) = oracle(&d, &x, k);
                assert_eq!(e.neighbors_treated, t);
                assert_eq!(e.neighbors_control, c);
                assert_eq!(e.estimate.to_bits(), est.to_bits());
            }
        }
    }

    #[test]
    fn row_order_does_not_matter() {
        let d = random_data(30, 9, true);
        let mut rows: Vec<Sample> = d.samples().to_vec();
        rows.reverse();
        rows.rotate_left(7);
        let shuffled = Dataset::new(rows).unwrap();
        for q in [[0.5, 0.5], [0.0, 0.25], [1.0, 1.0]] {
            let a = knn_estimate(&d, &q, 3).unwrap();
            let b = knn_estimate(&shuffled, &q, 3).unwrap();
            assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
            assert_eq!(a.variance, b.variance);
        }
    }

    #[test]
    fn estimate_within_response_range() {
        let d = random_data(40, 3, false);
        let (lo, hi) = d.samples().iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), s| (l.min(s.y), h.max(s.y)));
        for k in 1..=5 {
            let e = knn_estimate(&d, &[0.3, 0.7], k).unwrap();
            assert!(e.estimate >= lo - hi && e.estimate <= hi - lo);
        }
    }
}
