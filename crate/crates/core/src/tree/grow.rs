//! Recursive partitioning over presorted feature orders.
//!
//! Each feature keeps the node's points sorted by that feature; a split
//! stably partitions every order, so child nodes stay sorted without
//! re-sorting.

use crate::config::{ForestConfig, ForestMode};
use crate::dataset::Dataset;
use crate::sampling::{RandomStream, SubsampleRecord};

use super::split::{regular_side_min, sweep, Constraints, Criterion, PointInfo, SideStats};
use super::{LeafStats, Node};

pub(crate) struct Workspace<'a> {
    data: &'a Dataset,
    d: usize,
    /// Local point -> training row.
    rows: Vec<usize>,
    /// Local features, row-major.
    x: Vec<f64>,
    info: Vec<PointInfo>,
    sorted: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    criterion: Criterion,
    min_leaf: u32,
    alpha: f64,
    pi: f64,
    balanced_est: bool,
    balanced_crit: bool,
}

impl<'a> Workspace<'a> {
    pub fn new(data: &'a Dataset, record: &SubsampleRecord, cfg: &ForestConfig) -> Self {
        let d = data.d();
        let mode = cfg.mode;
        let treated = |row: usize| data.sample(row).w.unwrap_or(false);
        let (rows, info): (Vec<usize>, Vec<PointInfo>) = if mode.is_double_sample() {
            // Merge the two ascending halves; I-sample responses are never copied.
            let mut merged: Vec<(usize, PointInfo)> = record
                .i_half
                .iter()
                .map(|&r| (r, PointInfo { est: true, crit: false, treated: treated(r), crit_y: 0.0 }))
                .chain(record.j_half.iter().map(|&r| {
                    (r, PointInfo { est: false, crit: true, treated: treated(r), crit_y: data.sample(r).y })
                }))
                .collect();
            merged.sort_unstable_by_key(|&(r, _)| r);
            merged.into_iter().unzip()
        } else {
            let sees_y = mode == ForestMode::CausalAdaptive;
            record
                .indices
                .iter()
                .map(|&r| {
                    let crit_y = if sees_y { data.sample(r).y } else { 0.0 };
                    (r, PointInfo { est: true, crit: true, treated: treated(r), crit_y })
                })
                .unzip()
        };
        let m = rows.len();
        let mut x = Vec::with_capacity(m * d);
        for &r in &rows {
            x.extend_from_slice(&data.sample(r).x);
        }
        let sorted = (0..d)
            .map(|f| {
                let mut order: Vec<u32> = (0..m as u32).collect();
                order.sort_by(|&a, &b| {
                    x[a as usize * d + f].total_cmp(&x[b as usize * d + f]).then(a.cmp(&b))
                });
                order
            })
            .collect();
        let (criterion, balanced_est, balanced_crit) = match mode {
            ForestMode::RegressionDoubleSample => (Criterion::Mse, false, false),
            ForestMode::CausalDoubleSample | ForestMode::CausalAdaptive => (Criterion::Causal, true, true),
            ForestMode::Propensity => (Criterion::Gini, true, false),
        };
        Workspace {
            data,
            d,
            rows,
            x,
            info,
            sorted,
            scratch: Vec::with_capacity(m),
            goes_left: vec![false; m],
            criterion,
            min_leaf: cfg.min_leaf as u32,
            alpha: cfg.alpha,
            pi: cfg.pi,
            balanced_est,
            balanced_crit,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    fn totals(&self, start: usize, end: usize) -> SideStats {
        let mut t = SideStats::default();
        for &p in &self.sorted[0][start..end] {
            t.add(&self.info[p as usize]);
        }
        t
    }

    fn constraints(&self, total: &SideStats) -> Constraints {
        let regular = regular_side_min(self.alpha, total.est as usize) as u32;
        Constraints {
            min_leaf: self.min_leaf,
            min_side_est: regular.max(self.min_leaf),
            balanced_est: self.balanced_est,
            balanced_crit: self.balanced_crit,
        }
    }

    fn best_on(&self, f: usize, start: usize, end: usize, total: &SideStats, cons: &Constraints) -> Option<(f64, f64)> {
        let d = self.d;
        let x = &self.x;
        sweep(&self.sorted[f][start..end], |p| x[p as usize * d + f], &self.info, total, cons, self.criterion)
    }

    /// With probability `pi` the split feature is drawn uniformly and only
    /// its best threshold is considered; otherwise (or if the drawn feature
    /// admits no valid threshold) the best split over all features wins.
    pub fn choose(&self, start: usize, end: usize, stream: &mut RandomStream) -> Option<(usize, f64)> {
        let total = self.totals(start, end);
        let cons = self.constraints(&total);
        if !cons.may_split(&total) {
            return None;
        }
        if stream.uniform() < self.pi {
            let f = stream.index_below(self.d);
            if let Some((t, _)) = self.best_on(f, start, end, &total, &cons) {
                return Some((f, t));
            }
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for f in 0..self.d {
            if let Some((t, g)) = self.best_on(f, start, end, &total, &cons) {
                if best.is_none_or(|(_, _, bg)| g > bg) {
                    best = Some((f, t, g));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn partition(&mut self, start: usize, end: usize, feature: usize, threshold: f64) -> usize {
        let d = self.d;
        for &p in &self.sorted[0][start..end] {
            self.goes_left[p as usize] = self.x[p as usize * d + feature] <= threshold;
        }
        let mut mid = start;
        for order in &mut self.sorted {
            let seg = &mut order[start..end];
            self.scratch.clear();
            let mut w = 0;
            for i in 0..seg.len() {
                let p = seg[i];
                if self.goes_left[p as usize] {
                    seg[w] = p;
                    w += 1;
                } else {
                    self.scratch.push(p);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
            mid = start + w;
        }
        mid
    }

    fn leaf(&self, start: usize, end: usize) -> LeafStats {
        let mut stats = LeafStats::default();
        for &p in &self.sorted[0][start..end] {
            let info = &self.info[p as usize];
            if !info.est {
                continue;
            }
            let y = self.data.sample(self.rows[p as usize]).y;
            stats.n_total += 1;
            stats.sum_y += y;
            if info.treated {
                stats.n_treated += 1;
                stats.sum_y_treated += y;
            } else {
                stats.n_control += 1;
                stats.sum_y_control += y;
            }
        }
        stats
    }

    pub fn grow(&mut self, start: usize, end: usize, stream: &mut RandomStream) -> Node {
        match self.choose(start, end, stream) {
            Some((feature, threshold)) => {
                let mid = self.partition(start, end, feature, threshold);
                debug_assert!(start < mid && mid < end);
                let left = self.grow(start, mid, stream);
                let right = self.grow(mid, end, stream);
                Node::Split { feature, threshold, left: Box::new(left), right: Box::new(right) }
            }
            None => Node::Leaf(self.leaf(start, end)),
        }
    }

    /// Class counts of the estimation sample.
    pub fn estimation_counts(&self) -> (usize, usize) {
        let t = self.totals(0, self.len());
        (t.est_treated as usize, (t.est - t.est_treated) as usize)
    }
}
