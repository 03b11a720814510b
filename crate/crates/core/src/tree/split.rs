//! Split scoring: one sorted sweep per feature with running child statistics.
//!
//! Every criterion is expressed as a gain to maximise:
//!
//! * MSE: `sum_L^2 / n_L + sum_R^2 / n_R` over the criterion responses. The
//!   within-child sum of squares is `sum y^2` minus this gain.
//! * causal: variance of the child treatment-effect estimates across the
//!   node's criterion points, `n_L n_R (tau_L - tau_R)^2 / (n_L + n_R)^2`.
//! * Gini: minus the size-weighted mean child impurity `2 p (1 - p)` of the
//!   treatment labels.
//!
//! Candidate thresholds are midpoints between consecutive distinct feature
//! values. A later candidate replaces the incumbent only on a strictly larger
//! gain, so ties resolve to the lowest threshold (and, across features, to
//! the lowest feature index).

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Criterion {
    Mse,
    Causal,
    Gini,
}

/// What the split search may know about one observation.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PointInfo {
    /// Counts toward leaf estimates, regularity and per-class leaf sizes.
    pub est: bool,
    /// Participates in the split criterion.
    pub crit: bool,
    pub treated: bool,
    /// Response seen by the criterion; zero whenever the criterion may not
    /// look at this point's response.
    pub crit_y: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct SideStats {
    pub est: u32,
    pub est_treated: u32,
    pub crit: u32,
    pub crit_treated: u32,
    pub sum_treated: f64,
    pub sum_control: f64,
}

impl SideStats {
    #[inline]
    pub fn add(&mut self, p: &PointInfo) {
        if p.est {
            self.est += 1;
            self.est_treated += u32::from(p.treated);
        }
        if p.crit {
            self.crit += 1;
            if p.treated {
                self.crit_treated += 1;
                self.sum_treated += p.crit_y;
            } else {
                self.sum_control += p.crit_y;
            }
        }
    }

    #[inline]
    pub fn minus(&self, left: &SideStats) -> SideStats {
        SideStats {
            est: self.est - left.est,
            est_treated: self.est_treated - left.est_treated,
            crit: self.crit - left.crit,
            crit_treated: self.crit_treated - left.crit_treated,
            sum_treated: self.sum_treated - left.sum_treated,
            sum_control: self.sum_control - left.sum_control,
        }
    }

    #[inline]
    fn est_control(&self) -> u32 {
        self.est - self.est_treated
    }

    #[inline]
    fn crit_control(&self) -> u32 {
        self.crit - self.crit_treated
    }
}

/// Minimum estimation-sample count on each side of a split of `m` points.
#[inline]
pub fn regular_side_min(alpha: f64, m: usize) -> usize {
    (alpha * m as f64).ceil() as usize
}

/// Feasibility rules for a split.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Constraints {
    pub min_leaf: u32,
    /// `max(min_leaf, ceil(alpha * m_est))`.
    pub min_side_est: u32,
    /// Each child keeps `min_leaf` estimation points of both classes.
    pub balanced_est: bool,
    /// Each child keeps `min_leaf` criterion points of both classes.
    pub balanced_crit: bool,
}

impl Constraints {
    #[inline]
    pub fn side_ok(&self, s: &SideStats) -> bool {
        let k = self.min_leaf;
        s.est >= self.min_side_est
            && (!self.balanced_est || (s.est_treated >= k && s.est_control() >= k))
            && (!self.balanced_crit || (s.crit_treated >= k && s.crit_control() >= k))
    }

    /// Necessary condition for any split of a node with totals `t`.
    pub fn may_split(&self, t: &SideStats) -> bool {
        let k2 = 2 * self.min_leaf;
        t.est >= 2 * self.min_side_est
            && (!self.balanced_est || (t.est_treated >= k2 && t.est_control() >= k2))
            && (!self.balanced_crit || (t.crit_treated >= k2 && t.crit_control() >= k2))
    }
}

#[inline]
pub(crate) fn gain(criterion: Criterion, l: &SideStats, r: &SideStats) -> f64 {
    match criterion {
        Criterion::Mse => {
            let term = |s: &SideStats| {
                if s.crit == 0 {
                    0.0
                } else {
                    let sum = s.sum_treated + s.sum_control;
                    sum * sum / s.crit as f64
                }
            };
            term(l) + term(r)
        }
        Criterion::Causal => {
            let tau = |s: &SideStats| {
                s.sum_treated / s.crit_treated as f64 - s.sum_control / s.crit_control() as f64
            };
            let (nl, nr) = (l.crit as f64, r.crit as f64);
            let diff = tau(l) - tau(r);
            nl * nr * diff * diff / ((nl + nr) * (nl + nr))
        }
        Criterion::Gini => {
            let impurity = |s: &SideStats| {
                if s.crit == 0 {
                    0.0
                } else {
                    2.0 * s.crit_treated as f64 * s.crit_control() as f64 / s.crit as f64
                }
            };
            -(impurity(l) + impurity(r)) / (l.crit + r.crit) as f64
        }
    }
}

#[inline]
pub(crate) fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = lo + (hi - lo) * 0.5;
    if mid < hi {
        mid
    } else {
        lo
    }
}

/// Best `(threshold, gain)` over the points `order`, which must be sorted
/// by `x`.
pub(crate) fn sweep(
    order: &[u32],
    x: impl Fn(u32) -> f64,
    info: &[PointInfo],
    total: &SideStats,
    cons: &Constraints,
    criterion: Criterion,
) -> Option<(f64, f64)> {
    let mut left = SideStats::default();
    let mut best: Option<(f64, f64)> = None;
    for pair in order.windows(2) {
        left.add(&info[pair[0] as usize]);
        let (x0, x1) = (x(pair[0]), x(pair[1]));
        if x0 == x1 {
            continue;
        }
        if !cons.side_ok(&left) {
            continue;
        }
        let right = total.minus(&left);
        if !cons.side_ok(&right) {
            continue;
        }
        let g = gain(criterion, &left, &right);
        if best.is_none_or(|(_, bg)| g > bg) {
            best = Some((midpoint(x0, x1), g));
        }
    }
    best
}

/// Result of a single-feature split search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCandidate {
    pub threshold: f64,
    pub score: f64,
}

fn single_sample_search(
    x: &[f64],
    info: Vec<PointInfo>,
    cons: Constraints,
    criterion: Criterion,
) -> Option<f64> {
    let mut order: Vec<u32> = (0..x.len() as u32).collect();
    order.sort_by(|&a, &b| x[a as usize].total_cmp(&x[b as usize]).then(a.cmp(&b)));
    let mut total = SideStats::default();
    for p in &info {
        total.add(p);
    }
    if !cons.may_split(&total) {
        return None;
    }
    sweep(&order, |i| x[i as usize], &info, &total, &cons, criterion).map(|(t, _)| t)
}

fn within_sse(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum()
}

/// CART regression split on one feature. `score` is the summed within-child
/// squared deviation from the child means; each child keeps at least
/// `min_leaf` points.
pub fn criterion_mse(x: &[f64], y: &[f64], min_leaf: usize) -> Option<SplitCandidate> {
    assert_eq!(x.len(), y.len());
    let info = y
        .iter()
        .map(|&v| PointInfo { est: true, crit: true, treated: false, crit_y: v })
        .collect();
    let cons = Constraints {
        min_leaf: min_leaf as u32,
        min_side_est: min_leaf as u32,
        balanced_est: false,
        balanced_crit: false,
    };
    let threshold = single_sample_search(x, info, cons, Criterion::Mse)?;
    let side = |left: bool| {
        x.iter().zip(y).filter(move |(xv, _)| (**xv <= threshold) == left).map(|(_, v)| *v)
    };
    Some(SplitCandidate { threshold, score: within_sse(side(true)) + within_sse(side(false)) })
}

/// Treatment-effect variance split on one feature. Each child keeps at
/// least `min_leaf` treated and `min_leaf` control points; `score` is the
/// variance of the child effect estimates over all points.
pub fn criterion_causal(x: &[f64], y: &[f64], w: &[bool], min_leaf: usize) -> Option<SplitCandidate> {
    assert!(x.len() == y.len() && x.len() == w.len());
    let info = y
        .iter()
        .zip(w)
        .map(|(&v, &t)| PointInfo { est: true, crit: true, treated: t, crit_y: v })
        .collect::<Vec<_>>();
    let cons = Constraints {
        min_leaf: min_leaf as u32,
        min_side_est: min_leaf as u32,
        balanced_est: true,
        balanced_crit: true,
    };
    let threshold = single_sample_search(x, info.clone(), cons, Criterion::Causal)?;
    let mut l = SideStats::default();
    let mut total = SideStats::default();
    for (p, xv) in info.iter().zip(x) {
        total.add(p);
        if *xv <= threshold {
            l.add(p);
        }
    }
    Some(SplitCandidate { threshold, score: gain(Criterion::Causal, &l, &total.minus(&l)) })
}

/// Gini split of the treatment labels on one feature. Each child keeps at
/// least `min_leaf` points of each class; `score` is the size-weighted mean
/// child impurity.
pub fn criterion_gini(x: &[f64], w: &[bool], min_leaf: usize) -> Option<SplitCandidate> {
    assert_eq!(x.len(), w.len());
    let info = w
        .iter()
        .map(|&t| PointInfo { est: true, crit: true, treated: t, crit_y: 0.0 })
        .collect::<Vec<_>>();
    let cons = Constraints {
        min_leaf: min_leaf as u32,
        min_side_est: min_leaf as u32,
        balanced_est: true,
        balanced_crit: false,
    };
    let threshold = single_sample_search(x, info.clone(), cons, Criterion::Gini)?;
    let mut l = SideStats::default();
    let mut total = SideStats::default();
    for (p, xv) in info.iter().zip(x) {
        total.add(p);
        if *xv <= threshold {
            l.add(p);
        }
    }
    Some(SplitCandidate { threshold, score: -gain(Criterion::Gini, &l, &total.minus(&l)) })
}
