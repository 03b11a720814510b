//! Synthetic designs with known treatment effects.
//!
//! Every design draws `X ~ U([0,1]^d)`. Apart from `corner`, responses are
//! `Y = m(X) + (W - 1/2) tau(X) + N(0, 1)` with `W ~ Bernoulli(e(X))`.
//! Per row the stream is consumed in a fixed order: the `d` features, the
//! treatment, then the noise.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Sample};
use crate::error::{GroveError, Result};
use crate::sampling::RandomStream;

/// Dimension of the corner design.
pub const CORNER_DIM: usize = 10;
/// Probability of an outlier in the corner design.
pub const CORNER_OUTLIER_RATE: f64 = 0.05;
pub const CORNER_NOISE_SD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    /// Zero effect, propensity and main effect both driven by `x1`.
    Confounded,
    /// Smooth effect on the first two features; randomized.
    Smooth,
    /// Sharper effect rising toward `x1 = x2 = 1`; randomized.
    Spike,
    /// Effect spread over the first `q` features; randomized.
    Dense,
    /// Constant effect carried by rare outliers, fixed at 10 features.
    Corner,
}

impl DesignKind {
    pub const ALL: [DesignKind; 5] =
        [DesignKind::Confounded, DesignKind::Smooth, DesignKind::Spike, DesignKind::Dense, DesignKind::Corner];

    pub fn as_str(self) -> &'static str {
        match self {
            DesignKind::Confounded => "confounded",
            DesignKind::Smooth => "smooth",
            DesignKind::Spike => "spike",
            DesignKind::Dense => "dense",
            DesignKind::Corner => "corner",
        }
    }
}

impl fmt::Display for DesignKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DesignKind {
    type Err = GroveError;

    fn from_str(s: &str) -> Result<Self> {
        DesignKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| GroveError::Parameter(format!("unknown design '{s}'")))
    }
}

/// A design with its dimensions fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub kind: DesignKind,
    pub d: usize,
    /// Number of signal features; meaningful for `dense` only.
    pub q: usize,
}

fn sigmoid(t: f64) -> f64 {
    1.0 / (1.0 + (-t).exp())
}

fn smooth_factor(u: f64) -> f64 {
    1.0 + sigmoid(20.0 * (u - 1.0 / 3.0))
}

fn spike_factor(u: f64) -> f64 {
    2.0 * sigmoid(12.0 * (u - 0.5))
}

/// Beta(2, 4) density.
fn beta_2_4(u: f64) -> f64 {
    20.0 * u * (1.0 - u).powi(3)
}

impl Design {
    pub fn confounded(d: usize) -> Result<Design> {
        Design::new(DesignKind::Confounded, d, 0)
    }

    pub fn smooth(d: usize) -> Result<Design> {
        Design::new(DesignKind::Smooth, d, 0)
    }

    pub fn spike(d: usize) -> Result<Design> {
        Design::new(DesignKind::Spike, d, 0)
    }

    pub fn dense(d: usize, q: usize) -> Result<Design> {
        Design::new(DesignKind::Dense, d, q)
    }

    pub fn corner() -> Design {
        Design { kind: DesignKind::Corner, d: CORNER_DIM, q: 0 }
    }

    /// Checks dimension requirements. `q` is ignored except for `dense`.
    pub fn new(kind: DesignKind, d: usize, q: usize) -> Result<Design> {
        let q = if kind == DesignKind::Dense { q } else { 0 };
        match kind {
            DesignKind::Confounded if d < 1 => Err(GroveError::Parameter("confounded design needs d >= 1".into())),
            DesignKind::Smooth | DesignKind::Spike if d < 2 => {
                Err(GroveError::Parameter(format!("{kind} design needs d >= 2")))
            }
            DesignKind::Dense if q < 1 || q > d => {
                Err(GroveError::Parameter(format!("dense design needs 1 <= q <= d, got q = {q}, d = {d}")))
            }
            DesignKind::Corner if d != CORNER_DIM => {
                Err(GroveError::Parameter(format!("corner design has d = {CORNER_DIM}")))
            }
            _ => Ok(Design { kind, d, q }),
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.as_str()
    }

    pub fn tau(&self, x: &[f64]) -> f64 {
        match self.kind {
            DesignKind::Confounded => 0.0,
            DesignKind::Smooth => smooth_factor(x[0]) * smooth_factor(x[1]),
            DesignKind::Spike => spike_factor(x[0]) * spike_factor(x[1]),
            DesignKind::Dense => {
                let sum: f64 = x[..self.q].iter().map(|&u| sigmoid(12.0 * (u - 0.5)) - 0.5).sum();
                4.0 / self.q as f64 * sum
            }
            DesignKind::Corner => 2.0 * CORNER_OUTLIER_RATE,
        }
    }

    /// Average of the two arms' conditional means.
    pub fn main_effect(&self, x: &[f64]) -> f64 {
        match self.kind {
            DesignKind::Confounded => 2.0 * x[0] - 1.0,
            DesignKind::Corner => CORNER_OUTLIER_RATE,
            _ => 0.0,
        }
    }

    pub fn propensity(&self, x: &[f64]) -> f64 {
        match self.kind {
            DesignKind::Confounded => (1.0 + beta_2_4(x[0])) / 4.0,
            _ => 0.5,
        }
    }

    pub fn draw_point(&self, stream: &mut RandomStream) -> Vec<f64> {
        (0..self.d).map(|_| stream.uniform()).collect()
    }

    pub fn draw_points(&self, m: usize, stream: &mut RandomStream) -> Vec<Vec<f64>> {
        (0..m).map(|_| self.draw_point(stream)).collect()
    }

    fn draw_sample(&self, stream: &mut RandomStream) -> Sample {
        let x = self.draw_point(stream);
        let w = stream.bernoulli(self.propensity(&x));
        let y = match self.kind {
            DesignKind::Corner => {
                let outlier = stream.bernoulli(CORNER_OUTLIER_RATE);
                let base = if w && outlier { 2.0 } else { 0.0 };
                base + stream.normal(0.0, CORNER_NOISE_SD)
            }
            _ => {
                let arm = if w { 0.5 } else { -0.5 };
                self.main_effect(&x) + arm * self.tau(&x) + stream.standard_normal()
            }
        };
        Sample::new(x, y, Some(w))
    }

    /// Draws `n` rows and returns them with the true effect at each row.
    pub fn generate(&self, n: usize, stream: &mut RandomStream) -> Result<(Dataset, Vec<f64>)> {
        let samples: Vec<Sample> = (0..n).map(|_| self.draw_sample(stream)).collect();
        let tau = samples.iter().map(|s| self.tau(&s.x)).collect();
        Ok((Dataset::new(samples)?, tau))
    }
}

pub fn gen_confounded(n: usize, d: usize, stream: &mut RandomStream) -> Result<(Dataset, Vec<f64>)> {
    Design::confounded(d)?.generate(n, stream)
}

pub fn gen_smooth(n: usize, d: usize, stream: &mut RandomStream) -> Result<(Dataset, Vec<f64>)> {
    Design::smooth(d)?.generate(n, stream)
}

pub fn gen_spike(n: usize, d: usize, stream: &mut RandomStream) -> Result<(Dataset, Vec<f64>)> {
    Design::spike(d)?.generate(n, stream)
}

pub fn gen_dense(n: usize, d: usize, q: usize, stream: &mut RandomStream) -> Result<(Dataset, Vec<f64>)> {
    Design::dense(d, q)?.generate(n, stream)
}

pub fn gen_corner(n: usize, stream: &mut RandomStream) -> Result<(Dataset, Vec<f64>)> {
    Design::corner().generate(n, stream)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{derive_stream_in, SIMULATE_DOMAIN};

    fn stream(seed: u64) -> RandomStream {
        derive_stream_in(SIMULATE_DOMAIN, seed, 0)
    }

    #[test]
    fn closed_form_values() {
        let conf = Design::confounded(3).unwrap();
        assert_eq!(conf.tau(&[0.3, 0.2, 0.9]), 0.0);
        assert_eq!(conf.propensity(&[0.0, 0.5, 0.5]), 0.25);
        assert!((conf.propensity(&[0.25, 0.0, 0.0]) - 0.77734375).abs() < 1e-12);
        assert_eq!(conf.main_effect(&[0.75, 0.0, 0.0]), 0.5);

        let smooth = Design::smooth(2).unwrap();
        assert_eq!(smooth_factor(1.0 / 3.0), 1.5);
        assert!((smooth.tau(&[1.0 / 3.0, 1.0 / 3.0]) - 2.25).abs() < 1e-15);

        let spike = Design::spike(4).unwrap();
        assert_eq!(spike.tau(&[0.5, 0.5, 0.1, 0.9]), 1.0);
        assert!((spike.tau(&[1.0, 1.0, 0.0, 0.0]) - 3.98024347).abs() < 1e-8);
        let corner_low = spike.tau(&[0.0, 0.0, 0.0, 0.0]);
        assert!(corner_low > 0.0 && (corner_low - 2.45e-5).abs() < 1e-6);

        let dense = Design::dense(3, 1).unwrap();
        assert!((dense.tau(&[1.0, 0.0, 0.0]) - 1.99010951).abs() < 1e-8);
        let dense3 = Design::dense(5, 3).unwrap();
        assert_eq!(dense3.tau(&[0.5; 5]), 0.0);
        let a = dense3.tau(&[0.8, 0.1, 0.65, 0.2, 0.3]);
        let b = dense3.tau(&[0.2, 0.9, 0.35, 0.2, 0.3]);
        assert!((a + b).abs() < 1e-15);

        assert_eq!(Design::corner().tau(&[0.0; 10]), 0.1);
    }

    #[test]
    fn dimension_checks() {
        assert!(Design::smooth(1).is_err());
        assert!(Design::spike(1).is_err());
        assert!(Design::dense(3, 4).is_err());
        assert!(Design::dense(3, 0).is_err());
        assert!(Design::confounded(0).is_err());
        assert!(Design::new(DesignKind::Corner, 3, 0).is_err());
        assert_eq!("spike".parse::<DesignKind>().unwrap(), DesignKind::Spike);
        assert!("bogus".parse::<DesignKind>().is_err());
    }

    #[test]
    fn effect_and_propensity_ranges() {
        let mut s = stream(3);
        let conf = Design::confounded(2).unwrap();
        let smooth = Design::smooth(2).unwrap();
        for _ in 0..10_000 {
            let x = vec![s.uniform(), s.uniform()];
            let e = conf.propensity(&x);
            assert!((0.25..=0.7773438).contains(&e));
            let t = smooth.tau(&x);
            assert!(t > 1.0 && t < 4.0);
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let (a, ta) = gen_spike(50, 3, &mut stream(1)).unwrap();
        let (b, tb) = gen_spike(50, 3, &mut stream(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = gen_spike(50, 3, &mut stream(2)).unwrap();
        assert_ne!(a, c);
        assert_eq!(a.d(), 3);
        assert!(a.has_treatment());
    }

    #[test]
    fn corner_treated_mean() {
        let (data, tau) = gen_corner(200_000, &mut stream(11)).unwrap();
        assert_eq!(data.d(), 10);
        assert!(tau.iter().all(|&t| t == 0.1));
        let (mut st, mut nt, mut sc, mut nc) = (0.0, 0.0, 0.0, 0.0);
        for s in data.samples() {
            if s.treated() {
                st += s.y;
                nt += 1.0;
            } else {
                sc += s.y;
                nc += 1.0;
            }
        }
        // Four standard errors of a Bernoulli(0.05) mean over ~1e5 rows, doubled.
        assert!((st / nt - 0.1).abs() < 0.006, "{}", st / nt);
        assert!((sc / nc).abs() < 0.002);
    }

    #[test]
    fn arm_difference_matches_tau_in_bins() {
        // Coarse 2x2 grid on (x1, x2) for the smooth design, large sample.
        let design = Design::smooth(2).unwrap();
        let (data, _) = design.generate(400_000, &mut stream(5)).unwrap();
        let mut acc = [[0.0f64; 4]; 4]; // bin -> [sum_t, n_t, sum_c, n_c]
        let mut tau_acc = [0.0f64; 4];
        let mut count = [0.0f64; 4];
        for s in data.samples() {
            let bin = (s.x[0] >= 0.5) as usize * 2 + (s.x[1] >= 0.5) as usize;
            let a = &mut acc[bin];
            if s.treated() {
                a[0] += s.y;
                a[1] += 1.0;
            } else {
                a[2] += s.y;
                a[3] += 1.0;
            }
            tau_acc[bin] += design.tau(&s.x);
            count[bin] += 1.0;
        }
        for bin in 0..4 {
            let a = acc[bin];
            let diff = a[0] / a[1] - a[2] / a[3];
            let truth = tau_acc[bin] / count[bin];
            assert!((diff - truth).abs() < 0.05, "bin {bin}: {diff} vs {truth}");
        }
    }

    #[test]
    fn confounded_treatment_rate_follows_propensity() {
        let design = Design::confounded(2).unwrap();
        let (data, _) = design.generate(200_000, &mut stream(8)).unwrap();
        // E[e(X)] = (1 + 1) / 4 since a density integrates to one.
        let rate = data.count_treated() as f64 / data.n() as f64;
        assert!((rate - 0.5).abs() < 0.005, "{rate}");
    }
}
