//! Time-pair sampling for average-velocity training.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `(t1, t2, α, m)` with `0 ≤ t2 ≤ m ≤ t1 ≤ 1` and `m = t1 + α·(t2 − t1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimePair {
    t1: f64,
    t2: f64,
    alpha: f64,
    m: f64,
}

impl TimePair {
    pub fn new(t1: f64, t2: f64, alpha: f64) -> Result<Self> {
        if !(0.0 <= t2 && t2 <= t1 && t1 <= 1.0) {
            return Err(Error::contract(format!(
                "time pair needs 0 <= t2 <= t1 <= 1, got t1={t1} t2={t2}"
            )));
        }
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::contract(format!("alpha {alpha} outside [0, 1]")));
        }
        // Convex form so that α = 0 and α = 1 land exactly on t1 and t2.
        let m = ((1.0 - alpha) * t1 + alpha * t2).clamp(t2, t1);
        Ok(Self { t1, t2, alpha, m })
    }

    /// Degenerate pair `t1 == t2 == m`.
    pub fn equal(t: f64) -> Result<Self> {
        Self::new(t, t, 0.0)
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }
    pub fn t2(&self) -> f64 {
        self.t2
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn m(&self) -> f64 {
        self.m
    }
    /// `t1 − m`
    pub fn d1(&self) -> f64 {
        self.t1 - self.m
    }
    /// `m − t2`
    pub fn d2(&self) -> f64 {
        self.m - self.t2
    }
    pub fn is_equal(&self) -> bool {
        self.t1 == self.t2
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeSamplerConfig {
    pub logit_mean: f64,
    pub logit_std: f64,
    pub p_equal: f64,
}

impl Default for TimeSamplerConfig {
    fn default() -> Self {
        Self {
            logit_mean: -0.4,
            logit_std: 1.0,
            p_equal: 0.5,
        }
    }
}

impl TimeSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.logit_std > 0.0 && self.logit_std.is_finite()) {
            return Err(Error::contract(format!("logit_std {} must be > 0", self.logit_std)));
        }
        if !(0.0..=1.0).contains(&self.p_equal) {
            return Err(Error::contract(format!("p_equal {} outside [0, 1]", self.p_equal)));
        }
        if !self.logit_mean.is_finite() {
            return Err(Error::contract("logit_mean must be finite"));
        }
        Ok(())
    }

    /// One logistic-normal time in `(0, 1)`.
    pub fn sample_time<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let normal = Normal::new(self.logit_mean, self.logit_std).expect("validated std");
        logistic(normal.sample(rng))
    }
}

fn logistic(z: f64) -> f64 {
    let t = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    t.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

/// Draws two logistic-normal times, orders them so `t2 ≤ t1`, collapses `t2`
/// onto `t1` with probability `p_equal`, then picks the split point `m`.
///
/// The draw order (two normals, one uniform, one uniform) is fixed so that a
/// run's pairs can be replayed from its seed.
pub fn sample_time_pair<R: Rng + ?Sized>(rng: &mut R, cfg: &TimeSamplerConfig) -> TimePair {
    let a = cfg.sample_time(rng);
    let b = cfg.sample_time(rng);
    let (t1, mut t2) = if a >= b { (a, b) } else { (b, a) };
    let collapse: f64 = rng.random();
    if collapse < cfg.p_equal {
        t2 = t1;
    }
    let alpha: f64 = rng.random();
    TimePair::new(t1, t2, alpha).expect("sampled pair satisfies ordering")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    #[test]
    fn forced_equal_branch() {
        let cfg = TimeSamplerConfig {
            p_equal: 1.0,
            ..Default::default()
        };
        let mut rng = seeded_rng(3, 0);
        for _ in 0..1000 {
            let tp = sample_time_pair(&mut rng, &cfg);
            assert_eq!(tp.t1(), tp.t2());
            assert_eq!(tp.m(), tp.t1());
        }
    }

    #[test]
    fn alpha_endpoints_are_exact() {
        let tp = TimePair::new(0.83, 0.17, 0.0).unwrap();
        assert_eq!(tp.m(), 0.83);
        let tp = TimePair::new(0.83, 0.17, 1.0).unwrap();
        assert_eq!(tp.m(), 0.17);
        assert_eq!(tp.d1() + tp.d2(), 0.83 - 0.17);
    }

    #[test]
    fn invalid_pairs_and_configs() {
        assert!(TimePair::new(0.2, 0.5, 0.5).is_err());
        assert!(TimePair::new(0.5, 0.2, 1.5).is_err());
        let bad = TimeSamplerConfig {
            logit_std: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
