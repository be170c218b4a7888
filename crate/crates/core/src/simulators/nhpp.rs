//! Piecewise-constant arrival rates and non-homogeneous Poisson arrivals by
//! thinning.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Rate `rate` on `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePiece {
    pub start: f64,
    pub end: f64,
    pub rate: f64,
}

/// Arrival rate (per minute) on `[0, horizon]`, zero outside the pieces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFunction {
    pub pieces: Vec<RatePiece>,
    pub horizon: f64,
}

pub const MCE_HORIZON: f64 = 120.0;
pub const MCE_AVERAGE_RATE: f64 = 0.388;

impl RateFunction {
    /// The drill's estimated rate: three bursts separated by quiet spells.
    pub fn mce() -> Self {
        let piece = |start, end, rate| RatePiece { start, end, rate };
        Self {
            pieces: vec![
                piece(0.0, 22.0, 0.773),
                piece(44.0, 69.0, 0.884),
                piece(102.0, 117.0, 0.5),
            ],
            horizon: MCE_HORIZON,
        }
    }

    pub fn constant(rate: f64, horizon: f64) -> Self {
        Self {
            pieces: vec![RatePiece {
                start: 0.0,
                end: f64::INFINITY,
                rate,
            }],
            horizon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Model(format!("rate horizon must be positive, got {}", self.horizon)));
        }
        for p in &self.pieces {
            if !(p.rate >= 0.0 && p.rate.is_finite()) || p.start.partial_cmp(&p.end) != Some(std::cmp::Ordering::Less) {
                return Err(Error::Model(format!("invalid rate piece {p:?}")));
            }
        }
        Ok(())
    }

    /// Rate at minute `t`; the first piece containing `t` wins.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(self.rate_unchecked(t))
    }

    fn rate_unchecked(&self, t: f64) -> f64 {
        self.pieces
            .iter()
            .find(|p| p.start <= t && t < p.end)
            .map_or(0.0, |p| p.rate)
    }

    pub fn max_rate(&self) -> f64 {
        self.pieces
            .iter()
            .filter(|p| p.start < self.horizon && p.end > 0.0)
            .map(|p| p.rate)
            .fold(0.0, f64::max)
    }

    /// `int_a^b rate(t) dt`, for non-overlapping pieces.
    pub fn integral(&self, a: f64, b: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let lo = p.start.max(a);
                let hi = p.end.min(b);
                if hi > lo {
                    p.rate * (hi - lo)
                } else {
                    0.0
                }
            })
            .sum()
    }
}

/// The drill's arrival rate at minute `t` in `[0, 120]`.
pub fn mce_arrival_rate(t: f64) -> Result<f64> {
    RateFunction::mce().eval(t)
}

/// Arrival epochs on `[0, horizon)`: candidates from a homogeneous process at
/// the maximal rate, each kept with probability `rate(t) / max`.
pub fn nhpp_arrival_times<R: Rng>(rate: &RateFunction, rng: &mut R) -> Vec<f64> {
    let lmax = rate.max_rate();
    let mut out = Vec::new();
    if lmax <= 0.0 {
        return out;
    }
    let gap = Exp::new(lmax).expect("positive rate");
    let mut t = 0.0;
    loop {
        t += gap.sample(rng);
        if t >= rate.horizon {
            return out;
        }
        let u: f64 = rng.random();
        if u * lmax < rate.rate_unchecked(t) {
            out.push(t);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulators::RandomSource;

    #[test]
    fn mce_rate_values() {
        assert_eq!(mce_arrival_rate(10.0).unwrap(), 0.773);
        assert_eq!(mce_arrival_rate(30.0).unwrap(), 0.0);
        assert_eq!(mce_arrival_rate(110.0).unwrap(), 0.5);
        assert_eq!(mce_arrival_rate(22.0).unwrap(), 0.0);
        assert_eq!(mce_arrival_rate(44.0).unwrap(), 0.884);
        assert!(mce_arrival_rate(-0.1).is_err());
        assert!(mce_arrival_rate(120.5).is_err());
    }

    #[test]
    fn mce_integral() {
        let total = RateFunction::mce().integral(0.0, MCE_HORIZON);
        assert!((total - 46.606).abs() < 1e-9);
        assert!((total / MCE_HORIZON - MCE_AVERAGE_RATE).abs() < 5e-4);
    }

    #[test]
    fn arrivals_respect_zero_rate_windows() {
        let rate = RateFunction::mce();
        let mut rng = RandomSource::new(4).rng();
        for _ in 0..50 {
            for t in nhpp_arrival_times(&rate, &mut rng) {
                assert!(rate.eval(t).unwrap() > 0.0, "arrival at {t}");
            }
        }
        let none = RateFunction::constant(0.0, 120.0);
        assert!(nhpp_arrival_times(&none, &mut rng).is_empty());
    }
}
