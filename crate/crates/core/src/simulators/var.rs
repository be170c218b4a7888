//! Bivariate VAR(1): `x_t = A0 + A1 x_{t-1} + e_t`, `e_t ~ N(0, Sigma)`.

use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::RandomSource;
use crate::error::{Error, Result};
use crate::pathset::SamplePathSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    /// `x_0 = (I - A1)^{-1} A0`.
    StationaryMean,
    Zero,
    Explicit([f64; 2]),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarModel {
    pub a0: [f64; 2],
    /// Row-major.
    pub a1: [[f64; 2]; 2],
    pub sigma: [[f64; 2]; 2],
    pub horizon: usize,
    pub initial: InitialCondition,
    /// 1-based index of the reported component.
    pub observed: usize,
}

impl Default for VarModel {
    fn default() -> Self {
        Self {
            a0: [1.0, 1.0],
            a1: [[0.5, 0.3], [-0.6, 1.3]],
            sigma: [[1.0, 0.5], [0.5, 1.0]],
            horizon: 12,
            initial: InitialCondition::StationaryMean,
            observed: 1,
        }
    }
}

fn model_err(msg: impl Into<String>) -> Error {
    Error::Model(msg.into())
}

/// Lower-triangular `L` with `L L^T = sigma`. Accepts singular (positive
/// semidefinite) matrices.
pub fn cholesky_psd(sigma: [[f64; 2]; 2]) -> Result<[[f64; 2]; 2]> {
    let [[s11, s12], [s21, s22]] = sigma;
    let scale = s11.abs().max(s22.abs()).max(1.0);
    let tol = 1e-12 * scale;
    if sigma.iter().flatten().any(|v| !v.is_finite()) {
        return Err(model_err("covariance has non-finite entries"));
    }
    if (s12 - s21).abs() > tol {
        return Err(model_err("covariance is not symmetric"));
    }
    if s11 < -tol || s22 < -tol {
        return Err(model_err("covariance has a negative variance"));
    }
    let l11 = s11.max(0.0).sqrt();
    let l21 = if l11 > 0.0 {
        s12 / l11
    } else if s12.abs() <= tol {
        0.0
    } else {
        return Err(model_err("covariance is not positive semidefinite"));
    };
    let rest = s22 - l21 * l21;
    if rest < -tol {
        return Err(model_err("covariance is not positive semidefinite"));
    }
    Ok([[l11, 0.0], [l21, rest.max(0.0).sqrt()]])
}

impl VarModel {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(model_err("horizon must be at least 1"));
        }
        if !(1..=2).contains(&self.observed) {
            return Err(model_err(format!("observed component must be 1 or 2, got {}", self.observed)));
        }
        if self.a0.iter().chain(self.a1.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(model_err("coefficients must be finite"));
        }
        cholesky_psd(self.sigma).map(|_| ())
    }

    /// Solves `(I - A1) mu = A0`.
    pub fn stationary_mean(&self) -> Result<[f64; 2]> {
        let a1 = Matrix2::new(self.a1[0][0], self.a1[0][1], self.a1[1][0], self.a1[1][1]);
        let m = Matrix2::identity() - a1;
        let mu = m
            .lu()
            .solve(&Vector2::new(self.a0[0], self.a0[1]))
            .ok_or_else(|| model_err("I - A1 is singular; no stationary mean"))?;
        Ok([mu[0], mu[1]])
    }

    fn start(&self) -> Result<[f64; 2]> {
        match &self.initial {
            InitialCondition::StationaryMean => self.stationary_mean(),
            InitialCondition::Zero => Ok([0.0, 0.0]),
            InitialCondition::Explicit(x) => Ok(*x),
        }
    }
}

fn innovation<R: Rng>(l: &[[f64; 2]; 2], rng: &mut R) -> [f64; 2] {
    let z1: f64 = rng.sample(StandardNormal);
    let z2: f64 = rng.sample(StandardNormal);
    [l[0][0] * z1, l[1][0] * z1 + l[1][1] * z2]
}

/// `count` innovation vectors from one stream.
pub fn draw_innovations(model: &VarModel, count: usize, src: RandomSource) -> Result<Vec<[f64; 2]>> {
    let l = cholesky_psd(model.sigma)?;
    let mut rng = src.rng();
    Ok((0..count).map(|_| innovation(&l, &mut rng)).collect())
}

/// `n` paths of the observed component at `t = 1..H`; path `i` uses stream
/// `src.stream + i`.
pub fn simulate_var(model: &VarModel, n: usize, src: RandomSource) -> Result<SamplePathSet> {
    model.validate()?;
    if n == 0 {
        return Err(model_err("number of paths must be at least 1"));
    }
    let l = cholesky_psd(model.sigma)?;
    let x0 = model.start()?;
    let h = model.horizon;
    let c = model.observed - 1;
    let a = model.a1;
    let rows: Vec<Vec<f64>> = (0..n as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = src.offset(i).rng();
            let mut x = x0;
            (0..h)
                .map(|_| {
                    let e = innovation(&l, &mut rng);
                    x = [
                        model.a0[0] + a[0][0] * x[0] + a[0][1] * x[1] + e[0],
                        model.a0[1] + a[1][0] * x[0] + a[1][1] * x[1] + e[1],
                    ];
                    x[c]
                })
                .collect()
        })
        .collect();
    SamplePathSet::from_rows(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stationary_mean_of_default_model() {
        let mu = VarModel::default().stationary_mean().unwrap();
        // (I - A1) = [[0.5, -0.3], [0.6, -0.3]]: mu1 = 0, mu2 = -10/3.
        assert!(mu[0].abs() < 1e-12);
        assert!((mu[1] + 10.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_noise_stays_at_mean() {
        let model = VarModel {
            sigma: [[0.0; 2]; 2],
            ..VarModel::default()
        };
        let set = simulate_var(&model, 3, RandomSource::new(1)).unwrap();
        assert_eq!(set.horizon(), 12);
        for p in set.paths() {
            assert!(p.iter().all(|x| x.abs() < 1e-12));
        }
        let model = VarModel { observed: 2, ..model };
        let set = simulate_var(&model, 1, RandomSource::new(1)).unwrap();
        assert!(set.path(0).iter().all(|x| (x + 10.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        assert!(cholesky_psd([[1.0, 2.0], [2.0, 1.0]]).is_err());
        assert!(cholesky_psd([[1.0, 0.5], [0.4, 1.0]]).is_err());
        let l = cholesky_psd([[4.0, 2.0], [2.0, 1.0]]).unwrap();
        assert_eq!(l, [[2.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn path_does_not_depend_on_batch_size() {
        let m = VarModel::default();
        let a = simulate_var(&m, 5, RandomSource::new(3)).unwrap();
        let b = simulate_var(&m, 2, RandomSource::new(3)).unwrap();
        assert_eq!(a.path(1), b.path(1));
    }
}
