//! Stationary positive-definite kernels and Gram matrices.
//!
//! Both families are normalized so that `k(x, x) = 1`:
//!
//! * squared exponential: `exp(-|x - x'|^2 / (2 l^2))`
//! * Matérn with half-integer smoothness, `r = |x - x'| / l`:
//!   - `nu = 1/2`: `exp(-r)`
//!   - `nu = 3/2`: `(1 + sqrt(3) r) exp(-sqrt(3) r)`
//!   - `nu = 5/2`: `(1 + sqrt(5) r + 5 r^2 / 3) exp(-sqrt(5) r)`

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Half-integer Matérn smoothness values with closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Smoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl Smoothness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        if nu == 0.5 {
            Ok(Self::Half)
        } else if nu == 1.5 {
            Ok(Self::ThreeHalves)
        } else if nu == 2.5 {
            Ok(Self::FiveHalves)
        } else {
            Err(Error::UnsupportedSmoothness(nu))
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelFamily {
    SquaredExponential,
    Matern(Smoothness),
}

/// A normalized stationary kernel with a single lengthscale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    family: KernelFamily,
    lengthscale: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscale: f64) -> Result<Self> {
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(invalid("lengthscale", format!("must be positive and finite, got {lengthscale}")));
        }
        Ok(Self { family, lengthscale })
    }

    pub fn squared_exponential(lengthscale: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscale)
    }

    pub fn matern(lengthscale: f64, nu: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern(Smoothness::from_nu(nu)?), lengthscale)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// Information-gain growth exponent `d / (2 nu + d)` for Matérn kernels,
    /// `None` for the squared exponential (whose exponent tends to zero).
    pub fn info_gain_exponent(&self, dim: usize) -> Option<f64> {
        match self.family {
            KernelFamily::SquaredExponential => None,
            KernelFamily::Matern(s) => Some(dim as f64 / (2.0 * s.nu() + dim as f64)),
        }
    }

    /// Kernel value from a squared Euclidean distance.
    #[inline]
    pub fn from_sq_dist(&self, sq: f64) -> f64 {
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => (-sq / (2.0 * l * l)).exp(),
            KernelFamily::Matern(s) => {
                let r = sq.sqrt() / l;
                match s {
                    Smoothness::Half => (-r).exp(),
                    Smoothness::ThreeHalves => {
                        let a = 3f64.sqrt() * r;
                        (1.0 + a) * (-a).exp()
                    }
                    Smoothness::FiveHalves => {
                        let a = 5f64.sqrt() * r;
                        (1.0 + a + 5.0 * r * r / 3.0) * (-a).exp()
                    }
                }
            }
        }
    }

    /// `k(x, x')`. Both points must have the same dimension.
    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dim(x.len(), y.len())?;
        Ok(self.eval_unchecked(x, y))
    }

    #[inline]
    pub(crate) fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        self.from_sq_dist(sq_dist(x, y))
    }

    /// Gram matrix `[k(x_i, x_j)]`. Each unordered pair is evaluated once, so
    /// the result is exactly symmetric.
    pub fn gram<P: AsRef<[f64]>>(&self, points: &[P]) -> Result<DMatrix<f64>> {
        let n = points.len();
        if let Some(first) = points.first() {
            let d = first.as_ref().len();
            for p in points {
                check_dim(d, p.as_ref().len())?;
            }
        }
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = self.eval_unchecked(points[i].as_ref(), points[i].as_ref());
            for j in 0..i {
                let v = self.eval_unchecked(points[i].as_ref(), points[j].as_ref());
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        Ok(out)
    }

    /// Cross-kernel matrix `[k(a_i, b_j)]`.
    pub fn cross_matrix<P: AsRef<[f64]>, Q: AsRef<[f64]>>(&self, a: &[P], b: &[Q]) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(a.len(), b.len());
        for (i, p) in a.iter().enumerate() {
            for (j, q) in b.iter().enumerate() {
                out[(i, j)] = self.eval(p.as_ref(), q.as_ref())?;
            }
        }
        Ok(out)
    }

    /// The vector `[k(x_1, x), ..., k(x_n, x)]`.
    pub fn cross<P: AsRef<[f64]>>(&self, points: &[P], x: &[f64]) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(points.len());
        for (i, p) in points.iter().enumerate() {
            out[i] = self.eval(p.as_ref(), x)?;
        }
        Ok(out)
    }
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}
