//! Exact Gaussian-process posterior for one observation function.
//!
//! With data `X = (x_1..x_t)`, rewards `y` and regularizer `lambda`:
//!
//! ```text
//! mu_t(x)      = k_X(x)^T (K_XX + lambda I)^{-1} y
//! sigma_t^2(x) = k(x, x) - k_X(x)^T (K_XX + lambda I)^{-1} k_X(x)
//! ```
//!
//! The lower Cholesky factor `L` of `K_XX + lambda I` is grown one row per
//! observation, and `L^{-1} y` is cached alongside it, so a query costs one
//! forward substitution. [`GridPosterior`] additionally keeps `L^{-1} K_{X,G}`
//! for a fixed grid `G`, which makes mean and variance on the grid O(1) reads
//! and each append O(t |G|).

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::grid::Grid;
use crate::kernels::{check_dim, KernelSpec};

/// Diagonal jitter for the single retry after a failed factorization.
pub const JITTER: f64 = 1e-10;
/// Round-off window below zero inside which a variance is clamped to 0.
pub const NEG_VARIANCE_TOL: f64 = 1e-10;

/// Parameters of the confidence width `beta = B + R sqrt((2 / lambda) ln(2 / delta))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConfidenceParams {
    /// RKHS norm bound.
    pub b: f64,
    /// Sub-Gaussian noise scale.
    pub r: f64,
    pub delta: f64,
}

impl ConfidenceParams {
    pub fn new(b: f64, r: f64, delta: f64) -> Result<Self> {
        if !(b >= 0.0) {
            return Err(invalid("B", format!("must be non-negative, got {b}")));
        }
        if !(r >= 0.0) {
            return Err(invalid("R", format!("must be non-negative, got {r}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(invalid("delta", format!("must lie in (0, 1), got {delta}")));
        }
        Ok(Self { b, r, delta })
    }
}

/// Confidence width `B + R sqrt((2 / lambda) ln(2 / delta))`.
pub fn beta(params: &ConfidenceParams, lambda: f64) -> f64 {
    params.b + params.r * ((2.0 / lambda) * (2.0 / params.delta).ln()).sqrt()
}

pub(crate) fn clamp_variance(v: f64) -> Result<f64> {
    if v >= 0.0 {
        Ok(v)
    } else if v > -NEG_VARIANCE_TOL {
        Ok(0.0)
    } else {
        Err(Error::NumericalBreakdown(format!("posterior variance {v:e} is negative")))
    }
}

/// Exact GP posterior with a cached, incrementally grown Cholesky factor.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    lambda: f64,
    dim: Option<usize>,
    x: Vec<Vec<f64>>,
    y: Vec<f64>,
    /// Row `r` of the lower factor, length `r + 1`.
    chol: Vec<Vec<f64>>,
    /// `L^{-1} y`.
    alpha: Vec<f64>,
    jitter: f64,
    info_gain: f64,
}

impl GpPosterior {
    pub fn new(kernel: KernelSpec, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(invalid("lambda", format!("must be positive, got {lambda}")));
        }
        Ok(Self {
            kernel,
            lambda,
            dim: None,
            x: Vec::new(),
            y: Vec::new(),
            chol: Vec::new(),
            alpha: Vec::new(),
            jitter: 0.0,
            info_gain: 0.0,
        })
    }

    /// Builds a posterior by appending the observations in order.
    pub fn from_observations<P: AsRef<[f64]>>(kernel: KernelSpec, lambda: f64, x: &[P], y: &[f64]) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::LengthMismatch(format!("{} points but {} rewards", x.len(), y.len())));
        }
        let mut gp = Self::new(kernel, lambda)?;
        for (p, &v) in x.iter().zip(y) {
            gp.append(p.as_ref(), v)?;
        }
        Ok(gp)
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.x
    }

    pub fn rewards(&self) -> &[f64] {
        &self.y
    }

    /// Running estimate `sum_i sigma_{i-1}^2(x_i)` along the observed sequence.
    pub fn info_gain(&self) -> f64 {
        self.info_gain
    }

    /// Diagonal jitter in effect (0 unless a factorization needed the retry).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        match self.dim {
            Some(d) => check_dim(d, x.len()),
            None => Ok(()),
        }
    }

    /// Solves `L v = b` in place.
    fn forward(&self, b: &mut [f64]) {
        for r in 0..b.len() {
            let row = &self.chol[r];
            let mut s = b[r];
            for c in 0..r {
                s -= row[c] * b[c];
            }
            b[r] = s / row[r];
        }
    }

    /// `L^{-1} k_X(x)`.
    fn whitened_cross(&self, x: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = self.x.iter().map(|p| self.kernel.eval_unchecked(p, x)).collect();
        self.forward(&mut v);
        v
    }

    pub fn mean(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        if self.is_empty() {
            return Ok(0.0);
        }
        let v = self.whitened_cross(x);
        Ok(v.iter().zip(&self.alpha).map(|(a, b)| a * b).sum())
    }

    pub fn variance(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        let prior = self.kernel.eval_unchecked(x, x);
        if self.is_empty() {
            return Ok(prior);
        }
        let v = self.whitened_cross(x);
        clamp_variance(prior - v.iter().map(|a| a * a).sum::<f64>())
    }

    pub fn std_dev(&self, x: &[f64]) -> Result<f64> {
        Ok(self.variance(x)?.sqrt())
    }

    /// Adds one observation. The information-gain estimate grows by the
    /// posterior variance at `x` before the update.
    pub fn append(&mut self, x: &[f64], y: f64) -> Result<()> {
        self.check_point(x)?;
        let l = self.whitened_cross(x);
        let prior = self.kernel.eval_unchecked(x, x);
        let var_before = if self.is_empty() {
            prior
        } else {
            clamp_variance(prior - l.iter().map(|a| a * a).sum::<f64>())?
        };
        self.push_factored(x, y, l, prior, var_before)
    }

    /// Appends with a precomputed `l = L^{-1} k_X(x)`.
    pub(crate) fn push_factored(&mut self, x: &[f64], y: f64, l: Vec<f64>, prior: f64, var_before: f64) -> Result<()> {
        let pivot_sq = prior + self.lambda + self.jitter - l.iter().map(|a| a * a).sum::<f64>();
        self.dim.get_or_insert(x.len());
        if !(pivot_sq > 0.0) {
            // Rebuild the whole factor with jitter; a second failure is fatal.
            self.x.push(x.to_vec());
            self.y.push(y);
            self.info_gain += var_before;
            return self.refactor_with_jitter();
        }
        let pivot = pivot_sq.sqrt();
        let a_new = (y - l.iter().zip(&self.alpha).map(|(a, b)| a * b).sum::<f64>()) / pivot;
        let mut row = l;
        row.push(pivot);
        self.chol.push(row);
        self.alpha.push(a_new);
        self.x.push(x.to_vec());
        self.y.push(y);
        self.info_gain += var_before;
        Ok(())
    }

    fn refactor_with_jitter(&mut self) -> Result<()> {
        if self.jitter > 0.0 {
            return Err(Error::NotPositiveDefinite { context: "posterior factor" });
        }
        self.jitter = JITTER;
        let (chol, alpha) = factor(&self.kernel, self.lambda + self.jitter, &self.x, &self.y)
            .ok_or(Error::NotPositiveDefinite { context: "posterior factor" })?;
        self.chol = chol;
        self.alpha = alpha;
        Ok(())
    }

    /// The cached lower factor as a dense matrix.
    pub fn cholesky_factor(&self) -> DMatrix<f64> {
        let n = self.len();
        DMatrix::from_fn(n, n, |r, c| if c <= r { self.chol[r][c] } else { 0.0 })
    }

    /// Recomputes the factor from scratch (no incremental updates).
    pub fn full_recompute_factor(&self) -> Result<DMatrix<f64>> {
        let (chol, _) = factor(&self.kernel, self.lambda + self.jitter, &self.x, &self.y)
            .ok_or(Error::NotPositiveDefinite { context: "posterior factor" })?;
        let n = self.len();
        Ok(DMatrix::from_fn(n, n, |r, c| if c <= r { chol[r][c] } else { 0.0 }))
    }

    /// Grid point with the largest posterior standard deviation; ties go to the
    /// lowest index.
    pub fn max_variance_point<'g>(&self, grid: &'g Grid) -> Result<(usize, &'g [f64])> {
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut best = (0, f64::NEG_INFINITY);
        for (i, p) in grid.points().enumerate() {
            let v = self.variance(p)?;
            if v > best.1 {
                best = (i, v);
            }
        }
        Ok((best.0, grid.point(best.0)))
    }

    /// `max_grid sigma_t(x) <= sqrt(12 * info_gain / t)`.
    ///
    /// Only meaningful when every observation was taken by max-variance
    /// sampling over this grid.
    pub fn max_std_bound_check(&self, grid: &Grid) -> Result<bool> {
        let t = self.len();
        if t == 0 {
            return Err(invalid("t", "bound check needs at least one observation"));
        }
        let mut max_sd: f64 = 0.0;
        for p in grid.points() {
            max_sd = max_sd.max(self.std_dev(p)?);
        }
        Ok(max_sd <= (12.0 * self.info_gain / t as f64).sqrt())
    }
}

/// Row-packed Cholesky of `K + reg I` and `L^{-1} y`, or `None` if not SPD.
fn factor(kernel: &KernelSpec, reg: f64, x: &[Vec<f64>], y: &[f64]) -> Option<(Vec<Vec<f64>>, Vec<f64>)> {
    let n = x.len();
    let mut chol: Vec<Vec<f64>> = Vec::with_capacity(n);
    for r in 0..n {
        let mut row = vec![0.0; r + 1];
        for c in 0..=r {
            let mut s = kernel.eval_unchecked(&x[r], &x[c]);
            if r == c {
                s += reg;
            }
            let other: &[f64] = if c == r { &row } else { &chol[c] };
            for k in 0..c {
                s -= row[k] * other[k];
            }
            if r == c {
                if !(s > 0.0) {
                    return None;
                }
                row[c] = s.sqrt();
            } else {
                row[c] = s / chol[c][c];
            }
        }
        chol.push(row);
    }
    let mut alpha = y.to_vec();
    for r in 0..n {
        let mut s = alpha[r];
        for c in 0..r {
            s -= chol[r][c] * alpha[c];
        }
        alpha[r] = s / chol[r][r];
    }
    Some((chol, alpha))
}

/// An exact posterior restricted to queries on a fixed grid, with the mean
/// and variance of every grid point kept current after each append.
#[derive(Debug, Clone)]
pub struct GridPosterior {
    gp: GpPosterior,
    grid: Arc<Grid>,
    /// Row `r` is `(L^{-1} K_{X,G})[r, :]`.
    whitened: Vec<Vec<f64>>,
    mean: Vec<f64>,
    var: Vec<f64>,
    queried: Vec<usize>,
}

impl GridPosterior {
    pub fn new(kernel: KernelSpec, lambda: f64, grid: Arc<Grid>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let gp = GpPosterior::new(kernel, lambda)?;
        let var = grid.points().map(|p| kernel.eval_unchecked(p, p)).collect();
        Ok(Self {
            gp,
            mean: vec![0.0; grid.len()],
            var,
            whitened: Vec::new(),
            queried: Vec::new(),
            grid,
        })
    }

    pub fn gp(&self) -> &GpPosterior {
        &self.gp
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.gp.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gp.is_empty()
    }

    /// Grid indices of the observations, in order.
    pub fn queried(&self) -> &[usize] {
        &self.queried
    }

    pub fn info_gain(&self) -> f64 {
        self.gp.info_gain()
    }

    pub fn mean_at(&self, i: usize) -> f64 {
        self.mean[i]
    }

    pub fn variance_at(&self, i: usize) -> f64 {
        self.var[i].max(0.0)
    }

    pub fn std_at(&self, i: usize) -> f64 {
        self.variance_at(i).sqrt()
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    /// Lowest-index grid point of maximal posterior variance.
    pub fn max_variance_index(&self) -> usize {
        argmax(self.var.iter().copied())
    }

    /// Observes `y` at grid point `i`.
    pub fn append(&mut self, i: usize, y: f64) -> Result<()> {
        if i >= self.grid.len() {
            return Err(invalid("grid index", format!("{i} out of range for {} points", self.grid.len())));
        }
        let kernel = *self.gp.kernel();
        let xi = self.grid.point(i).to_vec();
        let l: Vec<f64> = self.whitened.iter().map(|row| row[i]).collect();
        let prior = kernel.eval_unchecked(&xi, &xi);
        let var_before = if self.gp.is_empty() {
            prior
        } else {
            clamp_variance(prior - l.iter().map(|a| a * a).sum::<f64>())?
        };
        let jitter_before = self.gp.jitter();
        self.gp.push_factored(&xi, y, l.clone(), prior, var_before)?;
        self.queried.push(i);
        if self.gp.jitter() != jitter_before {
            self.rebuild();
            return Ok(());
        }
        let pivot = *self.gp.chol.last().and_then(|r| r.last()).expect("row just pushed");
        let a_new = *self.gp.alpha.last().expect("alpha just pushed");
        let mut row: Vec<f64> = self.grid.points().map(|p| kernel.eval_unchecked(&xi, p)).collect();
        for (lr, wr) in l.iter().zip(&self.whitened) {
            for (s, w) in row.iter_mut().zip(wr) {
                *s -= lr * w;
            }
        }
        for (g, s) in row.iter_mut().enumerate() {
            *s /= pivot;
            self.mean[g] += a_new * *s;
            self.var[g] -= *s * *s;
        }
        self.whitened.push(row);
        Ok(())
    }

    /// Recomputes the grid caches from the current factor.
    fn rebuild(&mut self) {
        let kernel = *self.gp.kernel();
        let n = self.gp.len();
        let mut whitened = vec![vec![0.0; self.grid.len()]; n];
        for (g, p) in self.grid.points().enumerate() {
            let v = self.gp.whitened_cross(p);
            let prior = kernel.eval_unchecked(p, p);
            self.mean[g] = v.iter().zip(&self.gp.alpha).map(|(a, b)| a * b).sum();
            self.var[g] = prior - v.iter().map(|a| a * a).sum::<f64>();
            for r in 0..n {
                whitened[r][g] = v[r];
            }
        }
        self.whitened = whitened;
    }
}

/// Index of the first maximal element. NaN entries never win.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}
