//! Uniform discretizations of the unit cube.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// `side^dim` points laid out on `[0, 1]^dim`, endpoints included.
///
/// Points are stored row-major: index `i * side + j` in two dimensions is the
/// point `(i / (side - 1), j / (side - 1))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    side: usize,
    coords: Vec<f64>,
}

impl Grid {
    pub fn uniform(dim: usize, side: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be at least 1"));
        }
        if side < 2 {
            return Err(invalid("grid_side", format!("need at least 2 points per axis, got {side}")));
        }
        let n = side
            .checked_pow(dim as u32)
            .ok_or_else(|| invalid("grid_side", "grid too large"))?;
        let step = 1.0 / (side - 1) as f64;
        let mut coords = Vec::with_capacity(n * dim);
        for idx in 0..n {
            let mut rem = idx;
            let mut p = vec![0.0; dim];
            for axis in (0..dim).rev() {
                p[axis] = (rem % side) as f64 * step;
                rem /= side;
            }
            coords.extend_from_slice(&p);
        }
        Ok(Self { dim, side, coords })
    }

    /// A grid made of arbitrary points (used by tests and custom domains).
    pub fn from_points<P: AsRef<[f64]>>(points: &[P]) -> Result<Self> {
        let first = points.first().ok_or(crate::Error::EmptyGrid)?;
        let dim = first.as_ref().len();
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in points {
            crate::kernels::check_dim(dim, p.as_ref().len())?;
            coords.extend_from_slice(p.as_ref());
        }
        Ok(Self { dim, side: 0, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis; 0 for grids built from arbitrary points.
    pub fn side(&self) -> usize {
        self.side
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    /// Index of the grid point equal to `x`, if any.
    pub fn locate(&self, x: &[f64]) -> Option<usize> {
        if x.len() != self.dim {
            return None;
        }
        if self.side >= 2 {
            let scale = (self.side - 1) as f64;
            let mut idx = 0usize;
            for &c in x {
                let k = (c * scale).round();
                if !(0.0..=scale).contains(&k) {
                    return None;
                }
                idx = idx * self.side + k as usize;
            }
            return (self.point(idx) == x).then_some(idx);
        }
        self.points().position(|p| p == x)
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }
}
