//! Periodic flat-coordinate grids over the n-torus.
//!
//! All fields in this crate live on a [`GridSpec`]: a rectangular lattice of
//! `points[a]` samples per axis with coordinate period `lengths[a]`. Index 0 is
//! the fastest-varying axis. Everything wraps around, so stencils never need
//! boundary cases.

use serde::{Deserialize, Serialize};

use crate::GeometryError;

/// Maximum supported spatial dimension.
pub const MAX_DIM: usize = 3;

/// Finite-difference order used by the stencil kernels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FdOrder {
    #[default]
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "4")]
    Four,
}

/// Discretization of a flat-coordinate torus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    /// Samples per axis; entries past `dim` are 1.
    pub points: [usize; MAX_DIM],
    /// Coordinate period per axis; entries past `dim` are 1.
    pub lengths: [f64; MAX_DIM],
    #[serde(default)]
    pub fd_order: FdOrder,
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.points[..self.dim] == other.points[..other.dim]
            && self.lengths[..self.dim] == other.lengths[..other.dim]
    }
}

impl GridSpec {
    pub fn new(dim: usize, points: &[usize], lengths: &[f64]) -> Result<Self, GeometryError> {
        if dim < 2 || dim > MAX_DIM {
            return Err(GeometryError::UnsupportedDimension(dim));
        }
        if points.len() != dim || lengths.len() != dim {
            return Err(GeometryError::ShapeMismatch {
                what: "grid axis count".into(),
            });
        }
        let mut p = [1usize; MAX_DIM];
        let mut l = [1.0f64; MAX_DIM];
        for a in 0..dim {
            if points[a] < 8 {
                return Err(GeometryError::InvalidGrid(format!(
                    "axis {a} has {} points, need at least 8",
                    points[a]
                )));
            }
            if !(lengths[a] > 0.0) || !lengths[a].is_finite() {
                return Err(GeometryError::InvalidGrid(format!(
                    "axis {a} has non-positive period {}",
                    lengths[a]
                )));
            }
            p[a] = points[a];
            l[a] = lengths[a];
        }
        Ok(Self {
            dim,
            points: p,
            lengths: l,
            fd_order: FdOrder::Two,
        })
    }

    /// Uniform cube grid, the common case.
    pub fn cube(dim: usize, n: usize, side: f64) -> Result<Self, GeometryError> {
        let points = vec![n; dim];
        let lengths = vec![side; dim];
        Self::new(dim, &points, &lengths)
    }

    pub fn len(&self) -> usize {
        self.points[..self.dim].iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.lengths[axis] / self.points[axis] as f64
    }

    pub fn max_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(0.0, f64::max)
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim)
            .map(|a| self.spacing(a))
            .fold(f64::INFINITY, f64::min)
    }

    /// Coordinate cell volume h1*h2*...*hdim.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn index(&self, coords: [usize; MAX_DIM]) -> usize {
        let mut idx = 0;
        for a in (0..self.dim).rev() {
            idx = idx * self.points[a] + coords[a];
        }
        idx
    }

    pub fn coords(&self, mut idx: usize) -> [usize; MAX_DIM] {
        let mut c = [0usize; MAX_DIM];
        for a in 0..self.dim {
            c[a] = idx % self.points[a];
            idx /= self.points[a];
        }
        c
    }

    /// Physical position of a lattice point.
    pub fn position(&self, idx: usize) -> [f64; MAX_DIM] {
        let c = self.coords(idx);
        let mut x = [0.0; MAX_DIM];
        for a in 0..self.dim {
            x[a] = c[a] as f64 * self.spacing(a);
        }
        x
    }

    /// Neighbor index shifted by `offset` lattice steps along `axis`, wrapping.
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut c = self.coords(idx);
        let n = self.points[axis] as isize;
        c[axis] = (((c[axis] as isize + offset) % n + n) % n) as usize;
        self.index(c)
    }

    /// Wrap a coordinate displacement into [-L/2, L/2).
    pub fn wrap_displacement(&self, axis: usize, d: f64) -> f64 {
        let l = self.lengths[axis];
        let mut d = d % l;
        if d >= l / 2.0 {
            d -= l;
        } else if d < -l / 2.0 {
            d += l;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_roundtrip() {
        let g = GridSpec::new(3, &[8, 10, 12], &[1.0, 2.0, 3.0]).unwrap();
        for idx in [0, 1, 7, 8, 100, 8 * 10 * 12 - 1] {
            assert_eq!(g.index(g.coords(idx)), idx);
        }
        assert_eq!(g.len(), 8 * 10 * 12);
    }

    #[test]
    fn shift_wraps() {
        let g = GridSpec::cube(2, 8, 1.0).unwrap();
        let p = g.index([0, 3, 0]);
        assert_eq!(g.coords(g.shift(p, 0, -1))[0], 7);
        assert_eq!(g.coords(g.shift(p, 0, 9))[0], 1);
    }

    #[test]
    fn rejects_small_grids() {
        assert!(GridSpec::cube(3, 4, 1.0).is_err());
        assert!(GridSpec::cube(1, 8, 1.0).is_err());
        assert!(GridSpec::cube(3, 8, -1.0).is_err());
    }

    #[test]
    fn wrap_displacement_is_minimal() {
        let g = GridSpec::cube(2, 8, 1.0).unwrap();
        assert!((g.wrap_displacement(0, 0.75) - (-0.25)).abs() < 1e-15);
        assert!((g.wrap_displacement(0, -0.6) - 0.4).abs() < 1e-15);
    }
}
