//! Field containers: scalars, symmetric 2-tensors, metrics, top-degree forms
//! and covariant 3-tensors sampled on a periodic grid.

use crate::errors::GeometryError;
use crate::grid::{GridSpec, MAX_DIM};
use crate::linalg::{self, Mat};

pub const SPD_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self, GeometryError> {
        if values.len() != grid.len() {
            return Err(GeometryError::ShapeMismatch {
                what: format!("scalar field has {} values for {} points", values.len(), grid.len()),
            });
        }
        if let Some(p) = values.iter().position(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite { what: "scalar field".into(), point: p });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.len())
            .map(|i| f(&grid.position(i)[..grid.dim]))
            .collect();
        Self { grid: grid.clone(), values }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

#[derive(Debug, Clone)]
pub struct SymTensorField {
    pub grid: GridSpec,
    /// Packed upper triangles, `sym_len(dim)` per point.
    pub values: Vec<f64>,
}

impl SymTensorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len() * linalg::sym_len(grid.dim)] }
    }

    pub fn ncomp(&self) -> usize {
        linalg::sym_len(self.grid.dim)
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(&[f64], usize, usize) -> f64) -> Self {
        let dim = grid.dim;
        let nc = linalg::sym_len(dim);
        let mut values = vec![0.0; grid.len() * nc];
        for p in 0..grid.len() {
            let x = grid.position(p);
            for i in 0..dim {
                for j in i..dim {
                    values[p * nc + linalg::sym_slot(dim, i, j)] = f(&x[..dim], i, j);
                }
            }
        }
        Self { grid: grid.clone(), values }
    }

    #[inline]
    pub fn at(&self, p: usize) -> Mat {
        let nc = self.ncomp();
        linalg::unpack(self.grid.dim, &self.values[p * nc..(p + 1) * nc])
    }

    #[inline]
    pub fn set(&mut self, p: usize, m: &Mat) {
        let nc = self.ncomp();
        let dim = self.grid.dim;
        linalg::pack(dim, m, &mut self.values[p * nc..(p + 1) * nc]);
    }

    #[inline]
    pub fn comp(&self, p: usize, i: usize, j: usize) -> f64 {
        let nc = self.ncomp();
        self.values[p * nc + linalg::sym_slot(self.grid.dim, i, j)]
    }

    pub fn identity(grid: &GridSpec) -> Self {
        Self::from_fn(grid, |_, i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// A Riemannian metric: an SPD-validated symmetric tensor field.
#[derive(Debug, Clone)]
pub struct MetricField {
    pub base: SymTensorField,
}

impl MetricField {
    /// Validate positive definiteness pointwise. Eigenvalues below
    /// [`SPD_FLOOR`] are treated as degenerate rather than regularized.
    pub fn new(base: SymTensorField) -> Result<Self, GeometryError> {
        let dim = base.grid.dim;
        for p in 0..base.grid.len() {
            let ev = linalg::sym_eigenvalues(dim, &base.at(p));
            if !(ev[0] > SPD_FLOOR) {
                return Err(GeometryError::NotPositiveDefinite { point: p, eigenvalue: ev[0] });
            }
        }
        Ok(Self { base })
    }

    pub fn flat(grid: &GridSpec) -> Self {
        Self { base: SymTensorField::identity(grid) }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.base.grid
    }

    #[inline]
    pub fn at(&self, p: usize) -> Mat {
        self.base.at(p)
    }

    /// Pointwise inverse metric, materialized once per heavy pass.
    pub fn inverse_field(&self) -> Vec<Mat> {
        let dim = self.grid().dim;
        (0..self.grid().len())
            .map(|p| linalg::inverse(dim, &self.at(p)))
            .collect()
    }

    pub fn sqrt_det_field(&self) -> Vec<f64> {
        let dim = self.grid().dim;
        (0..self.grid().len())
            .map(|p| linalg::det(dim, &self.at(p)).sqrt())
            .collect()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let dim = self.grid().dim;
        (0..self.grid().len())
            .map(|p| linalg::sym_eigenvalues(dim, &self.at(p))[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_inverse_eigenvalue(&self) -> f64 {
        let dim = self.grid().dim;
        (0..self.grid().len())
            .map(|p| {
                let inv = linalg::inverse(dim, &self.at(p));
                linalg::sym_eigenvalues(dim, &inv)[dim - 1]
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// ∫ f dV_g by the pointwise sum × √det g × cell volume rule.
    pub fn integrate(&self, f: &ScalarField) -> f64 {
        debug_assert!(f.grid == *self.grid());
        let dim = self.grid().dim;
        let cell = self.grid().cell_volume();
        let mut acc = 0.0;
        for p in 0..self.grid().len() {
            acc += f.values[p] * linalg::det(dim, &self.at(p)).sqrt();
        }
        acc * cell
    }
}

/// Closed three-form H = φ dx¹∧dx²∧dx³ on a 3-torus. Top degree, so dH = 0
/// holds identically.
#[derive(Debug, Clone)]
pub struct ThreeFormField {
    pub coeff: ScalarField,
}

impl ThreeFormField {
    pub fn new(coeff: ScalarField) -> Result<Self, GeometryError> {
        if coeff.grid.dim != 3 {
            return Err(GeometryError::UnsupportedDimension(coeff.grid.dim));
        }
        Ok(Self { coeff })
    }

    pub fn zero(grid: &GridSpec) -> Result<Self, GeometryError> {
        Self::new(ScalarField::constant(grid, 0.0))
    }

    pub fn grid(&self) -> &GridSpec {
        &self.coeff.grid
    }

    /// Fully antisymmetric component H_{ijk}.
    #[inline]
    pub fn component(&self, p: usize, i: usize, j: usize, k: usize) -> f64 {
        self.coeff.values[p] * levi_civita(i, j, k)
    }
}

#[inline]
pub fn levi_civita(i: usize, j: usize, k: usize) -> f64 {
    match (i, j, k) {
        (0, 1, 2) | (1, 2, 0) | (2, 0, 1) => 1.0,
        (0, 2, 1) | (2, 1, 0) | (1, 0, 2) => -1.0,
        _ => 0.0,
    }
}

/// Covariant 3-tensor field, dim³ components per point (e.g. ∇Q, Christoffel).
#[derive(Debug, Clone)]
pub struct Tensor3Field {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl Tensor3Field {
    pub fn zeros(grid: &GridSpec) -> Self {
        let d = grid.dim;
        Self { grid: grid.clone(), values: vec![0.0; grid.len() * d * d * d] }
    }

    #[inline]
    pub fn slot(&self, i: usize, j: usize, k: usize) -> usize {
        let d = self.grid.dim;
        (i * d + j) * d + k
    }

    #[inline]
    pub fn get(&self, p: usize, i: usize, j: usize, k: usize) -> f64 {
        let d = self.grid.dim;
        self.values[p * d * d * d + self.slot(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, p: usize, i: usize, j: usize, k: usize, v: f64) {
        let d = self.grid.dim;
        let s = self.slot(i, j, k);
        self.values[p * d * d * d + s] = v;
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Covector (1-form) field, dim components per point.
#[derive(Debug, Clone)]
pub struct CoVectorField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl CoVectorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self { grid: grid.clone(), values: vec![0.0; grid.len() * grid.dim] }
    }

    #[inline]
    pub fn get(&self, p: usize, i: usize) -> f64 {
        self.values[p * self.grid.dim + i]
    }

    #[inline]
    pub fn set(&mut self, p: usize, i: usize, v: f64) {
        let d = self.grid.dim;
        self.values[p * d + i] = v;
    }
}

/// Periodic multilinear interpolation of a scalar array at physical position x.
pub fn interpolate_scalar(grid: &GridSpec, values: &[f64], x: &[f64]) -> f64 {
    interpolate_component(grid, values, 1, 0, x)
}

/// Same, for one component of an interleaved array (`ncomp` values per point).
pub fn interpolate_component(
    grid: &GridSpec,
    values: &[f64],
    ncomp: usize,
    comp: usize,
    x: &[f64],
) -> f64 {
    let dim = grid.dim;
    let mut base = [0usize; MAX_DIM];
    let mut frac = [0.0f64; MAX_DIM];
    for a in 0..dim {
        let h = grid.spacing(a);
        let l = grid.lengths[a];
        let mut xa = x[a] % l;
        if xa < 0.0 {
            xa += l;
        }
        let t = xa / h;
        let i = t.floor() as usize % grid.points[a];
        base[a] = i;
        frac[a] = t - t.floor();
    }
    let corners = 1usize << dim;
    let mut acc = 0.0;
    for c in 0..corners {
        let mut coords = [0usize; MAX_DIM];
        let mut w = 1.0;
        for a in 0..dim {
            let up = (c >> a) & 1 == 1;
            coords[a] = if up { (base[a] + 1) % grid.points[a] } else { base[a] };
            w *= if up { frac[a] } else { 1.0 - frac[a] };
        }
        acc += w * values[grid.index(coords) * ncomp + comp];
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spd_check_flags_offending_point() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        let mut base = SymTensorField::identity(&grid);
        let bad = 17;
        let m = [[0.5, 1.0, 0.0], [1.0, 0.5, 0.0], [0.0, 0.0, 0.0]];
        base.set(bad, &m);
        match MetricField::new(base) {
            Err(GeometryError::NotPositiveDefinite { point, .. }) => assert_eq!(point, bad),
            other => panic!("expected SPD failure, got {other:?}"),
        }
    }

    #[test]
    fn integrate_flat_constant() {
        let grid = GridSpec::cube(3, 8, 2.0).unwrap();
        let g = MetricField::flat(&grid);
        let f = ScalarField::constant(&grid, 3.0);
        assert!((g.integrate(&f) - 3.0 * 8.0).abs() < 1e-12);
    }

    #[test]
    fn three_form_needs_dim_three() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        assert!(ThreeFormField::zero(&grid).is_err());
    }

    #[test]
    fn interpolation_reproduces_grid_values() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        let f = ScalarField::from_fn(&grid, |x| x[0] + 2.0 * x[1]);
        for p in [0, 5, 33, 63] {
            let x = grid.position(p);
            let v = interpolate_scalar(&grid, &f.values, &x[..2]);
            assert!((v - f.values[p]).abs() < 1e-14);
        }
        // midpoint of a bilinear function is the average of the corners
        let v = interpolate_scalar(&grid, &f.values, &[0.0625, 0.0]);
        assert!((v - 0.0625).abs() < 1e-14);
    }
}
