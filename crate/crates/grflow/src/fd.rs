//! Periodic finite-difference stencils.
//!
//! Centered second-order stencils are the workhorse; fourth-order variants sit
//! behind [`FdOrder::Four`] on the grid. Input arrays are interleaved with
//! `ncomp` components per point; each call differentiates one component and
//! returns a plain scalar array.

use crate::grid::{FdOrder, GridSpec};

#[inline]
fn stride(grid: &GridSpec, axis: usize) -> usize {
    let mut s = 1;
    for a in 0..axis {
        s *= grid.points[a];
    }
    s
}

/// Apply a 1-D periodic stencil along `axis`. `taps` are (offset, weight).
fn apply_stencil(
    grid: &GridSpec,
    values: &[f64],
    ncomp: usize,
    comp: usize,
    axis: usize,
    taps: &[(isize, f64)],
    scale: f64,
) -> Vec<f64> {
    let n = grid.points[axis] as isize;
    let s = stride(grid, axis) as isize;
    let len = grid.len();
    let mut out = vec![0.0; len];
    for idx in 0..len {
        let c = (idx as isize / s) % n;
        let mut acc = 0.0;
        for &(off, w) in taps {
            let cn = ((c + off) % n + n) % n;
            let nidx = idx as isize + (cn - c) * s;
            acc += w * values[nidx as usize * ncomp + comp];
        }
        out[idx] = acc * scale;
    }
    out
}

/// First derivative along `axis`.
pub fn first_diff(grid: &GridSpec, values: &[f64], ncomp: usize, comp: usize, axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    match grid.fd_order {
        FdOrder::Two => apply_stencil(
            grid,
            values,
            ncomp,
            comp,
            axis,
            &[(-1, -1.0), (1, 1.0)],
            1.0 / (2.0 * h),
        ),
        FdOrder::Four => apply_stencil(
            grid,
            values,
            ncomp,
            comp,
            axis,
            &[(-2, 1.0), (-1, -8.0), (1, 8.0), (2, -1.0)],
            1.0 / (12.0 * h),
        ),
    }
}

/// Pure second derivative along `axis`.
pub fn second_diff(grid: &GridSpec, values: &[f64], ncomp: usize, comp: usize, axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    match grid.fd_order {
        FdOrder::Two => apply_stencil(
            grid,
            values,
            ncomp,
            comp,
            axis,
            &[(-1, 1.0), (0, -2.0), (1, 1.0)],
            1.0 / (h * h),
        ),
        FdOrder::Four => apply_stencil(
            grid,
            values,
            ncomp,
            comp,
            axis,
            &[(-2, -1.0), (-1, 16.0), (0, -30.0), (1, 16.0), (2, -1.0)],
            1.0 / (12.0 * h * h),
        ),
    }
}

/// Mixed second derivative d^2/(dx_a dx_b), a != b, as composed first diffs.
pub fn cross_diff(grid: &GridSpec, values: &[f64], ncomp: usize, comp: usize, a: usize, b: usize) -> Vec<f64> {
    debug_assert_ne!(a, b);
    let da = first_diff(grid, values, ncomp, comp, a);
    first_diff(grid, &da, 1, 0, b)
}

/// One-sided forward difference, first order. Used only by the weighted
/// Dirichlet form, where the pair (forward, backward) keeps the form matrix
/// symmetric with a null space of exactly the constants.
pub fn forward_diff(grid: &GridSpec, values: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    apply_stencil(grid, values, 1, 0, axis, &[(0, -1.0), (1, 1.0)], 1.0 / h)
}

/// One-sided backward difference, adjoint partner of [`forward_diff`].
pub fn backward_diff(grid: &GridSpec, values: &[f64], axis: usize) -> Vec<f64> {
    let h = grid.spacing(axis);
    apply_stencil(grid, values, 1, 0, axis, &[(-1, -1.0), (0, 1.0)], 1.0 / h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn mode_field(grid: &GridSpec, k: f64) -> Vec<f64> {
        (0..grid.len())
            .map(|i| (k * grid.position(i)[0]).sin())
            .collect()
    }

    #[test]
    fn centered_diff_hits_fourier_mode() {
        let grid = GridSpec::cube(2, 32, 1.0).unwrap();
        let k = 2.0 * PI;
        let f = mode_field(&grid, k);
        let df = first_diff(&grid, &f, 1, 0, 0);
        let mut worst: f64 = 0.0;
        for i in 0..grid.len() {
            let x = grid.position(i)[0];
            worst = worst.max((df[i] - k * (k * x).cos()).abs());
        }
        assert!(worst < k * k * k / (6.0 * 32.0 * 32.0) * 1.1, "worst {worst}");
    }

    #[test]
    fn fourth_order_is_sharper() {
        let mut g2 = GridSpec::cube(2, 16, 1.0).unwrap();
        let f = mode_field(&g2, 2.0 * PI);
        let err = |grid: &GridSpec, d: &[f64]| -> f64 {
            (0..grid.len())
                .map(|i| {
                    let x = grid.position(i)[0];
                    (d[i] - 2.0 * PI * (2.0 * PI * x).cos()).abs()
                })
                .fold(0.0, f64::max)
        };
        let e2 = err(&g2, &first_diff(&g2, &f, 1, 0, 0));
        g2.fd_order = FdOrder::Four;
        let e4 = err(&g2, &first_diff(&g2, &f, 1, 0, 0));
        assert!(e4 < e2 / 10.0, "e2={e2} e4={e4}");
    }

    #[test]
    fn forward_backward_are_adjoint() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let v: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 1.3).cos()).collect();
        let lhs: f64 = forward_diff(&grid, &u, 0)
            .iter()
            .zip(&v)
            .map(|(a, b)| a * b)
            .sum();
        let rhs: f64 = backward_diff(&grid, &v, 0)
            .iter()
            .zip(&u)
            .map(|(a, b)| a * b)
            .sum();
        assert!((lhs + rhs).abs() < 1e-12);
    }

    #[test]
    fn periodic_sum_of_centered_diff_vanishes() {
        let grid = GridSpec::cube(3, 8, 1.0).unwrap();
        let u: Vec<f64> = (0..grid.len()).map(|i| (i as f64 * 0.3).sin()).collect();
        for axis in 0..3 {
            let s: f64 = first_diff(&grid, &u, 1, 0, axis).iter().sum();
            assert!(s.abs() < 1e-11, "axis {axis}: {s}");
        }
    }
}
