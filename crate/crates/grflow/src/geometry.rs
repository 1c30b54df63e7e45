//! Discrete Riemannian tensor calculus on periodic grids: Christoffel symbols,
//! Ricci curvature, covariant derivatives of scalars and 2-tensors, and the
//! operators attached to a closed three-form.
//!
//! All derivatives are centered finite differences with periodic wraparound
//! (fourth-order stencils behind `FdOrder::Four`). Sign and normalization
//! conventions:
//!
//! * form inner products carry the 1/k! normalization, so
//!   `H²_ij = ½ H_ikl H_j^{kl}` and `|H|² = (1/6) H_ijk H^{ijk}`, which makes
//!   `tr_g H² = 3 |H|²` an exact identity;
//! * the codifferential is `d* = -★d★` on top-degree forms, fixed so that
//!   `∂ₜH = -dd*H` is a heat semigroup (the Fourier-mode test pins this down).

use crate::errors::GeometryError;
use crate::fd;
use crate::field::{
    levi_civita, CoVectorField, MetricField, ScalarField, SymTensorField, ThreeFormField,
    Tensor3Field,
};
use crate::grid::MAX_DIM;
use crate::linalg::{self, Mat};

/// Shared per-metric precomputations for the heavy kernels.
pub struct MetricWorkspace {
    pub ginv: Vec<Mat>,
    pub sqrt_det: Vec<f64>,
    pub gamma: Tensor3Field,
}

impl MetricWorkspace {
    pub fn new(g: &MetricField) -> Self {
        let ginv = g.inverse_field();
        let sqrt_det = g.sqrt_det_field();
        let gamma = christoffel_with(g, &ginv);
        Self { ginv, sqrt_det, gamma }
    }
}

fn check_grids(a: &crate::grid::GridSpec, b: &crate::grid::GridSpec, what: &str) -> Result<(), GeometryError> {
    if a != b {
        return Err(GeometryError::ShapeMismatch { what: what.into() });
    }
    Ok(())
}

/// Christoffel symbols Γ^k_ij of the Levi-Civita connection, slot (k, i, j).
pub fn christoffel(g: &MetricField) -> Tensor3Field {
    christoffel_with(g, &g.inverse_field())
}

pub fn christoffel_with(g: &MetricField, ginv: &[Mat]) -> Tensor3Field {
    let grid = g.grid();
    let dim = grid.dim;
    let nc = g.base.ncomp();
    // dg[a][slot] = ∂_a g_ij
    let mut dg: Vec<Vec<Vec<f64>>> = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut per_comp = Vec::with_capacity(nc);
        for c in 0..nc {
            per_comp.push(fd::first_diff(grid, &g.base.values, nc, c, a));
        }
        dg.push(per_comp);
    }
    let slot = |i: usize, j: usize| linalg::sym_slot(dim, i, j);
    let mut gamma = Tensor3Field::zeros(grid);
    for p in 0..grid.len() {
        for i in 0..dim {
            for j in i..dim {
                for k in 0..dim {
                    let mut s = 0.0;
                    for l in 0..dim {
                        s += ginv[p][k][l]
                            * (dg[i][slot(l, j)][p] + dg[j][slot(l, i)][p] - dg[l][slot(i, j)][p]);
                    }
                    let v = 0.5 * s;
                    gamma.set(p, k, i, j, v);
                    if i != j {
                        gamma.set(p, k, j, i, v);
                    }
                }
            }
        }
    }
    gamma
}

/// Coordinate Ricci tensor and scalar curvature.
pub fn ricci(g: &MetricField) -> (SymTensorField, ScalarField) {
    let ws = MetricWorkspace::new(g);
    ricci_with(g, &ws)
}

pub fn ricci_with(g: &MetricField, ws: &MetricWorkspace) -> (SymTensorField, ScalarField) {
    let grid = g.grid();
    let dim = grid.dim;
    let d3 = dim * dim * dim;
    let gamma = &ws.gamma;

    // ∂_k Γ^k_ij summed over k, per (i, j)
    let mut div_gamma = vec![vec![0.0; grid.len()]; dim * dim];
    for i in 0..dim {
        for j in 0..dim {
            for k in 0..dim {
                let comp = gamma.slot(k, i, j);
                let d = fd::first_diff(grid, &gamma.values, d3, comp, k);
                let tgt = &mut div_gamma[i * dim + j];
                for p in 0..grid.len() {
                    tgt[p] += d[p];
                }
            }
        }
    }
    // trace T_i = Γ^k_ik and its derivatives ∂_j T_i
    let mut trace = vec![vec![0.0; grid.len()]; dim];
    for i in 0..dim {
        for p in 0..grid.len() {
            let mut s = 0.0;
            for k in 0..dim {
                s += gamma.get(p, k, i, k);
            }
            trace[i][p] = s;
        }
    }
    let mut dtrace = vec![Vec::new(); dim * dim]; // [i*dim + j] = ∂_j T_i
    for i in 0..dim {
        for j in 0..dim {
            dtrace[i * dim + j] = fd::first_diff(grid, &trace[i], 1, 0, j);
        }
    }

    let mut ric = SymTensorField::zeros(grid);
    let mut scal = ScalarField::constant(grid, 0.0);
    for p in 0..grid.len() {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            for j in 0..dim {
                let mut quad = 0.0;
                for l in 0..dim {
                    quad += trace[l][p] * gamma.get(p, l, i, j);
                    for k in 0..dim {
                        quad -= gamma.get(p, k, j, l) * gamma.get(p, l, i, k);
                    }
                }
                m[i][j] = div_gamma[i * dim + j][p] - dtrace[i * dim + j][p] + quad;
            }
        }
        ric.set(p, &m); // pack symmetrizes; the FD asymmetry is O(h²)
        let mut r = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                r += ws.ginv[p][i][j] * 0.5 * (m[i][j] + m[j][i]);
            }
        }
        scal.values[p] = r;
    }
    (ric, scal)
}

/// Output bundle of [`scalar_calculus`].
pub struct ScalarCalculus {
    /// ∂_i u, the coordinate gradient.
    pub grad: CoVectorField,
    /// |∇u|² = g^{ij} ∂_i u ∂_j u.
    pub grad_sq: ScalarField,
    /// Covariant Hessian ∇²u.
    pub hess: SymTensorField,
    /// Δu = tr_g ∇²u.
    pub lap: ScalarField,
}

pub fn scalar_calculus(g: &MetricField, u: &ScalarField) -> Result<ScalarCalculus, GeometryError> {
    let ws = MetricWorkspace::new(g);
    scalar_calculus_with(g, u, &ws)
}

pub fn scalar_calculus_with(
    g: &MetricField,
    u: &ScalarField,
    ws: &MetricWorkspace,
) -> Result<ScalarCalculus, GeometryError> {
    let grid = g.grid();
    check_grids(grid, &u.grid, "metric and scalar field grids differ")?;
    let dim = grid.dim;

    let mut du = Vec::with_capacity(dim);
    for a in 0..dim {
        du.push(fd::first_diff(grid, &u.values, 1, 0, a));
    }
    let mut ddu = vec![Vec::new(); dim * dim];
    for a in 0..dim {
        for b in a..dim {
            ddu[a * dim + b] = if a == b {
                fd::second_diff(grid, &u.values, 1, 0, a)
            } else {
                fd::cross_diff(grid, &u.values, 1, 0, a, b)
            };
        }
    }

    let mut grad = CoVectorField::zeros(grid);
    let mut grad_sq = ScalarField::constant(grid, 0.0);
    let mut hess = SymTensorField::zeros(grid);
    let mut lap = ScalarField::constant(grid, 0.0);
    for p in 0..grid.len() {
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            grad.set(p, i, du[i][p]);
            for j in i..dim {
                let mut v = ddu[i * dim + j][p];
                for k in 0..dim {
                    v -= ws.gamma.get(p, k, i, j) * du[k][p];
                }
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        hess.set(p, &m);
        let mut gs = 0.0;
        let mut l = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                gs += ws.ginv[p][i][j] * du[i][p] * du[j][p];
                l += ws.ginv[p][i][j] * m[i][j];
            }
        }
        grad_sq.values[p] = gs;
        lap.values[p] = l;
    }
    Ok(ScalarCalculus { grad, grad_sq, hess, lap })
}

/// Output bundle of [`tensor_calculus`].
pub struct TensorCalculus {
    /// Full covariant derivative ∇_k Q_ij.
    pub nabla: Tensor3Field,
    /// (div Q)_j = g^{ik} ∇_i Q_kj.
    pub div: CoVectorField,
    /// |∇Q|² with all indices raised by g.
    pub norm_sq: ScalarField,
    /// |∇(tr_g Q)|².
    pub grad_trace_sq: ScalarField,
}

pub fn tensor_calculus(g: &MetricField, q: &SymTensorField) -> Result<TensorCalculus, GeometryError> {
    let ws = MetricWorkspace::new(g);
    tensor_calculus_with(g, q, &ws)
}

pub fn tensor_calculus_with(
    g: &MetricField,
    q: &SymTensorField,
    ws: &MetricWorkspace,
) -> Result<TensorCalculus, GeometryError> {
    let grid = g.grid();
    check_grids(grid, &q.grid, "metric and tensor field grids differ")?;
    let dim = grid.dim;
    let nc = q.ncomp();
    let slot = |i: usize, j: usize| linalg::sym_slot(dim, i, j);

    let mut dq: Vec<Vec<Vec<f64>>> = Vec::with_capacity(dim);
    for a in 0..dim {
        let mut per = Vec::with_capacity(nc);
        for c in 0..nc {
            per.push(fd::first_diff(grid, &q.values, nc, c, a));
        }
        dq.push(per);
    }

    let mut nabla = Tensor3Field::zeros(grid);
    for p in 0..grid.len() {
        for k in 0..dim {
            for i in 0..dim {
                for j in i..dim {
                    let mut v = dq[k][slot(i, j)][p];
                    for l in 0..dim {
                        v -= ws.gamma.get(p, l, k, i) * q.comp(p, l, j)
                            + ws.gamma.get(p, l, k, j) * q.comp(p, i, l);
                    }
                    nabla.set(p, k, i, j, v);
                    if i != j {
                        nabla.set(p, k, j, i, v);
                    }
                }
            }
        }
    }

    let mut div = CoVectorField::zeros(grid);
    let mut norm_sq = ScalarField::constant(grid, 0.0);
    for p in 0..grid.len() {
        let gi = &ws.ginv[p];
        for j in 0..dim {
            let mut s = 0.0;
            for i in 0..dim {
                for k in 0..dim {
                    s += gi[i][k] * nabla.get(p, i, k, j);
                }
            }
            div.set(p, j, s);
        }
        let mut ns = 0.0;
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    for a in 0..dim {
                        for b in 0..dim {
                            for c in 0..dim {
                                ns += gi[k][a]
                                    * gi[i][b]
                                    * gi[j][c]
                                    * nabla.get(p, k, i, j)
                                    * nabla.get(p, a, b, c);
                            }
                        }
                    }
                }
            }
        }
        norm_sq.values[p] = ns;
    }

    // |∇(tr_g Q)|² with ∇_k(tr_g Q) = g^{ij} ∇_k Q_ij (metric compatibility).
    // Contracting the discrete ∇Q, rather than differencing the trace field,
    // keeps the pointwise Cauchy-Schwarz bound |∇ tr Q|² ≤ n |∇Q|² exact.
    let mut grad_trace_sq = ScalarField::constant(grid, 0.0);
    for p in 0..grid.len() {
        let gi = &ws.ginv[p];
        let mut dtr = [0.0; 3];
        for (k, d) in dtr.iter_mut().enumerate().take(dim) {
            for i in 0..dim {
                for j in 0..dim {
                    *d += gi[i][j] * nabla.get(p, k, i, j);
                }
            }
        }
        let mut s = 0.0;
        for a in 0..dim {
            for b in 0..dim {
                s += gi[a][b] * dtr[a] * dtr[b];
            }
        }
        grad_trace_sq.values[p] = s;
    }

    Ok(TensorCalculus { nabla, div, norm_sq, grad_trace_sq })
}

/// Pointwise g-orthogonal split Q = (tr_g Q / n) g + V with tr_g V = 0.
pub fn tracefree_decompose(
    g: &MetricField,
    q: &SymTensorField,
) -> Result<(SymTensorField, SymTensorField), GeometryError> {
    let grid = g.grid();
    check_grids(grid, &q.grid, "metric and tensor field grids differ")?;
    let dim = grid.dim;
    let ginv = g.inverse_field();
    let mut trace_part = SymTensorField::zeros(grid);
    let mut v = SymTensorField::zeros(grid);
    for p in 0..grid.len() {
        let mut tr = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                tr += ginv[p][i][j] * q.comp(p, i, j);
            }
        }
        let gp = g.at(p);
        let qp = q.at(p);
        let mut tp = [[0.0; MAX_DIM]; MAX_DIM];
        let mut vp = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            for j in 0..dim {
                tp[i][j] = tr / dim as f64 * gp[i][j];
                vp[i][j] = qp[i][j] - tp[i][j];
            }
        }
        trace_part.set(p, &tp);
        v.set(p, &vp);
    }
    Ok((trace_part, v))
}

/// Output bundle of [`hform_ops`].
pub struct HFormOps {
    /// H²_ij = ½ H_ikl H_j^{kl}, positive semidefinite.
    pub h_sq: SymTensorField,
    /// |H|² = (1/6) H_ijk H^{ijk}.
    pub norm_h_sq: ScalarField,
    /// tr_g H² = 3 |H|², the scalar entering the volume-form and conjugate
    /// heat equations.
    pub trace_h_sq: ScalarField,
    /// dd*H with d* = -★d★.
    pub dd_star: ThreeFormField,
}

pub fn hform_ops(g: &MetricField, h: &ThreeFormField) -> Result<HFormOps, GeometryError> {
    let grid = g.grid();
    if grid.dim != 3 {
        return Err(GeometryError::UnsupportedDimension(grid.dim));
    }
    check_grids(grid, h.grid(), "metric and three-form grids differ")?;
    let ginv = g.inverse_field();
    let sqrt_det = g.sqrt_det_field();
    hform_ops_with(g, h, &ginv, &sqrt_det)
}

pub fn hform_ops_with(
    g: &MetricField,
    h: &ThreeFormField,
    ginv: &[Mat],
    sqrt_det: &[f64],
) -> Result<HFormOps, GeometryError> {
    let grid = g.grid();
    let dim = 3;
    let mut h_sq = SymTensorField::zeros(grid);
    let mut norm_h_sq = ScalarField::constant(grid, 0.0);
    let mut trace_h_sq = ScalarField::constant(grid, 0.0);
    for p in 0..grid.len() {
        let gi = &ginv[p];
        let phi = h.coeff.values[p];
        let mut m = [[0.0; MAX_DIM]; MAX_DIM];
        for i in 0..dim {
            for j in i..dim {
                // ½ H_ikl H_jmn g^{km} g^{ln}, direct double contraction
                let mut s = 0.0;
                for k in 0..dim {
                    for l in 0..dim {
                        let hikl = levi_civita(i, k, l);
                        if hikl == 0.0 {
                            continue;
                        }
                        for mm in 0..dim {
                            for nn in 0..dim {
                                let hjmn = levi_civita(j, mm, nn);
                                if hjmn == 0.0 {
                                    continue;
                                }
                                s += hikl * hjmn * gi[k][mm] * gi[l][nn];
                            }
                        }
                    }
                }
                let v = 0.5 * phi * phi * s;
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        h_sq.set(p, &m);
        // |H|² = (1/6) H_ijk H^{ijk} = φ² det(g⁻¹)
        let mut full = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                for k in 0..dim {
                    let hijk = levi_civita(i, j, k);
                    if hijk == 0.0 {
                        continue;
                    }
                    for a in 0..dim {
                        for b in 0..dim {
                            for c in 0..dim {
                                let habc = levi_civita(a, b, c);
                                if habc == 0.0 {
                                    continue;
                                }
                                full += hijk * habc * gi[i][a] * gi[j][b] * gi[k][c];
                            }
                        }
                    }
                }
            }
        }
        norm_h_sq.values[p] = phi * phi * full / 6.0;
        let gp = g.at(p);
        let mut tr = 0.0;
        for i in 0..dim {
            for j in 0..dim {
                tr += gi[i][j] * m[i][j];
            }
        }
        let _ = gp;
        trace_h_sq.values[p] = tr;
    }

    // dd*H: with ψ = φ/√G, the coefficient is -∂_i(√G g^{ij} ∂_j ψ).
    let psi: Vec<f64> = (0..grid.len())
        .map(|p| h.coeff.values[p] / sqrt_det[p])
        .collect();
    let mut dpsi = Vec::with_capacity(dim);
    for a in 0..dim {
        dpsi.push(fd::first_diff(grid, &psi, 1, 0, a));
    }
    let mut flux = vec![vec![0.0; grid.len()]; dim];
    for p in 0..grid.len() {
        for i in 0..dim {
            let mut s = 0.0;
            for j in 0..dim {
                s += ginv[p][i][j] * dpsi[j][p];
            }
            flux[i][p] = sqrt_det[p] * s;
        }
    }
    let mut coeff = vec![0.0; grid.len()];
    for i in 0..dim {
        let d = fd::first_diff(grid, &flux[i], 1, 0, i);
        for p in 0..grid.len() {
            coeff[p] -= d[p];
        }
    }
    let dd_star = ThreeFormField::new(ScalarField::new(grid.clone(), coeff)?)?;

    Ok(HFormOps { h_sq, norm_h_sq, trace_h_sq, dd_star })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    fn conformal_2d(n: usize, amp: f64) -> (MetricField, ScalarField) {
        let grid = GridSpec::cube(2, n, 1.0).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| amp * (2.0 * PI * x[0]).sin());
        let base = SymTensorField::from_fn(&grid, |x, i, j| {
            if i == j {
                (2.0 * amp * (2.0 * PI * x[0]).sin()).exp()
            } else {
                0.0
            }
        });
        (MetricField::new(base).unwrap(), phi)
    }

    #[test]
    fn flat_metric_has_zero_gamma_and_ricci() {
        let grid = GridSpec::cube(3, 8, 1.0).unwrap();
        let g = MetricField::flat(&grid);
        let gamma = christoffel(&g);
        assert!(gamma.sup_norm() < 1e-14);
        let (ric, r) = ricci(&g);
        assert!(ric.sup_norm() < 1e-14);
        assert!(r.sup_norm() < 1e-14);
    }

    #[test]
    fn conformal_christoffel_matches_closed_form() {
        let n = 32;
        let amp = 0.1;
        let (g, _) = conformal_2d(n, amp);
        let gamma = christoffel(&g);
        let grid = g.grid().clone();
        // Γ^k_ij = δ^k_i ∂_jφ + δ^k_j ∂_iφ - δ_ij δ^{kl} ∂_lφ for g = e^{2φ}δ
        let mut worst: f64 = 0.0;
        for p in 0..grid.len() {
            let x = grid.position(p);
            let dphi = [amp * 2.0 * PI * (2.0 * PI * x[0]).cos(), 0.0];
            for k in 0..2 {
                for i in 0..2 {
                    for j in 0..2 {
                        let exact = if k == i { dphi[j] } else { 0.0 }
                            + if k == j { dphi[i] } else { 0.0 }
                            - if i == j { dphi[k] } else { 0.0 };
                        worst = worst.max((gamma.get(p, k, i, j) - exact).abs());
                    }
                }
            }
        }
        let h = 1.0 / n as f64;
        assert!(worst < 10.0 * h * h * (2.0 * PI).powi(3) * amp, "worst {worst}");
    }

    #[test]
    fn conformal_scalar_curvature_matches_oracle() {
        let n = 32;
        let amp = 0.1;
        let (g, _) = conformal_2d(n, amp);
        let (_, r) = ricci(&g);
        let grid = g.grid().clone();
        let mut worst: f64 = 0.0;
        for p in 0..grid.len() {
            let x = grid.position(p);
            let phi = amp * (2.0 * PI * x[0]).sin();
            let lap0 = -amp * 4.0 * PI * PI * (2.0 * PI * x[0]).sin();
            let exact = -2.0 * (-2.0 * phi).exp() * lap0;
            worst = worst.max((r.values[p] - exact).abs());
        }
        let h = 1.0 / n as f64;
        assert!(worst < 40.0 * h * h * (2.0 * PI).powi(4) * amp, "worst {worst}");
    }

    #[test]
    fn product_metric_ricci_is_block_diagonal() {
        let n = 16;
        let amp = 0.05;
        let grid = GridSpec::cube(3, n, 1.0).unwrap();
        let base = SymTensorField::from_fn(&grid, |x, i, j| {
            if i == j && i < 2 {
                (2.0 * amp * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()).exp()
            } else if i == j {
                1.0
            } else {
                0.0
            }
        });
        let g = MetricField::new(base).unwrap();
        let (ric, _) = ricci(&g);
        let h = 1.0 / n as f64;
        let tol = 50.0 * h * h;
        for p in 0..grid.len() {
            assert!(ric.comp(p, 0, 2).abs() < tol);
            assert!(ric.comp(p, 1, 2).abs() < tol);
            assert!(ric.comp(p, 2, 2).abs() < tol);
        }
    }

    #[test]
    fn flat_laplacian_hits_fourier_mode() {
        let grid = GridSpec::cube(3, 16, 1.0).unwrap();
        let g = MetricField::flat(&grid);
        let u = ScalarField::from_fn(&grid, |x| (2.0 * PI * x[0]).sin());
        let sc = scalar_calculus(&g, &u).unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..grid.len() {
            worst = worst.max((sc.lap.values[p] + 4.0 * PI * PI * u.values[p]).abs());
        }
        let h = 1.0 / 16.0;
        assert!(worst < (2.0 * PI).powi(4) / 12.0 * h * h * 1.2, "worst {worst}");
    }

    #[test]
    fn constant_scalar_has_zero_calculus() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        let (g, _) = conformal_2d(8, 0.1);
        let _ = grid;
        let u = ScalarField::constant(g.grid(), 5.0);
        let sc = scalar_calculus(&g, &u).unwrap();
        assert!(sc.grad_sq.sup_norm() < 1e-14);
        assert!(sc.hess.sup_norm() < 1e-14);
        assert!(sc.lap.sup_norm() < 1e-14);
    }

    #[test]
    fn laplacian_integrates_to_zero() {
        let (g, _) = conformal_2d(16, 0.1);
        let u = ScalarField::from_fn(g.grid(), |x| {
            (2.0 * PI * x[0]).cos() * (4.0 * PI * x[1]).sin() + 0.5 * (2.0 * PI * x[1]).cos()
        });
        let sc = scalar_calculus(&g, &u).unwrap();
        let integral = g.integrate(&sc.lap);
        let h = g.grid().spacing(0);
        assert!(integral.abs() < 20.0 * h * h, "integral {integral}");
    }

    #[test]
    fn metric_is_covariantly_constant() {
        let (g, _) = conformal_2d(16, 0.1);
        let tc = tensor_calculus(&g, &g.base).unwrap();
        // Γ is assembled from the same finite differences as ∂g, so ∇g
        // vanishes to rounding, not just to truncation order.
        assert!(tc.nabla.sup_norm() < 1e-11, "sup {}", tc.nabla.sup_norm());
    }

    #[test]
    fn constant_tensor_flat_metric_nabla_zero() {
        let grid = GridSpec::cube(3, 8, 1.0).unwrap();
        let g = MetricField::flat(&grid);
        let q = SymTensorField::from_fn(&grid, |_, i, j| (i + j) as f64 + 1.0);
        let tc = tensor_calculus(&g, &q).unwrap();
        assert!(tc.nabla.sup_norm() < 1e-14);
        assert!(tc.norm_sq.sup_norm() < 1e-14);
        assert!(tc.grad_trace_sq.sup_norm() < 1e-14);
    }

    #[test]
    fn tracefree_decompose_recovers_parts() {
        let (g, _) = conformal_2d(8, 0.1);
        let grid = g.grid().clone();
        // Q = g → V = 0
        let (tp, v) = tracefree_decompose(&g, &g.base).unwrap();
        for p in 0..grid.len() {
            for i in 0..2 {
                for j in 0..2 {
                    assert!((tp.comp(p, i, j) - g.base.comp(p, i, j)).abs() < 1e-13);
                    assert!(v.comp(p, i, j).abs() < 1e-13);
                }
            }
        }
        // pointwise Pythagoras in the g-inner product for a generic Q
        let q = SymTensorField::from_fn(&grid, |x, i, j| {
            (1 + i + j) as f64 * (2.0 * PI * x[0]).cos() + if i == j { 2.0 } else { 0.3 }
        });
        let (tp, v) = tracefree_decompose(&g, &q).unwrap();
        let ginv = g.inverse_field();
        let norm2 = |m: &Mat, gi: &Mat| -> f64 {
            let mut s = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    for a in 0..2 {
                        for b in 0..2 {
                            s += gi[i][a] * gi[j][b] * m[i][j] * m[a][b];
                        }
                    }
                }
            }
            s
        };
        for p in (0..grid.len()).step_by(7) {
            let q2 = norm2(&q.at(p), &ginv[p]);
            let t2 = norm2(&tp.at(p), &ginv[p]);
            let v2 = norm2(&v.at(p), &ginv[p]);
            assert!((q2 - t2 - v2).abs() < 1e-12 * (1.0 + q2));
        }
    }

    #[test]
    fn hform_flat_hand_values() {
        let grid = GridSpec::cube(3, 8, 1.0).unwrap();
        let g = MetricField::flat(&grid);
        let h = ThreeFormField::new(ScalarField::constant(&grid, 2.0)).unwrap();
        let ops = hform_ops(&g, &h).unwrap();
        for p in 0..grid.len() {
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if i == j { 4.0 } else { 0.0 };
                    assert!((ops.h_sq.comp(p, i, j) - expect).abs() < 1e-13);
                }
            }
            assert!((ops.norm_h_sq.values[p] - 4.0).abs() < 1e-13);
            assert!((ops.trace_h_sq.values[p] - 12.0).abs() < 1e-13);
        }
        assert!(ops.dd_star.coeff.sup_norm() < 1e-12);
    }

    #[test]
    fn hform_trace_identity_on_curved_metric() {
        let grid = GridSpec::cube(3, 8, 1.0).unwrap();
        let base = SymTensorField::from_fn(&grid, |x, i, j| {
            let bump = 0.2 * (2.0 * PI * x[0]).sin();
            if i == j {
                1.0 + 0.1 * i as f64 + bump * bump
            } else {
                0.05 * bump
            }
        });
        let g = MetricField::new(base).unwrap();
        let h = ThreeFormField::new(ScalarField::from_fn(&grid, |x| {
            1.0 + 0.3 * (2.0 * PI * x[1]).cos()
        }))
        .unwrap();
        let ops = hform_ops(&g, &h).unwrap();
        for p in 0..grid.len() {
            let tr = ops.trace_h_sq.values[p];
            assert!(
                (tr - 3.0 * ops.norm_h_sq.values[p]).abs() < 1e-12 * (1.0 + tr.abs()),
                "trace identity broken at {p}"
            );
            let ev = linalg::sym_eigenvalues(3, &ops.h_sq.at(p));
            assert!(ev[0] > -1e-12, "H² not PSD at {p}: {}", ev[0]);
        }
    }

    #[test]
    fn dd_star_matches_flat_fourier_oracle() {
        let n = 32;
        let grid = GridSpec::cube(3, n, 1.0).unwrap();
        let g = MetricField::flat(&grid);
        let h = ThreeFormField::new(ScalarField::from_fn(&grid, |x| {
            1.0 + 0.3 * (2.0 * PI * x[0]).sin()
        }))
        .unwrap();
        let ops = hform_ops(&g, &h).unwrap();
        let mut worst: f64 = 0.0;
        for p in 0..grid.len() {
            let x = grid.position(p);
            let lap0 = -0.3 * 4.0 * PI * PI * (2.0 * PI * x[0]).sin();
            worst = worst.max((ops.dd_star.coeff.values[p] + lap0).abs());
        }
        let hsp = 1.0 / n as f64;
        assert!(worst < 0.3 * (2.0 * PI).powi(4) * hsp * hsp, "worst {worst}");
    }
}
