//! Time integration of the coupled metric/three-form system
//! ∂ₜg = -2 Ric + ½ H², ∂ₜH = -dd*H, and extraction of empirical curvature
//! bounds from computed trajectories.

use serde::{Deserialize, Serialize};

use crate::errors::FlowError;
use crate::field::{MetricField, ScalarField, SymTensorField, ThreeFormField};
use crate::geometry::{hform_ops_with, ricci_with, tensor_calculus_with, MetricWorkspace};
use crate::grid::GridSpec;
use crate::linalg;

/// Instantaneous state of the flow. `h` is absent in dimension 2, which
/// represents H ≡ 0 (plain Ricci flow).
#[derive(Debug, Clone)]
pub struct FlowState {
    pub g: MetricField,
    pub h: Option<ThreeFormField>,
    pub t: f64,
}

impl FlowState {
    pub fn grid(&self) -> &GridSpec {
        self.g.grid()
    }
}

/// Time-ordered snapshots of a flow run at the output cadence.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub states: Vec<FlowState>,
    /// Every internal step size taken, in order.
    pub step_sizes: Vec<f64>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.t).collect()
    }

    /// Uniform output interval between snapshots.
    pub fn output_dt(&self) -> f64 {
        self.horizon / (self.states.len() as f64 - 1.0)
    }
}

/// Step-size control for the explicit integrator.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct StepControl {
    /// Parabolic stability constant: dt <= cfl * h² * λ_min(g) / λ_max(g⁻¹).
    pub cfl: f64,
    /// Number of output intervals over the horizon.
    pub cadence: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self { cfl: 0.2, cadence: 64 }
    }
}

/// Empirical Theorem-hypothesis constants extracted from a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureBounds {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl CurvatureBounds {
    pub fn zero() -> Self {
        Self { k1: 0.0, k2: 0.0, k3: 0.0, k4: 0.0 }
    }

    /// K = max{K₁², K₂²}; always recomputed, never stored.
    pub fn k(&self) -> f64 {
        (self.k1 * self.k1).max(self.k2 * self.k2)
    }
}

/// Right-hand side of the flow system.
pub struct FlowRhs {
    pub dg: SymTensorField,
    pub dh: Option<ThreeFormField>,
}

pub fn grf_rhs(state: &FlowState) -> Result<FlowRhs, FlowError> {
    let ws = MetricWorkspace::new(&state.g);
    grf_rhs_with(state, &ws)
}

pub fn grf_rhs_with(state: &FlowState, ws: &MetricWorkspace) -> Result<FlowRhs, FlowError> {
    let grid = state.grid();
    let dim = grid.dim;
    let (ric, _) = ricci_with(&state.g, ws);
    let mut dg = SymTensorField::zeros(grid);
    let nc = dg.ncomp();
    match &state.h {
        None => {
            for c in 0..grid.len() * nc {
                dg.values[c] = -2.0 * ric.values[c];
            }
        }
        Some(h) => {
            let ops = hform_ops_with(&state.g, h, &ws.ginv, &ws.sqrt_det)
                .map_err(FlowError::Geometry)?;
            for c in 0..grid.len() * nc {
                dg.values[c] = -2.0 * ric.values[c] + 0.5 * ops.h_sq.values[c];
            }
            let dh_coeff: Vec<f64> = ops.dd_star.coeff.values.iter().map(|v| -v).collect();
            let dh = ThreeFormField::new(ScalarField { grid: grid.clone(), values: dh_coeff })
                .map_err(FlowError::Geometry)?;
            let _ = dim;
            return Ok(FlowRhs { dg, dh: Some(dh) });
        }
    }
    Ok(FlowRhs { dg, dh: None })
}

/// Largest stable step for the current state per the parabolic bound.
pub fn stable_dt(state: &FlowState, ctrl: &StepControl) -> f64 {
    let h = state.grid().min_spacing();
    let lam_min = state.g.min_eigenvalue();
    let lam_max_inv = state.g.max_inverse_eigenvalue();
    ctrl.cfl * h * h * lam_min / lam_max_inv
}

fn state_from_raw(
    grid: &GridSpec,
    gvals: Vec<f64>,
    hvals: Option<Vec<f64>>,
    t: f64,
    check_spd: bool,
) -> Result<FlowState, FlowError> {
    let base = SymTensorField { grid: grid.clone(), values: gvals };
    let g = if check_spd {
        MetricField::new(base).map_err(|e| match e {
            crate::errors::GeometryError::NotPositiveDefinite { point, eigenvalue } => {
                FlowError::Singularity { t, point, eigenvalue }
            }
            other => FlowError::Geometry(other),
        })?
    } else {
        MetricField { base }
    };
    let h = match hvals {
        None => None,
        Some(v) => Some(
            ThreeFormField::new(ScalarField { grid: grid.clone(), values: v })
                .map_err(FlowError::Geometry)?,
        ),
    };
    Ok(FlowState { g, h, t })
}

/// One classical Runge-Kutta step. The output metric is re-symmetrized by
/// storage and SPD-checked; a violation is reported as a singularity.
pub fn step(state: &FlowState, dt: f64) -> Result<FlowState, FlowError> {
    let grid = state.grid().clone();
    let g0 = &state.g.base.values;
    let h0 = state.h.as_ref().map(|h| &h.coeff.values);

    let eval = |gv: &[f64], hv: Option<&Vec<f64>>, t: f64| -> Result<(Vec<f64>, Option<Vec<f64>>), FlowError> {
        let s = state_from_raw(&grid, gv.to_vec(), hv.cloned(), t, true)?;
        let rhs = grf_rhs(&s)?;
        Ok((rhs.dg.values, rhs.dh.map(|d| d.coeff.values)))
    };

    let axpy = |y: &[f64], k: &[f64], a: f64| -> Vec<f64> {
        y.iter().zip(k).map(|(yv, kv)| yv + a * kv).collect()
    };
    let axpy_opt = |y: Option<&Vec<f64>>, k: &Option<Vec<f64>>, a: f64| -> Option<Vec<f64>> {
        match (y, k) {
            (Some(y), Some(k)) => Some(axpy(y, k, a)),
            _ => None,
        }
    };

    let t = state.t;
    let (k1g, k1h) = eval(g0, h0, t)?;
    let (k2g, k2h) = eval(&axpy(g0, &k1g, dt / 2.0), axpy_opt(h0, &k1h, dt / 2.0).as_ref(), t + dt / 2.0)?;
    let (k3g, k3h) = eval(&axpy(g0, &k2g, dt / 2.0), axpy_opt(h0, &k2h, dt / 2.0).as_ref(), t + dt / 2.0)?;
    let (k4g, k4h) = eval(&axpy(g0, &k3g, dt), axpy_opt(h0, &k3h, dt).as_ref(), t + dt)?;

    let combine = |y: &[f64], k1: &[f64], k2: &[f64], k3: &[f64], k4: &[f64]| -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(i, yv)| yv + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect()
    };
    let gnew = combine(g0, &k1g, &k2g, &k3g, &k4g);
    let hnew = match (h0, &k1h, &k2h, &k3h, &k4h) {
        (Some(h0), Some(k1), Some(k2), Some(k3), Some(k4)) => Some(combine(h0, k1, k2, k3, k4)),
        _ => None,
    };
    state_from_raw(&grid, gnew, hnew, t + dt, true)
}

/// A failed evolution carries the partial trajectory for diagnostics.
#[derive(Debug)]
pub struct EvolveFailure {
    pub error: FlowError,
    pub partial: Trajectory,
}

/// Integrate from `s0` to horizon `T`, sampling `ctrl.cadence + 1` snapshots
/// at a uniform output cadence. Internal steps respect the stability bound.
pub fn evolve(s0: FlowState, horizon: f64, ctrl: &StepControl) -> Result<Trajectory, Box<EvolveFailure>> {
    let fail = |error: FlowError, states: Vec<FlowState>, step_sizes: Vec<f64>| {
        Box::new(EvolveFailure { error, partial: Trajectory { states, step_sizes, horizon } })
    };
    if !(horizon > 0.0) {
        return Err(fail(FlowError::InvalidHorizon(horizon), vec![s0], vec![]));
    }
    let mut states = Vec::with_capacity(ctrl.cadence + 1);
    let mut step_sizes = Vec::new();
    let mut current = s0;
    states.push(current.clone());
    for k in 1..=ctrl.cadence {
        let target = horizon * k as f64 / ctrl.cadence as f64;
        while current.t < target - 1e-14 * horizon {
            let dt_stab = stable_dt(&current, ctrl);
            let dt = dt_stab.min(target - current.t);
            match step(&current, dt) {
                Ok(next) => {
                    step_sizes.push(dt);
                    current = next;
                }
                Err(e) => return Err(fail(e, states, step_sizes)),
            }
        }
        current.t = target; // remove accumulated roundoff in the time stamp
        states.push(current.clone());
    }
    Ok(Trajectory { states, step_sizes, horizon })
}

/// Sup-norm residual of ∂ₜ(√det g) = (-R + ¼ tr_g H²) √det g per interior
/// snapshot, via centered time differences.
pub fn volume_evolution_residual(traj: &Trajectory) -> Vec<(f64, f64)> {
    assert!(traj.states.len() >= 3, "need at least 3 snapshots");
    let grid = traj.states[0].grid().clone();
    let sqrt_dets: Vec<Vec<f64>> = traj.states.iter().map(|s| s.g.sqrt_det_field()).collect();
    let mut out = Vec::new();
    for k in 1..traj.states.len() - 1 {
        let s = &traj.states[k];
        let dt_prev = s.t - traj.states[k - 1].t;
        let dt_next = traj.states[k + 1].t - s.t;
        let ws = MetricWorkspace::new(&s.g);
        let (_, r) = ricci_with(&s.g, &ws);
        let trh: Vec<f64> = match &s.h {
            None => vec![0.0; grid.len()],
            Some(h) => {
                hform_ops_with(&s.g, h, &ws.ginv, &ws.sqrt_det)
                    .expect("grids match")
                    .trace_h_sq
                    .values
            }
        };
        let mut sup: f64 = 0.0;
        for p in 0..grid.len() {
            let ddt = (sqrt_dets[k + 1][p] - sqrt_dets[k - 1][p]) / (dt_prev + dt_next);
            let rhs = (-r.values[p] + 0.25 * trh[p]) * sqrt_dets[k][p];
            sup = sup.max((ddt - rhs).abs());
        }
        out.push((s.t, sup));
    }
    out
}

/// Extract the empirical hypothesis constants of the gradient estimates:
/// K₁, K₂ from t-weighted generalized eigenvalues of (Ric, g), K₃ from
/// (H², g), K₄ from sup |∇H²|_g. The t = 0 snapshot contributes 0 to K₁-K₃.
pub fn curvature_bounds(traj: &Trajectory) -> CurvatureBounds {
    let mut b = CurvatureBounds::zero();
    for s in &traj.states {
        let dim = s.grid().dim;
        let ws = MetricWorkspace::new(&s.g);
        let (ric, _) = ricci_with(&s.g, &ws);
        for p in 0..s.grid().len() {
            let gp = s.g.at(p);
            if s.t > 0.0 {
                let ev = linalg::generalized_eigenvalues(dim, &ric.at(p), &gp)
                    .expect("metric is SPD");
                b.k1 = b.k1.max(s.t * (-ev[0]).max(0.0));
                b.k2 = b.k2.max(s.t * ev[dim - 1].max(0.0));
            }
        }
        if let Some(h) = &s.h {
            let ops = hform_ops_with(&s.g, h, &ws.ginv, &ws.sqrt_det).expect("grids match");
            if s.t > 0.0 {
                for p in 0..s.grid().len() {
                    let ev = linalg::generalized_eigenvalues(dim, &ops.h_sq.at(p), &s.g.at(p))
                        .expect("metric is SPD");
                    b.k3 = b.k3.max(s.t * ev[dim - 1].max(0.0));
                }
            }
            let tc = tensor_calculus_with(&s.g, &ops.h_sq, &ws).expect("grids match");
            for p in 0..s.grid().len() {
                b.k4 = b.k4.max(tc.norm_sq.values[p].max(0.0).sqrt());
            }
        }
    }
    b
}
