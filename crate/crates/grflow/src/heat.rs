//! Forward heat equation ∂ₜu = Δ_{g(t)}u and the backward conjugate equation
//! ∂ₜK = -ΔK + (R - ¼ tr_g H²) K on a computed flow trajectory, plus the
//! weighted measure dμ = K dV.
//!
//! Between flow snapshots the metric is interpolated linearly in time. The
//! conjugate reaction coefficient is realized as -∂ₜ(ln √det g) of the
//! interpolated metric: along the flow this equals R - ¼ tr_g H² to the
//! scheme's order, and it makes the discrete kernel mass ∫K dV exactly
//! stationary (the divergence-form Laplacian telescopes to zero over the
//! periodic grid).

use crate::errors::SolverError;
use crate::fd;
use crate::field::ScalarField;
use crate::flow::{stable_dt, FlowState, StepControl, Trajectory};
use crate::grid::GridSpec;
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// A positive scalar solution sampled at (a prefix of) the trajectory's
/// snapshot times.
#[derive(Debug, Clone)]
pub struct ScalarEvolution {
    pub times: Vec<f64>,
    pub values: Vec<ScalarField>,
    pub direction: Direction,
}

/// The measure dμ = K dV: coordinate densities K√det g per snapshot and the
/// resulting total masses.
#[derive(Debug, Clone)]
pub struct WeightedMeasure {
    pub times: Vec<f64>,
    /// Mass of a cell is density × coordinate cell volume.
    pub density: Vec<ScalarField>,
    pub masses: Vec<f64>,
}

/// Divergence-form Laplace-Beltrami operator
/// Δu = (1/√G) ∂_i(√G g^{ij} ∂_j u), the self-adjoint discretization used by
/// both solvers.
pub fn divergence_laplacian(
    grid: &GridSpec,
    ginv: &[Mat],
    sqrt_det: &[f64],
    u: &[f64],
) -> Vec<f64> {
    let dim = grid.dim;
    let mut du = Vec::with_capacity(dim);
    for a in 0..dim {
        du.push(fd::first_diff(grid, u, 1, 0, a));
    }
    let mut out = vec![0.0; grid.len()];
    let mut flux = vec![0.0; grid.len()];
    for i in 0..dim {
        for p in 0..grid.len() {
            let mut s = 0.0;
            for j in 0..dim {
                s += ginv[p][i][j] * du[j][p];
            }
            flux[p] = sqrt_det[p] * s;
        }
        let d = fd::first_diff(grid, &flux, 1, 0, i);
        for p in 0..grid.len() {
            out[p] += d[p];
        }
    }
    for p in 0..grid.len() {
        out[p] /= sqrt_det[p];
    }
    out
}

/// Geometry of the time-interpolated metric at a sub-step time.
pub struct SampledGeometry {
    pub ginv: Vec<Mat>,
    pub sqrt_det: Vec<f64>,
    /// ∂ₜ ln √det g of the interpolant, = ½ tr(g⁻¹ ∂ₜg).
    pub dlog_vol: Vec<f64>,
}

/// Linear-in-time metric interpolation between trajectory snapshots.
pub struct MetricSampler<'a> {
    traj: &'a Trajectory,
}

impl<'a> MetricSampler<'a> {
    pub fn new(traj: &'a Trajectory) -> Self {
        assert!(traj.states.len() >= 2, "trajectory needs at least two snapshots");
        Self { traj }
    }

    fn interval(&self, t: f64) -> usize {
        let times: Vec<f64> = self.traj.states.iter().map(|s| s.t).collect();
        let mut k = 0;
        while k + 2 < times.len() && t >= times[k + 1] {
            k += 1;
        }
        k
    }

    pub fn sample(&self, t: f64) -> SampledGeometry {
        self.sample_in(self.interval(t), t)
    }

    /// Sample pinned to snapshot interval `k`; sub-steppers use this so that
    /// stages landing exactly on a snapshot still see the interval's own
    /// time-slope (the reaction term depends on it).
    pub fn sample_in(&self, k: usize, t: f64) -> SampledGeometry {
        let s0 = &self.traj.states[k];
        let s1 = &self.traj.states[k + 1];
        let grid = s0.grid();
        let dim = grid.dim;
        let dt = s1.t - s0.t;
        let theta = ((t - s0.t) / dt).clamp(0.0, 1.0);
        let nc = s0.g.base.ncomp();
        let len = grid.len();
        let mut ginv = Vec::with_capacity(len);
        let mut sqrt_det = Vec::with_capacity(len);
        let mut dlog_vol = Vec::with_capacity(len);
        let mut m: Mat = [[0.0; 3]; 3];
        let mut gdot: Mat = [[0.0; 3]; 3];
        for p in 0..len {
            for i in 0..dim {
                for j in 0..dim {
                    let slot = p * nc + linalg::sym_slot(dim, i, j);
                    let v0 = s0.g.base.values[slot];
                    let v1 = s1.g.base.values[slot];
                    m[i][j] = (1.0 - theta) * v0 + theta * v1;
                    gdot[i][j] = (v1 - v0) / dt;
                }
            }
            let inv = linalg::inverse(dim, &m);
            let det = linalg::det(dim, &m);
            let mut tr = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    tr += inv[i][j] * gdot[i][j];
                }
            }
            ginv.push(inv);
            sqrt_det.push(det.sqrt());
            dlog_vol.push(0.5 * tr);
        }
        SampledGeometry { ginv, sqrt_det, dlog_vol }
    }
}

fn check_positive(u: &[f64], t: f64) -> Result<(), SolverError> {
    let min = u.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > 0.0) || !min.is_finite() {
        return Err(SolverError::PositivityLoss { t, min });
    }
    Ok(())
}

/// RK4 for u' = ±Δu - reaction·u on the interpolated geometry, from `t0` to
/// `t1` (either order), sub-stepped at `dt_cap`.
fn march(
    grid: &GridSpec,
    sampler: &MetricSampler,
    interval: usize,
    u: &mut Vec<f64>,
    t0: f64,
    t1: f64,
    dt_cap: f64,
    conjugate: bool,
) -> Result<(), SolverError> {
    let span = t1 - t0;
    let n_sub = (span.abs() / dt_cap).ceil().max(1.0) as usize;
    let dt = span / n_sub as f64;
    let rhs = |uv: &[f64], t: f64| -> Vec<f64> {
        let geo = sampler.sample_in(interval, t);
        let mut lap = divergence_laplacian(grid, &geo.ginv, &geo.sqrt_det, uv);
        if conjugate {
            // ∂ₜK = -ΔK + (R - ¼ tr H²)K with the reaction realized as
            // -∂ₜ ln √det g of the interpolant (mass-compatible form)
            for p in 0..grid.len() {
                lap[p] = -lap[p] - geo.dlog_vol[p] * uv[p];
            }
        }
        lap
    };
    for s in 0..n_sub {
        let t = t0 + dt * s as f64;
        let k1 = rhs(u, t);
        let mid1: Vec<f64> = u.iter().zip(&k1).map(|(a, b)| a + dt / 2.0 * b).collect();
        let k2 = rhs(&mid1, t + dt / 2.0);
        let mid2: Vec<f64> = u.iter().zip(&k2).map(|(a, b)| a + dt / 2.0 * b).collect();
        let k3 = rhs(&mid2, t + dt / 2.0);
        let end: Vec<f64> = u.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = rhs(&end, t + dt);
        for p in 0..grid.len() {
            u[p] += dt / 6.0 * (k1[p] + 2.0 * k2[p] + 2.0 * k3[p] + k4[p]);
        }
        check_positive(u, t + dt)?;
    }
    Ok(())
}

/// Forward solve of ∂ₜu = Δ_{g(t)}u from the trajectory's initial time,
/// sub-stepped on the same stability clock as the flow.
pub fn solve_heat(
    traj: &Trajectory,
    u0: &ScalarField,
    ctrl: &StepControl,
) -> Result<ScalarEvolution, SolverError> {
    let grid = traj.states[0].grid().clone();
    if u0.grid != grid {
        return Err(SolverError::Geometry(crate::errors::GeometryError::ShapeMismatch {
            what: "initial datum grid differs from trajectory grid".into(),
        }));
    }
    if !(u0.min() > 0.0) {
        return Err(SolverError::NonPositiveDatum(u0.min()));
    }
    let sampler = MetricSampler::new(traj);
    let mut u = u0.values.clone();
    let mut values = vec![u0.clone()];
    let mut times = vec![traj.states[0].t];
    for k in 0..traj.states.len() - 1 {
        let dt_cap = stable_dt(&traj.states[k], ctrl);
        march(&grid, &sampler, k, &mut u, traj.states[k].t, traj.states[k + 1].t, dt_cap, false)?;
        values.push(ScalarField { grid: grid.clone(), values: u.clone() });
        times.push(traj.states[k + 1].t);
    }
    Ok(ScalarEvolution { times, values, direction: Direction::Forward })
}

/// Total mass ∫f dV_{g} of a snapshot.
pub fn snapshot_mass(state: &FlowState, f: &ScalarField) -> f64 {
    state.g.integrate(f)
}

/// Backward solve of the conjugate equation from a positive terminal datum at
/// snapshot `terminal_index` (time T′, strictly inside the horizon). The
/// terminal datum is normalized to unit mass. Returns the kernel K on
/// [0, T′] and the potential f with K = (4π(T′-t))^{-n/2} e^{-f} on t < T′.
pub fn solve_conjugate(
    traj: &Trajectory,
    terminal: &ScalarField,
    terminal_index: usize,
    ctrl: &StepControl,
) -> Result<(ScalarEvolution, ScalarEvolution), SolverError> {
    let n_snap = traj.states.len();
    if terminal_index == 0 || terminal_index >= n_snap - 1 {
        return Err(SolverError::BadTerminalTime {
            terminal: traj
                .states
                .get(terminal_index)
                .map(|s| s.t)
                .unwrap_or(f64::NAN),
            horizon: traj.horizon,
        });
    }
    let grid = traj.states[0].grid().clone();
    if terminal.grid != grid {
        return Err(SolverError::Geometry(crate::errors::GeometryError::ShapeMismatch {
            what: "terminal datum grid differs from trajectory grid".into(),
        }));
    }
    if !(terminal.min() > 0.0) {
        return Err(SolverError::NonPositiveDatum(terminal.min()));
    }
    let t_prime = traj.states[terminal_index].t;
    let mass = snapshot_mass(&traj.states[terminal_index], terminal);
    let mut k_vals: Vec<f64> = terminal.values.iter().map(|v| v / mass).collect();

    let sampler = MetricSampler::new(traj);
    let mut rev_values = vec![ScalarField { grid: grid.clone(), values: k_vals.clone() }];
    for k in (0..terminal_index).rev() {
        let dt_cap = stable_dt(&traj.states[k], ctrl);
        march(
            &grid,
            &sampler,
            k,
            &mut k_vals,
            traj.states[k + 1].t,
            traj.states[k].t,
            dt_cap,
            true,
        )?;
        rev_values.push(ScalarField { grid: grid.clone(), values: k_vals.clone() });
    }
    rev_values.reverse();
    let times: Vec<f64> = traj.states[..=terminal_index].iter().map(|s| s.t).collect();
    let kernel = ScalarEvolution { times: times.clone(), values: rev_values, direction: Direction::Backward };

    let n = grid.dim as f64;
    let mut pot_values = Vec::with_capacity(terminal_index);
    for (idx, t) in times[..terminal_index].iter().enumerate() {
        let tau = t_prime - t;
        let f = kernel.values[idx]
            .map(|v| -v.ln() - n / 2.0 * (4.0 * std::f64::consts::PI * tau).ln());
        pot_values.push(f);
    }
    let potential = ScalarEvolution {
        times: times[..terminal_index].to_vec(),
        values: pot_values,
        direction: Direction::Backward,
    };
    Ok((kernel, potential))
}

/// Build dμ = K dV per snapshot. The density is rescaled once, by the
/// terminal-snapshot mass; the reported masses at earlier times show the
/// residual drift rather than hiding it.
pub fn weighted_measure(traj: &Trajectory, kernel: &ScalarEvolution) -> WeightedMeasure {
    let n = kernel.values.len();
    let grid = kernel.values[0].grid.clone();
    let cell = grid.cell_volume();
    let mut density = Vec::with_capacity(n);
    let mut masses = Vec::with_capacity(n);
    for k in 0..n {
        let sq = traj.states[k].g.sqrt_det_field();
        let vals: Vec<f64> = kernel.values[k]
            .values
            .iter()
            .zip(&sq)
            .map(|(kv, s)| kv * s)
            .collect();
        density.push(ScalarField { grid: grid.clone(), values: vals });
    }
    let terminal_mass: f64 = density[n - 1].values.iter().sum::<f64>() * cell;
    for d in &mut density {
        for v in &mut d.values {
            *v /= terminal_mass;
        }
        masses.push(d.values.iter().sum::<f64>() * cell);
    }
    WeightedMeasure { times: kernel.times.clone(), density, masses }
}

/// Sup-norm residual of ∂ₜ(K√det g) = −(ΔK)√det g per interior kernel
/// snapshot, via centered time differences. This is the pointwise
/// conservation law behind the unit mass of dμ = K dV.
pub fn measure_evolution_residual(traj: &Trajectory, kernel: &ScalarEvolution) -> Vec<(f64, f64)> {
    assert!(kernel.times.len() >= 3, "need at least 3 kernel snapshots");
    let grid = kernel.values[0].grid.clone();
    let dens: Vec<Vec<f64>> = kernel
        .values
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let sq = traj.states[k].g.sqrt_det_field();
            f.values.iter().zip(&sq).map(|(v, s)| v * s).collect()
        })
        .collect();
    let mut out = Vec::with_capacity(kernel.times.len() - 2);
    for k in 1..kernel.times.len() - 1 {
        let ws = crate::geometry::MetricWorkspace::new(&traj.states[k].g);
        let lap = divergence_laplacian(&grid, &ws.ginv, &ws.sqrt_det, &kernel.values[k].values);
        let dt2 = kernel.times[k + 1] - kernel.times[k - 1];
        let mut sup = 0.0f64;
        for p in 0..grid.len() {
            let ddt = (dens[k + 1][p] - dens[k - 1][p]) / dt2;
            sup = sup.max((ddt + lap[p] * ws.sqrt_det[p]).abs());
        }
        out.push((kernel.times[k], sup));
    }
    out
}

/// ∫ f dμ at snapshot `idx`.
pub fn weighted_integral(mu: &WeightedMeasure, idx: usize, f: &ScalarField) -> f64 {
    let cell = f.grid.cell_volume();
    f.values
        .iter()
        .zip(&mu.density[idx].values)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        * cell
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{MetricField, SymTensorField, ThreeFormField};
    use crate::flow::evolve;
    use std::f64::consts::PI;

    fn static_trajectory(g: MetricField, n_snap: usize, horizon: f64) -> Trajectory {
        let states = (0..n_snap)
            .map(|k| FlowState {
                g: g.clone(),
                h: None,
                t: horizon * k as f64 / (n_snap - 1) as f64,
            })
            .collect();
        Trajectory { states, step_sizes: vec![], horizon }
    }

    fn curved_static(n: usize) -> MetricField {
        let grid = GridSpec::cube(2, n, 1.0).unwrap();
        let base = SymTensorField::from_fn(&grid, |x, i, j| {
            if i == j {
                (0.2 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()).exp()
            } else {
                0.0
            }
        });
        MetricField::new(base).unwrap()
    }

    fn evolving_trajectory() -> Trajectory {
        let grid = GridSpec::cube(3, 12, 1.0).unwrap();
        let g = crate::synth::random_spd_metric(&grid, 0.08, 1, 11).unwrap();
        let h = ThreeFormField::new(ScalarField::from_fn(&grid, |x| {
            1.0 + 0.3 * (2.0 * PI * x[0]).sin()
        }))
        .unwrap();
        let ctrl = StepControl { cfl: 0.2, cadence: 8 };
        evolve(FlowState { g, h: Some(h), t: 0.0 }, 0.02, &ctrl).unwrap()
    }

    #[test]
    fn constant_datum_stays_constant() {
        let traj = static_trajectory(curved_static(12), 5, 0.01);
        let grid = traj.states[0].grid().clone();
        let u0 = ScalarField::constant(&grid, 3.0);
        let ctrl = StepControl::default();
        let sol = solve_heat(&traj, &u0, &ctrl).unwrap();
        for s in &sol.values {
            assert!((s.min() - 3.0).abs() < 1e-12 && (s.max() - 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_mode_decays_at_fourier_rate() {
        let grid = GridSpec::cube(2, 32, 1.0).unwrap();
        let traj = static_trajectory(MetricField::flat(&grid), 5, 0.02);
        let u0 = ScalarField::from_fn(&grid, |x| 1.0 + 0.5 * (2.0 * PI * x[0]).sin());
        let ctrl = StepControl::default();
        let sol = solve_heat(&traj, &u0, &ctrl).unwrap();
        let last = sol.values.last().unwrap();
        let amp = (last.max() - last.min()) / 2.0;
        let exact = 0.5 * (-4.0 * PI * PI * 0.02).exp();
        // the composed centered-difference Laplacian has symbol (sin(kh)/h)²
        let h: f64 = 1.0 / 32.0;
        let disc_rate = ((2.0 * PI * h).sin() / h).powi(2);
        let exact_disc = 0.5 * (-disc_rate * 0.02).exp();
        assert!((amp - exact_disc).abs() < 1e-8, "amp {amp} discrete {exact_disc}");
        assert!((amp - exact).abs() < 4.0 * PI * PI * (2.0 * PI * h).powi(2) * 0.02, "amp {amp} exact {exact}");
    }

    #[test]
    fn maximum_principle_on_evolving_background() {
        let traj = evolving_trajectory();
        let grid = traj.states[0].grid().clone();
        let u0 = ScalarField::from_fn(&grid, |x| {
            1.0 + 0.4 * (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()
        });
        let ctrl = StepControl::default();
        let sol = solve_heat(&traj, &u0, &ctrl).unwrap();
        for w in sol.values.windows(2) {
            assert!(w[1].max() <= w[0].max() + 1e-12);
            assert!(w[1].min() >= w[0].min() - 1e-12);
        }
    }

    #[test]
    fn conjugate_constant_on_flat_static_background() {
        let grid = GridSpec::cube(2, 16, 1.0).unwrap();
        let traj = static_trajectory(MetricField::flat(&grid), 6, 0.02);
        let term = ScalarField::constant(&grid, 2.0);
        let ctrl = StepControl::default();
        let (kernel, potential) = solve_conjugate(&traj, &term, 4, &ctrl).unwrap();
        assert_eq!(kernel.values.len(), 5);
        for s in &kernel.values {
            // normalized to unit mass over the unit torus
            assert!((s.min() - 1.0).abs() < 1e-12 && (s.max() - 1.0).abs() < 1e-12);
        }
        // f = -(n/2) ln(4πτ) for K ≡ 1
        let tau = kernel.times[4] - kernel.times[0];
        let expect = -(4.0 * PI * tau).ln();
        assert!((potential.values[0].max() - expect).abs() < 1e-12);
    }

    #[test]
    fn conjugate_mass_is_conserved_on_evolving_background() {
        let traj = evolving_trajectory();
        let grid = traj.states[0].grid().clone();
        let term = ScalarField::from_fn(&grid, |x| {
            let r2: f64 = (0..3)
                .map(|a| grid.wrap_displacement(a, x[a] - 0.5).powi(2))
                .sum();
            (-r2 / (2.0 * 0.25f64.powi(2))).exp() + 0.05
        });
        let ctrl = StepControl::default();
        let idx = traj.states.len() - 2;
        let (kernel, _) = solve_conjugate(&traj, &term, idx, &ctrl).unwrap();
        for (k, s) in kernel.values.iter().enumerate() {
            let m = snapshot_mass(&traj.states[k], s);
            assert!((m - 1.0).abs() < 1e-9, "mass at snapshot {k}: {m}");
        }
        let mu = weighted_measure(&traj, &kernel);
        for m in &mu.masses {
            assert!((m - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn forward_backward_duality() {
        let traj = evolving_trajectory();
        let grid = traj.states[0].grid().clone();
        let ctrl = StepControl::default();
        let u0 = ScalarField::from_fn(&grid, |x| 1.0 + 0.3 * (2.0 * PI * x[1]).cos());
        let u = solve_heat(&traj, &u0, &ctrl).unwrap();
        let term = ScalarField::from_fn(&grid, |x| 1.0 + 0.5 * (2.0 * PI * x[2]).sin());
        let idx = traj.states.len() - 2;
        let (kernel, _) = solve_conjugate(&traj, &term, idx, &ctrl).unwrap();
        let pairing: Vec<f64> = (0..=idx)
            .map(|k| {
                let prod = ScalarField {
                    grid: grid.clone(),
                    values: u.values[k]
                        .values
                        .iter()
                        .zip(&kernel.values[k].values)
                        .map(|(a, b)| a * b)
                        .collect(),
                };
                snapshot_mass(&traj.states[k], &prod)
            })
            .collect();
        let p0 = pairing[0];
        for p in &pairing {
            assert!((p - p0).abs() < 1e-8 * p0.abs(), "pairing drifted: {pairing:?}");
        }
    }

    #[test]
    fn conjugate_spreads_backward_symmetrically_on_flat_background() {
        let grid = GridSpec::cube(2, 24, 1.0).unwrap();
        let traj = static_trajectory(MetricField::flat(&grid), 6, 0.01);
        let term = ScalarField::from_fn(&grid, |x| {
            let r2: f64 = (0..2)
                .map(|a| grid.wrap_displacement(a, x[a] - 0.5).powi(2))
                .sum();
            (-r2 / (2.0 * 0.125f64.powi(2))).exp() + 0.01
        });
        let ctrl = StepControl::default();
        let (kernel, _) = solve_conjugate(&traj, &term, 4, &ctrl).unwrap();
        // sup decreases going backward from the terminal bump (smoothing)
        for w in kernel.values.windows(2) {
            assert!(w[0].max() <= w[1].max() + 1e-12);
        }
        // reflection symmetry about the bump center survives the solve
        let first = &kernel.values[0];
        for p in 0..grid.len() {
            let c = grid.coords(p);
            let refl = grid.index([
                (grid.points[0] - c[0]) % grid.points[0],
                (grid.points[1] - c[1]) % grid.points[1],
                0,
            ]);
            assert!((first.values[p] - first.values[refl]).abs() < 1e-10);
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        let traj = static_trajectory(MetricField::flat(&grid), 4, 0.01);
        let ctrl = StepControl::default();
        let neg = ScalarField::from_fn(&grid, |x| x[0] - 0.2);
        assert!(matches!(
            solve_heat(&traj, &neg, &ctrl),
            Err(SolverError::NonPositiveDatum(_))
        ));
        let pos = ScalarField::constant(&grid, 1.0);
        assert!(matches!(
            solve_conjugate(&traj, &pos, 3, &ctrl),
            Err(SolverError::BadTerminalTime { .. })
        ));
        assert!(matches!(
            solve_conjugate(&traj, &pos, 0, &ctrl),
            Err(SolverError::BadTerminalTime { .. })
        ));
    }
}
