//! End-to-end scenario execution: evolve the flow, solve both heat equations,
//! run every configured check and collect the results into a [`RunReport`],
//! plus grid-refinement studies measuring the convergence order of the
//! discrete identities.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::errors::{EstimateError, FlowError, GeometryError, SolverError};
use crate::estimates::{
    error_budget, hamilton_check, harnack_check, lemma_residual_scaled, liyau_check,
    EstimateReport, LiYauParams, Location,
};
use crate::field::ScalarField;
use crate::flow::{
    curvature_bounds, evolve, volume_evolution_residual, FlowState, StepControl, Trajectory,
};
use crate::frequency::{
    compute_series, eigenvalue_series, frequency_constants, i_prime_identity,
    integral_harnack_check, monotonicity_check, FrequencyParams,
};
use crate::heat::{
    measure_evolution_residual, solve_conjugate, solve_heat, weighted_measure, ScalarEvolution,
    WeightedMeasure,
};
use crate::homogeneous::{evolve_ode, homogeneous_reports};
use crate::report::{
    frequency_csv, overall_verdict, series_csv, HomogeneousSummary, RunReport, TrajectoryMeta,
};
use crate::scenario::{Backend, ConfigError, Scenario};

/// Fixed mass-conservation tolerance for the normalized measure.
pub const MASS_TOL: f64 = 1e-6;
/// Stationarity and drift tolerances for runs expected to sit at a fixed
/// point of the flow.
pub const FIXED_POINT_RHS_TOL: f64 = 1e-10;
pub const FIXED_POINT_DRIFT_TOL: f64 = 1e-8;

const GEODESIC_NODES: usize = 17;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("flow failed: {0}")]
    Flow(FlowError),
    #[error("solver failed: {0}")]
    Solver(#[from] SolverError),
    #[error("estimate failed: {0}")]
    Estimate(#[from] EstimateError),
}

impl From<FlowError> for RunError {
    fn from(e: FlowError) -> Self {
        RunError::Flow(e)
    }
}

impl From<GeometryError> for RunError {
    fn from(e: GeometryError) -> Self {
        RunError::Flow(FlowError::Geometry(e))
    }
}

/// Everything a run produces: the structured report, named CSV series and,
/// for the grid backend, the trajectory itself (for export).
pub struct RunOutput {
    pub report: RunReport,
    /// (file name, contents) pairs for the `series/` directory.
    pub series: Vec<(String, String)>,
    pub trajectory: Option<Trajectory>,
}

/// Encode a residual history as a check: the slack is budget − sup residual,
/// so the verdict degrades exactly when the identity drifts past its budget.
fn identity_report(check: &str, rows: &[(f64, f64)], budget: f64) -> EstimateReport {
    let (mut sup, mut at) = (0.0f64, rows.first().map(|r| r.0).unwrap_or(0.0));
    for &(t, r) in rows {
        if r > sup {
            sup = r;
            at = t;
        }
    }
    EstimateReport::new(check, budget - sup, Location { time: at, point: 0 }, budget)
}

pub fn run_scenario(s: &Scenario) -> Result<RunOutput, RunError> {
    s.validate()?;
    match s.backend {
        Backend::Grid => run_grid(s),
        Backend::Homogeneous => run_homogeneous(s),
    }
}

/// The state shared by a full grid run; split out so refinement studies can
/// reuse the pipeline without duplicating the checks.
struct GridRun {
    traj: Trajectory,
    u: ScalarEvolution,
    kernel: ScalarEvolution,
    mu: WeightedMeasure,
}

fn grid_pipeline(s: &Scenario) -> Result<GridRun, RunError> {
    let gs = s.grid.as_ref().expect("validated grid scenario");
    let grid = s.grid_spec()?;
    let ctrl = StepControl { cfl: s.control.cfl, cadence: s.control.cadence };
    let state = FlowState { g: s.initial_metric(&grid)?, h: s.initial_h(&grid)?, t: 0.0 };
    let traj = evolve(state, s.control.horizon, &ctrl).map_err(|b| RunError::Flow(b.error))?;
    let u = solve_heat(&traj, &s.initial_datum(&grid), &ctrl)?;
    let terminal = ScalarField::constant(&grid, 1.0);
    let (kernel, _) = solve_conjugate(&traj, &terminal, gs.heat.terminal_index, &ctrl)?;
    let mu = weighted_measure(&traj, &kernel);
    Ok(GridRun { traj, u, kernel, mu })
}

fn run_grid(s: &Scenario) -> Result<RunOutput, RunError> {
    let gs = s.grid.as_ref().expect("validated grid scenario");
    let c_b = s.control.c_b;
    let run = grid_pipeline(s)?;
    let GridRun { traj, u, kernel, mu } = run;
    let grid = traj.states[0].grid().clone();
    let kb = curvature_bounds(&traj);
    let u0 = s.initial_datum(&grid);

    let mut checks = Vec::new();

    for p in &gs.estimates.liyau {
        let lp = LiYauParams::new(p.alpha, p.a, p.b)?;
        let mut rep = liyau_check(&traj, &u, &lp, &kb, c_b);
        rep.check = format!("li-yau(alpha={})", p.alpha);
        checks.push(rep);
    }
    checks.push(hamilton_check(&traj, &u, c_b));

    let vol = volume_evolution_residual(&traj);
    checks.push(identity_report("volume-identity", &vol, error_budget(c_b, &traj, 1.0)));

    let (lemma, lemma_scale) = lemma_residual_scaled(&traj, &u, gs.estimates.liyau[0].alpha);
    checks.push(identity_report(
        "lemma-identity",
        &lemma,
        error_budget(c_b, &traj, lemma_scale.max(1e-3)),
    ));

    let meas = measure_evolution_residual(&traj, &kernel);
    checks.push(identity_report("measure-evolution", &meas, error_budget(c_b, &traj, 1.0)));

    let mass_rows: Vec<(f64, f64)> = mu
        .times
        .iter()
        .zip(&mu.masses)
        .map(|(&t, &m)| (t, (m - 1.0).abs()))
        .collect();
    checks.push(identity_report("mass-conservation", &mass_rows, MASS_TOL));

    if gs.estimates.harnack_samples > 0 {
        let lp = {
            let p = &gs.estimates.liyau[0];
            LiYauParams::new(p.alpha, p.a, p.b)?
        };
        let mut rng = ChaCha8Rng::seed_from_u64(gs.estimates.seed);
        let n_snap = u.times.len();
        let mut worst: Option<EstimateReport> = None;
        for _ in 0..gs.estimates.harnack_samples {
            let i1 = rng.gen_range(1..n_snap - 1);
            let i2 = rng.gen_range(i1 + 1..n_snap);
            let x: Vec<f64> = (0..grid.dim).map(|_| rng.gen::<f64>()).collect();
            let y: Vec<f64> = (0..grid.dim).map(|_| rng.gen::<f64>()).collect();
            let rep = harnack_check(
                &traj,
                &u,
                &x,
                u.times[i1],
                &y,
                u.times[i2],
                &lp,
                &kb,
                c_b,
                GEODESIC_NODES,
            )?;
            if worst.as_ref().map_or(true, |w| rep.worst_slack < w.worst_slack) {
                worst = Some(rep);
            }
        }
        checks.push(worst.expect("at least one sample"));
    }

    let mut freq_series = None;
    if let Some(fs) = &gs.frequency {
        let fc = frequency_constants(grid.dim, &kb, &u0)?;
        let fp = FrequencyParams::new(fs.h, fs.t0, fs.t1)?;
        let mut series = compute_series(&traj, &u, &mu, &fp, &fc)?;
        checks.push(monotonicity_check(&series, &fp, &traj, c_b));
        checks.push(eigenvalue_series(&traj, &mu, &mut series, &fp, c_b)?);
        let ip = i_prime_identity(&series, &fp);
        let ip_scale = series
            .times
            .iter()
            .zip(&series.d)
            .map(|(&t, &d)| (2.0 * d / fp.h.value(t)).abs())
            .fold(0.0f64, f64::max);
        checks.push(identity_report(
            "i-prime-identity",
            &ip,
            error_budget(c_b, &traj, ip_scale.max(1e-3)),
        ));
        checks.push(integral_harnack_check(&series, &fp, &fc, &traj, c_b));
        freq_series = Some(series);
    }

    let mut series_files = vec![
        ("lemma-residual.csv".to_string(), series_csv("lemma_residual", &lemma)),
        ("volume-residual.csv".to_string(), series_csv("volume_residual", &vol)),
        ("measure-residual.csv".to_string(), series_csv("measure_residual", &meas)),
    ];
    if let Some(sr) = &freq_series {
        series_files.push(("frequency.csv".to_string(), frequency_csv(sr)));
    }

    let overall = overall_verdict(&checks);
    let report = RunReport {
        scenario: s.name.clone(),
        digest: s.digest(),
        backend: Backend::Grid,
        trajectory: TrajectoryMeta {
            dim: grid.dim,
            resolution: grid.points[0],
            snapshots: traj.states.len(),
            horizon: traj.horizon,
            output_dt: traj.output_dt(),
            internal_steps: traj.step_sizes.len(),
        },
        bounds: Some(kb),
        checks,
        frequency: freq_series,
        homogeneous: None,
        overall,
    };
    let _ = kernel;
    Ok(RunOutput { report, series: series_files, trajectory: Some(traj) })
}

fn run_homogeneous(s: &Scenario) -> Result<RunOutput, RunError> {
    let hs = s.homogeneous.as_ref().expect("validated homogeneous scenario");
    let c_b = s.control.c_b;
    let st0 = s.milnor_state()?;
    let mut checks = Vec::new();
    let mut series_files = Vec::new();

    let (summary, bounds, snapshots) = match evolve_ode(st0, s.control.horizon) {
        Ok(states) => {
            let rep = homogeneous_reports(&states);
            let vol_sup = rep
                .volume_residual
                .iter()
                .map(|&(_, r)| r)
                .fold(0.0f64, f64::max);
            let dt_max = states
                .windows(2)
                .map(|w| w[1].t - w[0].t)
                .fold(0.0f64, f64::max);
            checks.push(identity_report(
                "volume-identity",
                &rep.volume_residual,
                c_b * dt_max * dt_max,
            ));
            if hs.expect_collapse {
                checks.push(EstimateReport::new(
                    "expected-collapse",
                    -1.0,
                    Location { time: s.control.horizon, point: 0 },
                    0.0,
                ));
            }
            if matches!(hs.k, crate::scenario::KSpec::Named(_)) {
                // a symbolic coupling means the run claims a fixed point
                checks.push(EstimateReport::new(
                    "fixed-point-rhs",
                    FIXED_POINT_RHS_TOL - rep.sup_rhs_norm,
                    Location { time: 0.0, point: 0 },
                    FIXED_POINT_RHS_TOL,
                ));
                let g0 = states[0].metric();
                let drift = states
                    .iter()
                    .flat_map(|st| (0..3).map(move |i| (st.metric()[i] - g0[i]).abs()))
                    .fold(0.0f64, f64::max);
                checks.push(EstimateReport::new(
                    "fixed-point-drift",
                    FIXED_POINT_DRIFT_TOL - drift,
                    Location { time: states.last().unwrap().t, point: 0 },
                    FIXED_POINT_DRIFT_TOL,
                ));
            }
            series_files.push((
                "volume-residual.csv".to_string(),
                series_csv("volume_residual", &rep.volume_residual),
            ));
            let mut milnor = String::from("t,g1,g2,g3\n");
            for st in &states {
                milnor.push_str(&format!(
                    "{},{},{},{}\n",
                    crate::report::fmt17(st.t),
                    crate::report::fmt17(st.a),
                    crate::report::fmt17(st.b),
                    crate::report::fmt17(st.c)
                ));
            }
            series_files.push(("milnor.csv".to_string(), milnor));
            (
                HomogeneousSummary {
                    sup_rhs_norm: rep.sup_rhs_norm,
                    volume_residual_sup: vol_sup,
                    collapse_time: None,
                },
                Some(rep.bounds),
                states.len(),
            )
        }
        Err(FlowError::Singularity { t, point, eigenvalue }) if hs.expect_collapse => {
            // slack: the collapse happened inside the horizon, as predicted
            checks.push(EstimateReport::new(
                "expected-collapse",
                s.control.horizon - t,
                Location { time: t, point },
                0.0,
            ));
            let _ = eigenvalue;
            (
                HomogeneousSummary {
                    sup_rhs_norm: f64::NAN,
                    volume_residual_sup: f64::NAN,
                    collapse_time: Some(t),
                },
                None,
                0,
            )
        }
        Err(e) => return Err(RunError::Flow(e)),
    };

    // NaN does not survive JSON; report absent diagnostics as zero with the
    // collapse time carrying the real signal
    let summary = HomogeneousSummary {
        sup_rhs_norm: if summary.sup_rhs_norm.is_nan() { 0.0 } else { summary.sup_rhs_norm },
        volume_residual_sup: if summary.volume_residual_sup.is_nan() {
            0.0
        } else {
            summary.volume_residual_sup
        },
        ..summary
    };

    let overall = overall_verdict(&checks);
    let report = RunReport {
        scenario: s.name.clone(),
        digest: s.digest(),
        backend: Backend::Homogeneous,
        trajectory: TrajectoryMeta {
            dim: 3,
            resolution: 0,
            snapshots,
            horizon: s.control.horizon,
            output_dt: 0.0,
            internal_steps: snapshots.saturating_sub(1),
        },
        bounds,
        checks,
        frequency: None,
        homogeneous: Some(summary),
        overall,
    };
    Ok(RunOutput { report, series: series_files, trajectory: None })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefineRow {
    pub level: usize,
    pub resolution: usize,
    pub spacing: f64,
    pub output_dt: f64,
    /// Sup residuals restricted to the coarsest level's snapshot times, so
    /// every level is measured at the same points of the time axis.
    pub residuals: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementStudy {
    pub scenario: String,
    pub levels: Vec<RefineRow>,
    /// Least-squares slope of ln(residual) against ln(spacing); absent when
    /// a residual sits at rounding level and the slope is meaningless.
    pub slopes: BTreeMap<String, f64>,
    pub note: Option<String>,
}

fn sup_at_times(rows: &[(f64, f64)], times: &[f64]) -> f64 {
    let mut sup = 0.0f64;
    for &(t, r) in rows {
        if times.iter().any(|&tb| (t - tb).abs() <= 1e-9 * (1.0 + tb.abs())) {
            sup = sup.max(r);
        }
    }
    sup
}

/// Joint space/time refinement: each level doubles the resolution and the
/// output cadence, so grid spacing and snapshot interval halve together.
pub fn refine(s: &Scenario, levels: usize) -> Result<RefinementStudy, RunError> {
    s.validate()?;
    if levels < 2 {
        return Err(RunError::Config(ConfigError::Invalid(format!(
            "refinement needs at least 2 levels, got {levels}"
        ))));
    }
    if s.backend == Backend::Homogeneous {
        return Ok(RefinementStudy {
            scenario: s.name.clone(),
            levels: vec![],
            slopes: BTreeMap::new(),
            note: Some(
                "the homogeneous backend integrates a closed-form reduction to machine \
                 precision; there is no spatial discretization to refine"
                    .into(),
            ),
        });
    }

    let mut rows: Vec<RefineRow> = Vec::with_capacity(levels);
    let mut base_times: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for level in 0..levels {
        let factor = 1usize << level;
        let mut sl = s.clone();
        {
            let g = sl.grid.as_mut().expect("validated grid scenario");
            g.resolution *= factor;
            g.heat.terminal_index *= factor;
            sl.control.cadence *= factor;
        }
        let gs = sl.grid.as_ref().unwrap();
        let alpha = gs.estimates.liyau[0].alpha;
        let run = grid_pipeline(&sl)?;

        let (lemma, _) = lemma_residual_scaled(&run.traj, &run.u, alpha);
        let vol = volume_evolution_residual(&run.traj);
        let meas = measure_evolution_residual(&run.traj, &run.kernel);
        let mut named: Vec<(&str, Vec<(f64, f64)>)> =
            vec![("lemma", lemma), ("volume", vol), ("measure", meas)];

        if let Some(fs) = &gs.frequency {
            let grid = run.traj.states[0].grid().clone();
            let kb = curvature_bounds(&run.traj);
            let u0 = sl.initial_datum(&grid);
            let fc = frequency_constants(grid.dim, &kb, &u0)?;
            let fp = FrequencyParams::new(fs.h, fs.t0, fs.t1)?;
            let series = compute_series(&run.traj, &run.u, &run.mu, &fp, &fc)?;
            named.push(("i_prime", i_prime_identity(&series, &fp)));
        }

        let mut residuals = BTreeMap::new();
        for (name, series) in &named {
            if level == 0 {
                // rate the late half of the window: the early transient is
                // carried by the fastest-decaying modes, whose discrete decay
                // rates differ from the resolved ones by a large relative
                // O(h²) deficit at coarse levels, masking the order
                let (t_first, t_last) = (series[0].0, series.last().unwrap().0);
                let t_mid = 0.5 * (t_first + t_last);
                base_times.insert(
                    name.to_string(),
                    series.iter().map(|r| r.0).filter(|&t| t >= t_mid - 1e-12).collect(),
                );
            }
            let times = &base_times[*name];
            residuals.insert(name.to_string(), sup_at_times(series, times));
        }
        let grid = run.traj.states[0].grid();
        rows.push(RefineRow {
            level,
            resolution: grid.points[0],
            spacing: grid.max_spacing(),
            output_dt: run.traj.output_dt(),
            residuals,
        });
    }

    let mut slopes = BTreeMap::new();
    for name in rows[0].residuals.keys() {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .map(|r| (r.spacing, r.residuals[name]))
            .collect();
        if pts.iter().any(|&(_, r)| r < 1e-13) {
            continue; // at rounding level: no meaningful order
        }
        let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
        let xm = xs.iter().sum::<f64>() / xs.len() as f64;
        let ym = ys.iter().sum::<f64>() / ys.len() as f64;
        let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
        let den: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        slopes.insert(name.clone(), num / den);
    }

    Ok(RefinementStudy { scenario: s.name.clone(), levels: rows, slopes, note: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimates::Verdict;
    use crate::scenario::bundled;

    #[test]
    fn flat_trivial_run_passes_everything() {
        let s = bundled("flat-trivial").unwrap();
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.report.overall, Verdict::Pass, "{:#?}", out.report.checks);
        assert!(out.report.frequency.is_none());
        assert!(out.trajectory.is_some());
        let names: Vec<&str> = out.report.checks.iter().map(|c| c.check.as_str()).collect();
        assert!(names.contains(&"li-yau(alpha=2)"), "{names:?}");
        assert!(names.contains(&"hamilton"));
        assert!(names.contains(&"mass-conservation"));
        assert!(names.contains(&"harnack"));
    }

    #[test]
    fn conformal_run_passes_with_frequency_series() {
        let s = bundled("conformal-ricci-2d").unwrap();
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.report.overall, Verdict::Pass, "{:#?}", out.report.checks);
        let f = out.report.frequency.as_ref().expect("frequency series");
        assert_eq!(f.times.len(), f.lambda_m.len());
        assert!(out.series.iter().any(|(n, _)| n == "frequency.csv"));
    }

    #[test]
    fn bismut_run_is_a_verified_fixed_point() {
        let s = bundled("bismut-su2").unwrap();
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.report.overall, Verdict::Pass, "{:#?}", out.report.checks);
        let h = out.report.homogeneous.as_ref().unwrap();
        assert!(h.sup_rhs_norm < FIXED_POINT_RHS_TOL, "rhs {}", h.sup_rhs_norm);
        assert!(h.collapse_time.is_none());
    }

    #[test]
    fn su2_collapse_is_detected_in_time() {
        let s = bundled("su2-collapse").unwrap();
        let out = run_scenario(&s).unwrap();
        assert_eq!(out.report.overall, Verdict::Pass, "{:#?}", out.report.checks);
        let t = out.report.homogeneous.as_ref().unwrap().collapse_time.unwrap();
        // round unit SU(2) with k = 0 shrinks as a(t) = 1 − 4t
        assert!((t - 0.25).abs() < 0.02, "collapse at {t}");
    }

    #[test]
    fn refine_rejects_short_ladders_and_annotates_homogeneous() {
        let s = bundled("flat-trivial").unwrap();
        assert!(refine(&s, 1).is_err());
        let s = bundled("bismut-su2").unwrap();
        let study = refine(&s, 2).unwrap();
        assert!(study.note.is_some());
        assert!(study.levels.is_empty());
    }

    #[test]
    fn refine_measures_second_order_decay() {
        let mut s = bundled("conformal-ricci-2d").unwrap();
        // keep the ladder cheap: drop the eigenvalue-free parts we don't rate
        s.grid.as_mut().unwrap().estimates.harnack_samples = 0;
        let study = refine(&s, 2).unwrap();
        assert_eq!(study.levels.len(), 2);
        for name in ["lemma", "volume", "measure", "i_prime"] {
            let r0 = study.levels[0].residuals[name];
            let r1 = study.levels[1].residuals[name];
            assert!(r1 < r0, "{name}: {r0} -> {r1}");
        }
        for (name, slope) in &study.slopes {
            assert!(*slope > 1.5, "{name} slope {slope}");
        }
    }
}
