//! Parabolic frequency along the flow: the weighted integrals I(t), D(t), the
//! damping exponent E(t), the frequency U(t) = e^E D/I, its monotonicity in
//! both sign regimes of h, the weighted first nonzero eigenvalue, and the
//! integral Harnack bound that follows.

use serde::{Deserialize, Serialize};

use crate::errors::EstimateError;
use crate::estimates::{error_budget, EstimateReport, Location, Verdict};
use crate::fd::{backward_diff, first_diff, forward_diff};
use crate::field::ScalarField;
use crate::flow::{CurvatureBounds, Trajectory};
use crate::geometry::MetricWorkspace;
use crate::heat::{weighted_integral, ScalarEvolution, WeightedMeasure};

/// Time weight h(t), restricted to families with a closed-form logarithmic
/// derivative: E(t) needs h′/h exactly, not numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum HFamily {
    Constant { value: f64 },
    /// p + q t
    Linear { p: f64, q: f64 },
    /// p e^{q t}
    Exponential { p: f64, q: f64 },
}

impl HFamily {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            HFamily::Constant { value } => value,
            HFamily::Linear { p, q } => p + q * t,
            HFamily::Exponential { p, q } => p * (q * t).exp(),
        }
    }

    /// h′(t)/h(t), in closed form.
    pub fn log_deriv(&self, t: f64) -> f64 {
        match *self {
            HFamily::Constant { .. } => 0.0,
            HFamily::Linear { p, q } => q / (p + q * t),
            HFamily::Exponential { q, .. } => q,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyParams {
    pub h: HFamily,
    pub t0: f64,
    pub t1: f64,
}

impl FrequencyParams {
    /// h must be sign-definite on [t0, t1] and the window must sit strictly
    /// after the initial time (the 1/s and 1/√s integrands blow up at 0).
    pub fn new(h: HFamily, t0: f64, t1: f64) -> Result<Self, EstimateError> {
        if !(t0 > 0.0) || !(t1 > t0) {
            return Err(EstimateError::BadWindow(format!(
                "need 0 < t0 < t1, got t0={t0}, t1={t1}"
            )));
        }
        let (a, b) = (h.value(t0), h.value(t1));
        // all three families are monotone, so endpoint signs decide
        if a == 0.0 || b == 0.0 || a.signum() != b.signum() {
            return Err(EstimateError::BadParameters(format!(
                "h changes sign or vanishes on the window: h(t0)={a}, h(t1)={b}"
            )));
        }
        Ok(Self { h, t0, t1 })
    }

    pub fn sign(&self) -> f64 {
        self.h.value(self.t0).signum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyConstants {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// max of u(·, 0)
    pub a_max: f64,
    /// min of u(·, 0)
    pub kappa: f64,
}

impl FrequencyConstants {
    /// c(t) = (1/t) ln(A/κ).
    pub fn c(&self, t: f64) -> f64 {
        (self.a_max / self.kappa).ln() / t
    }
}

/// C₁ = n/16 + 3nK₄²/4, C₂ = 16n(K₁+K₃/8)² + 8nK + nK₃²/2,
/// C₃ = 2n(K₁+K₃/8), with K = max{K₁², K₂²}. A constant datum is rejected:
/// it makes c ≡ 0 and the Young-inequality split behind E(t) degenerate.
pub fn frequency_constants(
    n: usize,
    kb: &CurvatureBounds,
    u0: &ScalarField,
) -> Result<FrequencyConstants, EstimateError> {
    let a_max = u0.max();
    let kappa = u0.values.iter().copied().fold(f64::INFINITY, f64::min);
    if !(kappa > 0.0) {
        return Err(EstimateError::BadParameters(format!(
            "initial datum must be positive, min {kappa}"
        )));
    }
    if a_max - kappa < 1e-12 * a_max.abs() {
        return Err(EstimateError::DegenerateInitialDatum);
    }
    let nf = n as f64;
    let mix = kb.k1 + kb.k3 / 8.0;
    Ok(FrequencyConstants {
        c1: nf / 16.0 + 3.0 * nf * kb.k4 * kb.k4 / 4.0,
        c2: 16.0 * nf * mix * mix + 8.0 * nf * kb.k() + nf * kb.k3 * kb.k3 / 2.0,
        c3: 2.0 * nf * mix,
        a_max,
        kappa,
    })
}

/// The integrand of −E′(t):
/// h′/h + 4n/s + (1/s)ln(A/κ) + √(4nC₁) + √(4nC₂)/s + √(4nC₃)/√s + nc(s)/2.
fn e_integrand(n: usize, p: &FrequencyParams, fc: &FrequencyConstants, s: f64) -> f64 {
    let nf = n as f64;
    let log_ratio = (fc.a_max / fc.kappa).ln();
    p.h.log_deriv(s)
        + 4.0 * nf / s
        + log_ratio / s
        + (4.0 * nf * fc.c1).sqrt()
        + (4.0 * nf * fc.c2).sqrt() / s
        + (4.0 * nf * fc.c3).sqrt() / s.sqrt()
        + nf * fc.c(s) / 2.0
}

/// E between two nearby times by Simpson with a fixed fine subdivision; the
/// integrand is smooth and closed-form on (0, T), so this is effectively exact.
fn e_increment(n: usize, p: &FrequencyParams, fc: &FrequencyConstants, a: f64, b: f64) -> f64 {
    let m = 16;
    let h = (b - a) / m as f64;
    let mut acc = 0.0;
    for j in 0..m {
        let l = a + j as f64 * h;
        let r = l + h;
        let mid = 0.5 * (l + r);
        acc += (h / 6.0)
            * (e_integrand(n, p, fc, l)
                + 4.0 * e_integrand(n, p, fc, mid)
                + e_integrand(n, p, fc, r));
    }
    -acc
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrequencySeries {
    pub times: Vec<f64>,
    pub i: Vec<f64>,
    pub d: Vec<f64>,
    pub e: Vec<f64>,
    pub u: Vec<f64>,
    pub beta: Vec<f64>,
    /// Filled by [`eigenvalue_series`]; empty until then.
    pub lambda_m: Vec<f64>,
}

/// |∇u|² with the centered-difference gradient, matching the quadratic form
/// the I′ identity differentiates.
fn grad_sq_field(ws: &MetricWorkspace, grid: &crate::grid::GridSpec, u: &ScalarField) -> ScalarField {
    let dim = grid.dim;
    let mut grads = Vec::with_capacity(dim);
    for a in 0..dim {
        grads.push(first_diff(grid, &u.values, 1, 0, a));
    }
    let values = (0..grid.len())
        .map(|p| {
            let gi = &ws.ginv[p];
            let mut s = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    s += gi[a][b] * grads[a][p] * grads[b][p];
                }
            }
            s
        })
        .collect();
    ScalarField { grid: grid.clone(), values }
}

/// I, D, E, U, β over the snapshots falling inside the window of `p`.
pub fn compute_series(
    traj: &Trajectory,
    u: &ScalarEvolution,
    mu: &WeightedMeasure,
    p: &FrequencyParams,
    fc: &FrequencyConstants,
) -> Result<FrequencySeries, EstimateError> {
    let grid = traj.states[0].grid().clone();
    let n = grid.dim;
    let eps = 1e-9 * (p.t1 - p.t0);
    let idx: Vec<usize> = (0..u.times.len())
        .filter(|&k| u.times[k] >= p.t0 - eps && u.times[k] <= p.t1 + eps)
        .collect();
    if idx.len() < 3 {
        return Err(EstimateError::BadWindow(format!(
            "window [{}, {}] covers {} snapshots, need at least 3",
            p.t0,
            p.t1,
            idx.len()
        )));
    }
    let mut times = Vec::with_capacity(idx.len());
    let mut i_s = Vec::with_capacity(idx.len());
    let mut d_s = Vec::with_capacity(idx.len());
    let mut e_s = Vec::with_capacity(idx.len());
    let mut e_acc = 0.0;
    for (j, &k) in idx.iter().enumerate() {
        let t = u.times[k];
        let ws = MetricWorkspace::new(&traj.states[k].g);
        let u2 = u.values[k].map(|v| v * v);
        let i_val = weighted_integral(mu, k, &u2);
        if !(i_val > 0.0) {
            return Err(EstimateError::BadParameters(format!(
                "I(t) must stay positive, got {i_val} at t={t}"
            )));
        }
        let gsq = grad_sq_field(&ws, &grid, &u.values[k]);
        let d_val = p.h.value(t) * weighted_integral(mu, k, &gsq);
        if j > 0 {
            e_acc += e_increment(n, p, fc, times[j - 1], t);
        }
        times.push(t);
        i_s.push(i_val);
        d_s.push(d_val);
        e_s.push(e_acc);
    }
    let beta: Vec<f64> = e_s.iter().map(|e| e.exp()).collect();
    let u_s: Vec<f64> = (0..times.len())
        .map(|j| beta[j] * d_s[j] / i_s[j])
        .collect();
    Ok(FrequencySeries { times, i: i_s, d: d_s, e: e_s, u: u_s, beta, lambda_m: vec![] })
}

fn monotone_report(
    check: &str,
    times: &[f64],
    series: &[f64],
    sign: f64,
    traj: &Trajectory,
    c_b: f64,
) -> EstimateReport {
    // h < 0: increasing, so successive differences must be ≥ 0;
    // h > 0: decreasing, differences ≤ 0. Slack = worst signed difference.
    let mut worst = f64::INFINITY;
    let mut loc = Location { time: times[0], point: 0 };
    let mut scale: f64 = 0.0;
    for j in 0..series.len() - 1 {
        let diff = series[j + 1] - series[j];
        scale = scale.max(series[j].abs()).max(series[j + 1].abs());
        let slack = if sign < 0.0 { diff } else { -diff };
        if slack < worst {
            worst = slack;
            loc = Location { time: times[j + 1], point: 0 };
        }
    }
    let budget = error_budget(c_b, traj, scale.max(1e-3));
    let verdict = if worst < -budget {
        Verdict::Violated
    } else if worst < 0.0 {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    EstimateReport { check: check.into(), worst_slack: worst, location: loc, budget, verdict }
}

/// Monotonicity of U(t) in the sign regime of h.
pub fn monotonicity_check(
    s: &FrequencySeries,
    p: &FrequencyParams,
    traj: &Trajectory,
    c_b: f64,
) -> EstimateReport {
    monotone_report("frequency-monotone", &s.times, &s.u, p.sign(), traj, c_b)
}

const EIG_TOL: f64 = 1e-10;
const EIG_MAX_ITER: usize = 500;
const CG_MAX_ITER: usize = 4000;

/// First nonzero eigenvalue of the dμ-weighted Dirichlet form at snapshot `k`:
/// inverse power iteration on L = −(1/ρ) D⁻·(ρ g^{ij} D⁺), with constants
/// removed by dμ-mean deflation. The one-sided difference pair keeps the form
/// symmetric positive semidefinite with null space exactly the constants.
fn lambda_at(
    traj: &Trajectory,
    mu: &WeightedMeasure,
    k: usize,
) -> Result<(f64, Vec<f64>), EstimateError> {
    let grid = traj.states[0].grid().clone();
    let dim = grid.dim;
    let len = grid.len();
    let ws = MetricWorkspace::new(&traj.states[k].g);
    let rho = &mu.density[k].values;
    let total: f64 = rho.iter().sum();

    let mean_zero = |v: &mut [f64]| {
        let m: f64 = v.iter().zip(rho).map(|(a, r)| a * r).sum::<f64>() / total;
        for x in v.iter_mut() {
            *x -= m;
        }
    };
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        a.iter().zip(b).zip(rho).map(|((x, y), r)| x * y * r).sum()
    };
    let apply = |v: &[f64]| -> Vec<f64> {
        let grads: Vec<Vec<f64>> = (0..dim).map(|a| forward_diff(&grid, v, a)).collect();
        let mut out = vec![0.0; len];
        for i in 0..dim {
            let flux: Vec<f64> = (0..len)
                .map(|p| {
                    let gi = &ws.ginv[p];
                    rho[p] * (0..dim).map(|j| gi[i][j] * grads[j][p]).sum::<f64>()
                })
                .collect();
            let div = backward_diff(&grid, &flux, i);
            for p in 0..len {
                out[p] -= div[p] / rho[p];
            }
        }
        out
    };

    // conjugate gradient in the ρ-inner product on the mean-zero subspace
    let solve = |b: &[f64]| -> Vec<f64> {
        let mut x = vec![0.0; len];
        let mut r = b.to_vec();
        mean_zero(&mut r);
        let mut d = r.clone();
        let mut rs = inner(&r, &r);
        let tol = rs * 1e-24;
        for _ in 0..CG_MAX_ITER {
            if rs <= tol {
                break;
            }
            let ad = apply(&d);
            let alpha = rs / inner(&d, &ad);
            for p in 0..len {
                x[p] += alpha * d[p];
                r[p] -= alpha * ad[p];
            }
            let rs_new = inner(&r, &r);
            let beta = rs_new / rs;
            rs = rs_new;
            for p in 0..len {
                d[p] = r[p] + beta * d[p];
            }
        }
        mean_zero(&mut x);
        x
    };

    // Block subspace iteration with Rayleigh-Ritz extraction. The first
    // nonzero eigenvalue of a torus-like geometry sits in a cluster of up to
    // 2·dim near-degenerate modes; a single-vector iteration stalls on such a
    // cluster, while a block wider than the cluster converges at the rate of
    // the gap to the next shell.
    let block = 2 * dim + 1;
    let mut xs: Vec<Vec<f64>> = (0..block)
        .map(|j| {
            (0..len)
                .map(|p| {
                    let x = grid.position(p);
                    let tau = 2.0 * std::f64::consts::PI;
                    let base = if j < 2 * dim {
                        let a = j / 2;
                        if j % 2 == 0 { (tau * x[a]).sin() } else { (tau * x[a]).cos() }
                    } else {
                        (tau * (0..dim).map(|a| x[a]).sum::<f64>()).sin()
                    };
                    // generic symmetry-breaking component
                    base + 0.1 * (7.3 * x[0] + 3.1 * x[1.min(dim - 1)] + 0.37 + j as f64).sin()
                })
                .collect()
        })
        .collect();
    let orthonormalize = |cols: &mut Vec<Vec<f64>>| -> Result<(), EstimateError> {
        for j in 0..cols.len() {
            for i in 0..j {
                let c = inner(&cols[j], &cols[i]);
                let (head, tail) = cols.split_at_mut(j);
                for (x, y) in tail[0].iter_mut().zip(&head[i]) {
                    *x -= c * y;
                }
            }
            let norm = inner(&cols[j], &cols[j]).sqrt();
            if !(norm > 1e-300) {
                return Err(EstimateError::EigenNoConvergence { iterations: 0, value: norm });
            }
            for x in cols[j].iter_mut() {
                *x /= norm;
            }
        }
        Ok(())
    };
    for v in xs.iter_mut() {
        mean_zero(v);
    }
    orthonormalize(&mut xs)?;
    let mut lambda = 0.0;
    for it in 0..EIG_MAX_ITER {
        let mut zs: Vec<Vec<f64>> = xs.iter().map(|v| solve(v)).collect();
        for v in zs.iter_mut() {
            mean_zero(v);
        }
        orthonormalize(&mut zs)?;
        let az: Vec<Vec<f64>> = zs.iter().map(|v| apply(v)).collect();
        let mut m = vec![vec![0.0; block]; block];
        for i in 0..block {
            for j in i..block {
                let v = 0.5 * (inner(&zs[i], &az[j]) + inner(&zs[j], &az[i]));
                m[i][j] = v;
                m[j][i] = v;
            }
        }
        let (vals, vecs) = jacobi_eigen(m);
        let mut order: Vec<usize> = (0..block).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        xs = order
            .iter()
            .map(|&c| {
                (0..len)
                    .map(|p| (0..block).map(|r| vecs[r][c] * zs[r][p]).sum())
                    .collect()
            })
            .collect();
        let new_lambda = vals[order[0]];
        let done = (new_lambda - lambda).abs() <= EIG_TOL * new_lambda.abs().max(1.0);
        lambda = new_lambda;
        if done && it > 0 {
            return Ok((lambda, xs.swap_remove(0)));
        }
    }
    Err(EstimateError::EigenNoConvergence { iterations: EIG_MAX_ITER, value: lambda })
}

/// Cyclic Jacobi for a small dense symmetric matrix: eigenvalues (unsorted)
/// and the orthogonal matrix of column eigenvectors.
fn jacobi_eigen(mut m: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = m.len();
    let mut q = vec![vec![0.0; n]; n];
    for (i, row) in q.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(m[i][j].abs());
            }
        }
        let scale = (0..n).map(|i| m[i][i].abs()).fold(1e-300, f64::max);
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for r in p + 1..n {
                if m[p][r].abs() <= 1e-300 {
                    continue;
                }
                let theta = (m[r][r] - m[p][p]) / (2.0 * m[p][r]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (a, b) = (m[p][k], m[r][k]);
                    m[p][k] = c * a - s * b;
                    m[r][k] = s * a + c * b;
                }
                for row in m.iter_mut() {
                    let (a, b) = (row[p], row[r]);
                    row[p] = c * a - s * b;
                    row[r] = s * a + c * b;
                }
                for row in q.iter_mut() {
                    let (a, b) = (row[p], row[r]);
                    row[p] = c * a - s * b;
                    row[r] = s * a + c * b;
                }
            }
        }
    }
    ((0..n).map(|i| m[i][i]).collect(), q)
}

/// λ_M per snapshot plus the monotonicity report for β(t) h(t) λ_M(t).
pub fn eigenvalue_series(
    traj: &Trajectory,
    mu: &WeightedMeasure,
    s: &mut FrequencySeries,
    p: &FrequencyParams,
    c_b: f64,
) -> Result<EstimateReport, EstimateError> {
    let mut lambdas = Vec::with_capacity(s.times.len());
    for (j, &t) in s.times.iter().enumerate() {
        let k = mu
            .times
            .iter()
            .position(|&tk| (tk - t).abs() < 1e-12 * (1.0 + t))
            .ok_or_else(|| {
                EstimateError::BadWindow(format!("series time {t} not among measure snapshots"))
            })?;
        let (lam, _) = lambda_at(traj, mu, k)?;
        let _ = j;
        lambdas.push(lam);
    }
    let series: Vec<f64> = s
        .times
        .iter()
        .zip(&s.beta)
        .zip(&lambdas)
        .map(|((&t, &b), &l)| b * p.h.value(t) * l)
        .collect();
    s.lambda_m = lambdas;
    Ok(monotone_report("eigenvalue-monotone", &s.times, &series, p.sign(), traj, c_b))
}

/// |dI/dt + 2D/h| at interior window snapshots (the identity I′ = −2D/h).
pub fn i_prime_identity(s: &FrequencySeries, p: &FrequencyParams) -> Vec<(f64, f64)> {
    let n = s.times.len();
    let mut out = Vec::with_capacity(n.saturating_sub(2));
    for j in 1..n - 1 {
        let t = s.times[j];
        let di = (s.i[j + 1] - s.i[j - 1]) / (s.times[j + 1] - s.times[j - 1]);
        out.push((t, (di + 2.0 * s.d[j] / p.h.value(t)).abs()));
    }
    out
}

/// Integral Harnack: I(t₁) ≥ exp{2U(t₀) ∫ −1/(hβ) dt} I(t₀).
pub fn integral_harnack_check(
    s: &FrequencySeries,
    p: &FrequencyParams,
    fc: &FrequencyConstants,
    traj: &Trajectory,
    c_b: f64,
) -> EstimateReport {
    let n = traj.states[0].grid().dim;
    let (ta, tb) = (s.times[0], *s.times.last().unwrap());
    // β(t) rebuilt from the closed-form E along a fine partition, then Simpson
    // over the same nodes for ∫ −1/(hβ)
    let m = 256;
    let dt = (tb - ta) / m as f64;
    let mut e_acc = 0.0;
    let mut f_nodes = Vec::with_capacity(m + 1);
    for j in 0..=m {
        let t = ta + j as f64 * dt;
        if j > 0 {
            e_acc += e_increment(n, p, fc, t - dt, t);
        }
        f_nodes.push(-1.0 / (p.h.value(t) * e_acc.exp()));
    }
    let mut q = 0.0;
    for j in (0..m).step_by(2) {
        q += dt / 3.0 * (f_nodes[j] + 4.0 * f_nodes[j + 1] + f_nodes[j + 2]);
    }
    let rhs = (2.0 * s.u[0] * q).exp() * s.i[0];
    let lhs = *s.i.last().unwrap();
    let slack = lhs - rhs;
    let scale = lhs.abs().max(rhs.abs());
    let budget = error_budget(c_b, traj, scale);
    let verdict = if slack < -budget {
        Verdict::Violated
    } else if slack < 0.0 {
        Verdict::Inconclusive
    } else {
        Verdict::Pass
    };
    EstimateReport {
        check: "integral-harnack".into(),
        worst_slack: slack,
        location: Location { time: tb, point: 0 },
        budget,
        verdict,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimates::{liyau_constants, liyau_rhs, LiYauParams};
    use crate::field::MetricField;
    use crate::flow::{FlowState, StepControl};
    use crate::grid::GridSpec;
    use crate::heat::{solve_heat, Direction};
    use std::f64::consts::PI;

    fn static_traj(g: MetricField, n_snap: usize, t0: f64, t1: f64) -> Trajectory {
        let states = (0..n_snap)
            .map(|k| FlowState {
                g: g.clone(),
                h: None,
                t: t0 + (t1 - t0) * k as f64 / (n_snap - 1) as f64,
            })
            .collect();
        Trajectory { states, step_sizes: vec![], horizon: t1 }
    }

    fn uniform_measure(traj: &Trajectory) -> WeightedMeasure {
        // on the flat static background K ≡ 1 solves the conjugate equation
        let grid = traj.states[0].grid();
        WeightedMeasure {
            times: traj.times(),
            density: traj.states.iter().map(|_| ScalarField::constant(grid, 1.0)).collect(),
            masses: vec![1.0; traj.states.len()],
        }
    }

    fn mode_datum(grid: &GridSpec, amp: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| 1.0 + amp * (2.0 * PI * x[0]).sin())
    }

    #[test]
    fn constants_hand_values_and_spotlight_match() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        let u0 = mode_datum(&grid, 0.3);
        let fc = frequency_constants(3, &CurvatureBounds::zero(), &u0).unwrap();
        assert!((fc.c1 - 0.1875).abs() < 1e-14);
        assert_eq!(fc.c2, 0.0);
        assert_eq!(fc.c3, 0.0);

        let kb = CurvatureBounds { k1: 0.1, k2: 0.1, k3: 0.0, k4: 0.0 };
        let fc = frequency_constants(3, &kb, &u0).unwrap();
        assert!((fc.c2 - 0.72).abs() < 1e-13, "C2 = {}", fc.c2);
        assert!((fc.c3 - 0.6).abs() < 1e-13, "C3 = {}", fc.c3);

        // at α=2, a=1/4, b=1/8 the general envelope collapses to
        // 4n/t + √(4nC₁) + √(4nC₂)/t + √(4nC₃)/√t
        let p = LiYauParams::spotlight();
        for kbt in [
            CurvatureBounds::zero(),
            CurvatureBounds { k1: 0.4, k2: 0.9, k3: 0.3, k4: 0.2 },
        ] {
            let fc = frequency_constants(3, &kbt, &u0).unwrap();
            let c = liyau_constants(3, &p, &kbt);
            for t in [0.1, 0.5, 2.0] {
                let nf = 3.0f64;
                let env = 4.0 * nf / t
                    + (4.0 * nf * fc.c1).sqrt()
                    + (4.0 * nf * fc.c2).sqrt() / t
                    + (4.0 * nf * fc.c3).sqrt() / t.sqrt();
                let general = liyau_rhs(3, &p, &c, t);
                assert!((env - general).abs() < 1e-10 * env, "{env} vs {general}");
            }
        }
    }

    #[test]
    fn constant_datum_is_rejected() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        let u0 = ScalarField::constant(&grid, 2.0);
        assert!(matches!(
            frequency_constants(2, &CurvatureBounds::zero(), &u0),
            Err(EstimateError::DegenerateInitialDatum)
        ));
    }

    #[test]
    fn window_validation() {
        assert!(FrequencyParams::new(HFamily::Constant { value: -1.0 }, 0.01, 0.05).is_ok());
        assert!(FrequencyParams::new(HFamily::Constant { value: -1.0 }, 0.0, 0.05).is_err());
        assert!(FrequencyParams::new(HFamily::Constant { value: 0.0 }, 0.01, 0.05).is_err());
        // linear crossing zero inside the window
        assert!(
            FrequencyParams::new(HFamily::Linear { p: -0.03, q: 1.0 }, 0.01, 0.05).is_err()
        );
        assert!(
            FrequencyParams::new(HFamily::Linear { p: 0.03, q: 1.0 }, 0.01, 0.05).is_ok()
        );
    }

    #[test]
    fn constant_solution_series_is_trivial() {
        let grid = GridSpec::cube(2, 12, 1.0).unwrap();
        let traj = static_traj(MetricField::flat(&grid), 5, 0.01, 0.05);
        let mu = uniform_measure(&traj);
        let u = ScalarEvolution {
            times: traj.times(),
            values: (0..5).map(|_| ScalarField::constant(&grid, 3.0)).collect(),
            direction: Direction::Forward,
        };
        // constants are rejected for the run entry point, but the series math
        // itself must behave; fabricate fc from a non-constant datum
        let fc = frequency_constants(2, &CurvatureBounds::zero(), &mode_datum(&grid, 0.2)).unwrap();
        let p = FrequencyParams::new(HFamily::Constant { value: -1.0 }, 0.01, 0.05).unwrap();
        let s = compute_series(&traj, &u, &mu, &p, &fc).unwrap();
        assert_eq!(s.e[0], 0.0);
        assert_eq!(s.beta[0], 1.0);
        for j in 0..s.times.len() {
            assert!((s.i[j] - 9.0).abs() < 1e-12);
            assert!(s.d[j].abs() < 1e-20);
            assert!(s.u[j].abs() < 1e-20);
            assert!(s.beta[j] > 0.0);
        }
        // integral Harnack bound reduces to I(t1) ≥ I(t0), equality
        let rep = integral_harnack_check(&s, &p, &fc, &traj, 10.0);
        assert_ne!(rep.verdict, Verdict::Violated);
        assert!(rep.worst_slack.abs() < 1e-10);
    }

    #[test]
    fn flat_mode_series_matches_quadrature_oracle() {
        let grid = GridSpec::cube(2, 24, 1.0).unwrap();
        let traj = static_traj(MetricField::flat(&grid), 9, 0.01, 0.05);
        let mu = uniform_measure(&traj);
        let ctrl = StepControl::default();
        let u0 = mode_datum(&grid, 0.4);
        let u = solve_heat(&traj, &u0, &ctrl).unwrap();
        let fc = frequency_constants(2, &CurvatureBounds::zero(), &u0).unwrap();
        let p = FrequencyParams::new(HFamily::Constant { value: -1.0 }, 0.01, 0.05).unwrap();
        let s = compute_series(&traj, &u, &mu, &p, &fc).unwrap();

        // continuum oracle: u = 1 + εe^{-λ(t-t0)}sin(2πx) with ε fixed by the
        // datum at t0; I = 1 + ε(t)²/2, ∫|∇u|² = ε(t)²(2π)²/2
        let lam = 4.0 * PI * PI;
        for j in [0, 4, 8] {
            let t = s.times[j];
            let eps = 0.4 * (-lam * (t - 0.01)).exp();
            let i_oracle = 1.0 + eps * eps / 2.0;
            let d_oracle = -eps * eps * lam / 2.0;
            assert!(
                (s.i[j] - i_oracle).abs() < 0.05 * i_oracle.abs().max(1e-3),
                "I at {t}: {} vs {i_oracle}",
                s.i[j]
            );
            assert!(
                (s.d[j] - d_oracle).abs() < 0.05 * d_oracle.abs().max(1e-3),
                "D at {t}: {} vs {d_oracle}",
                s.d[j]
            );
            assert!((s.u[j] - s.beta[j] * s.d[j] / s.i[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn monotone_in_both_sign_regimes() {
        let grid = GridSpec::cube(2, 24, 1.0).unwrap();
        let traj = static_traj(MetricField::flat(&grid), 9, 0.01, 0.05);
        let mu = uniform_measure(&traj);
        let ctrl = StepControl::default();
        let u0 = mode_datum(&grid, 0.4);
        let u = solve_heat(&traj, &u0, &ctrl).unwrap();
        let fc = frequency_constants(2, &CurvatureBounds::zero(), &u0).unwrap();
        for value in [-1.0, 1.0] {
            let p = FrequencyParams::new(HFamily::Constant { value }, 0.01, 0.05).unwrap();
            let s = compute_series(&traj, &u, &mu, &p, &fc).unwrap();
            let rep = monotonicity_check(&s, &p, &traj, 10.0);
            assert_ne!(rep.verdict, Verdict::Violated, "h={value}: slack {}", rep.worst_slack);
            let rep = integral_harnack_check(&s, &p, &fc, &traj, 10.0);
            assert_ne!(rep.verdict, Verdict::Violated, "h={value}: slack {}", rep.worst_slack);
        }
    }

    #[test]
    fn eigenvalue_matches_flat_fourier_oracle() {
        let grid = GridSpec::cube(2, 16, 1.0).unwrap();
        let traj = static_traj(MetricField::flat(&grid), 3, 0.01, 0.03);
        let mu = uniform_measure(&traj);
        let (lam, vec) = lambda_at(&traj, &mu, 1).unwrap();
        let cont = 4.0 * PI * PI;
        assert!(
            (lam - cont).abs() < 0.05 * cont,
            "lambda {lam} vs continuum {cont}"
        );
        assert!(lam > 0.0);
        // Rayleigh self-consistency of the returned eigenfunction
        let ws = MetricWorkspace::new(&traj.states[1].g);
        let grid_ref = traj.states[0].grid();
        let dim = grid_ref.dim;
        let mut num = 0.0;
        let mut den = 0.0;
        let grads: Vec<Vec<f64>> =
            (0..dim).map(|a| forward_diff(grid_ref, &vec, a)).collect();
        for p in 0..grid_ref.len() {
            let gi = &ws.ginv[p];
            for a in 0..dim {
                for b in 0..dim {
                    num += gi[a][b] * grads[a][p] * grads[b][p];
                }
            }
            den += vec[p] * vec[p];
        }
        assert!((num / den - lam).abs() < 1e-6 * lam, "rayleigh {} vs {lam}", num / den);
    }

    #[test]
    fn eigenvalue_series_fills_and_reports() {
        let grid = GridSpec::cube(2, 16, 1.0).unwrap();
        let traj = static_traj(MetricField::flat(&grid), 5, 0.01, 0.05);
        let mu = uniform_measure(&traj);
        let ctrl = StepControl::default();
        let u0 = mode_datum(&grid, 0.3);
        let u = solve_heat(&traj, &u0, &ctrl).unwrap();
        let fc = frequency_constants(2, &CurvatureBounds::zero(), &u0).unwrap();
        let p = FrequencyParams::new(HFamily::Constant { value: -1.0 }, 0.01, 0.05).unwrap();
        let mut s = compute_series(&traj, &u, &mu, &p, &fc).unwrap();
        let rep = eigenvalue_series(&traj, &mu, &mut s, &p, 10.0).unwrap();
        assert_eq!(s.lambda_m.len(), s.times.len());
        for &l in &s.lambda_m {
            assert!(l > 0.0);
        }
        // static background: λ_M constant, βhλ strictly increasing for h<0
        assert_ne!(rep.verdict, Verdict::Violated, "slack {}", rep.worst_slack);
    }

    #[test]
    fn i_prime_identity_flat_mode() {
        let grid = GridSpec::cube(2, 24, 1.0).unwrap();
        let run = |snaps: usize| -> f64 {
            let traj = static_traj(MetricField::flat(&grid), snaps, 0.01, 0.05);
            let mu = uniform_measure(&traj);
            let ctrl = StepControl::default();
            let u0 = mode_datum(&grid, 0.4);
            let u = solve_heat(&traj, &u0, &ctrl).unwrap();
            let fc =
                frequency_constants(2, &CurvatureBounds::zero(), &u0).unwrap();
            let p = FrequencyParams::new(HFamily::Constant { value: 1.0 }, 0.01, 0.05).unwrap();
            let s = compute_series(&traj, &u, &mu, &p, &fc).unwrap();
            // fixed comparison time: the sup location drifts toward t0 (where
            // I‴ is largest) under refinement and hides the true order
            i_prime_identity(&s, &p)
                .iter()
                .find(|(t, _)| (t - 0.03).abs() < 1e-12)
                .expect("0.03 is a snapshot in both runs")
                .1
        };
        let coarse = run(9);
        let fine = run(17);
        let order = (coarse / fine).log2();
        assert!(order > 1.9, "order {order} (coarse {coarse}, fine {fine})");
    }

    #[test]
    fn constant_solution_i_prime_is_zero() {
        let grid = GridSpec::cube(2, 12, 1.0).unwrap();
        let traj = static_traj(MetricField::flat(&grid), 5, 0.01, 0.05);
        let mu = uniform_measure(&traj);
        let u = ScalarEvolution {
            times: traj.times(),
            values: (0..5).map(|_| ScalarField::constant(&grid, 2.0)).collect(),
            direction: Direction::Forward,
        };
        let fc = frequency_constants(2, &CurvatureBounds::zero(), &mode_datum(&grid, 0.2)).unwrap();
        let p = FrequencyParams::new(HFamily::Constant { value: 1.0 }, 0.01, 0.05).unwrap();
        let s = compute_series(&traj, &u, &mu, &p, &fc).unwrap();
        for (_, r) in i_prime_identity(&s, &p) {
            assert!(r < 1e-12);
        }
    }
}
