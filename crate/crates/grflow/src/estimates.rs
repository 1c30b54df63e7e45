//! Verifiers for the gradient estimates along the flow: the Li-Yau bound with
//! its constants B₁-B₃, the spacetime Harnack inequality, the Hamilton-type
//! bound, and the sharp evolution identity behind all of them.

use serde::{Deserialize, Serialize};

use crate::errors::EstimateError;
use crate::field::{interpolate_scalar, MetricField, ScalarField, SymTensorField};
use crate::flow::{CurvatureBounds, Trajectory};
use crate::geodesic::{geodesic_at_time, metric_at};
use crate::geometry::{
    hform_ops_with, ricci_with, scalar_calculus_with, tensor_calculus_with, MetricWorkspace,
};
use crate::heat::ScalarEvolution;

/// Parameter triple (α, a, b) of the Li-Yau estimate, constrained by
/// a + 2b = 1/α with α > 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiYauParams {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
}

impl LiYauParams {
    pub fn new(alpha: f64, a: f64, b: f64) -> Result<Self, EstimateError> {
        if !(alpha > 1.0) {
            return Err(EstimateError::BadParameters(format!(
                "alpha must exceed 1, got {alpha}"
            )));
        }
        if !(a > 0.0) || !(b > 0.0) {
            return Err(EstimateError::BadParameters(format!(
                "a and b must be positive, got a={a}, b={b}"
            )));
        }
        if (a + 2.0 * b - 1.0 / alpha).abs() > 1e-12 {
            return Err(EstimateError::BadParameters(format!(
                "constraint a + 2b = 1/alpha broken: {} vs {}",
                a + 2.0 * b,
                1.0 / alpha
            )));
        }
        Ok(Self { alpha, a, b })
    }

    /// α = 2, a = 1/4, b = 1/8 — the parameter point the frequency bounds use.
    pub fn spotlight() -> Self {
        Self { alpha: 2.0, a: 0.25, b: 0.125 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LiYauConstants {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
}

/// The constants of the Li-Yau estimate from dimension, parameters and the
/// curvature bounds K₁-K₄ (with K = max{K₁², K₂²} always recomputed).
pub fn liyau_constants(n: usize, p: &LiYauParams, kb: &CurvatureBounds) -> LiYauConstants {
    let nf = n as f64;
    let al = p.alpha;
    let am1 = al - 1.0;
    let k = kb.k();
    let mix = kb.k1 + am1 * kb.k3 / (4.0 * al);
    let b1 = nf * al.powi(3) / (512.0 * p.a * am1 * am1) + 3.0 * nf * al * kb.k4 * kb.k4 / 8.0;
    let b2 = nf * al.powi(3) / (2.0 * p.a * am1 * am1) * mix * mix
        + nf * al * k / (2.0 * p.b)
        + nf * al * kb.k3 * kb.k3 / (32.0 * p.b);
    let b3 = nf * al.powi(3) / (16.0 * p.a * am1 * am1) * mix;
    LiYauConstants { b1, b2, b3 }
}

/// Right-hand side envelope of the Li-Yau estimate at time t:
/// √(nα/2a) [(√(nα/2a) + √B₂)/t + √B₃/√t + √B₁].
pub fn liyau_rhs(n: usize, p: &LiYauParams, c: &LiYauConstants, t: f64) -> f64 {
    let s = (n as f64 * p.alpha / (2.0 * p.a)).sqrt();
    s * ((s + c.b2.sqrt()) / t + c.b3.sqrt() / t.sqrt() + c.b1.sqrt())
}

/// The specialized H ≡ 0 envelope for the plain Ricci flow:
/// nα/(2at) + (1/t)√(n²α⁴/(4a²(α-1)²) + n²α²K/(4ab)).
pub fn ricci_flow_envelope(n: usize, p: &LiYauParams, k: f64, t: f64) -> f64 {
    let nf = n as f64;
    let al = p.alpha;
    let am1 = al - 1.0;
    nf * al / (2.0 * p.a * t)
        + (nf * nf * al.powi(4) / (4.0 * p.a * p.a * am1 * am1)
            + nf * nf * al * al * k / (4.0 * p.a * p.b))
            .sqrt()
            / t
}

/// ξ = nα/2a + √(nα B₂ / 2a), the Harnack time-ratio exponent (before the
/// division by α).
pub fn harnack_xi(n: usize, p: &LiYauParams, c: &LiYauConstants) -> f64 {
    let q = n as f64 * p.alpha / (2.0 * p.a);
    q + (q * c.b2).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Inconclusive,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub time: f64,
    pub point: usize,
}

/// Outcome of one inequality check. `worst_slack` is the minimum of
/// RHS − LHS over the checked set; `violated` requires the slack to fall
/// below the declared numerical budget.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub check: String,
    pub worst_slack: f64,
    pub location: Location,
    pub budget: f64,
    pub verdict: Verdict,
}

impl EstimateReport {
    pub fn new(check: &str, worst_slack: f64, location: Location, budget: f64) -> Self {
        let verdict = if worst_slack < -budget {
            Verdict::Violated
        } else if worst_slack < 0.0 {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        };
        Self { check: check.into(), worst_slack, location, budget, verdict }
    }
}

/// Numerical honesty margin: c_b (h² + Δt²) × a characteristic scale of the
/// inequality being checked.
pub fn error_budget(c_b: f64, traj: &Trajectory, scale: f64) -> f64 {
    let h = traj.states[0].grid().max_spacing();
    let dt = traj.output_dt();
    c_b * (h * h + dt * dt) * scale
}

/// First-derivative weights of the Lagrange interpolant through `nodes`,
/// evaluated at `t`.
fn deriv_weights(nodes: &[f64], t: f64) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut sum = 0.0;
        for m in 0..n {
            if m == i {
                continue;
            }
            let mut prod = 1.0;
            for l in 0..n {
                if l == i || l == m {
                    continue;
                }
                prod *= (t - nodes[l]) / (nodes[i] - nodes[l]);
            }
            sum += prod / (nodes[i] - nodes[m]);
        }
        w[i] = sum;
    }
    w
}

/// Time derivative at snapshot `k`: centered 3-point stencil inside,
/// one-sided `end_width`-point stencil at the ends.
fn time_derivative_with(
    times: &[f64],
    fields: &[&[f64]],
    k: usize,
    end_width: usize,
) -> Vec<f64> {
    let n = times.len();
    let (base, width) = if k == 0 {
        (0, end_width.min(n))
    } else if k == n - 1 {
        (n - end_width.min(n), end_width.min(n))
    } else {
        (k - 1, 3)
    };
    let w = deriv_weights(&times[base..base + width], times[k]);
    let len = fields[0].len();
    (0..len)
        .map(|p| (0..width).map(|s| w[s] * fields[base + s][p]).sum())
        .collect()
}

fn time_derivative(times: &[f64], fields: &[&[f64]], k: usize) -> Vec<f64> {
    time_derivative_with(times, fields, k, 3)
}

/// Li-Yau check: |∇u|²/u² − α ∂ₜu/u against the envelope, per point and
/// snapshot (t = 0 excluded).
pub fn liyau_check(
    traj: &Trajectory,
    u: &ScalarEvolution,
    p: &LiYauParams,
    kb: &CurvatureBounds,
    c_b: f64,
) -> EstimateReport {
    let grid = traj.states[0].grid();
    let n = grid.dim;
    let consts = liyau_constants(n, p, kb);
    let times = &u.times;
    let raw: Vec<&[f64]> = u.values.iter().map(|f| f.values.as_slice()).collect();
    let mut worst = f64::INFINITY;
    let mut loc = Location { time: times[1], point: 0 };
    let mut scale: f64 = 0.0;
    for k in 1..times.len() {
        let t = times[k];
        let rhs = liyau_rhs(n, p, &consts, t);
        scale = scale.max(rhs.abs());
        let ws = MetricWorkspace::new(&traj.states[k].g);
        let sc = scalar_calculus_with(&traj.states[k].g, &u.values[k], &ws).expect("grids match");
        let dudt = time_derivative(times, &raw, k);
        for pt in 0..grid.len() {
            let uv = u.values[k].values[pt];
            let lhs = sc.grad_sq.values[pt] / (uv * uv) - p.alpha * dudt[pt] / uv;
            let slack = rhs - lhs;
            if slack < worst {
                worst = slack;
                loc = Location { time: t, point: pt };
            }
        }
    }
    EstimateReport::new("li-yau", worst, loc, error_budget(c_b, traj, scale))
}

/// Hamilton check: P = t|∇u|²/u − u ln(A/u) must stay non-positive,
/// A = max u(·, 0). Reported slack is −sup P.
pub fn hamilton_check(traj: &Trajectory, u: &ScalarEvolution, c_b: f64) -> EstimateReport {
    let grid = traj.states[0].grid();
    let a_max = u.values[0].max();
    let mut sup_p = f64::NEG_INFINITY;
    let mut loc = Location { time: u.times[0], point: 0 };
    let mut scale: f64 = 0.0;
    for k in 0..u.times.len() {
        let t = u.times[k];
        let ws = MetricWorkspace::new(&traj.states[k].g);
        let sc = scalar_calculus_with(&traj.states[k].g, &u.values[k], &ws).expect("grids match");
        for pt in 0..grid.len() {
            let uv = u.values[k].values[pt];
            let p = t * sc.grad_sq.values[pt] / uv - uv * (a_max / uv).ln();
            scale = scale.max((t * sc.grad_sq.values[pt] / uv).abs().max((uv * (a_max / uv).ln()).abs()));
            if p > sup_p {
                sup_p = p;
                loc = Location { time: t, point: pt };
            }
        }
    }
    EstimateReport::new("hamilton", -sup_p, loc, error_budget(c_b, traj, scale.max(1e-3)))
}

/// Sup-norm residual, per interior snapshot, of the evolution identity for
/// F = t(|∇f|² − α ∂ₜf), f = ln u:
///
/// (Δ−∂ₜ)F = −2⟨∇f,∇F⟩ + t(2|∇²f|² + 2α⟨Ric−¼H², ∇²f⟩)
///           + t(2α Ric(∇f,∇f) − ((α−1)/2) H²(∇f,∇f))
///           + tα⟨∇f, ¼∇ tr H² − ½ div H²⟩ − F/t.
pub fn lemma_residual(traj: &Trajectory, u: &ScalarEvolution, alpha: f64) -> Vec<(f64, f64)> {
    lemma_residual_scaled(traj, u, alpha).0
}

/// As [`lemma_residual`], but also returns the sup magnitude of either side
/// of the identity, for use as a characteristic scale in error budgets.
pub fn lemma_residual_scaled(
    traj: &Trajectory,
    u: &ScalarEvolution,
    alpha: f64,
) -> (Vec<(f64, f64)>, f64) {
    let grid = traj.states[0].grid().clone();
    let dim = grid.dim;
    let times = &u.times;
    let n_snap = times.len();
    assert!(n_snap >= 3, "need at least 3 snapshots");

    let f_fields: Vec<ScalarField> = u.values.iter().map(|s| s.map(f64::ln)).collect();
    let f_raw: Vec<&[f64]> = f_fields.iter().map(|s| s.values.as_slice()).collect();
    let g_raw: Vec<&[f64]> =
        traj.states[..n_snap].iter().map(|s| s.g.base.values.as_slice()).collect();

    let mut out = Vec::new();
    let mut scale = 0.0f64;
    for k in 1..n_snap - 1 {
        let t = times[k];
        let state = &traj.states[k];
        let ws = MetricWorkspace::new(&state.g);
        let sc_f =
            scalar_calculus_with(&state.g, &f_fields[k], &ws).expect("grids match");
        let (ric, _) = ricci_with(&state.g, &ws);

        // ∂ₜf, its spatial gradient, and ∂ₜ²f — all centered, so no
        // one-sided-stencil error ever gets divided by Δt again
        let dfdt = time_derivative(times, &f_raw, k);
        let mut dfdt_grad = Vec::with_capacity(dim);
        for a in 0..dim {
            dfdt_grad.push(crate::fd::first_diff(&grid, &dfdt, 1, 0, a));
        }
        let (tm, t0, tp) = (times[k - 1], times[k], times[k + 1]);
        let w2 = [
            2.0 / ((tm - t0) * (tm - tp)),
            2.0 / ((t0 - tm) * (t0 - tp)),
            2.0 / ((tp - tm) * (tp - t0)),
        ];
        let d2fdt2: Vec<f64> = (0..grid.len())
            .map(|p| {
                w2[0] * f_raw[k - 1][p] + w2[1] * f_raw[k][p] + w2[2] * f_raw[k + 1][p]
            })
            .collect();
        // ∂ₜg by the same centered stencil, for ∂ₜ|∇f|²
        let wd = deriv_weights(&times[k - 1..k + 2], t);
        let nc = state.g.base.ncomp();
        let dg: Vec<f64> = (0..grid.len() * nc)
            .map(|q| wd[0] * g_raw[k - 1][q] + wd[1] * g_raw[k][q] + wd[2] * g_raw[k + 1][q])
            .collect();

        let big_f = ScalarField {
            grid: grid.clone(),
            values: (0..grid.len())
                .map(|p| t * (sc_f.grad_sq.values[p] - alpha * dfdt[p]))
                .collect(),
        };
        let sc_bf = scalar_calculus_with(&state.g, &big_f, &ws).expect("grids match");

        // H-dependent ingredients (2-dimensional runs have H ≡ 0)
        let (h_sq, tr_h_grad, div_h) = match &state.h {
            None => (None, None, None),
            Some(h) => {
                let ops = hform_ops_with(&state.g, h, &ws.ginv, &ws.sqrt_det).expect("grids match");
                let mut grad_tr = Vec::with_capacity(dim);
                for a in 0..dim {
                    grad_tr.push(crate::fd::first_diff(&grid, &ops.trace_h_sq.values, 1, 0, a));
                }
                let tc = tensor_calculus_with(&state.g, &ops.h_sq, &ws).expect("grids match");
                (Some(ops.h_sq), Some(grad_tr), Some(tc.div))
            }
        };

        let mut sup = 0.0f64;
        for p in 0..grid.len() {
            let gi = &ws.ginv[p];

            // ∂ₜF = F/t + t(∂ₜ|∇f|² − α ∂ₜ²f), with
            // ∂ₜ|∇f|² = −(g⁻¹ ġ g⁻¹)^{ij} ∂ᵢf ∂ⱼf + 2 g^{ij} ∂ᵢf ∂ⱼ∂ₜf
            let mut dt_w = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    let mut gdg = 0.0;
                    for a in 0..dim {
                        for b in 0..dim {
                            gdg += gi[i][a]
                                * dg[p * nc + crate::linalg::sym_slot(dim, a, b)]
                                * gi[b][j];
                        }
                    }
                    dt_w -= gdg * sc_f.grad.get(p, i) * sc_f.grad.get(p, j);
                    dt_w += 2.0 * gi[i][j] * sc_f.grad.get(p, i) * dfdt_grad[j][p];
                }
            }
            let dt_bf = big_f.values[p] / t + t * (dt_w - alpha * d2fdt2[p]);
            let lhs = sc_bf.lap.values[p] - dt_bf;

            // -2⟨∇f, ∇F⟩
            let mut grad_pair = 0.0;
            for i in 0..dim {
                for j in 0..dim {
                    grad_pair += gi[i][j] * sc_f.grad.get(p, i) * sc_bf.grad.get(p, j);
                }
            }
            let mut rhs = -2.0 * grad_pair;

            let hess = sc_f.hess.at(p);
            let ric_p = ric.at(p);
            let h2_p = h_sq.as_ref().map(|h| h.at(p));
            // 2|∇²f|² + 2α⟨Ric − ¼H², ∇²f⟩ and the ∇f-quadratic terms
            let mut hess_sq = 0.0;
            let mut mixed = 0.0;
            let mut ric_ff = 0.0;
            let mut h2_ff = 0.0;
            let grad_up: Vec<f64> = (0..dim)
                .map(|i| (0..dim).map(|j| gi[i][j] * sc_f.grad.get(p, j)).sum())
                .collect();
            for i in 0..dim {
                for j in 0..dim {
                    ric_ff += ric_p[i][j] * grad_up[i] * grad_up[j];
                    if let Some(h2) = &h2_p {
                        h2_ff += h2[i][j] * grad_up[i] * grad_up[j];
                    }
                    for a in 0..dim {
                        for b in 0..dim {
                            let pair = gi[i][a] * gi[j][b] * hess[a][b];
                            hess_sq += pair * hess[i][j];
                            let mut q = ric_p[i][j];
                            if let Some(h2) = &h2_p {
                                q -= 0.25 * h2[i][j];
                            }
                            mixed += pair * q;
                        }
                    }
                }
            }
            rhs += t * (2.0 * hess_sq + 2.0 * alpha * mixed);
            rhs += t * (2.0 * alpha * ric_ff - 0.5 * (alpha - 1.0) * h2_ff);

            // tα⟨∇f, ¼∇ tr H² − ½ div H²⟩
            if let (Some(grad_tr), Some(div)) = (&tr_h_grad, &div_h) {
                let mut s = 0.0;
                for j in 0..dim {
                    s += grad_up[j] * (0.25 * grad_tr[j][p] - 0.5 * div.get(p, j));
                }
                rhs += t * alpha * s;
            }

            rhs -= big_f.values[p] / t;
            sup = sup.max((lhs - rhs).abs());
            scale = scale.max(lhs.abs()).max(rhs.abs());
        }
        out.push((t, sup));
    }
    (out, scale)
}

/// Metric field linearly interpolated in time between trajectory snapshots.
pub fn blended_metric(traj: &Trajectory, t: f64) -> MetricField {
    let times: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
    let mut k = 0;
    while k + 2 < times.len() && t >= times[k + 1] {
        k += 1;
    }
    let dt = times[k + 1] - times[k];
    let theta = ((t - times[k]) / dt).clamp(0.0, 1.0);
    let a = &traj.states[k].g.base;
    let b = &traj.states[k + 1].g.base;
    let values: Vec<f64> = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (1.0 - theta) * x + theta * y)
        .collect();
    // convex combinations of SPD matrices stay SPD
    MetricField { base: SymTensorField { grid: a.grid.clone(), values } }
}

fn nearest_snapshot(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (k, tk) in times.iter().enumerate() {
        if (tk - t).abs() < (times[best] - t).abs() {
            best = k;
        }
    }
    best
}

/// Harnack check between the spacetime points (x, t₁) and (y, t₂), t₁ < t₂:
/// u(x,t₁) ≤ u(y,t₂) (t₂/t₁)^{ξ/α} exp{∫ α|γ′|²/(4(t₂−t₁))
/// + (2/α)√(nαB₃/2a)(√t₂−√t₁) + ((t₂−t₁)/α)√(nαB₁/2a)}.
///
/// γ is minimized against the mid-time metric; |γ′(s)| is then re-measured
/// against the metric at time (1−s)t₂ + s t₁. The requested times snap to the
/// nearest trajectory snapshots.
#[allow(clippy::too_many_arguments)]
pub fn harnack_check(
    traj: &Trajectory,
    u: &ScalarEvolution,
    x: &[f64],
    t1: f64,
    y: &[f64],
    t2: f64,
    p: &LiYauParams,
    kb: &CurvatureBounds,
    c_b: f64,
    samples: usize,
) -> Result<EstimateReport, EstimateError> {
    let grid = traj.states[0].grid();
    let n = grid.dim;
    let i1 = nearest_snapshot(&u.times, t1);
    let i2 = nearest_snapshot(&u.times, t2);
    let (t1, t2) = (u.times[i1], u.times[i2]);
    if !(t1 > 0.0) || !(t2 > t1) {
        return Err(EstimateError::BadWindow(format!(
            "need 0 < t1 < t2, got t1={t1}, t2={t2}"
        )));
    }
    let consts = liyau_constants(n, p, kb);
    let lhs = interpolate_scalar(grid, &u.values[i1].values, &x[..n]);
    let u_y = interpolate_scalar(grid, &u.values[i2].values, &y[..n]);

    let t_mid = 0.5 * (t1 + t2);
    let g_mid = blended_metric(traj, t_mid);
    let path = geodesic_at_time(&g_mid, x, y, samples, t_mid)?;

    // trapezoid over s of α|γ′(s)|²/(4(t₂−t₁)), metric taken at (1−s)t₂+st₁
    let m = path.points.len();
    let ds = 1.0 / (m - 1) as f64;
    let mut integral = 0.0;
    for i in 0..m {
        let s = i as f64 * ds;
        let g_s = blended_metric(traj, (1.0 - s) * t2 + s * t1);
        let (p0, p1, w) = if i == 0 {
            (&path.points[0], &path.points[1], 1.0 / ds)
        } else if i == m - 1 {
            (&path.points[m - 2], &path.points[m - 1], 1.0 / ds)
        } else {
            (&path.points[i - 1], &path.points[i + 1], 1.0 / (2.0 * ds))
        };
        let gm = metric_at(&g_s, &path.points[i]);
        let mut v2 = 0.0;
        for a in 0..n {
            for b in 0..n {
                v2 += gm[a][b] * (p1[a] - p0[a]) * (p1[b] - p0[b]) * w * w;
            }
        }
        let weight = if i == 0 || i == m - 1 { 0.5 } else { 1.0 };
        integral += weight * ds * p.alpha * v2 / (4.0 * (t2 - t1));
    }

    let q = n as f64 * p.alpha / (2.0 * p.a);
    let expo = integral
        + 2.0 / p.alpha * (q * consts.b3).sqrt() * (t2.sqrt() - t1.sqrt())
        + (t2 - t1) / p.alpha * (q * consts.b1).sqrt();
    let xi = harnack_xi(n, p, &consts);
    let rhs = u_y * (t2 / t1).powf(xi / p.alpha) * expo.exp();

    let slack = rhs - lhs;
    let scale = rhs.abs().max(lhs.abs());
    Ok(EstimateReport::new(
        "harnack",
        slack,
        Location { time: t1, point: 0 },
        error_budget(c_b, traj, scale),
    ))
}
