//! Discrete minimal geodesics on a fixed metric snapshot, by gradient descent
//! on the piecewise energy of a sampled path.

use crate::errors::EstimateError;
use crate::field::{interpolate_component, MetricField};
use crate::grid::MAX_DIM;
use crate::linalg;

/// A path γ: [0,1] → M sampled uniformly, γ(0) = y, γ(1) = x. Points are
/// stored in unwrapped coordinates (consecutive samples stay close; only
/// metric lookups wrap).
#[derive(Debug, Clone)]
pub struct GeodesicPath {
    pub points: Vec<[f64; MAX_DIM]>,
    /// Time of the metric snapshot the path was minimized against.
    pub time: f64,
    /// Discrete energy Σ |Δγ|²_g / Δs at the solution.
    pub energy: f64,
}

impl GeodesicPath {
    pub fn samples(&self) -> usize {
        self.points.len()
    }
}

/// Metric components at an arbitrary (possibly unwrapped) position.
pub fn metric_at(g: &MetricField, pos: &[f64]) -> linalg::Mat {
    let grid = g.grid();
    let dim = grid.dim;
    let nc = g.base.ncomp();
    let mut m = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..dim {
        for j in i..dim {
            let v = interpolate_component(
                grid,
                &g.base.values,
                nc,
                linalg::sym_slot(dim, i, j),
                pos,
            );
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

fn segment_energy(g: &MetricField, a: &[f64; MAX_DIM], b: &[f64; MAX_DIM], ds: f64) -> f64 {
    let dim = g.grid().dim;
    let mid = [
        (a[0] + b[0]) / 2.0,
        (a[1] + b[1]) / 2.0,
        (a[2] + b[2]) / 2.0,
    ];
    let m = metric_at(g, &mid);
    let mut e = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            e += m[i][j] * (b[i] - a[i]) * (b[j] - a[j]);
        }
    }
    e / ds
}

fn path_energy(g: &MetricField, pts: &[[f64; MAX_DIM]], ds: f64) -> f64 {
    pts.windows(2).map(|w| segment_energy(g, &w[0], &w[1], ds)).sum()
}

/// Shortest-image straight initialization from y to x, then gradient descent
/// on the interior samples with an adaptive step until the energy gradient is
/// resolved to tolerance.
pub fn geodesic(
    g: &MetricField,
    x: &[f64],
    y: &[f64],
    samples: usize,
) -> Result<GeodesicPath, EstimateError> {
    geodesic_at_time(g, x, y, samples, 0.0)
}

pub fn geodesic_at_time(
    g: &MetricField,
    x: &[f64],
    y: &[f64],
    samples: usize,
    time: f64,
) -> Result<GeodesicPath, EstimateError> {
    let grid = g.grid();
    let dim = grid.dim;
    if samples < 3 {
        return Err(EstimateError::BadParameters(format!(
            "need at least 3 path samples, got {samples}"
        )));
    }
    let mut d = [0.0; MAX_DIM];
    let mut sep = 0.0;
    for a in 0..dim {
        d[a] = grid.wrap_displacement(a, x[a] - y[a]);
        sep += d[a] * d[a];
    }
    if sep == 0.0 {
        return Err(EstimateError::BadParameters(
            "geodesic endpoints coincide".into(),
        ));
    }
    let m = samples - 1;
    let ds = 1.0 / m as f64;
    let mut pts: Vec<[f64; MAX_DIM]> = (0..samples)
        .map(|i| {
            let s = i as f64 * ds;
            let mut p = [0.0; MAX_DIM];
            for a in 0..dim {
                p[a] = y[a] + s * d[a];
            }
            p
        })
        .collect();

    let h = grid.min_spacing();
    let eps = 1e-5 * h;
    let mut energy = path_energy(g, &pts, ds);
    let gtol = 1e-6 * (1.0 + energy) / ds;
    let max_iter = 20000;
    let mut step = 0.05 * h * h / (1.0 + energy);
    for it in 0..max_iter {
        // numerical gradient on interior nodes; node i only touches the two
        // adjacent segments
        let mut grad = vec![[0.0; MAX_DIM]; samples];
        let mut gnorm: f64 = 0.0;
        for i in 1..m {
            for a in 0..dim {
                let mut plus = pts[i];
                plus[a] += eps;
                let mut minus = pts[i];
                minus[a] -= eps;
                let e_plus = segment_energy(g, &pts[i - 1], &plus, ds)
                    + segment_energy(g, &plus, &pts[i + 1], ds);
                let e_minus = segment_energy(g, &pts[i - 1], &minus, ds)
                    + segment_energy(g, &minus, &pts[i + 1], ds);
                grad[i][a] = (e_plus - e_minus) / (2.0 * eps);
                gnorm = gnorm.max(grad[i][a].abs());
            }
        }
        if gnorm < gtol {
            return Ok(GeodesicPath { points: pts, time, energy });
        }
        // adaptive descent step: accept on decrease, otherwise halve
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<[f64; MAX_DIM]> = pts
                .iter()
                .zip(&grad)
                .map(|(p, gr)| {
                    let mut q = *p;
                    for a in 0..dim {
                        q[a] -= step * gr[a];
                    }
                    q
                })
                .collect();
            let e_trial = path_energy(g, &trial, ds);
            if e_trial < energy {
                pts = trial;
                energy = e_trial;
                step *= 1.5;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // no step of any size decreases the energy: discrete local
            // minimum (possibly an interpolation kink)
            let _ = it;
            return Ok(GeodesicPath { points: pts, time, energy });
        }
    }
    Err(EstimateError::GeodesicNoConvergence { iterations: max_iter, gradient: f64::NAN })
}

/// |γ′(s)|² at each sample against the supplied metric, via centered
/// differences in s (one-sided at the endpoints).
pub fn path_speed_sq(g: &MetricField, path: &GeodesicPath) -> Vec<f64> {
    let dim = g.grid().dim;
    let n = path.points.len();
    let ds = 1.0 / (n - 1) as f64;
    (0..n)
        .map(|i| {
            let (p0, p1, w) = if i == 0 {
                (&path.points[0], &path.points[1], 1.0 / ds)
            } else if i == n - 1 {
                (&path.points[n - 2], &path.points[n - 1], 1.0 / ds)
            } else {
                (&path.points[i - 1], &path.points[i + 1], 1.0 / (2.0 * ds))
            };
            let m = metric_at(g, &path.points[i]);
            let mut v2 = 0.0;
            for a in 0..dim {
                for b in 0..dim {
                    v2 += m[a][b] * (p1[a] - p0[a]) * (p1[b] - p0[b]) * w * w;
                }
            }
            v2
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::SymTensorField;
    use crate::grid::GridSpec;
    use std::f64::consts::PI;

    #[test]
    fn flat_geodesic_is_the_shortest_periodic_segment() {
        let grid = GridSpec::cube(2, 16, 1.0).unwrap();
        let g = MetricField::flat(&grid);
        // crossing the periodic seam: shortest image has length 0.3, not 0.7
        let path = geodesic(&g, &[0.9, 0.2], &[0.2, 0.2], 17).unwrap();
        assert!((path.energy - 0.3f64.powi(2)).abs() < 1e-10, "energy {}", path.energy);
        for (i, p) in path.points.iter().enumerate() {
            let s = i as f64 / 16.0;
            assert!((p[0] - (0.2 - 0.3 * s)).abs() < 1e-8);
            assert!((p[1] - 0.2).abs() < 1e-8);
        }
        let v2 = path_speed_sq(&g, &path);
        for v in v2 {
            assert!((v - 0.09).abs() < 1e-8);
        }
    }

    fn bump_metric(grid: &GridSpec, amp: f64) -> MetricField {
        let base = SymTensorField::from_fn(grid, |x, i, j| {
            if i == j {
                let r2 = (x[0] - 0.5).powi(2) + (x[1] - 0.5).powi(2);
                (2.0 * amp * (-r2 / 0.02).exp()).exp()
            } else {
                0.0
            }
        });
        MetricField::new(base).unwrap()
    }

    #[test]
    fn path_bends_around_a_conformal_bump() {
        // line passes below the bump center so the straight path is not a
        // stationary point (dead-center it would be an exact saddle)
        let grid = GridSpec::cube(2, 32, 1.0).unwrap();
        let g = bump_metric(&grid, 1.0);
        let x = [0.7, 0.42, 0.0];
        let y = [0.3, 0.42, 0.0];
        let samples = 25;
        let path = geodesic(&g, &x, &y, samples).unwrap();
        let straight: Vec<[f64; MAX_DIM]> = (0..samples)
            .map(|i| {
                let s = i as f64 / (samples - 1) as f64;
                [0.3 + 0.4 * s, 0.42, 0.0]
            })
            .collect();
        let e_straight = path_energy(&g, &straight, 1.0 / (samples - 1) as f64);
        assert!(path.energy < e_straight * 0.95, "no improvement: {} vs {e_straight}", path.energy);
        // bends away from the bump, i.e. downward
        let max_dev = path
            .points
            .iter()
            .map(|p| 0.42 - p[1])
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(max_dev > 0.02, "path did not bend away (dev {max_dev})");
    }

    #[test]
    fn symmetric_metric_gives_symmetric_path() {
        // the bump is even about x₀ = 0.5 and the endpoints are mirror images
        // under that reflection, so γ(1-s) is the reflection of γ(s)
        let grid = GridSpec::cube(2, 32, 1.0).unwrap();
        let g = bump_metric(&grid, 0.8);
        let x = [0.7, 0.42, 0.0];
        let y = [0.3, 0.42, 0.0];
        let path = geodesic(&g, &x, &y, 21).unwrap();
        let n = path.points.len();
        for i in 0..n {
            let s0 = path.points[i][0] + path.points[n - 1 - i][0];
            assert!((s0 - 1.0).abs() < 1e-3, "asymmetry at {i}: {s0}");
            let d1 = path.points[i][1] - path.points[n - 1 - i][1];
            assert!(d1.abs() < 1e-3, "asymmetry at {i}: {d1}");
        }
    }

    #[test]
    fn degenerate_requests_are_rejected() {
        let grid = GridSpec::cube(2, 8, 1.0).unwrap();
        let g = MetricField::flat(&grid);
        assert!(matches!(
            geodesic(&g, &[0.5, 0.5], &[0.5, 0.5], 9),
            Err(EstimateError::BadParameters(_))
        ));
        assert!(matches!(
            geodesic(&g, &[0.5, 0.5], &[0.2, 0.2], 2),
            Err(EstimateError::BadParameters(_))
        ));
    }

    #[test]
    fn conformal_sine_metric_energy_decreases_monotonically_with_resolution() {
        // sanity: finer sampling of the same geodesic problem approaches the
        // continuum energy from above
        let grid = GridSpec::cube(2, 32, 1.0).unwrap();
        let base = SymTensorField::from_fn(&grid, |x, i, j| {
            if i == j {
                (0.4 * (2.0 * PI * x[1]).sin()).exp()
            } else {
                0.0
            }
        });
        let g = MetricField::new(base).unwrap();
        let e_coarse = geodesic(&g, &[0.7, 0.3], &[0.1, 0.6], 9).unwrap().energy;
        let e_fine = geodesic(&g, &[0.7, 0.3], &[0.1, 0.6], 33).unwrap().energy;
        assert!(e_fine <= e_coarse + 1e-6, "coarse {e_coarse} fine {e_fine}");
    }
}
