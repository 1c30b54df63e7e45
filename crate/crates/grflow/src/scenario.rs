//! Declarative run configuration: a single JSON document describing backend,
//! geometry, initial data, solver window and check parameters. Bundled
//! scenarios ship embedded; everything is validated at parse time so that
//! downstream constructors cannot fail on user input.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::errors::GeometryError;
use crate::estimates::LiYauParams;
use crate::field::{MetricField, ScalarField, SymTensorField, ThreeFormField};
use crate::frequency::{FrequencyParams, HFamily};
use crate::grid::GridSpec;
use crate::homogeneous::MilnorState;
use crate::synth;
use std::f64::consts::PI;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown bundled scenario {0:?}")]
    UnknownScenario(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Grid,
    Homogeneous,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MetricFamily {
    Flat,
    /// Conformal factor e^{2·amplitude·exp(−r̃²/width²)} around the box
    /// center, with r̃² = Σ (sin(π(xₐ−½))/π)² so the factor is smooth across
    /// the periodic seam.
    ConformalBump { amplitude: f64, width: f64 },
    /// Identity plus seeded band-limited symmetric perturbation.
    RandomSmooth { amplitude: f64, max_mode: i32, seed: u64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum HFormFamily {
    None,
    Constant { coefficient: f64 },
    /// coefficient(x) = mean + amplitude·sin(2πx₀)
    SingleMode { mean: f64, amplitude: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DatumFamily {
    Constant { value: f64 },
    /// 1 + amplitude·sin(2πx₀)
    SingleMode { amplitude: f64 },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamTriple {
    pub alpha: f64,
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSpec {
    pub u0: DatumFamily,
    /// Snapshot index of the conjugate terminal slice (strictly inside the
    /// trajectory).
    pub terminal_index: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSpec {
    pub liyau: Vec<ParamTriple>,
    pub harnack_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencySpec {
    pub h: HFamily,
    pub t0: f64,
    pub t1: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Control {
    pub horizon: f64,
    pub cfl: f64,
    pub cadence: usize,
    pub c_b: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridScenario {
    pub dims: usize,
    pub resolution: usize,
    pub metric: MetricFamily,
    pub h_form: HFormFamily,
    pub heat: HeatSpec,
    pub estimates: EstimateSpec,
    #[serde(default)]
    pub frequency: Option<FrequencySpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum KSpec {
    /// The coefficient closing the Bismut-flat identity for the given metric.
    Named(String),
    Value(f64),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HomogeneousScenario {
    pub lambda: [f64; 3],
    pub metric: [f64; 3],
    pub k: KSpec,
    #[serde(default)]
    pub expect_collapse: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub backend: Backend,
    #[serde(default)]
    pub grid: Option<GridScenario>,
    #[serde(default)]
    pub homogeneous: Option<HomogeneousScenario>,
    pub control: Control,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// SHA-256 of the canonical serialization, hex-encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: String| Err(ConfigError::Invalid(m));
        let c = &self.control;
        if !(c.horizon > 0.0) {
            return err(format!("horizon must be positive, got {}", c.horizon));
        }
        if !(c.cfl > 0.0 && c.cfl <= 1.0) {
            return err(format!("cfl must lie in (0, 1], got {}", c.cfl));
        }
        if c.cadence < 2 {
            return err(format!("cadence must be at least 2, got {}", c.cadence));
        }
        if !(c.c_b > 0.0) {
            return err(format!("c_b must be positive, got {}", c.c_b));
        }
        match self.backend {
            Backend::Grid => {
                let g = self
                    .grid
                    .as_ref()
                    .ok_or_else(|| ConfigError::Invalid("grid backend needs a grid section".into()))?;
                if !(2..=3).contains(&g.dims) {
                    return err(format!("dims must be 2 or 3, got {}", g.dims));
                }
                if g.resolution < 8 {
                    return err(format!("resolution must be at least 8, got {}", g.resolution));
                }
                if g.dims != 3 && !matches!(g.h_form, HFormFamily::None) {
                    return err("a three-form needs dims = 3".into());
                }
                if let MetricFamily::ConformalBump { amplitude, width } = g.metric {
                    if !(width > 0.0) {
                        return err(format!("bump width must be positive, got {width}"));
                    }
                    if amplitude.abs() > 2.0 {
                        return err(format!("bump amplitude {amplitude} too large to stay resolvable"));
                    }
                }
                if let MetricFamily::RandomSmooth { amplitude, .. } = g.metric {
                    if !(0.0..0.5).contains(&amplitude) {
                        return err(format!(
                            "random metric amplitude must lie in [0, 0.5) to stay SPD, got {amplitude}"
                        ));
                    }
                }
                match g.heat.u0 {
                    DatumFamily::Constant { value } if !(value > 0.0) => {
                        return err(format!("u0 must be positive, got {value}"));
                    }
                    DatumFamily::SingleMode { amplitude } if !(amplitude.abs() < 1.0) => {
                        return err(format!("u0 mode amplitude must satisfy |a| < 1, got {amplitude}"));
                    }
                    _ => {}
                }
                if g.heat.terminal_index == 0 || g.heat.terminal_index >= c.cadence {
                    return err(format!(
                        "terminal_index {} must lie strictly inside 1..{}",
                        g.heat.terminal_index, c.cadence
                    ));
                }
                if g.estimates.liyau.is_empty() {
                    return err("at least one Li-Yau parameter triple required".into());
                }
                for p in &g.estimates.liyau {
                    LiYauParams::new(p.alpha, p.a, p.b)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                }
                if let Some(f) = &g.frequency {
                    let fp = FrequencyParams::new(f.h, f.t0, f.t1)
                        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                    if fp.t1 > c.horizon + 1e-12 {
                        return err(format!(
                            "frequency window end {} exceeds horizon {}",
                            fp.t1, c.horizon
                        ));
                    }
                    if matches!(g.heat.u0, DatumFamily::Constant { .. }) {
                        return err("frequency checks need a non-constant u0".into());
                    }
                }
            }
            Backend::Homogeneous => {
                let h = self.homogeneous.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("homogeneous backend needs a homogeneous section".into())
                })?;
                if h.metric.iter().any(|&m| !(m > 0.0)) {
                    return err(format!("homogeneous metric must be positive, got {:?}", h.metric));
                }
                if let KSpec::Named(name) = &h.k {
                    if name != "bismut" {
                        return err(format!("unknown symbolic k {name:?} (only \"bismut\")"));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn grid_spec(&self) -> Result<GridSpec, GeometryError> {
        let g = self.grid.as_ref().expect("validated grid scenario");
        GridSpec::cube(g.dims, g.resolution, 1.0)
    }

    pub fn initial_metric(&self, grid: &GridSpec) -> Result<MetricField, GeometryError> {
        let g = self.grid.as_ref().expect("validated grid scenario");
        match g.metric {
            MetricFamily::Flat => Ok(MetricField::flat(grid)),
            MetricFamily::ConformalBump { amplitude, width } => {
                let base = SymTensorField::from_fn(grid, |x, i, j| {
                    if i != j {
                        return 0.0;
                    }
                    let r2: f64 = (0..grid.dim)
                        .map(|a| {
                            let s = (PI * (x[a] - 0.5)).sin() / PI;
                            s * s
                        })
                        .sum();
                    (2.0 * amplitude * (-r2 / (width * width)).exp()).exp()
                });
                MetricField::new(base)
            }
            MetricFamily::RandomSmooth { amplitude, max_mode, seed } => {
                synth::random_spd_metric(grid, amplitude, max_mode, seed)
            }
        }
    }

    pub fn initial_h(&self, grid: &GridSpec) -> Result<Option<ThreeFormField>, GeometryError> {
        let g = self.grid.as_ref().expect("validated grid scenario");
        match g.h_form {
            HFormFamily::None => Ok(None),
            HFormFamily::Constant { coefficient } => {
                Ok(Some(ThreeFormField::new(ScalarField::constant(grid, coefficient))?))
            }
            HFormFamily::SingleMode { mean, amplitude } => Ok(Some(ThreeFormField::new(
                ScalarField::from_fn(grid, |x| mean + amplitude * (2.0 * PI * x[0]).sin()),
            )?)),
        }
    }

    pub fn initial_datum(&self, grid: &GridSpec) -> ScalarField {
        let g = self.grid.as_ref().expect("validated grid scenario");
        match g.heat.u0 {
            DatumFamily::Constant { value } => ScalarField::constant(grid, value),
            DatumFamily::SingleMode { amplitude } => {
                ScalarField::from_fn(grid, |x| 1.0 + amplitude * (2.0 * PI * x[0]).sin())
            }
        }
    }

    pub fn milnor_state(&self) -> Result<MilnorState, ConfigError> {
        let h = self.homogeneous.as_ref().expect("validated homogeneous scenario");
        let k = match &h.k {
            KSpec::Value(v) => *v,
            KSpec::Named(_) => {
                let probe = MilnorState::new(h.metric, h.lambda, 0.0)
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                crate::homogeneous::bismut_flat_k(&probe)
            }
        };
        MilnorState::new(h.metric, h.lambda, k).map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}

pub const BUNDLED: &[(&str, &str)] = &[
    ("flat-trivial", include_str!("../scenarios/flat-trivial.json")),
    ("conformal-ricci-2d", include_str!("../scenarios/conformal-ricci-2d.json")),
    ("generalized-flow", include_str!("../scenarios/generalized-flow.json")),
    ("flat-constant-h", include_str!("../scenarios/flat-constant-h.json")),
    ("bismut-su2", include_str!("../scenarios/bismut-su2.json")),
    ("su2-collapse", include_str!("../scenarios/su2-collapse.json")),
];

pub fn bundled(name: &str) -> Result<Scenario, ConfigError> {
    let text = BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, t)| *t)
        .ok_or_else(|| ConfigError::UnknownScenario(name.into()))?;
    Scenario::from_json(text)
}

pub fn bundled_names() -> Vec<&'static str> {
    BUNDLED.iter().map(|(n, _)| *n).collect()
}
