//! Run reports and their serialized forms. Every floating-point number is
//! written with 17 significant digits so that reports round-trip exactly and
//! identical runs produce identical bytes.

use std::io;

use serde::{Deserialize, Serialize};

use crate::estimates::{EstimateReport, Verdict};
use crate::flow::CurvatureBounds;
use crate::frequency::FrequencySeries;
use crate::scenario::Backend;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub dim: usize,
    /// Points per axis for the grid backend; 0 for the homogeneous backend.
    pub resolution: usize,
    pub snapshots: usize,
    pub horizon: f64,
    pub output_dt: f64,
    pub internal_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HomogeneousSummary {
    pub sup_rhs_norm: f64,
    pub volume_residual_sup: f64,
    /// Time of the detected degeneration, when the run collapsed.
    pub collapse_time: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub digest: String,
    pub backend: Backend,
    pub trajectory: TrajectoryMeta,
    pub bounds: Option<CurvatureBounds>,
    pub checks: Vec<EstimateReport>,
    pub frequency: Option<FrequencySeries>,
    pub homogeneous: Option<HomogeneousSummary>,
    pub overall: Verdict,
}

pub fn overall_verdict(checks: &[EstimateReport]) -> Verdict {
    let sev = |v: Verdict| match v {
        Verdict::Pass => 0,
        Verdict::Inconclusive => 1,
        Verdict::Violated => 2,
    };
    checks
        .iter()
        .map(|c| c.verdict)
        .max_by_key(|&v| sev(v))
        .unwrap_or(Verdict::Pass)
}

/// 17 significant digits: enough to reproduce any f64 exactly.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

struct Sci17;

impl serde_json::ser::Formatter for Sci17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        writer.write_all(fmt17(value).as_bytes())
    }
}

/// JSON with every float at 17 significant digits. Key order follows the
/// struct declarations, so equal values serialize to equal bytes.
pub fn to_json_17<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, Sci17);
    value.serialize(&mut ser).expect("value serializes");
    String::from_utf8(out).expect("json is utf-8")
}

pub fn to_json(report: &RunReport) -> String {
    to_json_17(report)
}

pub fn frequency_csv(s: &FrequencySeries) -> String {
    let mut out = String::from("t,i,d,e,u,beta,lambda_m\n");
    for j in 0..s.times.len() {
        let lam = if s.lambda_m.is_empty() {
            String::new()
        } else {
            fmt17(s.lambda_m[j])
        };
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt17(s.times[j]),
            fmt17(s.i[j]),
            fmt17(s.d[j]),
            fmt17(s.e[j]),
            fmt17(s.u[j]),
            fmt17(s.beta[j]),
            lam
        ));
    }
    out
}

/// Two-column time series, e.g. a residual history.
pub fn series_csv(column: &str, rows: &[(f64, f64)]) -> String {
    let mut out = format!("t,{column}\n");
    for (t, v) in rows {
        out.push_str(&format!("{},{}\n", fmt17(*t), fmt17(*v)));
    }
    out
}
