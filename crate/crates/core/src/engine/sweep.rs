use serde::Serialize;

use crate::netlist::Netlist;

use super::circuit::Circuit;
use super::{OperatingPoint, SolveError, SolverOptions};

/// Inclusive grid `start, start+step, ...` up to `stop`.
pub fn sweep_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, SolveError> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step == 0.0 {
        return Err(SolveError::InvalidSweep);
    }
    let span = (stop - start) / step;
    if span < 0.0 {
        return Err(SolveError::InvalidSweep);
    }
    let count = (span + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcSweepPoint {
    pub input_v: f64,
    #[serde(serialize_with = "ser_point")]
    pub result: Result<OperatingPoint, SolveError>,
}

fn ser_point<S: serde::Serializer>(r: &Result<OperatingPoint, SolveError>, s: S) -> Result<S::Ok, S::Error> {
    match r {
        Ok(op) => op.serialize(s),
        Err(e) => s.serialize_str(&e.to_string()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DcSweep {
    pub source: String,
    /// Circuit nodes including ground.
    pub node_names: Vec<String>,
    pub points: Vec<DcSweepPoint>,
}

impl DcSweep {
    /// Output voltage at each point, `None` where the solve failed.
    pub fn node_series(&self, node: &str) -> Vec<Option<f64>> {
        self.points.iter().map(|p| p.result.as_ref().ok().and_then(|op| op.voltage(node))).collect()
    }
}

/// Steps the DC value of `source` over the inclusive grid. Each point is
/// warm-started from the previous converged point; a failed point is
/// recorded and the sweep goes on.
pub fn dc_sweep(
    n: &Netlist,
    source: &str,
    start: f64,
    stop: f64,
    step: f64,
    opts: &SolverOptions,
) -> Result<DcSweep, SolveError> {
    opts.validate()?;
    let grid = sweep_grid(start, stop, step)?;
    let mut circuit = Circuit::compile(n)?;
    let canonical = circuit
        .source_names
        .iter()
        .find(|s| s.eq_ignore_ascii_case(source))
        .cloned()
        .ok_or_else(|| SolveError::UnknownSource(source.to_string()))?;

    let mut warm: Option<Vec<f64>> = None;
    let mut points = Vec::with_capacity(grid.len());
    for vi in grid {
        circuit.set_source_dc(&canonical, vi)?;
        let result = circuit.solve_dc(opts, warm.as_deref(), 0.0).map(|(x, it, strategy)| {
            warm = Some(x.clone());
            circuit.operating_point(x, it, strategy)
        });
        points.push(DcSweepPoint { input_v: vi, result });
    }
    Ok(DcSweep { source: canonical, node_names: circuit.node_names[..circuit.n_external].to_vec(), points })
}
