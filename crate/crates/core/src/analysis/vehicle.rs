use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::engine::{dc_operating_point, SolverOptions};
use crate::netlist::{Netlist, ParamValue};

use super::AnalysisError;

/// Engine speed to unregulated supply voltage, piecewise linear.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RpmVoltageMap {
    breakpoints: Vec<(f64, f64)>,
}

#[derive(Debug, Deserialize)]
struct MapRow {
    rpm: f64,
    volts: f64,
}

impl RpmVoltageMap {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self, AnalysisError> {
        if breakpoints.len() < 2 {
            return Err(AnalysisError::InvalidMap("need at least two breakpoints".into()));
        }
        if breakpoints.iter().any(|(r, v)| !r.is_finite() || !v.is_finite() || *v <= 0.0) {
            return Err(AnalysisError::InvalidMap("values must be finite and voltages > 0".into()));
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(AnalysisError::InvalidMap("rpm must be strictly increasing".into()));
        }
        Ok(Self { breakpoints })
    }

    /// Reads CSV with header `rpm,volts`.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, AnalysisError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(reader);
        let headers = rdr.headers().map_err(|e| AnalysisError::InvalidMap(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != ["rpm", "volts"] {
            return Err(AnalysisError::InvalidMap("header must be `rpm,volts`".into()));
        }
        let rows = rdr
            .deserialize::<MapRow>()
            .map(|r| r.map(|r| (r.rpm, r.volts)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| AnalysisError::InvalidMap(e.to_string()))?;
        Self::new(rows)
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interpolated {
    pub volts: f64,
    /// The rpm lay outside the map and was clamped to its end.
    pub clamped: bool,
}

pub fn rpm_to_input_voltage(rpm: f64, map: &RpmVoltageMap) -> Interpolated {
    let bp = &map.breakpoints;
    let (first, last) = (bp[0], bp[bp.len() - 1]);
    if rpm <= first.0 {
        return Interpolated { volts: first.1, clamped: rpm < first.0 };
    }
    if rpm >= last.0 {
        return Interpolated { volts: last.1, clamped: rpm > last.0 };
    }
    let k = bp.partition_point(|(r, _)| *r <= rpm);
    let ((r0, v0), (r1, v1)) = (bp[k - 1], bp[k]);
    let volts = if rpm == r0 { v0 } else { v0 + (v1 - v0) * (rpm - r0) / (r1 - r0) };
    Interpolated { volts, clamped: false }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VehicleRow {
    pub rpm: f64,
    pub unregulated_v: f64,
    pub clamped: bool,
    pub regulated_v: Option<f64>,
    /// Against the first (idle) row; `None` for a one-row grid or when a
    /// solve failed.
    pub line_regulation_pct_per_v: Option<f64>,
    pub error: Option<String>,
}

/// Drives `source` of the regulator at the mapped voltage for each rpm and
/// reads the DC output at `output_node`.
pub fn vehicle_experiment(
    vavs: &Netlist,
    map: &RpmVoltageMap,
    rpm_grid: &[f64],
    source: &str,
    output_node: &str,
    opts: &SolverOptions,
) -> Result<Vec<VehicleRow>, AnalysisError> {
    if rpm_grid.is_empty() {
        return Err(AnalysisError::InsufficientPoints { needed: 1, got: 0 });
    }
    if !vavs.nodes.contains_key(&crate::netlist::normalize_node(output_node)) {
        return Err(AnalysisError::UnknownNode(output_node.to_string()));
    }
    let mut rows = Vec::with_capacity(rpm_grid.len());
    for &rpm in rpm_grid {
        let input = rpm_to_input_voltage(rpm, map);
        let n = vavs.with_override(source, "dc", &ParamValue::Num(input.volts))?;
        let (regulated_v, error) = match dc_operating_point(&n, opts) {
            Ok(op) => (op.voltage(output_node), None),
            Err(e) => (None, Some(e.to_string())),
        };
        rows.push(VehicleRow {
            rpm,
            unregulated_v: input.volts,
            clamped: input.clamped,
            regulated_v,
            line_regulation_pct_per_v: None,
            error,
        });
    }
    if rows.len() >= 2 {
        if let Some(vo0) = rows[0].regulated_v {
            let vi0 = rows[0].unregulated_v;
            for row in &mut rows {
                row.line_regulation_pct_per_v = row.regulated_v.map(|vo| {
                    let dvi = (row.unregulated_v - vi0).abs();
                    if dvi == 0.0 {
                        0.0
                    } else {
                        (vo - vo0).abs() / (dvi * vo0) * 100.0
                    }
                });
            }
        }
    }
    Ok(rows)
}
