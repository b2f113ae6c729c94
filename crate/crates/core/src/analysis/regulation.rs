use serde::Serialize;

use crate::engine::DcSweep;

use super::{AnalysisError, Ieee1159Config, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub input_v: f64,
    pub output_v: Option<f64>,
    pub converged: bool,
}

/// Input/output pairs of a DC sweep at one output node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub swept_name: String,
    pub output_node: String,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    pub fn from_dc_sweep(s: &DcSweep, output_node: &str) -> Result<Self, AnalysisError> {
        let node = crate::netlist::normalize_node(output_node);
        if !s.node_names.contains(&node) {
            return Err(AnalysisError::UnknownNode(output_node.to_string()));
        }
        let points = s
            .points
            .iter()
            .zip(s.node_series(&node))
            .map(|(p, v)| SweepPoint { input_v: p.input_v, output_v: v, converged: v.is_some() })
            .collect();
        Ok(Self { swept_name: s.source.clone(), output_node: node, points })
    }

    /// Builds a result from plain `(vi, vo)` pairs, all converged.
    pub fn from_pairs(swept_name: &str, output_node: &str, pairs: &[(f64, f64)]) -> Self {
        Self {
            swept_name: swept_name.to_string(),
            output_node: output_node.to_string(),
            points: pairs
                .iter()
                .map(|&(vi, vo)| SweepPoint { input_v: vi, output_v: Some(vo), converged: true })
                .collect(),
        }
    }

    pub fn converged(&self) -> Vec<(f64, f64)> {
        self.points.iter().filter_map(|p| p.output_v.filter(|_| p.converged).map(|v| (p.input_v, v))).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegulationReport {
    pub line_regulation_pct_per_v: f64,
    pub delta_vi: f64,
    pub delta_vo: f64,
    pub vo_ref: f64,
    /// Input at which `vo_ref` was read.
    pub vi_ref: f64,
    pub max_pu: f64,
    pub verdict: Verdict,
    pub note: String,
}

/// Line regulation `ΔVo / (ΔVi · Vo) · 100` in %/V over the converged
/// points. `Vo` is the output at the input nearest the median input; on a
/// tie the earlier point wins. Each DC level counts as sustained for the
/// overvoltage verdict.
pub fn line_regulation(s: &SweepResult, cfg: &Ieee1159Config) -> Result<RegulationReport, AnalysisError> {
    let pts = s.converged();
    if pts.len() < 2 {
        return Err(AnalysisError::InsufficientPoints { needed: 2, got: pts.len() });
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let (lo, hi) = pts.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        (lo, hi)
    };
    let (vi_lo, vi_hi) = span(|p| p.0);
    let (vo_lo, vo_hi) = span(|p| p.1);
    let delta_vi = vi_hi - vi_lo;
    let delta_vo = vo_hi - vo_lo;

    let mut inputs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    inputs.sort_by(f64::total_cmp);
    let m = inputs.len();
    // The central input(s) are equidistant from the median; pick by rank so
    // the choice does not hinge on rounding.
    let central = [inputs[(m - 1) / 2], inputs[m / 2]];
    let (vi_ref, vo_ref) = pts.iter().copied().find(|p| central.contains(&p.0)).expect("at least two points");

    let line_regulation_pct_per_v = if delta_vo == 0.0 { 0.0 } else { delta_vo / (delta_vi * vo_ref) * 100.0 };
    let max_pu = vo_hi / cfg.nominal_v;
    let verdict = if max_pu > cfg.overvoltage_pu { Verdict::Overvoltage } else { Verdict::Compliant };
    Ok(RegulationReport {
        line_regulation_pct_per_v,
        delta_vi,
        delta_vo,
        vo_ref,
        vi_ref,
        max_pu,
        verdict,
        note: format!(
            "Vo reference taken at Vi = {vi_ref} (nearest the median input); DC levels treated as sustained for the {}-s overvoltage rule",
            cfg.min_duration
        ),
    })
}
