use std::cmp::Ordering;

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{dc_sweep, SolverOptions};
use crate::netlist::{catalogue_range, Netlist, ParamValue};

use super::{line_regulation, AnalysisError, Ieee1159Config, SweepResult};

/// One component parameter and the values to try.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyAxis {
    pub component: String,
    pub param: String,
    pub values: Vec<ParamValue>,
}

/// Input sweep each axis value is evaluated under.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudySetup {
    pub source: String,
    pub output_node: String,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
    pub target_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyRow {
    /// Position of the value on the axis as given.
    pub axis_index: usize,
    pub value: ParamValue,
    /// max |Vo − target| over the sweep.
    pub max_deviation: Option<f64>,
    pub line_regulation_pct_per_v: Option<f64>,
    pub error: Option<String>,
}

fn evaluate(n: &Netlist, setup: &StudySetup, opts: &SolverOptions) -> Result<(f64, f64), AnalysisError> {
    let sweep = dc_sweep(n, &setup.source, setup.start, setup.stop, setup.step, opts)?;
    if let Some(e) = sweep.points.iter().find_map(|p| p.result.as_ref().err()) {
        return Err(e.clone().into());
    }
    let s = SweepResult::from_dc_sweep(&sweep, &setup.output_node)?;
    let dev = s.converged().iter().map(|(_, vo)| (vo - setup.target_v).abs()).fold(0.0, f64::max);
    let report = line_regulation(&s, &Ieee1159Config::new(setup.target_v))?;
    Ok((dev, report.line_regulation_pct_per_v))
}

/// Sweeps the input once per axis value and ranks the values by worst
/// deviation from the target, then line regulation, then axis order.
/// Values whose sweep fails are kept, ranked last.
pub fn parameter_study(
    base: &Netlist,
    axis: &StudyAxis,
    setup: &StudySetup,
    opts: &SolverOptions,
) -> Result<Vec<StudyRow>, AnalysisError> {
    let variants = axis
        .values
        .iter()
        .map(|value| {
            let n = base.with_override(&axis.component, &axis.param, value)?;
            let comp = n.component(&axis.component).expect("override found it");
            if let (ParamValue::Num(v), Some((lo, hi))) = (value, catalogue_range(comp, &axis.param)) {
                let slack = 1e-9 * hi.abs();
                if *v < lo - slack || *v > hi + slack {
                    return Err(AnalysisError::OutOfCatalogue {
                        component: axis.component.clone(),
                        param: axis.param.clone(),
                        value: value.to_string(),
                    });
                }
            }
            Ok(n)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut rows: Vec<StudyRow> = variants
        .par_iter()
        .enumerate()
        .map(|(i, n)| {
            let value = axis.values[i].clone();
            match evaluate(n, setup, opts) {
                Ok((dev, lr)) => StudyRow {
                    axis_index: i,
                    value,
                    max_deviation: Some(dev),
                    line_regulation_pct_per_v: Some(lr),
                    error: None,
                },
                Err(e) => StudyRow {
                    axis_index: i,
                    value,
                    max_deviation: None,
                    line_regulation_pct_per_v: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    rows.sort_by(|a, b| match (a.max_deviation, b.max_deviation) {
        (Some(da), Some(db)) => da
            .total_cmp(&db)
            .then_with(|| {
                a.line_regulation_pct_per_v
                    .unwrap_or(f64::INFINITY)
                    .total_cmp(&b.line_regulation_pct_per_v.unwrap_or(f64::INFINITY))
            })
            .then(a.axis_index.cmp(&b.axis_index)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.axis_index.cmp(&b.axis_index),
    });
    Ok(rows)
}
