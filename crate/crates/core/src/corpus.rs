//! Bundled regulator netlist and reference tables.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::analysis::{RpmVoltageMap, SweepResult};
use crate::netlist::{parse, Netlist};

pub const VAVS_NET: &str = include_str!("../../../corpus/vavs.net");
pub const REFERENCE_SWEEP_CSV: &str = include_str!("../../../corpus/reference_sweep.csv");
pub const RPM_MAP_SAMPLE_CSV: &str = include_str!("../../../corpus/rpm_map.sample.csv");

/// Env var naming a directory that replaces the bundled corpus files.
pub const CORPUS_ENV: &str = "STABILSIM_CORPUS";

/// Source driving the regulator and its output node.
pub const VAVS_SOURCE: &str = "V1";
pub const VAVS_OUTPUT: &str = "out";

pub fn vavs_netlist() -> Netlist {
    parse(VAVS_NET).expect("bundled netlist parses")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    #[serde(rename = "vi")]
    pub input_v: f64,
    #[serde(rename = "vo")]
    pub expected_vo: f64,
    #[serde(rename = "tol")]
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceTable {
    pub rows: Vec<ReferenceRow>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BandCheck {
    pub input_v: f64,
    pub expected_vo: f64,
    pub tolerance: f64,
    pub actual_vo: Option<f64>,
    pub pass: bool,
}

impl ReferenceTable {
    /// Reads CSV with header `vi,vo,tol`.
    pub fn from_csv(text: &str, provenance: &str) -> Result<Self, csv::Error> {
        let rows = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes())
            .deserialize()
            .collect::<Result<Vec<ReferenceRow>, _>>()?;
        Ok(Self { rows, provenance: provenance.to_string() })
    }

    pub fn row(&self, input_v: f64) -> Option<&ReferenceRow> {
        self.rows.iter().find(|r| (r.input_v - input_v).abs() < 1e-9)
    }

    /// Compares every table row against the sweep point at the same input.
    /// A row without a converged point fails.
    pub fn check(&self, s: &SweepResult) -> Vec<BandCheck> {
        self.rows
            .iter()
            .map(|r| {
                let actual_vo = s.points.iter().find(|p| (p.input_v - r.input_v).abs() < 1e-9).and_then(|p| p.output_v);
                BandCheck {
                    input_v: r.input_v,
                    expected_vo: r.expected_vo,
                    tolerance: r.tolerance,
                    actual_vo,
                    pass: actual_vo.is_some_and(|v| (v - r.expected_vo).abs() <= r.tolerance),
                }
            })
            .collect()
    }
}

pub fn reference_sweep() -> ReferenceTable {
    ReferenceTable::from_csv(REFERENCE_SWEEP_CSV, "reference regulator simulation, Vi = 10-15 V, 6 rows")
        .expect("bundled table parses")
}

pub fn rpm_map_sample() -> RpmVoltageMap {
    RpmVoltageMap::from_csv(RPM_MAP_SAMPLE_CSV.as_bytes()).expect("bundled map is valid")
}

/// Contents of a corpus file: from `$STABILSIM_CORPUS/<name>` when the
/// variable is set, else the bundled copy.
pub fn load_file(name: &str) -> std::io::Result<String> {
    if let Some(dir) = std::env::var_os(CORPUS_ENV) {
        return std::fs::read_to_string(PathBuf::from(dir).join(name));
    }
    match name {
        "vavs.net" => Ok(VAVS_NET.to_string()),
        "reference_sweep.csv" => Ok(REFERENCE_SWEEP_CSV.to_string()),
        "rpm_map.sample.csv" => Ok(RPM_MAP_SAMPLE_CSV.to_string()),
        _ => Err(std::io::Error::new(std::io::ErrorKind::NotFound, format!("no corpus file `{name}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::validate;

    #[test]
    fn netlist_is_valid() {
        assert!(validate(&vavs_netlist()).is_empty());
    }

    #[test]
    fn census() {
        let mut names: Vec<String> = vavs_netlist().components.iter().map(|c| c.name.clone()).collect();
        names.sort();
        assert_eq!(names, ["C1", "C2", "C3", "C4", "C5", "D1", "D2", "Q1", "R1", "V1"]);
    }

    #[test]
    fn table_rows() {
        let t = reference_sweep();
        assert_eq!(t.rows.len(), 6);
        assert_eq!(t.row(10.0).unwrap().expected_vo, 12.1);
        assert_eq!(t.row(13.0).unwrap().expected_vo, 11.98);
        assert!(t.rows.iter().all(|r| r.tolerance == 0.3));
        assert!(!t.provenance.is_empty());
    }

    #[test]
    fn sample_map_spans_idle_to_redline() {
        let m = rpm_map_sample();
        assert_eq!(m.breakpoints().first(), Some(&(1500.0, 12.4)));
        assert_eq!(m.breakpoints().last(), Some(&(9000.0, 14.8)));
    }

    #[test]
    fn on_disk_copy_matches_embedded() {
        let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus/vavs.net");
        let text = std::fs::read_to_string(path).unwrap();
        assert_eq!(crate::netlist::parse(&text).unwrap(), vavs_netlist());
    }

    #[test]
    fn values_inside_catalogue() {
        let n = vavs_netlist();
        for c in &n.components {
            for key in ["r", "prate", "c", "bv", "iave"] {
                if let (Some((lo, hi)), Some(v)) = (crate::netlist::catalogue_range(c, key), c.param(key)) {
                    assert!((lo..=hi).contains(&v), "{}.{key}={v}", c.name);
                }
            }
        }
    }
}
