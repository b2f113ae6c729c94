use serde::Serialize;

use crate::engine::OperatingPoint;
use crate::netlist::{DeviceParams, Netlist};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerWarning {
    pub component: String,
    pub power_w: f64,
    pub rated_w: f64,
}

/// Resistors dissipating more than their rated power at `op`.
pub fn power_dissipation_check(op: &OperatingPoint, n: &Netlist) -> Vec<PowerWarning> {
    n.components
        .iter()
        .filter_map(|c| {
            let DeviceParams::Resistor(m) = &c.params else { return None };
            let v = op.voltage(&c.terminals[0])? - op.voltage(&c.terminals[1])?;
            let power_w = v * v / m.resistance;
            (power_w > m.rated_power).then(|| PowerWarning {
                component: c.name.clone(),
                power_w,
                rated_w: m.rated_power,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{dc_operating_point, SolverOptions};
    use crate::netlist::parse;

    fn check(text: &str) -> Vec<PowerWarning> {
        let n = parse(text).unwrap();
        power_dissipation_check(&dc_operating_point(&n, &SolverOptions::default()).unwrap(), &n)
    }

    #[test]
    fn within_rating() {
        assert!(check("V1 a 0 DC 12\nR1 a 0 1k\n").is_empty());
    }

    #[test]
    fn over_rating() {
        let w = check("V1 a 0 DC 12\nR1 a 0 100\n");
        assert_eq!(w.len(), 1);
        assert!((w[0].power_w - 1.44).abs() < 1e-9);
    }

    #[test]
    fn zero_bias() {
        assert!(check("V1 a 0 DC 0\nR1 a 0 1\n").is_empty());
    }
}
