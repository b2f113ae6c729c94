use serde::Serialize;

use crate::devices::terminal_currents;
use crate::netlist::{DeviceParams, Netlist};

use super::circuit::{AssemblyCtx, CapMode, Circuit};
use super::lu::{solve_linear, MnaSystem};
use super::{NewtonDiagnostics, OperatingPoint, SolveError, SolverOptions, Strategy};

pub(crate) struct NewtonFailure {
    pub iterations: usize,
    pub worst_unknown: usize,
    pub last_update: f64,
    pub singular: Option<SolveError>,
}

impl Circuit {
    pub(crate) fn unknown_name(&self, i: usize) -> String {
        let node_rows = self.n_nodes - 1;
        if i < node_rows {
            let node = i + 1;
            if node < self.n_external {
                format!("v({})", self.node_names[node])
            } else {
                let tap = node - self.n_external;
                format!("v({}#esr)", self.caps.get(tap).map_or("?", |c| c.name.as_str()))
            }
        } else if i - node_rows < self.source_names.len() {
            format!("i({})", self.source_names[i - node_rows])
        } else {
            format!("i({})", self.caps[i - node_rows - self.source_names.len()].name)
        }
    }

    /// Newton–Raphson from `x0` on the system described by `ctx`.
    pub(crate) fn newton(
        &self,
        ctx: &AssemblyCtx<'_>,
        x0: &[f64],
        opts: &SolverOptions,
    ) -> Result<(Vec<f64>, usize), NewtonFailure> {
        let node_rows = self.n_nodes - 1;
        let fail_singular = |e: SolveError, iterations| NewtonFailure {
            iterations,
            worst_unknown: 0,
            last_update: f64::INFINITY,
            singular: Some(e),
        };

        let mut junctions = self.junction_voltages(x0);
        if !self.has_nonlinear() {
            let sys = self.assemble(ctx, &junctions);
            return solve_linear(&sys).map(|x| (x, 1)).map_err(|e| fail_singular(e, 1));
        }

        let mut x = x0.to_vec();
        let mut worst = (0, f64::INFINITY);
        for iter in 1..=opts.max_newton_iters {
            let sys = self.assemble(ctx, &junctions);
            let x_new = solve_linear(&sys).map_err(|e| fail_singular(e, iter))?;

            let mut ratio_max: f64 = 0.0;
            worst = (0, 0.0);
            for (i, (&a, &b)) in x_new.iter().zip(&x).enumerate() {
                let delta = (a - b).abs();
                let floor = if i < node_rows { opts.vntol } else { opts.abstol };
                let ratio = delta / (floor + opts.reltol * a.abs().max(b.abs()));
                if ratio > ratio_max {
                    ratio_max = ratio;
                    worst = (i, delta);
                }
            }

            let mut next = self.junction_voltages(&x_new);
            let mismatch = self.current_mismatch(&junctions, &next, opts.reltol, opts.abstol);
            let limited = self.limit_junctions(&mut next, &junctions);
            if ratio_max <= 1.0 && mismatch <= 1.0 && !limited {
                // One more solve at the accepted point tightens the answer
                // well below the tolerance, so the converged point does not
                // depend on the starting guess.
                return match solve_linear(&self.assemble(ctx, &next)) {
                    Ok(polished) => Ok((polished, iter + 1)),
                    Err(_) => Ok((x_new, iter)),
                };
            }
            x = x_new;
            junctions = next;
        }
        Err(NewtonFailure {
            iterations: opts.max_newton_iters,
            worst_unknown: worst.0,
            last_update: worst.1,
            singular: None,
        })
    }

    /// DC solve with the fixed fallback chain: plain Newton, Gmin stepping,
    /// source stepping.
    pub(crate) fn solve_dc(
        &self,
        opts: &SolverOptions,
        warm: Option<&[f64]>,
        time: f64,
    ) -> Result<(Vec<f64>, usize, Strategy), SolveError> {
        let zeros = vec![0.0; self.dimension()];
        let ctx = |gmin: f64, scale: f64| AssemblyCtx { gmin, source_scale: scale, time, caps: CapMode::Open };
        let mut spent = 0;
        let mut last: Option<NewtonFailure> = None;

        let mut starts: Vec<&[f64]> = Vec::new();
        if let Some(w) = warm {
            starts.push(w);
        }
        starts.push(&zeros);
        for x0 in starts {
            match self.newton(&ctx(opts.gmin, 1.0), x0, opts) {
                Ok((x, it)) => return Ok((x, spent + it, Strategy::Plain)),
                Err(f) => {
                    spent += f.iterations;
                    last = Some(f);
                }
            }
        }

        // Gmin stepping: 1e-2, 1e-3, ... down to opts.gmin.
        let mut x = zeros.clone();
        let mut ok = true;
        let mut k = 2;
        loop {
            let g = 10f64.powi(-k);
            if g <= opts.gmin * (1.0 + 1e-9) {
                break;
            }
            match self.newton(&ctx(g, 1.0), &x, opts) {
                Ok((xn, it)) => {
                    spent += it;
                    x = xn;
                }
                Err(f) => {
                    spent += f.iterations;
                    last = Some(f);
                    ok = false;
                    break;
                }
            }
            k += 1;
        }
        if ok {
            match self.newton(&ctx(opts.gmin, 1.0), &x, opts) {
                Ok((xn, it)) => return Ok((xn, spent + it, Strategy::GminStep)),
                Err(f) => {
                    spent += f.iterations;
                    last = Some(f);
                }
            }
        }

        // Source stepping: ramp every source 0 → 1 in ten steps.
        let mut x = zeros;
        let mut ok = true;
        for step in 1..=10 {
            match self.newton(&ctx(opts.gmin, step as f64 / 10.0), &x, opts) {
                Ok((xn, it)) => {
                    spent += it;
                    x = xn;
                }
                Err(f) => {
                    spent += f.iterations;
                    last = Some(f);
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            return Ok((x, spent, Strategy::SourceStep));
        }

        let f = last.expect("at least one attempt failed");
        if let Some(SolveError::SingularMatrix { row }) = f.singular {
            return Err(SolveError::SingularTopology(format!(
                "matrix singular at {} for every strategy",
                self.unknown_name(row.min(self.dimension().saturating_sub(1)))
            )));
        }
        Err(SolveError::NoConvergence(NewtonDiagnostics {
            iterations: spent,
            worst_unknown: self.unknown_name(f.worst_unknown),
            last_update: f.last_update,
            time: None,
        }))
    }

    pub(crate) fn operating_point(&self, x: Vec<f64>, iterations: usize, strategy: Strategy) -> OperatingPoint {
        let mut node_voltages = vec![0.0; self.n_external];
        node_voltages[1..].copy_from_slice(&x[..self.n_external - 1]);
        let source_currents = (0..self.source_names.len()).map(|b| x[self.branch_row(b)]).collect();
        OperatingPoint {
            node_names: self.node_names.clone(),
            node_voltages,
            source_names: self.source_names.clone(),
            source_currents,
            iterations,
            strategy_used: strategy,
            solution: x,
        }
    }
}

/// Nonlinear DC operating point. Newton starts from all zeros; on failure
/// the solver retries with Gmin stepping and then source stepping, and
/// records which path succeeded.
pub fn dc_operating_point(n: &Netlist, opts: &SolverOptions) -> Result<OperatingPoint, SolveError> {
    opts.validate()?;
    let circuit = Circuit::compile(n)?;
    let (x, iterations, strategy) = circuit.solve_dc(opts, None, 0.0)?;
    Ok(circuit.operating_point(x, iterations, strategy))
}

/// MNA system linearized at `bias` (node voltages by netlist node index;
/// empty means all zeros). With `companions`, capacitors are stamped as the
/// given `(geq, ieq)` pairs in netlist order; otherwise they are open.
pub fn assemble_mna(
    n: &Netlist,
    bias: &[f64],
    companions: Option<&[(f64, f64)]>,
    opts: &SolverOptions,
) -> Result<MnaSystem, SolveError> {
    let circuit = Circuit::compile(n)?;
    if !bias.is_empty() && bias.len() != circuit.n_external {
        return Err(SolveError::BiasDimension { expected: circuit.n_external, got: bias.len() });
    }
    let mut x = vec![0.0; circuit.dimension()];
    if !bias.is_empty() {
        x[..circuit.n_external - 1].copy_from_slice(&bias[1..]);
    }
    let caps = match companions {
        Some(c) if c.len() == circuit.caps.len() => CapMode::Companion(c),
        Some(c) => return Err(SolveError::BiasDimension { expected: circuit.caps.len(), got: c.len() }),
        None => CapMode::Open,
    };
    let ctx = AssemblyCtx { gmin: opts.gmin, source_scale: 1.0, time: 0.0, caps };
    Ok(circuit.assemble(&ctx, &circuit.junction_voltages(&x)))
}

/// Kirchhoff current balance at one node of a solved circuit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeResidual {
    pub node: String,
    /// Net current leaving the node through devices, sources and the Gmin
    /// shunt.
    pub residual: f64,
    pub max_incident: f64,
    /// `abstol + reltol·max_incident`.
    pub tolerance: f64,
}

/// Evaluates large-signal device currents at the operating point and sums
/// them per node. Gmin shunts are part of the solved system and are
/// included.
pub fn kcl_residuals(n: &Netlist, op: &OperatingPoint, opts: &SolverOptions) -> Vec<NodeResidual> {
    let count = n.node_count();
    let mut sum = vec![0.0; count];
    let mut max_incident = vec![0.0f64; count];
    let mut add = |node: usize, i: f64| {
        sum[node] += i;
        max_incident[node] = max_incident[node].max(i.abs());
    };
    for c in &n.components {
        let idx: Vec<usize> = c.terminals.iter().map(|t| n.nodes[t]).collect();
        if let DeviceParams::Source(_) = c.params {
            if let Some(i) = op.source_current(&c.name) {
                add(idx[0], i);
                add(idx[1], -i);
            }
            continue;
        }
        let v: Vec<f64> = idx.iter().map(|&k| op.node_voltages[k]).collect();
        for (k, i) in idx.iter().zip(terminal_currents(c, &v)) {
            add(*k, i);
        }
    }
    for k in 1..count {
        add(k, opts.gmin * op.node_voltages[k]);
    }
    let names = n.node_names();
    (1..count)
        .map(|k| NodeResidual {
            node: names[k].clone(),
            residual: sum[k],
            max_incident: max_incident[k],
            tolerance: opts.abstol + opts.reltol * max_incident[k],
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::diode_current;
    use crate::netlist::parse;

    fn op(text: &str) -> OperatingPoint {
        dc_operating_point(&parse(text).unwrap(), &SolverOptions::default()).unwrap()
    }

    #[test]
    fn divider_midpoint() {
        let p = op("V1 in 0 DC 12\nR1 in mid 1k\nR2 mid 0 1k\n");
        let v = p.voltage("mid").unwrap();
        assert!(((v - 6.0) / 6.0).abs() < 1e-9, "{v}");
        assert_eq!(p.iterations, 1);
        assert_eq!(p.strategy_used, Strategy::Plain);
        // Supply delivers 6 mA.
        assert!((p.source_current("V1").unwrap() + 6e-3).abs() < 1e-12 * 12.0 + 6e-12);
    }

    fn bisect_diode(vs: f64, r: f64) -> f64 {
        let m = crate::devices::DiodeModel::default();
        let f = |v: f64| (vs - v) / r - diode_current(v, &m);
        let (mut lo, mut hi) = (0.0, vs);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn diode_resistor_matches_bisection() {
        let oracle = bisect_diode(5.0, 1000.0);
        assert!(oracle > 0.5 && oracle < 0.7);
        let p = op("V1 in 0 DC 5\nR1 in d 1k\nD1 d 0\n");
        let v = p.voltage("d").unwrap();
        assert!((v - oracle).abs() < 1e-6, "{v} vs {oracle}");
    }

    #[test]
    fn capacitor_is_open_at_dc() {
        let p = op("V1 in 0 DC 5\nC1 in mid 1u\nC2 mid 0 1u\n");
        assert_eq!(p.voltage("in"), Some(5.0));
        // Only the Gmin shunt ties the floating midpoint.
        assert!(p.voltage("mid").unwrap().abs() < 1e-9);
    }

    #[test]
    fn source_loop_is_singular_topology() {
        let n = parse("V1 a 0 DC 1\nV2 a 0 DC 2\n").unwrap();
        assert!(matches!(dc_operating_point(&n, &SolverOptions::default()), Err(SolveError::SingularTopology(_))));
    }

    #[test]
    fn invalid_netlist_is_rejected() {
        let n = parse("V1 a 0 DC 1\nR1 a b 1k\n").unwrap();
        assert!(matches!(dc_operating_point(&n, &SolverOptions::default()), Err(SolveError::InvalidNetlist(_))));
    }

    #[test]
    fn bordered_source_system() {
        let n = parse("V1 a 0 DC 12\nR1 a 0 1\n").unwrap();
        let opts = SolverOptions { gmin: 1e-12, ..Default::default() };
        let s = assemble_mna(&n, &[], None, &opts).unwrap();
        assert_eq!(s.dimension, 2);
        assert_eq!((s.get(0, 1), s.get(1, 0), s.get(1, 1)), (1.0, 1.0, 0.0));
        assert_eq!(s.rhs, vec![0.0, 12.0]);
    }

    #[test]
    fn hand_stamped_current_source() {
        // 1 A injected by hand into node 1; two 4 Ω in parallel give 2 Ω.
        let n = parse("R1 n1 0 4\nR2 n1 0 4\n").unwrap();
        let opts = SolverOptions::default();
        let mut s = assemble_mna(&n, &[], None, &opts).unwrap();
        s.add_rhs(0, 1.0);
        assert_eq!(s.dimension, 1);
        assert_eq!(s.get(0, 0), 0.5 + opts.gmin);
        assert_eq!(s.rhs, vec![1.0]);
    }

    #[test]
    fn resistive_system_ignores_bias() {
        let n = parse("V1 a 0 DC 3\nR1 a b 1k\nR2 b 0 2k\n").unwrap();
        let opts = SolverOptions::default();
        let s0 = assemble_mna(&n, &[], None, &opts).unwrap();
        let s1 = assemble_mna(&n, &[0.0, 7.0, -4.0], None, &opts).unwrap();
        assert_eq!(s0, s1);
    }

    #[test]
    fn kcl_holds_on_nonlinear_op() {
        let n = parse("V1 in 0 DC 5\nR1 in d 1k\nD1 d 0\nQ1 in d 0\n").unwrap();
        let opts = SolverOptions::default();
        let p = dc_operating_point(&n, &opts).unwrap();
        for r in kcl_residuals(&n, &p, &opts) {
            assert!(r.residual.abs() <= r.tolerance, "{r:?}");
        }
    }
}
