use serde::Serialize;

use crate::devices::{capacitor_companion, CapacitorModel, IntegrationMethod};
use crate::netlist::Netlist;

use super::circuit::{AssemblyCtx, CapMode, Circuit, Element};
use super::{NewtonDiagnostics, SolveError, SolverOptions};

/// Reverse voltage a polar capacitor may see before it is flagged.
pub const REVERSE_POLARITY_LIMIT: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransientWarning {
    /// First accepted sample at which a polar capacitor sat reverse biased
    /// beyond the limit.
    ReversePolarity { component: String, time: f64, voltage: f64 },
}

/// Transient result. Every series has one entry per entry of `times`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Waveform {
    pub times: Vec<f64>,
    /// Non-ground nodes.
    pub node_names: Vec<String>,
    pub node_voltages: Vec<Vec<f64>>,
    pub source_names: Vec<String>,
    pub source_currents: Vec<Vec<f64>>,
    pub warnings: Vec<TransientWarning>,
    /// Steps where trapezoidal Newton failed and backward Euler was used.
    pub be_fallback_steps: usize,
}

impl Waveform {
    pub fn node(&self, name: &str) -> Option<&[f64]> {
        let name = crate::netlist::normalize_node(name);
        self.node_names.iter().position(|n| *n == name).map(|i| self.node_voltages[i].as_slice())
    }

    fn push(&mut self, c: &Circuit, t: f64, x: &[f64]) {
        self.times.push(t);
        for (k, series) in self.node_voltages.iter_mut().enumerate() {
            series.push(x[k]);
        }
        for (b, series) in self.source_currents.iter_mut().enumerate() {
            series.push(x[c.branch_row(b)]);
        }
    }
}

struct CapState {
    model: CapacitorModel,
    cap: usize,
    minus: usize,
    v: f64,
    i: f64,
}

/// Number of samples for a fixed-step run, including t = 0.
pub fn sample_count(tstep: f64, tstop: f64) -> usize {
    (tstop / tstep + 1e-9).floor() as usize + 1
}

/// Fixed-step transient. The initial state is the DC operating point of
/// the t = 0 circuit, or all capacitors discharged when the netlist's
/// `.tran` directive carries `uic`.
pub fn transient(n: &Netlist, tstep: f64, tstop: f64, opts: &SolverOptions) -> Result<Waveform, SolveError> {
    opts.validate()?;
    if !(tstep.is_finite() && tstop.is_finite() && tstep > 0.0 && tstep <= tstop) {
        return Err(SolveError::InvalidTimestep);
    }
    let circuit = Circuit::compile(n)?;
    let uic = n.tran_directive().is_some_and(|d| d.options.contains_key("uic"));

    let mut caps: Vec<CapState> = circuit
        .elements
        .iter()
        .filter_map(|el| match el {
            Element::Capacitor { cap, minus, model, .. } => {
                Some(CapState { model: *model, cap: *cap, minus: *minus, v: 0.0, i: 0.0 })
            }
            _ => None,
        })
        .collect();

    let no_convergence = |iterations, worst: String, last_update, t| {
        SolveError::NoConvergence(NewtonDiagnostics { iterations, worst_unknown: worst, last_update, time: Some(t) })
    };

    let dim = circuit.dimension();
    let mut x = if uic {
        let zeros = vec![0.0; caps.len()];
        let ctx = AssemblyCtx { gmin: opts.gmin, source_scale: 1.0, time: 0.0, caps: CapMode::Pinned(&zeros) };
        let (x, _) = circuit.newton(&ctx, &vec![0.0; dim + caps.len()], opts).map_err(|f| match f.singular {
            Some(e) => e,
            None => no_convergence(f.iterations, "initial state".into(), f.last_update, 0.0),
        })?;
        for (k, c) in caps.iter_mut().enumerate() {
            c.i = x[dim + k];
        }
        x[..dim].to_vec()
    } else {
        let (x, _, _) = circuit.solve_dc(opts, None, 0.0).map_err(|e| match e {
            SolveError::NoConvergence(mut d) => {
                d.time = Some(0.0);
                SolveError::NoConvergence(d)
            }
            e => e,
        })?;
        for c in &mut caps {
            c.v = Circuit::voltage(&x, c.cap) - Circuit::voltage(&x, c.minus);
        }
        x
    };

    let n_samples = sample_count(tstep, tstop);
    let node_count = circuit.n_external - 1;
    let mut w = Waveform {
        times: Vec::with_capacity(n_samples),
        node_names: circuit.node_names[1..].to_vec(),
        node_voltages: vec![Vec::with_capacity(n_samples); node_count],
        source_names: circuit.source_names.clone(),
        source_currents: vec![Vec::with_capacity(n_samples); circuit.source_names.len()],
        warnings: Vec::new(),
        be_fallback_steps: 0,
    };
    let mut flagged = vec![false; circuit.caps.len()];
    let mut check_polarity = |w: &mut Waveform, t: f64, x: &[f64]| {
        for (k, info) in circuit.caps.iter().enumerate() {
            if !info.polar || flagged[k] {
                continue;
            }
            let v = Circuit::voltage(x, info.plus) - Circuit::voltage(x, info.minus);
            if v < -REVERSE_POLARITY_LIMIT {
                flagged[k] = true;
                w.warnings.push(TransientWarning::ReversePolarity {
                    component: info.name.clone(),
                    time: t,
                    voltage: v,
                });
            }
        }
    };

    w.push(&circuit, 0.0, &x);
    check_polarity(&mut w, 0.0, &x);

    let mut companions = vec![(0.0, 0.0); caps.len()];
    for step in 1..n_samples {
        let t = step as f64 * tstep;
        let methods: &[IntegrationMethod] = match opts.integration {
            IntegrationMethod::Trapezoidal => &[IntegrationMethod::Trapezoidal, IntegrationMethod::BackwardEuler],
            IntegrationMethod::BackwardEuler => &[IntegrationMethod::BackwardEuler],
        };
        let mut accepted = None;
        let mut spent = 0;
        for (attempt, &method) in methods.iter().enumerate() {
            for (slot, c) in companions.iter_mut().zip(&caps) {
                *slot = capacitor_companion(&c.model, c.v, c.i, tstep, method);
            }
            let ctx =
                AssemblyCtx { gmin: opts.gmin, source_scale: 1.0, time: t, caps: CapMode::Companion(&companions) };
            match circuit.newton(&ctx, &x, opts) {
                Ok((xn, _)) => {
                    if attempt > 0 {
                        w.be_fallback_steps += 1;
                    }
                    accepted = Some(xn);
                    break;
                }
                Err(f) => {
                    if let Some(e) = f.singular {
                        return Err(e);
                    }
                    spent += f.iterations;
                    if attempt + 1 == methods.len() {
                        return Err(no_convergence(spent, circuit.unknown_name(f.worst_unknown), f.last_update, t));
                    }
                }
            }
        }
        x = accepted.expect("accepted or returned");
        for (c, &(geq, ieq)) in caps.iter_mut().zip(&companions) {
            c.v = Circuit::voltage(&x, c.cap) - Circuit::voltage(&x, c.minus);
            c.i = geq * c.v - ieq;
        }
        w.push(&circuit, t, &x);
        check_polarity(&mut w, t, &x);
    }
    Ok(w)
}
