//! Netlist compiled to index form, and MNA stamping.

use crate::devices::{bjt_stamp, diode_stamp, BjtModel, CapacitorModel, DiodeModel, Stamp};
use crate::netlist::{validate, DeviceParams, Netlist, SourceWaveform};

use super::lu::MnaSystem;
use super::SolveError;

/// Circuit node number: 0 is ground, then external nodes in netlist order,
/// then internal nodes (capacitor ESR taps).
pub(crate) type NodeId = usize;

#[derive(Debug, Clone)]
pub(crate) enum Element {
    Conductance { a: NodeId, b: NodeId, g: f64 },
    Capacitor { cap: NodeId, minus: NodeId, ordinal: usize, model: CapacitorModel },
    Diode { a: NodeId, k: NodeId, model: DiodeModel, slot: usize },
    Bjt { c: NodeId, b: NodeId, e: NodeId, model: BjtModel, slot: usize },
    Source { p: NodeId, n: NodeId, wave: SourceWaveform, branch: usize },
}

#[derive(Debug, Clone)]
pub(crate) struct CapInfo {
    pub name: String,
    pub plus: NodeId,
    pub minus: NodeId,
    pub polar: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct Circuit {
    pub node_names: Vec<String>,
    /// External nodes including ground.
    pub n_external: usize,
    /// External plus internal nodes including ground.
    pub n_nodes: usize,
    pub elements: Vec<Element>,
    pub source_names: Vec<String>,
    pub caps: Vec<CapInfo>,
    /// Junction voltage slots: one per diode, two (vbe, vbc) per BJT.
    pub n_junctions: usize,
}

/// How capacitors enter the system.
#[derive(Debug, Clone, Copy)]
pub(crate) enum CapMode<'a> {
    /// Open circuit (leakage only).
    Open,
    /// Norton companions `(geq, ieq)` per capacitor.
    Companion(&'a [(f64, f64)]),
    /// Capacitor voltages pinned through extra branch rows.
    Pinned(&'a [f64]),
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AssemblyCtx<'a> {
    pub gmin: f64,
    pub source_scale: f64,
    pub time: f64,
    pub caps: CapMode<'a>,
}

impl Circuit {
    pub fn compile(n: &Netlist) -> Result<Self, SolveError> {
        let violations = validate(n);
        if !violations.is_empty() {
            return Err(SolveError::InvalidNetlist(violations));
        }
        let node_names = n.node_names();
        let n_external = node_names.len();
        let mut n_nodes = n_external;
        let mut elements = Vec::new();
        let mut source_names = Vec::new();
        let mut caps = Vec::new();
        let mut n_junctions = 0;
        let idx = |name: &str| n.nodes[name];

        for c in &n.components {
            match &c.params {
                DeviceParams::Resistor(m) => elements.push(Element::Conductance {
                    a: idx(&c.terminals[0]),
                    b: idx(&c.terminals[1]),
                    g: 1.0 / m.resistance,
                }),
                DeviceParams::Capacitor(m) => {
                    let plus = idx(&c.terminals[0]);
                    let minus = idx(&c.terminals[1]);
                    let esr = m.esr();
                    let cap = if esr > 0.0 {
                        let tap = n_nodes;
                        n_nodes += 1;
                        elements.push(Element::Conductance { a: plus, b: tap, g: 1.0 / esr });
                        tap
                    } else {
                        plus
                    };
                    if let Some(r) = m.rleak() {
                        elements.push(Element::Conductance { a: cap, b: minus, g: 1.0 / r });
                    }
                    elements.push(Element::Capacitor { cap, minus, ordinal: caps.len(), model: *m });
                    caps.push(CapInfo { name: c.name.clone(), plus, minus, polar: m.is_polar() });
                }
                DeviceParams::Diode(m) => {
                    elements.push(Element::Diode {
                        a: idx(&c.terminals[0]),
                        k: idx(&c.terminals[1]),
                        model: *m,
                        slot: n_junctions,
                    });
                    n_junctions += 1;
                }
                DeviceParams::Bjt(m) => {
                    elements.push(Element::Bjt {
                        c: idx(&c.terminals[0]),
                        b: idx(&c.terminals[1]),
                        e: idx(&c.terminals[2]),
                        model: *m,
                        slot: n_junctions,
                    });
                    n_junctions += 2;
                }
                DeviceParams::Source(w) => {
                    elements.push(Element::Source {
                        p: idx(&c.terminals[0]),
                        n: idx(&c.terminals[1]),
                        wave: w.clone(),
                        branch: source_names.len(),
                    });
                    source_names.push(c.name.clone());
                }
            }
        }

        let circuit = Self { node_names, n_external, n_nodes, elements, source_names, caps, n_junctions };
        circuit.check_source_loops()?;
        Ok(circuit)
    }

    /// Ideal voltage sources forming a loop make the matrix singular for
    /// every bias; report it before solving.
    fn check_source_loops(&self) -> Result<(), SolveError> {
        let mut parent: Vec<usize> = (0..self.n_nodes).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for el in &self.elements {
            if let Element::Source { p, n, branch, .. } = el {
                let (rp, rn) = (find(&mut parent, *p), find(&mut parent, *n));
                if rp == rn {
                    return Err(SolveError::SingularTopology(format!(
                        "voltage source `{}` closes a loop of ideal sources",
                        self.source_names[*branch]
                    )));
                }
                parent[rp] = rn;
            }
        }
        Ok(())
    }

    pub fn has_nonlinear(&self) -> bool {
        self.n_junctions > 0
    }

    /// Unknown count: node voltages (minus ground) plus source branches.
    pub fn dimension(&self) -> usize {
        self.n_nodes - 1 + self.source_names.len()
    }

    pub fn branch_row(&self, branch: usize) -> usize {
        self.n_nodes - 1 + branch
    }

    pub fn voltage(x: &[f64], node: NodeId) -> f64 {
        if node == 0 {
            0.0
        } else {
            x[node - 1]
        }
    }

    /// Sets the DC value of a named source.
    pub fn set_source_dc(&mut self, name: &str, value: f64) -> Result<(), SolveError> {
        let branch = self
            .source_names
            .iter()
            .position(|s| s.eq_ignore_ascii_case(name))
            .ok_or_else(|| SolveError::UnknownSource(name.to_string()))?;
        for el in &mut self.elements {
            if let Element::Source { branch: b, wave, .. } = el {
                if *b == branch {
                    *wave = SourceWaveform::Dc(value);
                }
            }
        }
        Ok(())
    }

    /// Junction voltages implied by a solution vector.
    pub fn junction_voltages(&self, x: &[f64]) -> Vec<f64> {
        let mut j = vec![0.0; self.n_junctions];
        let v = |n: NodeId| Self::voltage(x, n);
        for el in &self.elements {
            match el {
                Element::Diode { a, k, slot, .. } => j[*slot] = v(*a) - v(*k),
                Element::Bjt { c, b, e, slot, .. } => {
                    j[*slot] = v(*b) - v(*e);
                    j[*slot + 1] = v(*b) - v(*c);
                }
                _ => {}
            }
        }
        j
    }

    /// Applies junction limiting of `new` against `old`; returns whether any
    /// junction was limited.
    pub fn limit_junctions(&self, new: &mut [f64], old: &[f64]) -> bool {
        let mut any = false;
        for el in &self.elements {
            match el {
                Element::Diode { model, slot, .. } => {
                    let (v, l) = model.limit(new[*slot], old[*slot]);
                    new[*slot] = v;
                    any |= l;
                }
                Element::Bjt { model, slot, .. } => {
                    for s in [*slot, *slot + 1] {
                        let (v, l) = model.limit(new[s], old[s]);
                        new[s] = v;
                        any |= l;
                    }
                }
                _ => {}
            }
        }
        any
    }

    /// Largest mismatch between each device's large-signal current at
    /// `actual` and its linear prediction from `expansion`, relative to the
    /// tolerance `abstol + reltol·|i|`. A value ≤ 1 means converged.
    pub fn current_mismatch(&self, expansion: &[f64], actual: &[f64], reltol: f64, abstol: f64) -> f64 {
        let mut worst: f64 = 0.0;
        let mut check = |pred: f64, act: f64| {
            let tol = abstol + reltol * pred.abs().max(act.abs());
            worst = worst.max((pred - act).abs() / tol);
        };
        for el in &self.elements {
            match el {
                Element::Diode { model, slot, .. } => {
                    let (i0, g0) = model.eval(expansion[*slot]);
                    let pred = i0 + g0 * (actual[*slot] - expansion[*slot]);
                    check(pred, model.eval(actual[*slot]).0);
                }
                Element::Bjt { model, slot, .. } => {
                    let (vbe0, vbc0) = (expansion[*slot], expansion[*slot + 1]);
                    let (vbe, vbc) = (actual[*slot], actual[*slot + 1]);
                    let e0 = model.eval(vbe0, vbc0);
                    let e1 = model.eval(vbe, vbc);
                    let ic = e0.ic + e0.dic_dvbe * (vbe - vbe0) + e0.dic_dvbc * (vbc - vbc0);
                    let ib = e0.ib + e0.dib_dvbe * (vbe - vbe0) + e0.dib_dvbc * (vbc - vbc0);
                    check(ic, e1.ic);
                    check(ib, e1.ib);
                }
                _ => {}
            }
        }
        worst
    }

    /// Builds the MNA system linearized at the given junction voltages.
    pub fn assemble(&self, ctx: &AssemblyCtx<'_>, junctions: &[f64]) -> MnaSystem {
        let pinned = matches!(ctx.caps, CapMode::Pinned(_));
        let dim = self.dimension() + if pinned { self.caps.len() } else { 0 };
        let mut sys = MnaSystem::new(dim);

        let stamp_into = |sys: &mut MnaSystem, nodes: &[NodeId], s: &Stamp| {
            for &(r, c, g) in &s.conductances {
                let (nr, nc) = (nodes[r], nodes[c]);
                if nr != 0 && nc != 0 {
                    sys.add(nr - 1, nc - 1, g);
                }
            }
            for &(t, i) in &s.currents {
                if nodes[t] != 0 {
                    sys.add_rhs(nodes[t] - 1, -i);
                }
            }
        };

        for node in 1..self.n_nodes {
            sys.add(node - 1, node - 1, ctx.gmin);
        }

        for el in &self.elements {
            match el {
                Element::Conductance { a, b, g } => {
                    stamp_into(&mut sys, &[*a, *b], &Stamp::two_terminal(0, 1, *g, 0.0));
                }
                Element::Capacitor { cap, minus, ordinal, .. } => match ctx.caps {
                    CapMode::Open => {}
                    CapMode::Companion(companions) => {
                        let (geq, ieq) = companions[*ordinal];
                        stamp_into(&mut sys, &[*cap, *minus], &Stamp::two_terminal(0, 1, geq, -ieq));
                    }
                    CapMode::Pinned(volts) => {
                        let row = self.dimension() + ordinal;
                        stamp_branch(&mut sys, *cap, *minus, row, volts[*ordinal]);
                    }
                },
                Element::Diode { a, k, model, slot } => {
                    let vd = junctions[*slot];
                    let (i, g) = model.eval(vd);
                    stamp_into(&mut sys, &[*a, *k], &diode_stamp(vd, i, g));
                }
                Element::Bjt { c, b, e, model, slot } => {
                    let (vbe, vbc) = (junctions[*slot], junctions[*slot + 1]);
                    stamp_into(&mut sys, &[*c, *b, *e], &bjt_stamp(vbe, vbc, &model.eval(vbe, vbc)));
                }
                Element::Source { p, n, wave, branch } => {
                    let value = ctx.source_scale * wave.value_at(ctx.time);
                    stamp_branch(&mut sys, *p, *n, self.branch_row(*branch), value);
                }
            }
        }
        sys
    }
}

/// Ideal voltage constraint `v(p) − v(n) = value` with branch current
/// unknown at `row` (flowing from `p` through the element to `n`).
fn stamp_branch(sys: &mut MnaSystem, p: NodeId, n: NodeId, row: usize, value: f64) {
    if p != 0 {
        sys.add(p - 1, row, 1.0);
        sys.add(row, p - 1, 1.0);
    }
    if n != 0 {
        sys.add(n - 1, row, -1.0);
        sys.add(row, n - 1, -1.0);
    }
    sys.add_rhs(row, value);
}
