use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::{ComponentKind, DeviceParams, DirectiveKind, Netlist, SourceWaveform, GROUND};

/// One broken netlist invariant. Violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    MissingGround,
    DanglingNode(String),
    WrongTerminalCount(String),
    ShortedTerminals(String),
    InvalidParameter { component: String, message: String },
    DuplicateName(String),
    UnknownSweepSource(String),
    InvalidTranStep,
    InvalidSweepStep(String),
}

impl Violation {
    fn rule_id(&self) -> u8 {
        match self {
            Violation::MissingGround => 0,
            Violation::DanglingNode(_) => 1,
            Violation::WrongTerminalCount(_) => 2,
            Violation::ShortedTerminals(_) => 3,
            Violation::InvalidParameter { .. } => 4,
            Violation::DuplicateName(_) => 5,
            Violation::UnknownSweepSource(_) => 6,
            Violation::InvalidTranStep => 7,
            Violation::InvalidSweepStep(_) => 8,
        }
    }

    /// Component (or node) the violation is about; empty for global rules.
    fn subject(&self) -> &str {
        match self {
            Violation::MissingGround | Violation::InvalidTranStep => "",
            Violation::DanglingNode(s)
            | Violation::WrongTerminalCount(s)
            | Violation::ShortedTerminals(s)
            | Violation::DuplicateName(s)
            | Violation::UnknownSweepSource(s)
            | Violation::InvalidSweepStep(s) => s,
            Violation::InvalidParameter { component, .. } => component,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MissingGround => write!(f, "no element connects to ground node 0"),
            Violation::DanglingNode(n) => write!(f, "node `{n}` has only one connection"),
            Violation::WrongTerminalCount(c) => write!(f, "`{c}` has the wrong number of terminals"),
            Violation::ShortedTerminals(c) => write!(f, "`{c}` has both terminals on one node"),
            Violation::InvalidParameter { component, message } => write!(f, "`{component}`: {message}"),
            Violation::DuplicateName(c) => write!(f, "duplicate element name `{c}`"),
            Violation::UnknownSweepSource(s) => write!(f, "sweep source `{s}` is not a voltage source"),
            Violation::InvalidTranStep => write!(f, ".tran requires 0 < tstep <= tstop"),
            Violation::InvalidSweepStep(s) => write!(f, "sweep of `{s}` has an illegal step"),
        }
    }
}

fn finite_positive(v: f64) -> bool {
    v.is_finite() && v > 0.0
}

fn param_problems(kind: ComponentKind, params: &DeviceParams) -> Vec<String> {
    let mut out = Vec::new();
    let mut need = |ok: bool, msg: &str| {
        if !ok {
            out.push(msg.to_string());
        }
    };
    match params {
        DeviceParams::Resistor(m) => {
            need(kind == ComponentKind::Resistor, "resistor model on non-resistor");
            need(finite_positive(m.resistance), "resistance must be > 0");
            need(finite_positive(m.rated_power), "rated power must be > 0");
        }
        DeviceParams::Capacitor(m) => {
            need(kind == ComponentKind::Capacitor, "capacitor model on non-capacitor");
            need(finite_positive(m.capacitance), "capacitance must be > 0");
            need(m.esr().is_finite() && m.esr() >= 0.0, "esr must be >= 0");
            need(m.rleak().is_none_or(finite_positive), "rleak must be > 0");
        }
        DeviceParams::Diode(m) => {
            need(matches!(kind, ComponentKind::Diode | ComponentKind::Zener), "diode model on non-diode");
            need(finite_positive(m.is_sat), "is must be > 0");
            need((1.0..=2.0).contains(&m.n_ideality), "n must lie in [1, 2]");
            need(finite_positive(m.vt), "vt must be > 0");
            need(finite_positive(m.breakdown_current), "breakdown current must be > 0");
            need(finite_positive(m.i_ave_rating), "iave must be > 0");
            match (kind, m.breakdown_v) {
                (ComponentKind::Zener, Some(bv)) => need(finite_positive(bv), "bv must be > 0"),
                (ComponentKind::Zener, None) => need(false, "zener requires bv"),
                (_, Some(_)) => need(false, "bv applies to zener diodes only"),
                _ => {}
            }
        }
        DeviceParams::Bjt(m) => {
            need(kind == ComponentKind::Bjt, "bjt model on non-bjt");
            need(finite_positive(m.is_sat), "is must be > 0");
            need(finite_positive(m.beta_f), "bf must be > 0");
            need(finite_positive(m.beta_r), "br must be > 0");
            need(finite_positive(m.vt), "vt must be > 0");
        }
        DeviceParams::Source(w) => {
            need(kind == ComponentKind::VoltageSource, "source waveform on non-source");
            match w {
                SourceWaveform::Dc(v) => need(v.is_finite(), "source value must be finite"),
                SourceWaveform::Pwl(points) => {
                    need(!points.is_empty(), "PWL needs at least one point");
                    need(points.iter().all(|(t, v)| t.is_finite() && v.is_finite()), "PWL values must be finite");
                    need(points.windows(2).all(|p| p[1].0 > p[0].0), "PWL times must increase");
                }
            }
        }
    }
    out
}

/// Checks every netlist invariant and returns all violations, sorted by
/// subject name and then rule.
pub fn validate(n: &Netlist) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut touches: BTreeMap<&str, usize> = BTreeMap::new();
    let mut names: BTreeMap<String, usize> = BTreeMap::new();

    for c in &n.components {
        *names.entry(c.name.to_ascii_uppercase()).or_default() += 1;
        if c.terminals.len() != c.kind.terminal_count() {
            out.push(Violation::WrongTerminalCount(c.name.clone()));
        }
        for t in &c.terminals {
            *touches.entry(t.as_str()).or_default() += 1;
        }
        if c.terminals.len() == 2 && c.terminals[0] == c.terminals[1] {
            out.push(Violation::ShortedTerminals(c.name.clone()));
        }
        for message in param_problems(c.kind, &c.params) {
            out.push(Violation::InvalidParameter { component: c.name.clone(), message });
        }
    }
    for (name, count) in names {
        if count > 1 {
            out.push(Violation::DuplicateName(name));
        }
    }
    if !touches.contains_key(GROUND) {
        out.push(Violation::MissingGround);
    }
    for (node, count) in &touches {
        if *node != GROUND && *count < 2 {
            out.push(Violation::DanglingNode(node.to_string()));
        }
    }

    for d in &n.directives {
        match &d.kind {
            DirectiveKind::Tran { tstep, tstop } => {
                if !(tstep.is_finite() && *tstep > 0.0 && tstep <= tstop && tstop.is_finite()) {
                    out.push(Violation::InvalidTranStep);
                }
            }
            DirectiveKind::DcSweep { source, start, stop, step } => {
                let is_source = n.component(source).is_some_and(|c| c.kind == ComponentKind::VoltageSource);
                if !is_source {
                    out.push(Violation::UnknownSweepSource(source.clone()));
                }
                if *step == 0.0 || !((stop - start) / step >= 0.0) {
                    out.push(Violation::InvalidSweepStep(source.clone()));
                }
            }
            DirectiveKind::Op | DirectiveKind::ParamSweep { .. } => {}
        }
    }

    out.sort_by(|a, b| (a.subject(), a.rule_id()).cmp(&(b.subject(), b.rule_id())));
    out
}
